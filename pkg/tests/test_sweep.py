import math

import numpy as np
import pytest

from qrws.dense import dense_reference_run
from qrws.schedule import PolarPoint, SequenceKind, iteration_count, schedule_phases, sign_vectors
from qrws.sweep import (
    CrossSection,
    Grid2D,
    SweepError,
    default_workers,
    evaluate_base_phases,
    omega_axis,
    parallel_map,
    read_cross_section_csv,
    read_grid_csv,
    sweep_omega,
    sweep_omega_many,
    sweep_phase_plane,
    write_cross_section_csv,
    write_grid_csv,
)
from qrws.walk import CoinPhases, WalkConfig


def square(chunk):
    return [x * x for x in chunk]


def fail_on_seven(chunk):
    if 7 in chunk:
        raise RuntimeError("injected")
    return list(chunk)


def test_parallel_map_order_and_workers():
    items = list(range(100))
    serial = parallel_map(square, items, workers=1, chunk_size=7)
    assert serial == [x * x for x in items]
    assert parallel_map(square, items, workers=3, chunk_size=7) == serial


def test_parallel_map_empty():
    assert parallel_map(square, [], workers=4) == []


@pytest.mark.parametrize("workers", [1, 2])
def test_parallel_map_reports_failing_index(workers):
    with pytest.raises(SweepError) as info:
        parallel_map(fail_on_seven, list(range(20)), workers=workers, chunk_size=5)
    assert info.value.index == 7
    assert "index 7" in str(info.value)


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("QRWS_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("QRWS_WORKERS", "0")
    with pytest.raises(ValueError):
        default_workers()
    monkeypatch.delenv("QRWS_WORKERS")
    assert default_workers() >= 1


def test_grid_matches_dense_reference():
    m, R = 3, 5
    grid = sweep_phase_plane(m, "PM", R)
    k_iter = iteration_count(m)
    for i, phi in enumerate(grid.phi_axis):
        for j, zeta in enumerate(grid.zeta_axis):
            ref = dense_reference_run(WalkConfig(m), [CoinPhases(phi, zeta)] * k_iter)
            assert abs(grid.prob[i, j] - ref) < 1e-10


@pytest.mark.parametrize("kind", ["A2", "H3"])
def test_grid_applies_signs_to_base_phases(kind):
    m, R = 3, 4
    grid = sweep_phase_plane(m, kind, R, marked=(0, 5))
    sp, sz = sign_vectors(kind, iteration_count(m))
    cfg = WalkConfig(m, frozenset({0, 5}))
    phi, zeta = grid.phi_axis[1], grid.zeta_axis[2]
    phases = [CoinPhases(a * phi, b * zeta) for a, b in zip(sp, sz)]
    assert abs(grid.prob[1, 2] - dense_reference_run(cfg, phases)) < 1e-10


def test_grid_axes_and_bounds():
    grid = sweep_phase_plane(4, "A1", 9)
    assert grid.phi_axis[0] == 0.0 and grid.phi_axis[-1] == 2 * math.pi
    assert grid.prob.shape == (9, 9)
    assert np.all(grid.prob >= 0) and np.all(grid.prob <= 1 + 1e-12)


@pytest.mark.parametrize("kind", list(SequenceKind))
def test_grid_conjugation_symmetry(kind):
    grid = sweep_phase_plane(4, kind, 13)
    assert np.max(np.abs(grid.prob - grid.prob[::-1, ::-1])) < 1e-12


def test_grid_center_value():
    grid = sweep_phase_plane(4, "PM", 5)
    assert abs(grid.prob[2, 2] - 0.391) <= 0.05


def test_stripe_exists():
    grid = sweep_phase_plane(6, "PM", 61)
    high = grid.prob >= 0.4
    assert high.any() and not high.all()


def test_resolution_validation():
    with pytest.raises(ValueError):
        sweep_phase_plane(3, "PM", 1)


def test_omega_axis_symmetric():
    axis = omega_axis(233 * math.pi / 360, 201)
    assert axis.size == 201
    assert axis[100] == 0.0
    assert np.array_equal(axis, -axis[::-1])
    with pytest.raises(ValueError):
        omega_axis(1.0, 200)
    with pytest.raises(ValueError):
        omega_axis(1.0, 9)


def test_cross_section_matches_dense():
    m, theta = 3, 1.1
    cs = sweep_omega(m, "A3", theta, 11, marked=(2,))
    k_iter = iteration_count(m)
    for omega, p in zip(cs.omega_axis, cs.prob):
        sched = schedule_phases("A3", PolarPoint(omega, theta), k_iter)
        assert abs(p - dense_reference_run(WalkConfig(m, frozenset({2})), sched.phases)) < 1e-10


def test_cross_section_center_equivalence():
    ref = sweep_omega(5, "PM", 0.7, 11).prob[5]
    for kind in SequenceKind:
        assert abs(sweep_omega(5, kind, 0.7, 11).prob[5] - ref) < 1e-12


def test_many_equals_single():
    thetas = [0.3, 1.2, 2.9]
    many = sweep_omega_many(4, "H1", thetas, 21)
    for t, cs in zip(thetas, many):
        assert np.array_equal(cs.prob, sweep_omega(4, "H1", t, 21).prob)


def test_evaluate_rejects_bad_marked():
    with pytest.raises(ValueError):
        evaluate_base_phases(3, "PM", np.zeros((1, 2)), marked=(8,))


def test_sweep_determinism_across_workers(tmp_path):
    a = sweep_phase_plane(5, "A2", 31, marked=(0, 3), workers=1)
    b = sweep_phase_plane(5, "A2", 31, marked=(0, 3), workers=2)
    write_grid_csv(a, tmp_path / "a.csv", {"m": 5})
    write_grid_csv(b, tmp_path / "b.csv", {"m": 5})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_grid_csv_round_trip(tmp_path):
    grid = sweep_phase_plane(3, "H2", 6)
    path = tmp_path / "g.csv"
    write_grid_csv(grid, path, {"m": 3, "kind": "H2"})
    text = path.read_text()
    assert text.splitlines()[2] == "phi,zeta,probability"
    assert "\r" not in text
    back = read_grid_csv(path)
    assert back.m == 3 and back.kind is SequenceKind.H2
    assert np.allclose(back.prob, grid.prob, rtol=1e-8, atol=1e-12)
    assert np.allclose(back.phi_axis, grid.phi_axis, rtol=1e-8)


def test_grid_csv_rejects_holes(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("phi,zeta,probability\n0,0,0.1\n0,1,0.2\n1,0,0.3\n")
    with pytest.raises(ValueError, match="rectangular"):
        read_grid_csv(path)
    path.write_text("phi,zeta,probability\n0,0,abc\n")
    with pytest.raises(ValueError, match="non-numeric"):
        read_grid_csv(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_grid_csv(path)


def test_cross_section_csv_round_trip(tmp_path):
    cs = sweep_omega(4, "PM", 2.0, 11)
    path = tmp_path / "c.csv"
    write_cross_section_csv(cs, path, {"m": 4, "kind": "PM", "theta": 2.0})
    back = read_cross_section_csv(path)
    assert isinstance(back, CrossSection)
    assert back.m == 4 and back.theta == 2.0
    assert np.allclose(back.prob, cs.prob, rtol=1e-8)
    assert path.read_text().splitlines()[3] == "omega,phi,zeta,probability"


def test_grid2d_shape_check():
    with pytest.raises(ValueError):
        Grid2D(3, SequenceKind.PM, np.zeros(2), np.zeros(3), np.zeros((3, 2)))
