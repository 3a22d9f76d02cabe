import math
import re

import numpy as np
import pytest
import yaml

from qrws.cli import main
from qrws.heatmap import COLORMAP, colorize, ppm_bytes
from qrws.sweep import Grid2D, read_cross_section_csv, write_grid_csv
from qrws.schedule import SequenceKind


def run(*args):
    return main([str(a) for a in args])


def read_ppm(path):
    data = path.read_bytes()
    lines = []
    pos = 0
    while len([ln for ln in lines if not ln.startswith(b"#")]) < 3:
        end = data.index(b"\n", pos)
        lines.append(data[pos:end])
        pos = end + 1
    tokens = [ln for ln in lines if not ln.startswith(b"#")]
    assert tokens[0] == b"P6" and tokens[2] == b"255"
    width, height = map(int, tokens[1].split())
    pixels = np.frombuffer(data[pos:], dtype=np.uint8).reshape(height, width, 3)
    return pixels, lines


def test_cross_section_and_fit(tmp_path):
    cs_path = tmp_path / "cs.csv"
    assert run("cross-section", "--m", 4, "--kind", "PM", "--theta", "233pi/360", "--points", 201, "-o", cs_path) == 0
    cs = read_cross_section_csv(cs_path)
    assert cs.omega_axis.size == 201
    assert np.array_equal(cs.omega_axis, -cs.omega_axis[::-1])
    assert cs.theta == pytest.approx(233 * math.pi / 360, rel=1e-8)

    fit_path = tmp_path / "fit.yaml"
    assert run("fit-hill", cs_path, "-o", fit_path) == 0
    record = yaml.safe_load(fit_path.read_text())
    assert set(record) >= {
        "sequence", "m", "theta", "b", "k", "n", "c", "sigma", "q",
        "n_points", "omega_max", "epsilon", "omega_threshold",
    }
    assert record["sequence"] == "PM" and record["m"] == 4
    assert abs(record["b"] - 0.391) < 0.02


def test_outputs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("cross-section", "--m", 5, "--kind", "H2", "--theta", "pi/3", "--points", 51, "-o", tmp_path / f"{name}.csv") == 0
        assert run("fit-hill", tmp_path / f"{name}.csv", "-o", tmp_path / f"{name}.yaml") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    fa = (tmp_path / "a.yaml").read_text().replace("a.csv", "X")
    fb = (tmp_path / "b.yaml").read_text().replace("b.csv", "X")
    assert fa == fb


def test_header_and_number_format(tmp_path):
    path = tmp_path / "cs.csv"
    run("cross-section", "--m", 4, "--theta", "1", "--points", 11, "-o", path)
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    assert meta[0] == "# qrws_version: 0.1.0"
    assert "# sweep.kind: PM" in meta
    rows = [ln for ln in lines if not ln.startswith("#")][1:]
    for row in rows:
        for field in row.split(","):
            digits = re.sub(r"e[-+]\d+$", "", field).replace("-", "").replace(".", "").lstrip("0")
            assert len(digits) <= 9


def test_sweep2d_workers_and_ppm(tmp_path, monkeypatch):
    assert run("sweep2d", "--m", 4, "--kind", "A3", "--resolution", 21, "--ppm", "--workers", 1, "-o", tmp_path / "g1.csv") == 0
    monkeypatch.setenv("QRWS_WORKERS", "2")
    assert run("sweep2d", "--m", 4, "--kind", "A3", "--resolution", 21, "--ppm", "-o", tmp_path / "g2.csv") == 0
    assert (tmp_path / "g1.csv").read_bytes() == (tmp_path / "g2.csv").read_bytes()
    assert (tmp_path / "g1.ppm").read_bytes() == (tmp_path / "g2.ppm").read_bytes()
    pixels, _ = read_ppm(tmp_path / "g1.ppm")
    assert pixels.shape == (21, 21, 3)


def test_heatmap_control_points(tmp_path):
    grid = Grid2D(2, SequenceKind.PM, np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([[0.0, 0.5], [0.25, 0.0]]))
    csv_path = tmp_path / "g.csv"
    write_grid_csv(grid, csv_path)
    assert run("heatmap", csv_path, "-o", tmp_path / "h.ppm") == 0
    pixels, lines = read_ppm(tmp_path / "h.ppm")
    colors = dict(COLORMAP)
    # top row is the largest zeta
    assert tuple(pixels[0, 0]) == colors[0.5]  # phi=0, zeta=1
    assert tuple(pixels[0, 1]) == colors[0.0]  # phi=1, zeta=1
    assert tuple(pixels[1, 0]) == colors[0.0]  # phi=0, zeta=0
    assert tuple(pixels[1, 1]) == colors[0.25]  # phi=1, zeta=0
    assert any(ln.startswith(b"# qrws_version") for ln in lines)
    first = (tmp_path / "h.ppm").read_bytes()
    run("heatmap", csv_path, "-o", tmp_path / "h.ppm")
    assert (tmp_path / "h.ppm").read_bytes() == first


def test_colormap_clamps_and_interpolates():
    rgb = colorize(np.array([-1.0, 0.125, 2.0]))
    assert tuple(rgb[0]) == COLORMAP[0][1]
    assert tuple(rgb[2]) == COLORMAP[-1][1]
    assert tuple(rgb[1]) == (0, 80, 64)
    assert ppm_bytes(rgb.reshape(1, 3, 3)).startswith(b"P6\n3 1\n255\n")


def test_heatmap_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("phi,zeta,probability\n0,0,x\n")
    assert run("heatmap", bad, "-o", tmp_path / "x.ppm") == 1
    assert not (tmp_path / "x.ppm").exists()


@pytest.mark.parametrize(
    "args",
    [
        ("cross-section", "--kind", "B7"),
        ("cross-section", "--m", "0"),
        ("cross-section", "--theta", "4"),
        ("cross-section", "--points", "10"),
        ("sweep2d", "--resolution", "1"),
        ("run", "--omega", "10"),
        ("cross-section", "--no-such-flag"),
    ],
)
def test_validation_errors_exit_1_without_output(tmp_path, args):
    out = tmp_path / "sub" / "out.csv"
    assert run(*args, "-o", out) == 1
    assert not out.exists() and not out.parent.exists()


def test_error_names_offending_key(capsys):
    assert run("cross-section", "--kind", "B7") == 1
    assert "[sweep] kind" in capsys.readouterr().err


def test_fit_failure_exits_2(tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("# m: 4\nomega,phi,zeta,probability\n" + "".join(f"{w},0,0,0.25\n" for w in np.linspace(-1, 1, 21)))
    assert run("fit-hill", flat, "-o", tmp_path / "f.yaml") == 2
    assert not (tmp_path / "f.yaml").exists()


def test_run_command(tmp_path):
    out = tmp_path / "run.txt"
    state = tmp_path / "state.csv"
    assert run("run", "--m", 4, "--theta", "233pi/360", "--omega", 0, "-o", out, "--state", state) == 0
    record = yaml.safe_load(out.read_text())
    assert record["iterations"] == 5
    assert abs(record["probability"] - 0.391042) <= 0.05
    lines = [ln for ln in state.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "q,d,x,re,im" and len(lines) == 1 + 2 * 4 * 16


def test_config_file(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[walk]\nm = 3\n[sweep]\nresolution = 5\nkind = H1\n[output]\ndirectory = {tmp_path / 'outdir'}\nformats = csv, ppm\n")
    assert run("sweep2d", "--config", cfg) == 0
    assert (tmp_path / "outdir" / "grid_m3_H1.csv").exists()
    assert (tmp_path / "outdir" / "grid_m3_H1.ppm").exists()


def test_scan_theta_and_k_trend(tmp_path):
    scan = tmp_path / "scan.csv"
    assert run("scan-theta", "--m", 4, "--theta-step", "pi/12", "--points", 51, "-o", scan) == 0
    lines = scan.read_text().splitlines()
    assert any(ln.startswith("# theta_best:") for ln in lines)
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "theta,b,k,n,c,sigma,omega_max,epsilon" and len(body) == 14

    pts = tmp_path / "pts.csv"
    pts.write_text("m,k\n" + "".join(f"{m},{2 * math.exp(-0.5 * m) + 0.3}\n" for m in range(4, 10)))
    rec_path = tmp_path / "trend.yaml"
    assert run("k-trend", "--input", pts, "-o", rec_path) == 0
    record = yaml.safe_load(rec_path.read_text())
    assert record["trend_k3"] == pytest.approx(0.3, rel=1e-6)

    rec_path = tmp_path / "trend2.yaml"
    assert run("k-trend", "--kind", "A2", "--m-range", "4-7", "--theta-step", "pi/9", "--points", 51, "-o", rec_path) == 0
    record = yaml.safe_load(rec_path.read_text())
    assert "worst_k3" in record
    assert (tmp_path / "trend2_series.csv").exists()


def test_tables_1(tmp_path):
    out = tmp_path / "t1.csv"
    assert run("tables", "1", "-o", out) == 0
    body = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert body[0].startswith("no,m,theta,b,k,n,sigma,b_ref,b_dev")
    assert len(body) == 7


def test_tables_rejects_unknown():
    assert run("tables", "5") == 1


def test_verify_command(capsys):
    assert run("verify") == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7
    assert "7/7 properties passed" in out


def test_verify_detects_shift_mutation(monkeypatch, capsys):
    from qrws import walk

    original = walk._shift_inplace

    def broken(psi):
        original(psi)
        psi[..., 0, :] *= -1.0

    monkeypatch.setattr(walk, "_shift_inplace", broken)
    assert run("verify") == 1
    out = capsys.readouterr().out
    assert "FAIL  dense reference equivalence" in out


def test_version():
    assert run("--version") == 0
