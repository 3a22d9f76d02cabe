"""
Self-check suite run by ``qrws verify``.

Each property returns a :class:`PropertyResult`; all use small coin sizes
(``m <= 4``) and a fixed seed, so the whole suite is deterministic and fast.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from qrws import walk
from qrws.dense import dense_reference_run
from qrws.hill import HillParams, fit_hill, hill_eval, robustness_epsilon, robustness_from_params
from qrws.schedule import SequenceKind, iteration_count, omega_bound, polar_to_phases, sign_vectors
from qrws.sweep import evaluate_base_phases

__all__ = ["PropertyResult", "PROPERTIES", "run_properties"]

SEED = 20240611
DENSE_SIZES = (2, 3, 4)
SCHEDULES_PER_KIND = 20


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _random_state(rng: np.random.Generator, m: int) -> walk.WalkState:
    v = rng.normal(size=2 * m * 2**m) + 1j * rng.normal(size=2 * m * 2**m)
    return walk.WalkState(m, v / np.linalg.norm(v))


def _random_marked(rng: np.random.Generator, m: int) -> frozenset[int]:
    size = int(rng.integers(1, 2 ** (m - 1) + 1))
    return frozenset(int(h) for h in rng.choice(2**m, size=size, replace=False))


def _random_polar(rng: np.random.Generator) -> tuple[float, float]:
    theta = float(rng.uniform(0.0, math.pi))
    omega = float(rng.uniform(-1.0, 1.0) * omega_bound(theta))
    return omega, theta


def check_norm(rng: np.random.Generator) -> tuple[bool, str]:
    """Every operator keeps the norm to 1e-10."""
    worst = 0.0
    for m in DENSE_SIZES:
        for _ in range(10):
            state = _random_state(rng, m)
            phases = walk.CoinPhases(*rng.uniform(0, 2 * math.pi, 2))
            marked = _random_marked(rng, m)
            for out in (
                walk.apply_oracle(state, marked),
                walk.apply_coins(state, phases),
                walk.apply_shift(state),
                walk.walk_iteration(state, phases, marked),
            ):
                worst = max(worst, abs(out.norm() - 1.0))
    return worst < 1e-10, f"max |norm - 1| = {worst:.3g}"


def check_involutions(rng: np.random.Generator) -> tuple[bool, str]:
    """Oracle and shift applied twice give back the exact input."""
    failures = 0
    for m in DENSE_SIZES:
        for _ in range(10):
            state = _random_state(rng, m)
            marked = _random_marked(rng, m)
            twice_o = walk.apply_oracle(walk.apply_oracle(state, marked), marked)
            twice_s = walk.apply_shift(walk.apply_shift(state))
            failures += not np.array_equal(twice_o.amplitudes, state.amplitudes)
            failures += not np.array_equal(twice_s.amplitudes, state.amplitudes)
    return failures == 0, f"{failures} inexact round trips"


def check_dense_equivalence(rng: np.random.Generator) -> tuple[bool, str]:
    """Fast kernels agree with explicit matrix products to 1e-10."""
    worst = 0.0
    runs = 0
    for m in DENSE_SIZES:
        k_iter = iteration_count(m)
        for kind in SequenceKind:
            sp, sz = sign_vectors(kind, k_iter)
            for i in range(SCHEDULES_PER_KIND):
                base = polar_to_phases(*_random_polar(rng))
                phases = [walk.CoinPhases(a * base.phi, b * base.zeta) for a, b in zip(sp, sz)]
                marked = frozenset({int(rng.integers(2**m))}) if i % 2 == 0 else _random_marked(rng, m)
                cfg = walk.WalkConfig(m, marked)
                ref = dense_reference_run(cfg, phases)
                got = [walk.run_walk(cfg, phases)]
                phi = np.array([[p.phi for p in phases]])
                zeta = np.array([[p.zeta for p in phases]])
                got.append(float(walk.run_batch(m, phi, zeta, marked)[0]))
                if len(marked) == 1:
                    got.append(float(walk.sector_run_batch(m, phi, zeta)[0]))
                worst = max(worst, max(abs(g - ref) for g in got))
                runs += 1
    return worst < 1e-10, f"{runs} schedules, max deviation {worst:.3g}"


def check_conjugation(rng: np.random.Generator) -> tuple[bool, str]:
    """p(phi, zeta) == p(2*pi - phi, 2*pi - zeta) to 1e-12 for every kind."""
    worst = 0.0
    for m in DENSE_SIZES:
        base = rng.uniform(0, 2 * math.pi, size=(16, 2))
        for kind in SequenceKind:
            p = evaluate_base_phases(m, kind, base)
            q = evaluate_base_phases(m, kind, 2 * math.pi - base)
            worst = max(worst, float(np.max(np.abs(p - q))))
    return worst < 1e-12, f"max deviation {worst:.3g}"


def check_center_equivalence(rng: np.random.Generator) -> tuple[bool, str]:
    """At omega = 0 every kind gives the phase-matching probability to 1e-12."""
    worst = 0.0
    center = np.array([[math.pi, math.pi]])
    for m in DENSE_SIZES + (5, 6):
        ref = evaluate_base_phases(m, SequenceKind.PM, center)[0]
        for kind in SequenceKind:
            worst = max(worst, abs(evaluate_base_phases(m, kind, center)[0] - ref))
    return worst < 1e-12, f"max deviation {worst:.3g}"


_HILL_CASES = (
    HillParams(b=0.39, k=0.62, n=3.3, c=0.0),
    HillParams(b=0.41, k=1.7, n=5.0, c=0.12),
    HillParams(b=0.44, k=0.16, n=2.2, c=-0.03),
)


def check_hill_recovery(rng: np.random.Generator) -> tuple[bool, str]:
    """Noiseless Hill samples are fitted back to 1e-6 relative error."""
    worst = 0.0
    omega = np.linspace(-3.0, 3.0, 201)
    for true in _HILL_CASES:
        fit = fit_hill(omega, hill_eval(omega, true), window="full")
        for name in ("b", "k", "n"):
            worst = max(worst, abs(getattr(fit, name) / getattr(true, name) - 1.0))
        worst = max(worst, abs(fit.c - true.c))
    return worst < 1e-6, f"max parameter error {worst:.3g}"


def check_robustness_agreement(rng: np.random.Generator) -> tuple[bool, str]:
    """Analytic and sampled robustness half-widths differ by at most one grid step."""
    worst = 0.0
    omega = np.linspace(-3.0, 3.0, 601)
    step = omega[1] - omega[0]
    for true in _HILL_CASES:
        centered = HillParams(true.b, true.k, true.n, c=0.0)
        prob = hill_eval(omega, centered)
        for Omega in (0.5, 0.8, 0.9, 0.95):
            analytic = robustness_from_params(centered, Omega).epsilon
            sampled = robustness_epsilon(omega, prob, Omega).epsilon
            worst = max(worst, abs(analytic - sampled) / step)
    return worst <= 1.0, f"max difference {worst:.3g} grid steps"


PROPERTIES: dict[str, Callable[[np.random.Generator], tuple[bool, str]]] = {
    "norm preservation": check_norm,
    "oracle and shift involutions": check_involutions,
    "dense reference equivalence": check_dense_equivalence,
    "conjugation symmetry": check_conjugation,
    "omega = 0 equivalence across kinds": check_center_equivalence,
    "Hill fit self-consistency": check_hill_recovery,
    "analytic vs sampled robustness": check_robustness_agreement,
}


def run_properties(seed: int = SEED) -> list[PropertyResult]:
    """Run every property with its own generator seeded from ``seed``."""
    results = []
    for offset, (name, check) in enumerate(PROPERTIES.items()):
        rng = np.random.default_rng(seed + offset)
        start = time.perf_counter()
        try:
            passed, detail = check(rng)
        except Exception as exc:  # reported, not raised
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(PropertyResult(name, bool(passed), detail, time.perf_counter() - start))
    return results
