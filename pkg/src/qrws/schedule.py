"""Coin-phase schedules: polar parametrization, sign sequences, iteration count."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from qrws.walk import CoinPhases

__all__ = [
    "SequenceKind",
    "PolarPoint",
    "PhaseSchedule",
    "polar_to_phases",
    "omega_bound",
    "iteration_count",
    "sign_alternating",
    "sign_halves",
    "sign_vectors",
    "schedule_phases",
    "THETA_BEST_REF",
    "THETA_WORST_REF",
    "THETA_LOW_REF",
    "THETA_MIRROR_LOW_REF",
]

# reference linear dependences, all multiples of pi/360
THETA_BEST_REF = 233 * math.pi / 360
THETA_WORST_REF = 127 * math.pi / 360
THETA_LOW_REF = 53 * math.pi / 360
THETA_MIRROR_LOW_REF = 307 * math.pi / 360

_BOUND_SLACK = 1e-12


class SequenceKind(str, enum.Enum):
    """Sign rule applied to the base phases at each iteration.

    ``PM`` keeps the phases constant.  ``A*`` kinds flip sign every two
    iterations, ``H*`` kinds flip sign at the halfway iteration.  The digit
    selects which phases flip: 1 -> zeta, 2 -> phi, 3 -> both.
    """

    PM = "PM"
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"

    @classmethod
    def parse(cls, name: str) -> SequenceKind:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown sequence kind {name!r} (expected one of {valid})") from None


def omega_bound(theta: float) -> float:
    """Largest ``|omega|`` keeping both phases inside ``[0, 2*pi]``."""
    s, c = abs(math.sin(theta)), abs(math.cos(theta))
    # sin(pi) and cos(pi/2) are ~1e-16, not 0
    a = math.pi / s if s > 1e-14 else math.inf
    b = math.pi / c if c > 1e-14 else math.inf
    return min(a, b)


@dataclass(frozen=True)
class PolarPoint:
    omega: float
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi] (got {self.theta})")
        bound = omega_bound(self.theta)
        if abs(self.omega) > bound + _BOUND_SLACK:
            raise ValueError(
                f"|omega|={abs(self.omega):.6g} exceeds the bound {bound:.6g} at theta={self.theta:.6g}"
            )


def polar_to_phases(omega: float, theta: float) -> CoinPhases:
    """Point at signed distance ``omega`` from ``(pi, pi)`` along angle ``theta``."""
    PolarPoint(omega, theta)
    return CoinPhases(math.pi + omega * math.cos(theta), math.pi + omega * math.sin(theta))


def iteration_count(m: int) -> int:
    """Iterations for a single marked node: ceil(pi/2 * sqrt(2**(m-1)))."""
    if m < 2:
        raise ValueError(f"coin size m must be >= 2 (got {m})")
    return math.ceil(math.pi / 2 * math.sqrt(2 ** (m - 1)))


def sign_alternating(j: int) -> int:
    """(-1)**ceil(j/2) for 1-based iteration ``j``."""
    if j < 1:
        raise ValueError(f"iterations are 1-based (got j={j})")
    return -1 if (-(-j // 2)) % 2 else 1


def sign_halves(j: int, k_iter: int) -> int:
    """(-1)**round(j/k_iter), halves rounded away from zero."""
    if not 1 <= j <= k_iter:
        raise ValueError(f"need 1 <= j <= k_iter (got j={j}, k_iter={k_iter})")
    # exact integer rounding: floor(j/k + 1/2) == (2j + k) // (2k) for j, k > 0
    r = (2 * j + k_iter) // (2 * k_iter)
    return -1 if r % 2 else 1


def sign_vectors(kind: SequenceKind | str, k_iter: int) -> tuple[NDArray, NDArray]:
    """Per-iteration sign multipliers for ``(phi, zeta)``, each of length ``k_iter``."""
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    one = np.ones(k_iter)
    if kind is SequenceKind.PM:
        return one, one.copy()
    if kind.value[0] == "A":
        s = np.array([sign_alternating(j) for j in range(1, k_iter + 1)], dtype=float)
    else:
        s = np.array([sign_halves(j, k_iter) for j in range(1, k_iter + 1)], dtype=float)
    digit = kind.value[1]
    if digit == "1":
        return one, s
    if digit == "2":
        return s, one
    return s, s.copy()


@dataclass(frozen=True)
class PhaseSchedule:
    kind: SequenceKind
    base: PolarPoint
    k_iter: int
    phases: tuple[CoinPhases, ...]


def schedule_phases(kind: SequenceKind | str, polar: PolarPoint, k_iter: int) -> PhaseSchedule:
    """Apply the kind's sign rule to the base phases of ``polar`` for ``k_iter`` steps.

    Negative phases are kept; the walk treats them modulo 2*pi.
    """
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    base = polar_to_phases(polar.omega, polar.theta)
    sp, sz = sign_vectors(kind, k_iter)
    phases = tuple(CoinPhases(a * base.phi, b * base.zeta) for a, b in zip(sp, sz))
    return PhaseSchedule(kind, polar, k_iter, phases)
