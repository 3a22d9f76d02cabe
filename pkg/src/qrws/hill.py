"""
Modified Hill function, least-squares fits of probability cross-sections, and
robustness intervals.

    W(omega) = b k**n / (|omega - c|**n + k**n)

``b`` is the plateau height, ``k`` the half-width at half maximum, ``n`` the
slope exponent and ``c`` the center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from qrws.optimize import FitError, NonIdentifiableError, levenberg_marquardt

__all__ = [
    "HillParams",
    "RobustnessReport",
    "hill_eval",
    "hill_sigma",
    "fit_hill",
    "fit_hill_many",
    "main_lobe",
    "robustness_epsilon",
    "robustness_from_params",
    "FitError",
    "NonIdentifiableError",
    "K_START_FRACTIONS",
    "N_STARTS",
]

K_START_FRACTIONS = (0.1, 0.5, 1.0, 2.0, 5.0)
N_STARTS = (1.0, 2.0, 4.0, 8.0)
MIN_POINTS = 8
FLAT_TOL = 1e-9
LOBE_RISE_TOL = 0.01

_LOG_LOWER = np.array([-30.0, -30.0, -10.0])
_LOG_UPPER = np.array([5.0, 30.0, 6.0])


@dataclass(frozen=True)
class HillParams:
    """Fitted Hill parameters and the fit residual.

    ``q`` is the number of free parameters (3 with the center pinned at 0,
    otherwise 4) and ``n_points`` the number of samples that entered the fit.
    """

    b: float
    k: float
    n: float
    c: float = 0.0
    sigma: float = 0.0
    q: int = 4
    n_points: int = 0

    def __post_init__(self):
        if not (self.b > 0 and self.k > 0 and self.n > 0):
            raise ValueError(f"b, k, n must be positive (got {self.b}, {self.k}, {self.n})")

    def __call__(self, omega: ArrayLike) -> NDArray:
        return hill_eval(omega, self)


@dataclass(frozen=True)
class RobustnessReport:
    omega_max: float
    p_max: float
    epsilon: float
    Omega: float


def hill_eval(omega: ArrayLike, params: HillParams) -> NDArray | float:
    """Evaluate the modified Hill function; ``|omega - c|**n`` is 0 at the center."""
    u = np.abs(np.asarray(omega, dtype=float) - params.c)
    with np.errstate(divide="ignore"):
        t = params.n * (np.log(u) - math.log(params.k))
    out = params.b * expit(-t)
    return float(out) if np.ndim(out) == 0 else out


def hill_sigma(params: HillParams, omega: ArrayLike, prob: ArrayLike, q: int | None = None) -> float:
    """``sqrt(sum((W_j - p_j)**2) / (N_p - q))``."""
    omega = np.asarray(omega, dtype=float)
    prob = np.asarray(prob, dtype=float)
    q = params.q if q is None else q
    n_p = omega.size
    if n_p <= q:
        raise ValueError(f"need more samples than parameters (N_p={n_p}, q={q})")
    resid = hill_eval(omega, params) - prob
    return math.sqrt(float(np.sum(resid * resid)) / (n_p - q))


def main_lobe(prob: ArrayLike, rise_tol: float = LOBE_RISE_TOL, min_points: int = MIN_POINTS) -> tuple[int, int]:
    """Inclusive index range of the peak containing the global maximum.

    Walking outwards from the argmax, each side ends at the lowest sample seen
    before the curve climbs more than ``rise_tol * p_max`` above it.  Ripples
    smaller than that (flat plateaus) do not end the lobe.  The range is
    widened symmetrically to at least ``min_points`` samples.
    """
    p = np.asarray(prob, dtype=float)
    size = p.size
    peak = int(np.argmax(p))
    slack = rise_tol * p[peak]

    def edge(step: int) -> int:
        j = low = peak
        while 0 <= j + step < size:
            j += step
            if p[j] < p[low]:
                low = j
            elif p[j] > p[low] + slack:
                break
        return low

    lo, hi = edge(-1), edge(1)
    while hi - lo + 1 < min(min_points, size):
        if lo > 0:
            lo -= 1
        if hi - lo + 1 < min_points and hi < size - 1:
            hi += 1
    return lo, hi


def _hill_model(w: NDArray, p: NDArray, mask: NDArray, problem: NDArray, fix_center: bool):
    def model(x: NDArray, rows: NDArray):
        idx = problem[rows]
        ww, pp, mm = w[idx], p[idx], mask[idx]
        b = np.exp(x[:, 0:1])
        logk = x[:, 1:2]
        n = np.exp(x[:, 2:3])
        c = np.zeros_like(b) if fix_center else x[:, 3:4]
        d = ww - c
        u = np.abs(d)
        centered = u == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.where(centered, 0.0, np.log(np.where(centered, 1.0, u)) - logk)
            t = np.where(centered, -np.inf, n * lr)
            s = expit(-t)
            W = b * s
            slope = b * s * (1.0 - s)
            cols = [W, slope * n, -slope * n * lr]
            if not fix_center:
                cols.append(np.where(centered, 0.0, slope * n * np.sign(d) / np.where(centered, 1.0, u)))
        J = np.stack(cols, axis=-1) * mm[..., None]
        return (W - pp) * mm, J

    return model


def fit_hill_many(
    data: Sequence[tuple[ArrayLike, ArrayLike]],
    *,
    fix_center: bool = False,
    strict_nk: bool = False,
    window: str = "lobe",
    max_iter: int = 500,
) -> list[HillParams | Exception]:
    """Fit every ``(omega, prob)`` pair; failures are returned, not raised.

    All multi-starts of all problems are advanced in one batched optimizer
    run.  See :func:`fit_hill` for the per-problem contract.
    """
    if window not in ("lobe", "full"):
        raise ValueError(f"window must be 'lobe' or 'full' (got {window!r})")
    results: list[HillParams | Exception | None] = [None] * len(data)
    windows = []
    for i, (omega, prob) in enumerate(data):
        omega = np.asarray(omega, dtype=float)
        prob = np.asarray(prob, dtype=float)
        if omega.shape != prob.shape or omega.ndim != 1:
            results[i] = ValueError("omega and probability arrays must be 1-D of equal length")
            continue
        if omega.size < MIN_POINTS:
            results[i] = ValueError(f"need at least {MIN_POINTS} samples (got {omega.size})")
            continue
        if prob.max() - prob.min() < FLAT_TOL:
            results[i] = NonIdentifiableError("flat data: Hill parameters are not identifiable")
            continue
        lo, hi = main_lobe(prob) if window == "lobe" else (0, omega.size - 1)
        windows.append((i, omega[lo : hi + 1], prob[lo : hi + 1]))

    if not windows:
        return results  # type: ignore[return-value]

    width = max(w.size for _, w, _ in windows)
    Q = len(windows)
    W_pad = np.zeros((Q, width))
    P_pad = np.zeros((Q, width))
    M_pad = np.zeros((Q, width))
    starts, owner = [], []
    for j, (_, w, p) in enumerate(windows):
        W_pad[j, : w.size] = w
        P_pad[j, : w.size] = p
        M_pad[j, : w.size] = 1.0
        span = w[-1] - w[0]
        centers = [0.0] if fix_center else sorted({0.0, float(w[int(np.argmax(p))])})
        for kf in K_START_FRACTIONS:
            for n0 in N_STARTS:
                for c0 in centers:
                    row = [math.log(p.max()), math.log(kf * span / 4), math.log(n0)]
                    if not fix_center:
                        row.append(c0)
                    starts.append(row)
                    owner.append(j)
    owner_arr = np.array(owner)
    x0 = np.array(starts)
    lower, upper = _LOG_LOWER, _LOG_UPPER
    if not fix_center:
        lower = np.append(lower, -np.inf)
        upper = np.append(upper, np.inf)
    fit = levenberg_marquardt(
        _hill_model(W_pad, P_pad, M_pad, owner_arr, fix_center),
        x0,
        lower=lower,
        upper=upper,
        max_iter=max_iter,
    )
    q = 3 if fix_center else 4
    for j, (i, w, p) in enumerate(windows):
        rows = np.flatnonzero(owner_arr == j)
        xs, costs, conv = fit.x[rows], fit.cost[rows], fit.converged[rows]
        ok = np.isfinite(costs)
        if strict_nk:
            ok &= np.exp(xs[:, 2]) > np.exp(xs[:, 1])
        if not np.any(conv & ok):
            reason = "n > k constraint" if strict_nk and np.any(conv) else "non-convergence"
            results[i] = FitError(f"Hill fit failed ({reason}) for every start")
            continue
        best = rows[np.flatnonzero(ok)[np.argmin(costs[ok])]]
        xb = fit.x[best]
        results[i] = HillParams(
            b=float(np.exp(xb[0])),
            k=float(np.exp(xb[1])),
            n=float(np.exp(xb[2])),
            c=0.0 if fix_center else float(xb[3]),
            sigma=math.sqrt(float(fit.cost[best]) / (w.size - q)),
            q=q,
            n_points=int(w.size),
        )
    return results  # type: ignore[return-value]


def fit_hill(
    omega: ArrayLike,
    prob: ArrayLike,
    *,
    fix_center: bool = False,
    strict_nk: bool = False,
    window: str = "lobe",
) -> HillParams:
    """Least-squares fit of the modified Hill function to a cross-section.

    Damped Gauss-Newton in ``(log b, log k, log n, c)`` from a fixed grid of
    starts: ``b0 = max p``, ``k0`` in ``{0.1, 0.5, 1, 2, 5} * span/4``,
    ``n0`` in ``{1, 2, 4, 8}`` and ``c0`` in ``{0, omega at max p}``.  The
    best start wins.

    Parameters
    ----------
    omega, prob : array_like
        Sample positions and probabilities, at least 8 points.
    fix_center : bool
        Pin ``c = 0`` (3 free parameters instead of 4).
    strict_nk : bool
        Only accept solutions with ``n > k``.
    window : {'lobe', 'full'}
        ``'lobe'`` fits only the peak around the maximum (see
        :func:`main_lobe`); ``'full'`` uses every sample.

    Raises
    ------
    NonIdentifiableError
        If ``max(prob) - min(prob) < 1e-9``.
    FitError
        If no start converges.
    """
    (res,) = fit_hill_many([(omega, prob)], fix_center=fix_center, strict_nk=strict_nk, window=window)
    if isinstance(res, Exception):
        raise res
    return res


def robustness_from_params(params: HillParams, Omega: float = 0.9) -> RobustnessReport:
    """Closed form ``eps = k * ((1 - Omega) / Omega)**(1/n)`` around ``c``."""
    _check_omega(Omega)
    eps = params.k * ((1.0 - Omega) / Omega) ** (1.0 / params.n)
    return RobustnessReport(omega_max=params.c, p_max=params.b, epsilon=eps, Omega=Omega)


def robustness_epsilon(omega: ArrayLike, prob: ArrayLike, Omega: float = 0.9) -> RobustnessReport:
    """Largest symmetric half-width around the sampled maximum keeping ``p >= Omega*p_max``.

    The first sample offset ``t`` (in grid steps) on either side that drops
    below the threshold bounds the open interval, so ``eps = t * step``.  If
    the grid ends first, ``eps`` is the distance to the nearer end.
    """
    _check_omega(Omega)
    omega = np.asarray(omega, dtype=float)
    p = np.asarray(prob, dtype=float)
    i = int(np.argmax(p))
    threshold = Omega * p[i]
    reach = min(i, p.size - 1 - i)
    t = 1
    while t <= reach and p[i - t] >= threshold and p[i + t] >= threshold:
        t += 1
    if t <= reach:
        eps = max(omega[i] - omega[i - t], omega[i + t] - omega[i])
    else:
        eps = min(omega[i] - omega[0], omega[-1] - omega[i])
    return RobustnessReport(omega_max=float(omega[i]), p_max=float(p[i]), epsilon=float(eps), Omega=Omega)


def _check_omega(Omega: float) -> None:
    if not 0.0 < Omega < 1.0:
        raise ValueError(f"Omega must lie in (0, 1) (got {Omega})")
