"""
Batched damped Gauss-Newton (Levenberg-Marquardt) least squares.

Many independent problems, e.g. every start of a multi-start fit over every
cross-section of a scan, are advanced together.  Each row of the batch has its
own parameters, damping and convergence state; rows that have converged drop
out of the work set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

# model(x, rows) -> (residuals (R, N), jacobian (R, N, P)) for the given batch rows
Model = Callable[[NDArray, NDArray], tuple[NDArray, NDArray]]

_DAMP_UP = 10.0
_DAMP_DOWN = 0.3
_DAMP_MAX = 1e16
_TINY_COST = 1e-30


class FitError(RuntimeError):
    """No start of a least-squares fit converged."""


class NonIdentifiableError(ValueError):
    """The data cannot determine the model parameters (e.g. flat data)."""


@dataclass
class LMResult:
    x: NDArray[np.float64]
    cost: NDArray[np.float64]
    converged: NDArray[np.bool_]
    iterations: NDArray[np.int64]


def levenberg_marquardt(
    model: Model,
    x0: NDArray,
    *,
    lower: NDArray | None = None,
    upper: NDArray | None = None,
    max_iter: int = 500,
    rtol: float = 1e-12,
) -> LMResult:
    """Minimize ``sum(r**2)`` independently for every row of ``x0``.

    A row converges when an accepted step changes the objective by less than
    ``rtol`` relative, when the objective is numerically zero, or when the
    damping saturates (no descent direction left).  Rows still running after
    ``max_iter`` iterations are reported as not converged.

    Parameters
    ----------
    model : callable
        ``model(x, rows)`` returns residuals and Jacobian for parameter rows
        ``x`` belonging to batch indices ``rows``.
    x0 : ndarray, shape (S, P)
    lower, upper : ndarray, shape (P,), optional
        Box the iterates are clipped to.
    """
    x = np.array(x0, dtype=float, copy=True)
    S, P = x.shape
    lo = np.full(P, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(P, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lo, hi)

    all_rows = np.arange(S)
    with np.errstate(all="ignore"):
        r, J = model(x, all_rows)
        # updated in place below; the model may return read-only views
        r, J = np.array(r, dtype=float), np.array(J, dtype=float)
        cost = np.sum(r * r, axis=1)
    cost = np.where(np.isfinite(cost), cost, np.inf)
    damping = np.full(S, 1e-3)
    converged = np.zeros(S, dtype=bool)
    running = np.isfinite(cost)
    iterations = np.zeros(S, dtype=np.int64)
    eye = np.eye(P)

    for _ in range(max_iter):
        rows = np.flatnonzero(running)
        if rows.size == 0:
            break
        iterations[rows] += 1
        Jr, rr = J[rows], r[rows]
        A = np.einsum("snp,snq->spq", Jr, Jr)
        g = np.einsum("snp,sn->sp", Jr, rr)
        diag = np.maximum(np.einsum("spp->sp", A), 1e-12)
        lhs = A + damping[rows, None, None] * diag[:, :, None] * eye
        with np.errstate(all="ignore"):
            try:
                step = -np.linalg.solve(lhs, g[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = -np.stack([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(lhs, g)])
            x_new = np.clip(x[rows] + step, lo, hi)
            r_new, J_new = model(x_new, rows)
            cost_new = np.sum(r_new * r_new, axis=1)
        cost_new = np.where(np.isfinite(cost_new), cost_new, np.inf)
        accept = cost_new <= cost[rows]

        old = cost[rows]
        rel = np.where(old > 0, (old - cost_new) / np.where(old > 0, old, 1.0), 0.0)
        done = accept & ((rel < rtol) | (cost_new < _TINY_COST))

        acc_rows = rows[accept]
        x[acc_rows] = x_new[accept]
        r[acc_rows] = r_new[accept]
        J[acc_rows] = J_new[accept]
        cost[acc_rows] = cost_new[accept]
        damping[rows] = np.where(accept, damping[rows] * _DAMP_DOWN, damping[rows] * _DAMP_UP)
        done |= damping[rows] > _DAMP_MAX

        finished = rows[done]
        converged[finished] = True
        running[finished] = False

    return LMResult(x=x, cost=cost, converged=converged, iterations=iterations)
