"""
Dense-matrix reference for the walk, used only to cross-check the fast kernels.

Every operator is built as an explicit ``(2*m*2**m)``-square matrix with the
register order (control, coin, node) and composed by plain matrix products,
including an explicit DFT for the initial state.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from qrws.walk import CoinPhases, WalkConfig

MAX_DENSE_M = 4


def _check_m(m: int) -> None:
    if m > MAX_DENSE_M:
        raise ValueError(f"dense reference limited to m <= {MAX_DENSE_M} (got {m})")


def dft_matrix(dim: int) -> np.ndarray:
    j = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(j, j) / dim) / math.sqrt(dim)


def initial_vector(m: int) -> np.ndarray:
    """``(I_2 (x) F_m (x) F_n) |0,0,0>`` built from explicit DFT matrices."""
    n = 2**m
    basis = np.zeros(2 * m * n, dtype=complex)
    basis[0] = 1.0
    return np.kron(np.eye(2), np.kron(dft_matrix(m), dft_matrix(n))) @ basis


def oracle_matrix(m: int, marked: Iterable[int]) -> np.ndarray:
    n = 2**m
    marked = set(marked)
    flip = np.zeros((2, 2))
    flip[0, 1] = flip[1, 0] = 1.0
    O = np.zeros((2 * n, 2 * n))
    for x in range(n):
        block = flip if x in marked else np.eye(2)
        for q in range(2):
            for r in range(2):
                O[q * n + x, r * n + x] = block[q, r]
    # O acts on (control, node); identity on the coin register sits between them
    O4 = O.reshape(2, n, 2, n)
    full = np.einsum("axby,dc->adxbcy", O4, np.eye(m))
    return full.reshape(2 * m * n, 2 * m * n).astype(complex)


def traversing_coin(phi: float, zeta: float, m: int) -> np.ndarray:
    chi = np.full((m, 1), 1.0 / math.sqrt(m))
    return np.exp(1j * zeta) * (np.eye(m) - (1.0 - np.exp(1j * phi)) * (chi @ chi.T))


def coin_matrix(m: int, phases: CoinPhases) -> np.ndarray:
    """``Diag(C0 (x) I_n, -I_m (x) I_n)``, i.e. ``C1 . C0`` on both control blocks."""
    n = 2**m
    c0 = np.kron(traversing_coin(phases.phi, phases.zeta, m), np.eye(n))
    c1 = np.kron(-np.eye(m), np.eye(n))
    out = np.zeros((2 * m * n, 2 * m * n), dtype=complex)
    out[: m * n, : m * n] = c0
    out[m * n :, m * n :] = c1
    return out


def shift_matrix(m: int) -> np.ndarray:
    n = 2**m
    S = np.zeros((m * n, m * n))
    for d in range(m):
        for x in range(n):
            S[d * n + (x ^ (1 << d)), d * n + x] = 1.0
    return np.kron(np.eye(2), S).astype(complex)


def iteration_matrix(m: int, phases: CoinPhases, marked: Iterable[int]) -> np.ndarray:
    O = oracle_matrix(m, marked)
    return shift_matrix(m) @ O @ coin_matrix(m, phases) @ O


def dense_reference_run(config: WalkConfig, phases: Sequence[CoinPhases]) -> float:
    """Marked-node probability from explicit matrix products (``m <= 4``)."""
    m = config.m
    _check_m(m)
    if len(phases) != config.iterations:
        raise ValueError(f"expected {config.iterations} per-iteration phases, got {len(phases)}")
    psi = initial_vector(m)
    for ph in phases:
        psi = iteration_matrix(m, ph, config.marked) @ psi
    n = 2**m
    probs = np.abs(psi.reshape(2, m, n)) ** 2
    return float(sum(probs[:, :, h].sum() for h in config.marked))
