"""
State-vector simulation of quantum random walk search on the hypercube.

The register holds a control qubit ``q``, the coin (direction) register ``d``
of dimension ``m`` and the node register ``x`` of dimension ``2**m``.  The
amplitudes are stored flat with index ``q*(m*2**m) + d*2**m + x``, which is
the C-order flattening of an array of shape ``(2, m, 2**m)``.

One search iteration is ``W = S . O . C1 . C0(phi, zeta) . O`` where ``C0`` is
the Householder traversing coin

    C0(phi, zeta) = exp(i zeta) (I - (1 - exp(i phi)) |chi><chi|)

acting on the unmarked (q = 0) block and ``C1 = -I`` acts on the marked block.

Besides the reference routines operating on a :class:`WalkState`, two batched
kernels are provided for sweeps: :func:`run_batch` evolves many full states at
once and :func:`sector_run_batch` exploits the coordinate-permutation symmetry
of a single marked node to evolve only ``2*(m+1)*2`` amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "WalkConfig",
    "WalkState",
    "CoinPhases",
    "init_state",
    "apply_oracle",
    "apply_coins",
    "apply_shift",
    "walk_iteration",
    "run_walk",
    "success_probability",
    "run_batch",
    "sector_run_batch",
    "batch_success_probability",
    "write_state_csv",
]


def default_iterations(m: int) -> int:
    # local copy to avoid a circular import with schedule
    return math.ceil(math.pi / 2 * math.sqrt(2 ** (m - 1)))


@dataclass(frozen=True)
class WalkConfig:
    """Size of the hypercube, the marked nodes and the number of iterations."""

    m: int
    marked: frozenset[int] = frozenset({0})
    iterations: int | None = None

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or self.m < 2:
            raise ValueError(f"coin size m must be an integer >= 2 (got {self.m!r})")
        marked = frozenset(int(h) for h in self.marked)
        if not marked:
            raise ValueError("at least one node must be marked")
        bad = [h for h in marked if not 0 <= h < 2**self.m]
        if bad:
            raise ValueError(f"marked nodes {sorted(bad)} outside [0, {2**self.m})")
        object.__setattr__(self, "marked", marked)
        if self.iterations is None:
            object.__setattr__(self, "iterations", default_iterations(self.m))
        elif self.iterations < 0:
            raise ValueError(f"iterations must be >= 0 (got {self.iterations})")

    @property
    def node_count(self) -> int:
        return 2**self.m


@dataclass(frozen=True)
class CoinPhases:
    """Householder phase ``phi`` and global multiplier phase ``zeta`` (radians)."""

    phi: float
    zeta: float

    def __post_init__(self):
        if not (math.isfinite(self.phi) and math.isfinite(self.zeta)):
            raise ValueError(f"coin phases must be finite (got {self.phi}, {self.zeta})")


@dataclass
class WalkState:
    """Flat complex amplitude vector of length ``2*m*2**m``."""

    m: int
    amplitudes: NDArray[np.complex128] = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        expected = 2 * self.m * 2**self.m
        if self.amplitudes.shape != (expected,):
            raise ValueError(
                f"state for m={self.m} needs {expected} amplitudes, got shape {self.amplitudes.shape}"
            )

    @property
    def tensor(self) -> NDArray[np.complex128]:
        """View of the amplitudes with shape ``(2, m, 2**m)``."""
        return self.amplitudes.reshape(2, self.m, 2**self.m)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> WalkState:
        return WalkState(self.m, self.amplitudes.copy())


def init_state(config: WalkConfig) -> WalkState:
    """Uniform superposition over coin and node registers, control in ``|0>``.

    The DFT of ``|0>`` is the uniform vector, so it is written directly.
    """
    m = config.m
    if m < 2:
        raise ValueError(f"coin size m must be >= 2 (got {m})")
    psi = np.zeros((2, m, 2**m), dtype=np.complex128)
    psi[0] = 1.0 / math.sqrt(m * 2**m)
    return WalkState(m, psi.reshape(-1))


def _marked_index(marked: Iterable[int], m: int) -> NDArray[np.intp]:
    idx = np.array(sorted(int(h) for h in marked), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= 2**m):
        raise IndexError(f"marked nodes must lie in [0, {2**m})")
    return idx


def _oracle_inplace(psi: NDArray, idx: NDArray[np.intp]) -> None:
    # psi has shape (..., 2, m, n); swaps control values on marked nodes
    if idx.size:
        psi[..., idx] = psi[..., ::-1, :, :][..., idx]


def _coins_inplace(psi: NDArray, phi, zeta) -> None:
    m = psi.shape[-2]
    phi = np.asarray(phi, dtype=float)[..., None, None]
    zeta = np.asarray(zeta, dtype=float)[..., None, None]
    v = psi[..., 0, :, :]
    # (1 - e^{i phi}) <chi|v> chi_d with chi_d = 1/sqrt(m)
    mean = v.sum(axis=-2, keepdims=True) / m
    psi[..., 0, :, :] = np.exp(1j * zeta) * (v - (1.0 - np.exp(1j * phi)) * mean)
    psi[..., 1, :, :] *= -1.0


def _shift_inplace(psi: NDArray) -> None:
    m = psi.shape[-2]
    n = psi.shape[-1]
    lead = psi.shape[:-2]
    for d in range(m):
        block = 1 << d
        view = psi[..., d, :].reshape(*lead, n // (2 * block), 2, block)
        view[...] = view[..., ::-1, :].copy()
        psi[..., d, :] = view.reshape(*lead, n)


def apply_oracle(state: WalkState, marked: Iterable[int]) -> WalkState:
    """Flip the control qubit on every marked node."""
    out = state.copy()
    _oracle_inplace(out.tensor, _marked_index(marked, state.m))
    return out


def apply_coins(state: WalkState, phases: CoinPhases) -> WalkState:
    """Traversing coin on the q=0 block, marking coin ``-I`` on the q=1 block."""
    out = state.copy()
    _coins_inplace(out.tensor, phases.phi, phases.zeta)
    return out


def apply_shift(state: WalkState) -> WalkState:
    """Move along direction ``d``: node ``x`` goes to ``x XOR 2**d``."""
    out = state.copy()
    _shift_inplace(out.tensor)
    return out


def walk_iteration(state: WalkState, phases: CoinPhases, marked: Iterable[int]) -> WalkState:
    out = state.copy()
    psi = out.tensor
    idx = _marked_index(marked, state.m)
    _oracle_inplace(psi, idx)
    _coins_inplace(psi, phases.phi, phases.zeta)
    _oracle_inplace(psi, idx)
    _shift_inplace(psi)
    return out


def success_probability(state: WalkState, marked: Iterable[int]) -> float:
    """Probability that measuring the node register yields a marked node."""
    idx = _marked_index(marked, state.m)
    return float(np.sum(np.abs(state.tensor[..., idx]) ** 2))


def _as_phase_list(phases: Sequence[CoinPhases] | NDArray) -> NDArray[np.float64]:
    if isinstance(phases, np.ndarray):
        arr = np.asarray(phases, dtype=float)
    else:
        arr = np.array([(p.phi, p.zeta) for p in phases], dtype=float).reshape(-1, 2)
    return arr


def run_walk(config: WalkConfig, phases: Sequence[CoinPhases]) -> float:
    """Run the full search with one coin per iteration and measure.

    Raises
    ------
    ValueError
        If the number of phases differs from ``config.iterations``.
    """
    arr = _as_phase_list(phases)
    if len(arr) != config.iterations:
        raise ValueError(
            f"expected {config.iterations} per-iteration phases, got {len(arr)}"
        )
    state = init_state(config)
    psi = state.tensor
    idx = _marked_index(config.marked, config.m)
    for phi, zeta in arr:
        _oracle_inplace(psi, idx)
        _coins_inplace(psi, phi, zeta)
        _oracle_inplace(psi, idx)
        _shift_inplace(psi)
    return success_probability(state, config.marked)


def run_batch(
    m: int, phi: NDArray, zeta: NDArray, marked: Iterable[int] = (0,)
) -> NDArray[np.float64]:
    """Success probabilities for a batch of phase schedules.

    Parameters
    ----------
    m : int
        Coin size.
    phi, zeta : ndarray, shape (B, K)
        Per-iteration phases for each of ``B`` independent runs of ``K``
        iterations.
    marked : iterable of int
        Marked nodes.

    Returns
    -------
    ndarray, shape (B,)
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if phi.shape != zeta.shape:
        raise ValueError(f"phase arrays differ in shape: {phi.shape} vs {zeta.shape}")
    batch, steps = phi.shape
    idx = _marked_index(marked, m)
    psi = np.zeros((batch, 2, m, 2**m), dtype=np.complex128)
    psi[:, 0] = 1.0 / math.sqrt(m * 2**m)
    for j in range(steps):
        _oracle_inplace(psi, idx)
        _coins_inplace(psi, phi[:, j], zeta[:, j])
        _oracle_inplace(psi, idx)
        _shift_inplace(psi)
    return batch_success_probability(psi, idx)


def batch_success_probability(psi: NDArray, marked: Iterable[int]) -> NDArray[np.float64]:
    idx = np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked, dtype=np.intp)
    return np.sum(np.abs(psi[..., idx]) ** 2, axis=(-3, -2, -1))


def sector_run_batch(m: int, phi: NDArray, zeta: NDArray) -> NDArray[np.float64]:
    """Batched success probability for a single marked node, in the symmetric sector.

    With one marked node (taken as node 0, every node being equivalent under
    XOR translation) the initial state, oracle, coins and shift all commute
    with permutations of the hypercube coordinates.  The amplitude of
    ``(q, d, x)`` then depends only on the Hamming weight ``w`` of ``x`` and on
    the bit ``x_d``, so the walk closes on an array ``a[q, w, b]`` of
    ``2*(m+1)*2`` entries.  Slots ``(w=0, b=1)`` and ``(w=m, b=0)`` do not
    correspond to any basis state and stay zero.

    Parameters
    ----------
    phi, zeta : ndarray, shape (B, K)

    Returns
    -------
    ndarray, shape (B,)
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if phi.shape != zeta.shape:
        raise ValueError(f"phase arrays differ in shape: {phi.shape} vs {zeta.shape}")
    batch, steps = phi.shape
    a = np.zeros((batch, 2, m + 1, 2), dtype=np.complex128)
    a[:, 0] = 1.0 / math.sqrt(m * 2**m)
    a[:, 0, 0, 1] = 0.0
    a[:, 0, m, 0] = 0.0
    w = np.arange(m + 1)
    # number of directions with x_d = 1 and x_d = 0 at weight w
    ones, zeros = w / m, (m - w) / m
    householder = 1.0 - np.exp(1j * phi)
    multiplier = np.exp(1j * zeta)
    for j in range(steps):
        a[:, :, 0, 0] = a[:, ::-1, 0, 0]
        mean = ones * a[:, 0, :, 1] + zeros * a[:, 0, :, 0]
        a[:, 0] = multiplier[:, j, None, None] * (
            a[:, 0] - (householder[:, j, None] * mean)[:, :, None]
        )
        a[:, 0, 0, 1] = 0.0
        a[:, 0, m, 0] = 0.0
        a[:, 1] *= -1.0
        a[:, :, 0, 0] = a[:, ::-1, 0, 0]
        shifted = np.zeros_like(a)
        shifted[:, :, :m, 0] = a[:, :, 1:, 1]
        shifted[:, :, 1:, 1] = a[:, :, :m, 0]
        a = shifted
    return m * np.sum(np.abs(a[:, :, 0, 0]) ** 2, axis=1)


def write_state_csv(state: WalkState, path, meta: Mapping[str, object] | None = None) -> None:
    """Dump amplitudes as ``q,d,x,re,im`` rows in flat-index order (9 significant digits)."""
    m, n = state.m, 2**state.m
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write("q,d,x,re,im\n")
        for flat, amp in enumerate(state.amplitudes):
            q, rest = divmod(flat, m * n)
            d, x = divmod(rest, n)
            fh.write(f"{q},{d},{x},{amp.real:.9g},{amp.imag:.9g}\n")
