"""
Success-probability sweeps over the (phi, zeta) plane and along omega lines.

Cells are evaluated in fixed-size chunks that do not depend on the worker
count, and results are reassembled in index order, so a sweep gives the same
bytes for any degree of parallelism.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from qrws.schedule import SequenceKind, iteration_count, omega_bound, sign_vectors
from qrws.walk import run_batch, sector_run_batch

__all__ = [
    "Grid2D",
    "CrossSection",
    "SweepError",
    "parallel_map",
    "default_workers",
    "evaluate_base_phases",
    "sweep_phase_plane",
    "sweep_omega",
    "sweep_omega_many",
    "write_grid_csv",
    "read_grid_csv",
    "write_cross_section_csv",
    "read_cross_section_csv",
    "format_float",
    "DEFAULT_RESOLUTION",
    "DEFAULT_OMEGA_POINTS",
]

DEFAULT_RESOLUTION = 181
DEFAULT_OMEGA_POINTS = 201
# amplitudes held per chunk by the full-state kernel
_FULL_KERNEL_BUDGET = 1 << 21
_SECTOR_CHUNK = 8192


class SweepError(RuntimeError):
    """A grid cell failed; ``index`` is its position in the flattened sweep."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"sweep failed at grid index {index}: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause

    def __reduce__(self):
        # crosses process boundaries from pool workers
        return (SweepError, (self.index, self.cause))


def default_workers() -> int:
    env = os.environ.get("QRWS_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"QRWS_WORKERS must be a positive integer (got {env!r})") from None
        if n < 1:
            raise ValueError(f"QRWS_WORKERS must be a positive integer (got {env!r})")
        return n
    return os.cpu_count() or 1


def _run_chunk(fn: Callable[[Sequence], Sequence], start: int, chunk: Sequence) -> list:
    try:
        out = list(fn(chunk))
    except Exception:
        # locate the failing item
        for offset, item in enumerate(chunk):
            try:
                fn([item])
            except Exception as exc:
                raise SweepError(start + offset, exc) from exc
        raise
    if len(out) != len(chunk):
        raise SweepError(start, RuntimeError(f"chunk returned {len(out)} results for {len(chunk)} cells"))
    return out


def parallel_map(
    fn: Callable[[Sequence], Sequence],
    items: Sequence,
    *,
    workers: int = 1,
    chunk_size: int = 1024,
) -> list:
    """Apply a vectorized ``fn`` to ``items`` chunk by chunk, in index order.

    ``fn`` receives a list of items and returns one result per item.  Chunk
    boundaries depend only on ``chunk_size``.  A failing item raises
    :class:`SweepError` carrying its index.
    """
    items = list(items)
    if not items:
        return []
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    starts = list(range(0, len(items), chunk_size))
    chunks = [items[s : s + chunk_size] for s in starts]
    if workers <= 1 or len(chunks) == 1:
        parts = [_run_chunk(fn, s, c) for s, c in zip(starts, chunks)]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            parts = list(pool.map(partial(_run_chunk, fn), starts, chunks))
    return [r for part in parts for r in part]


def _marked_key(marked: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(int(h) for h in marked))


def _eval_cells(cells: Sequence[tuple[float, float]], *, m: int, sign_phi, sign_zeta, marked: tuple[int, ...]):
    base = np.asarray(cells, dtype=float).reshape(-1, 2)
    phi = np.outer(base[:, 0], sign_phi)
    zeta = np.outer(base[:, 1], sign_zeta)
    if len(marked) == 1:
        return sector_run_batch(m, phi, zeta).tolist()
    return run_batch(m, phi, zeta, marked).tolist()


def evaluate_base_phases(
    m: int,
    kind: SequenceKind | str,
    base_phases: NDArray,
    *,
    marked: Iterable[int] = (0,),
    iterations: int | None = None,
    workers: int = 1,
) -> NDArray[np.float64]:
    """Success probability for each base ``(phi, zeta)`` row under a sequence kind.

    With a single marked node the symmetric-sector kernel is used (every node
    is equivalent under XOR translation); otherwise the full state is evolved.
    """
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    k_iter = iteration_count(m) if iterations is None else iterations
    sp, sz = sign_vectors(kind, k_iter)
    marked = _marked_key(marked)
    if not marked or any(not 0 <= h < 2**m for h in marked):
        raise ValueError(f"marked nodes must be a nonempty subset of [0, {2**m})")
    base = np.asarray(base_phases, dtype=float).reshape(-1, 2)
    if len(marked) == 1:
        chunk = _SECTOR_CHUNK
    else:
        chunk = max(1, _FULL_KERNEL_BUDGET // (2 * m * 2**m))
    fn = partial(_eval_cells, m=m, sign_phi=sp, sign_zeta=sz, marked=marked)
    cells = [tuple(row) for row in base]
    return np.array(parallel_map(fn, cells, workers=workers, chunk_size=chunk), dtype=float)


@dataclass
class Grid2D:
    """Probabilities on a uniform (phi, zeta) grid; ``prob[i, j]`` is at ``(phi_axis[i], zeta_axis[j])``."""

    m: int | None
    kind: SequenceKind | None
    phi_axis: NDArray
    zeta_axis: NDArray
    prob: NDArray

    def __post_init__(self):
        if self.prob.shape != (self.phi_axis.size, self.zeta_axis.size):
            raise ValueError(
                f"probability matrix {self.prob.shape} does not match axes "
                f"({self.phi_axis.size}, {self.zeta_axis.size})"
            )


@dataclass
class CrossSection:
    """Probabilities along the line ``theta`` through ``(pi, pi)``."""

    m: int
    kind: SequenceKind
    theta: float
    omega_axis: NDArray
    prob: NDArray
    meta: dict = field(default_factory=dict)

    @property
    def phi(self) -> NDArray:
        return math.pi + self.omega_axis * math.cos(self.theta)

    @property
    def zeta(self) -> NDArray:
        return math.pi + self.omega_axis * math.sin(self.theta)


def sweep_phase_plane(
    m: int,
    kind: SequenceKind | str,
    resolution: int = DEFAULT_RESOLUTION,
    *,
    marked: Iterable[int] = (0,),
    workers: int = 1,
) -> Grid2D:
    """Success probability over an R x R grid of base phases covering ``[0, 2*pi]**2``."""
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2 (got {resolution})")
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    axis = np.linspace(0.0, 2 * math.pi, resolution)
    P, Z = np.meshgrid(axis, axis, indexing="ij")
    base = np.column_stack([P.ravel(), Z.ravel()])
    prob = evaluate_base_phases(m, kind, base, marked=marked, workers=workers)
    return Grid2D(m, kind, axis, axis.copy(), prob.reshape(resolution, resolution))


def omega_axis(theta: float, n_points: int) -> NDArray:
    if n_points < 11 or n_points % 2 == 0:
        raise ValueError(f"n_points must be odd and >= 11 (got {n_points})")
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"theta must lie in [0, pi] (got {theta})")
    half = np.linspace(0.0, omega_bound(theta), n_points // 2 + 1)
    # mirrored so that axis[i] == -axis[-1 - i] exactly
    return np.concatenate([-half[:0:-1], half])


def sweep_omega_many(
    m: int,
    kind: SequenceKind | str,
    thetas: Sequence[float],
    n_points: int = DEFAULT_OMEGA_POINTS,
    *,
    marked: Iterable[int] = (0,),
    workers: int = 1,
) -> list[CrossSection]:
    """Cross-sections for several angles, evaluated as one sweep."""
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    axes = [omega_axis(t, n_points) for t in thetas]
    if not axes:
        return []
    base = np.concatenate(
        [np.column_stack([math.pi + a * math.cos(t), math.pi + a * math.sin(t)]) for a, t in zip(axes, thetas)]
    )
    prob = evaluate_base_phases(m, kind, base, marked=marked, workers=workers).reshape(len(axes), n_points)
    return [CrossSection(m, kind, float(t), a, p) for t, a, p in zip(thetas, axes, prob)]


def sweep_omega(
    m: int,
    kind: SequenceKind | str,
    theta: float,
    n_points: int = DEFAULT_OMEGA_POINTS,
    *,
    marked: Iterable[int] = (0,),
    workers: int = 1,
) -> CrossSection:
    """Success probability along ``omega`` in ``[-bound, bound]`` at fixed ``theta``."""
    return sweep_omega_many(m, kind, [theta], n_points, marked=marked, workers=workers)[0]


def format_float(x: float) -> str:
    return f"{float(x):.9g}"


def _write_csv(path, meta: Mapping[str, object], header: str, rows: Iterable[Sequence[float]]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _read_csv(path) -> tuple[dict, list[str], NDArray]:
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = [h.strip() for h in line.split(",")]
                continue
            fields = line.split(",")
            if len(fields) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
    if header is None:
        raise ValueError(f"{path}: missing CSV header")
    return meta, header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_grid_csv(grid: Grid2D, path, meta: Mapping[str, object] | None = None) -> None:
    P, Z = np.meshgrid(grid.phi_axis, grid.zeta_axis, indexing="ij")
    rows = zip(P.ravel(), Z.ravel(), grid.prob.ravel())
    _write_csv(path, meta or {}, "phi,zeta,probability", rows)


def read_grid_csv(path) -> Grid2D:
    meta, header, data = _read_csv(path)
    if header != ["phi", "zeta", "probability"]:
        raise ValueError(f"{path}: expected header phi,zeta,probability, got {','.join(header)}")
    if data.shape[0] == 0:
        raise ValueError(f"{path}: grid has no rows")
    phi_axis = np.unique(data[:, 0])
    zeta_axis = np.unique(data[:, 1])
    if phi_axis.size * zeta_axis.size != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a complete rectangular grid")
    prob = np.full((phi_axis.size, zeta_axis.size), np.nan)
    i = np.searchsorted(phi_axis, data[:, 0])
    j = np.searchsorted(zeta_axis, data[:, 1])
    prob[i, j] = data[:, 2]
    if np.isnan(prob).any():
        raise ValueError(f"{path}: duplicate or missing grid cells")
    m = int(meta["m"]) if "m" in meta else None
    kind = SequenceKind.parse(meta["kind"]) if "kind" in meta else None
    return Grid2D(m, kind, phi_axis, zeta_axis, prob)


def write_cross_section_csv(cs: CrossSection, path, meta: Mapping[str, object] | None = None) -> None:
    rows = zip(cs.omega_axis, cs.phi, cs.zeta, cs.prob)
    _write_csv(path, meta or {}, "omega,phi,zeta,probability", rows)


def read_cross_section_csv(path) -> CrossSection:
    meta, header, data = _read_csv(path)
    if header != ["omega", "phi", "zeta", "probability"]:
        raise ValueError(f"{path}: expected header omega,phi,zeta,probability, got {','.join(header)}")
    m = int(meta.get("m", 0))
    kind = SequenceKind.parse(meta.get("kind", "PM"))
    theta = float(meta["theta"]) if "theta" in meta else float("nan")
    return CrossSection(m, kind, theta, data[:, 0], data[:, 3], meta=meta)
