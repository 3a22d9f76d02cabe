"""
Robustness analysis: angle scans, k(m) trend extrapolation, comparison tables
and rankings across sequence kinds.
"""

from __future__ import annotations

import csv
import importlib.resources
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from qrws.hill import HillParams, fit_hill_many, robustness_epsilon
from qrws.optimize import FitError, levenberg_marquardt
from qrws.schedule import THETA_BEST_REF, THETA_WORST_REF, SequenceKind
from qrws.sweep import DEFAULT_OMEGA_POINTS, sweep_omega_many

__all__ = [
    "ThetaScanResult",
    "KTrend",
    "SequenceAnalysis",
    "RankingReport",
    "ScanError",
    "theta_grid",
    "scan_theta",
    "fit_k_trend",
    "k_trend_eval",
    "analyze_sequence",
    "compare_sequences",
    "reference_values",
    "table1",
    "table2",
    "table_sequences",
    "DEFAULT_M_RANGE",
    "DEFAULT_EXCLUSIONS",
    "K2_STARTS",
]

DEFAULT_M_RANGE = tuple(range(4, 10))
DEFAULT_EXCLUSIONS: dict[tuple[str, str], tuple[int, ...]] = {("PM", "best"): (4,)}
K2_STARTS = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 20.0)
_K2_BOUNDS = (1e-8, 100.0)
DEFAULT_OMEGA_THRESHOLD = 0.9


class ScanError(RuntimeError):
    pass


def theta_grid(step: float = math.pi / 360) -> NDArray:
    """Angles ``0, step, ..., pi`` (``pi`` included when it is a multiple of ``step``)."""
    count = int(round(math.pi / step))
    if abs(count * step - math.pi) < 1e-9:
        return np.arange(count + 1) * (math.pi / count)
    return np.arange(0.0, math.pi + 1e-12, step)


@dataclass
class ThetaScanResult:
    m: int
    kind: SequenceKind
    theta_grid: NDArray
    fits: list[HillParams | None]
    failures: dict[int, str]
    omega_max: NDArray
    epsilon: NDArray
    theta_best: float
    theta_worst: float
    best_index: int
    worst_index: int

    @property
    def k(self) -> NDArray:
        return np.array([f.k if f is not None else np.nan for f in self.fits])

    @property
    def best(self) -> HillParams:
        return self.fits[self.best_index]  # type: ignore[return-value]

    @property
    def worst(self) -> HillParams:
        return self.fits[self.worst_index]  # type: ignore[return-value]


def scan_theta(
    m: int,
    kind: SequenceKind | str,
    thetas: Sequence[float] | None = None,
    n_omega_points: int = DEFAULT_OMEGA_POINTS,
    *,
    marked: Iterable[int] = (0,),
    fix_center: bool = False,
    strict_nk: bool = False,
    window: str = "lobe",
    omega_threshold: float = DEFAULT_OMEGA_THRESHOLD,
    workers: int = 1,
) -> ThetaScanResult:
    """Fit a Hill curve on every angle and pick the largest and smallest ``k``.

    Ties go to the smaller angle.  Angles whose fit fails are recorded in
    ``failures`` and skipped; if every fit fails :class:`ScanError` is raised.
    """
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    grid = np.asarray(theta_grid() if thetas is None else thetas, dtype=float)
    sections = sweep_omega_many(m, kind, grid, n_omega_points, marked=marked, workers=workers)
    raw = fit_hill_many(
        [(cs.omega_axis, cs.prob) for cs in sections],
        fix_center=fix_center,
        strict_nk=strict_nk,
        window=window,
    )
    fits: list[HillParams | None] = []
    failures: dict[int, str] = {}
    for i, res in enumerate(raw):
        if isinstance(res, Exception):
            failures[i] = f"theta={grid[i]:.9g}: {type(res).__name__}: {res}"
            fits.append(None)
        else:
            fits.append(res)
    ok = [i for i, f in enumerate(fits) if f is not None]
    if not ok:
        detail = "; ".join(failures.values())
        raise ScanError(f"every Hill fit failed for m={m}, kind={kind.value}: {detail}")
    reports = [robustness_epsilon(cs.omega_axis, cs.prob, omega_threshold) for cs in sections]
    ks = np.array([fits[i].k for i in ok])
    angles = grid[ok]
    # lexsort: last key is primary; smaller angle wins ties
    best = ok[int(np.lexsort((angles, -ks))[0])]
    worst = ok[int(np.lexsort((angles, ks))[0])]
    return ThetaScanResult(
        m=m,
        kind=kind,
        theta_grid=grid,
        fits=fits,
        failures=failures,
        omega_max=np.array([r.omega_max for r in reports]),
        epsilon=np.array([r.epsilon for r in reports]),
        theta_best=float(grid[best]),
        theta_worst=float(grid[worst]),
        best_index=best,
        worst_index=worst,
    )


@dataclass
class KTrend:
    """``k(m) = k1 * exp(-m * k2) + k3`` fitted to per-coin-size ``k`` values."""

    kind: str
    case: str
    points: list[tuple[int, float]]
    excluded_m: list[int]
    k1: float
    k2: float
    k3: float
    sigma: float
    degenerate: bool = False

    def __call__(self, m):
        return k_trend_eval(m, self.k1, self.k2, self.k3)

    @property
    def asymptote(self) -> float:
        """Extrapolated ``k`` for ``m -> infinity``."""
        return self.k3


def k_trend_eval(m, k1: float, k2: float, k3: float):
    return k1 * np.exp(-np.asarray(m, dtype=float) * k2) + k3


def fit_k_trend(
    points: Sequence[tuple[int, float]],
    excluded_m: Iterable[int] = (),
    *,
    kind: str = "",
    case: str = "",
) -> KTrend:
    """Least-squares exponential trend through ``(m, k)`` points.

    Starts at every ``k2`` in :data:`K2_STARTS`, with ``k1`` and ``k3`` set
    by linear least squares for that ``k2``.  Near-constant data returns a
    ``degenerate`` trend with ``k1 = 0`` instead of failing; so does a fit
    whose exponential term has vanished over the fitted range.

    Raises
    ------
    ValueError
        Fewer than 4 points remain after exclusion.
    FitError
        No start converged.
    """
    excluded = sorted({int(e) for e in excluded_m})
    kept = [(int(m), float(k)) for m, k in points if int(m) not in excluded]
    if len(kept) < 4:
        raise ValueError(f"k-trend needs at least 4 points after exclusion (got {len(kept)})")
    ms = np.array([p[0] for p in kept], dtype=float)
    ks = np.array([p[1] for p in kept], dtype=float)
    q = 3
    dof = len(kept) - q

    scale = max(1.0, float(np.max(np.abs(ks))))
    if np.ptp(ks) < 1e-9 * scale:
        k3 = float(np.mean(ks))
        sigma = math.sqrt(float(np.sum((ks - k3) ** 2)) / dof)
        return KTrend(kind, case, kept, excluded, 0.0, 0.0, k3, sigma, degenerate=True)

    starts = []
    for k2 in K2_STARTS:
        design = np.column_stack([np.exp(-ms * k2), np.ones_like(ms)])
        (k1, k3), *_ = np.linalg.lstsq(design, ks, rcond=None)
        starts.append([k1, k2, k3])

    def model(x, rows):
        e = np.exp(-ms[None, :] * x[:, 1:2])
        r = x[:, 0:1] * e + x[:, 2:3] - ks[None, :]
        J = np.stack([e, -ms[None, :] * x[:, 0:1] * e, np.ones_like(e)], axis=-1)
        return r, J

    fit = levenberg_marquardt(
        model,
        np.array(starts),
        lower=np.array([-np.inf, _K2_BOUNDS[0], -np.inf]),
        upper=np.array([np.inf, _K2_BOUNDS[1], np.inf]),
    )
    if not fit.converged.any():
        raise FitError(f"k-trend fit did not converge for {kind or '?'} {case or ''}".strip())
    ok = np.isfinite(fit.cost)
    best = int(np.flatnonzero(ok)[np.argmin(fit.cost[ok])])
    k1, k2, k3 = (float(v) for v in fit.x[best])
    sigma = math.sqrt(float(fit.cost[best]) / dof)
    vanished = abs(k1) * math.exp(-ms.min() * k2) < 1e-9 * max(1.0, abs(k3))
    return KTrend(kind, case, kept, excluded, k1, k2, k3, sigma, degenerate=bool(vanished))


@dataclass
class SequenceAnalysis:
    kind: SequenceKind
    scans: dict[int, ThetaScanResult]
    best_trend: KTrend | Exception
    worst_trend: KTrend | Exception

    def series(self, case: str) -> list[dict]:
        """Per-m parameters of the best or worst angle, including ``omega_max`` and ``theta``."""
        rows = []
        for m, scan in sorted(self.scans.items()):
            i = scan.best_index if case == "best" else scan.worst_index
            fit = scan.fits[i]
            rows.append(
                {
                    "m": m,
                    "case": case,
                    "theta": float(scan.theta_grid[i]),
                    "b": fit.b,
                    "k": fit.k,
                    "n": fit.n,
                    "c": fit.c,
                    "sigma": fit.sigma,
                    "omega_max": float(scan.omega_max[i]),
                    "epsilon": float(scan.epsilon[i]),
                }
            )
        return rows


def analyze_sequence(
    kind: SequenceKind | str,
    m_range: Sequence[int] = DEFAULT_M_RANGE,
    thetas: Sequence[float] | None = None,
    n_omega_points: int = DEFAULT_OMEGA_POINTS,
    *,
    exclusions: Mapping[tuple[str, str], Sequence[int]] | None = None,
    workers: int = 1,
    **fit_options,
) -> SequenceAnalysis:
    """Angle scans for every coin size plus the best-case and worst-case k(m) trends.

    Trend failures (too few points, non-convergence) are stored in place of
    the trend so the per-m series remain available.
    """
    kind = SequenceKind.parse(kind) if isinstance(kind, str) else kind
    exclusions = DEFAULT_EXCLUSIONS if exclusions is None else exclusions
    scans = {}
    for m in m_range:
        try:
            scans[m] = scan_theta(m, kind, thetas, n_omega_points, workers=workers, **fit_options)
        except ScanError as exc:
            raise ScanError(f"{kind.value}, m={m}: {exc}") from exc
    trends = {}
    for case in ("best", "worst"):
        pts = [(m, (s.best if case == "best" else s.worst).k) for m, s in sorted(scans.items())]
        try:
            trends[case] = fit_k_trend(
                pts, exclusions.get((kind.value, case), ()), kind=kind.value, case=case
            )
        except (ValueError, FitError) as exc:
            trends[case] = exc
    return SequenceAnalysis(kind, scans, trends["best"], trends["worst"])


@dataclass
class RankingReport:
    m: int
    best: list[tuple[str, float]]
    worst: list[tuple[str, float]]
    asymptotes: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)

    def order(self, case: str) -> list[str]:
        return [name for name, _ in (self.best if case == "best" else self.worst)]

    def render(self) -> str:
        lines = [f"Robustness ranking by fitted k at m = {self.m}", ""]
        for case, entries in (("best angle", self.best), ("worst angle", self.worst)):
            lines.append(f"{case}:")
            for rank, (name, k) in enumerate(entries, 1):
                lines.append(f"  {rank}. {name:<3} k = {k:.9g}")
            lines.append("")
        lines.append("extrapolated k for m -> infinity (k3):")
        for name, (kb, kw) in self.asymptotes.items():
            fb = "n/a" if kb is None else f"{kb:.9g}"
            fw = "n/a" if kw is None else f"{kw:.9g}"
            lines.append(f"  {name:<3} best = {fb}  worst = {fw}")
        return "\n".join(lines) + "\n"


def compare_sequences(analyses: Mapping[str, SequenceAnalysis] | Sequence[SequenceAnalysis]) -> RankingReport:
    """Rank kinds by fitted ``k`` at the largest coin size they all share."""
    items = list(analyses.values()) if isinstance(analyses, Mapping) else list(analyses)
    if not items:
        raise ValueError("nothing to compare")
    common = set.intersection(*(set(a.scans) for a in items))
    if not common:
        raise ValueError("analyses share no coin size")
    m = max(common)
    best = sorted(((a.kind.value, a.scans[m].best.k) for a in items), key=lambda t: -t[1])
    worst = sorted(((a.kind.value, a.scans[m].worst.k) for a in items), key=lambda t: -t[1])
    asym = {}
    for a in items:
        asym[a.kind.value] = tuple(
            t.k3 if isinstance(t, KTrend) else None for t in (a.best_trend, a.worst_trend)
        )
    return RankingReport(m, best, worst, asym)


# ---------------------------------------------------------------------------
# comparison tables


def reference_values() -> list[dict]:
    """Published reference values shipped with the package (see data/reference_tables.csv)."""
    text = importlib.resources.files("qrws.data").joinpath("reference_tables.csv").read_text("utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        rec = {}
        for key, value in row.items():
            if value == "":
                rec[key] = None
            elif key in ("table", "no", "m", "theta_pi360"):
                rec[key] = int(value)
            elif key in ("sequence", "case"):
                rec[key] = value
            else:
                rec[key] = float(value)
        out.append(rec)
    return out


def _with_deviation(row: dict, ref: dict, columns: Sequence[str]) -> dict:
    for col in columns:
        target = ref.get(col)
        row[f"{col}_ref"] = target
        if target is None or row.get(col) is None:
            row[f"{col}_dev"] = None
        else:
            row[f"{col}_dev"] = (row[col] - target) / abs(target) if target != 0 else row[col] - target
    return row


def table1(
    n_omega_points: int = DEFAULT_OMEGA_POINTS, *, workers: int = 1, **fit_options
) -> list[dict]:
    """Hill fits of the phase-matching cross-sections at the two reference angles, m = 4, 6, 8."""
    refs = {(r["m"], r["theta_pi360"]): r for r in reference_values() if r["table"] == 1}
    rows = []
    no = 0
    for m in (4, 6, 8):
        thetas = [THETA_WORST_REF, THETA_BEST_REF]
        sections = sweep_omega_many(m, SequenceKind.PM, thetas, n_omega_points, workers=workers)
        fits = fit_hill_many([(cs.omega_axis, cs.prob) for cs in sections], **fit_options)
        for theta_deg, fit in zip((127, 233), fits):
            no += 1
            if isinstance(fit, Exception):
                raise fit
            row = {"no": no, "m": m, "theta": f"{theta_deg}pi/360", "b": fit.b, "k": fit.k, "n": fit.n, "sigma": fit.sigma}
            rows.append(_with_deviation(row, refs.get((m, theta_deg), {}), ("b", "k", "n", "sigma")))
    return rows


def pm_reference_trends(
    m_range: Sequence[int] = DEFAULT_M_RANGE,
    n_omega_points: int = DEFAULT_OMEGA_POINTS,
    *,
    exclusions: Mapping[tuple[str, str], Sequence[int]] | None = None,
    workers: int = 1,
    **fit_options,
) -> dict[str, KTrend]:
    """k(m) trends of phase matching along the fixed reference angles."""
    exclusions = DEFAULT_EXCLUSIONS if exclusions is None else exclusions
    pts: dict[str, list] = {"best": [], "worst": []}
    for m in m_range:
        sections = sweep_omega_many(m, SequenceKind.PM, [THETA_BEST_REF, THETA_WORST_REF], n_omega_points, workers=workers)
        fits = fit_hill_many([(cs.omega_axis, cs.prob) for cs in sections], **fit_options)
        for case, fit in zip(("best", "worst"), fits):
            if isinstance(fit, Exception):
                raise fit
            pts[case].append((m, fit.k))
    return {
        case: fit_k_trend(pts[case], exclusions.get(("PM", case), ()), kind="PM", case=case)
        for case in ("best", "worst")
    }


def table2(trends: Mapping[str, KTrend] | None = None, **kwargs) -> list[dict]:
    trends = pm_reference_trends(**kwargs) if trends is None else trends
    refs = {r["theta_pi360"]: r for r in reference_values() if r["table"] == 2}
    rows = []
    for no, (case, theta_deg) in enumerate((("best", 233), ("worst", 127)), 1):
        t = trends[case]
        row = {"no": no, "theta": f"{theta_deg}pi/360", "k1": t.k1, "k2": t.k2, "k3": t.k3, "sigma": t.sigma}
        rows.append(_with_deviation(row, refs.get(theta_deg, {}), ("k1", "k2", "k3", "sigma")))
    return rows


def table_sequences(analyses: Mapping[str, SequenceAnalysis], table: int) -> list[dict]:
    """Trend table for the A kinds (``table=3``) or the H kinds (``table=4``)."""
    prefix = {3: "A", 4: "H"}[table]
    refs = {(r["sequence"], r["case"]): r for r in reference_values() if r["table"] == table}
    rows = []
    no = 0
    for digit in "123":
        name = prefix + digit
        analysis = analyses[name]
        for case in ("best", "worst"):
            no += 1
            t = analysis.best_trend if case == "best" else analysis.worst_trend
            if isinstance(t, Exception):
                row = {"no": no, "sequence": name, "case": case.capitalize(), "k1": None, "k2": None, "k3": None, "sigma": None}
            else:
                row = {"no": no, "sequence": name, "case": case.capitalize(), "k1": t.k1, "k2": t.k2, "k3": t.k3, "sigma": t.sigma}
            rows.append(_with_deviation(row, refs.get((name, case.capitalize()), {}), ("k1", "k2", "k3", "sigma")))
    return rows
