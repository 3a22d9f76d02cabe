"""
``qrws`` command line.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
(a fit that does not converge, a scan where every fit fails).  Every output
file starts with ``# key: value`` lines holding the version and the effective
configuration; the worker count is left out so that outputs do not depend on it.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import click
import numpy as np

from qrws import __version__
from qrws.config import ConfigError, RunConfig, format_angle, load_config
from qrws.heatmap import write_ppm
from qrws.hill import (
    FitError,
    NonIdentifiableError,
    fit_hill,
    robustness_epsilon,
    robustness_from_params,
)
from qrws.robustness import (
    KTrend,
    ScanError,
    analyze_sequence,
    compare_sequences,
    fit_k_trend,
    pm_reference_trends,
    scan_theta,
    table1,
    table2,
    table_sequences,
    theta_grid,
)
from qrws.schedule import PolarPoint, schedule_phases
from qrws.sweep import (
    SweepError,
    _read_csv,
    default_workers,
    format_float,
    read_cross_section_csv,
    read_grid_csv,
    sweep_omega,
    sweep_phase_plane,
    write_cross_section_csv,
    write_grid_csv,
)
from qrws.verify import run_properties
from qrws.walk import WalkConfig, init_state, run_walk, walk_iteration, write_state_csv

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

NUMERICAL_ERRORS = (FitError, NonIdentifiableError, ScanError, SweepError, FloatingPointError)


# ---------------------------------------------------------------------------
# helpers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def _header(command: str, cfg: RunConfig, keys: Iterable[str] | None = None, **extra) -> dict[str, str]:
    flat = cfg.header()
    if keys is not None:
        flat = {k: v for k, v in flat.items() if k.split(".")[0] in keys}
    out = {"qrws_version": __version__, "command": command}
    out.update(flat)
    out.update({k: _fmt(v) for k, v in extra.items()})
    return out


def _target(cfg: RunConfig, output: str | None, default_name: str) -> Path:
    return Path(output) if output else cfg.output.directory / default_name


def _prepare(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_record(path: Path, header: Mapping[str, str], fields: Mapping[str, object]) -> None:
    """``key: value`` lines (valid YAML) after the ``#`` header."""
    with open(_prepare(path), "w", newline="\n", encoding="utf-8") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        for key, value in fields.items():
            text = _fmt(value)
            fh.write(f"{key}: {text if text else 'null'}\n")


def _write_rows(path: Path, header: Mapping[str, str], rows: Sequence[Mapping[str, object]]) -> None:
    columns = list(rows[0]) if rows else []
    with open(_prepare(path), "w", newline="\n", encoding="utf-8") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def _workers(value: int | None) -> int:
    return value if value is not None else default_workers()


def _slug(theta: float) -> str:
    return format_angle(theta).replace("/", "_")


def _fit_fields(cs_meta: Mapping[str, str], fit, report, cfg: RunConfig, n_points: int) -> dict:
    eps_hill = robustness_from_params(fit, cfg.fit.omega_threshold).epsilon
    return {
        "sequence": cs_meta.get("kind", "PM"),
        "m": int(cs_meta["m"]) if "m" in cs_meta else None,
        "theta": float(cs_meta["theta"]) if "theta" in cs_meta else None,
        "b": fit.b,
        "k": fit.k,
        "n": fit.n,
        "c": fit.c,
        "sigma": fit.sigma,
        "q": fit.q,
        "n_points": n_points,
        "n_fitted": fit.n_points,
        "omega_max": report.omega_max,
        "p_max": report.p_max,
        "epsilon": report.epsilon,
        "epsilon_hill": eps_hill,
        "omega_threshold": cfg.fit.omega_threshold,
    }


def _trend_fields(prefix: str, trend: KTrend | Exception) -> dict:
    if isinstance(trend, Exception):
        return {f"{prefix}_error": f"{type(trend).__name__}: {trend}"}
    return {
        f"{prefix}_k1": trend.k1,
        f"{prefix}_k2": trend.k2,
        f"{prefix}_k3": trend.k3,
        f"{prefix}_sigma": trend.sigma,
        f"{prefix}_degenerate": trend.degenerate,
        f"{prefix}_excluded_m": ",".join(map(str, trend.excluded_m)) or "none",
    }


# shared options
_config_opt = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Config file with [walk], [sweep], ... sections."
)
_workers_opt = click.option(
    "--workers",
    type=click.IntRange(min=1),
    envvar="QRWS_WORKERS",
    default=None,
    help="Worker processes (default: CPU count; env QRWS_WORKERS).",
)
_output_opt = click.option("-o", "--output", type=click.Path(dir_okay=False), help="Output file.")
_m_opt = click.option("--m", "m", type=str, help="Coin size (hypercube dimension).")
_kind_opt = click.option("--kind", type=str, help="Sequence kind: PM, A1-A3, H1-H3.")
_theta_opt = click.option("--theta", type=str, help="Line angle, e.g. 233pi/360 or radians.")
_marked_opt = click.option("--marked", type=str, help="Marked nodes, e.g. 0 or 0,7.")


def _fit_opts(f):
    f = click.option("--fix-center/--free-center", default=None, help="Pin the Hill center at 0.")(f)
    f = click.option("--strict-nk/--no-strict-nk", default=None, help="Require n > k.")(f)
    f = click.option("--window", type=str, help="lobe (peak only) or full.")(f)
    f = click.option("--omega-threshold", type=str, help="Robustness threshold fraction.")(f)
    return f


def _fit_overrides(fix_center, strict_nk, window, omega_threshold) -> dict:
    return {
        "fit.fix_center": None if fix_center is None else str(fix_center),
        "fit.strict_nk": None if strict_nk is None else str(strict_nk),
        "fit.window": window,
        "fit.omega_threshold": omega_threshold,
    }


def _fit_kwargs(cfg: RunConfig) -> dict:
    return {"fix_center": cfg.fit.fix_center, "strict_nk": cfg.fit.strict_nk, "window": cfg.fit.window}


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="qrws")
def cli():
    """Quantum random walk search on the hypercube with Householder coins."""


@cli.command()
@_config_opt
@_m_opt
@_kind_opt
@_theta_opt
@click.option("--omega", type=str, help="Offset along the line from (pi, pi).")
@_marked_opt
@click.option("--iterations", type=str, help="Iteration count (default: ceil(pi/2*sqrt(2**(m-1)))).")
@click.option("--state", "state_path", type=click.Path(dir_okay=False), help="Also dump final amplitudes to this CSV.")
@_output_opt
def run(config_path, m, kind, theta, omega, marked, iterations, state_path, output):
    """Run one search and report the success probability."""
    cfg = load_config(
        config_path,
        {"walk.m": m, "sweep.kind": kind, "sweep.theta": theta, "sweep.omega": omega, "walk.marked": marked, "walk.iterations": iterations},
    )
    walk_cfg = WalkConfig(cfg.walk.m, frozenset(cfg.walk.marked), cfg.walk.iterations)
    k_iter = walk_cfg.iterations
    sched = schedule_phases(cfg.sweep.kind, PolarPoint(cfg.sweep.omega, cfg.sweep.theta), k_iter)
    prob = run_walk(walk_cfg, sched.phases)
    header = _header("run", cfg, keys=("walk", "sweep"))
    fields = {
        "sequence": cfg.sweep.kind.value,
        "m": cfg.walk.m,
        "marked": ",".join(map(str, cfg.walk.marked)),
        "iterations": k_iter,
        "theta": cfg.sweep.theta,
        "omega": cfg.sweep.omega,
        "phi": sched.phases[0].phi if sched.phases else math.pi,
        "zeta": sched.phases[0].zeta if sched.phases else math.pi,
        "probability": prob,
    }
    path = _target(cfg, output, f"run_m{cfg.walk.m}_{cfg.sweep.kind.value}.txt")
    _write_record(path, header, fields)
    if state_path:
        state = init_state(walk_cfg)
        for ph in sched.phases:
            state = walk_iteration(state, ph, walk_cfg.marked)
        write_state_csv(state, _prepare(Path(state_path)), header)
    click.echo(f"probability: {format_float(prob)}")
    click.echo(f"wrote {path}")


@cli.command()
@_config_opt
@_m_opt
@_kind_opt
@click.option("--resolution", type=str, help="Grid points per axis over [0, 2*pi].")
@_marked_opt
@click.option("--ppm/--no-ppm", default=None, help="Also write the heatmap (default from [output] formats).")
@_workers_opt
@_output_opt
def sweep2d(config_path, m, kind, resolution, marked, ppm, workers, output):
    """Success probability over the (phi, zeta) plane."""
    cfg = load_config(config_path, {"walk.m": m, "sweep.kind": kind, "sweep.resolution": resolution, "walk.marked": marked})
    grid = sweep_phase_plane(cfg.walk.m, cfg.sweep.kind, cfg.sweep.resolution, marked=cfg.walk.marked, workers=_workers(workers))
    header = _header("sweep2d", cfg, keys=("walk", "sweep"), m=cfg.walk.m, kind=cfg.sweep.kind.value)
    path = _target(cfg, output, f"grid_m{cfg.walk.m}_{cfg.sweep.kind.value}.csv")
    write_grid_csv(grid, _prepare(path), header)
    click.echo(f"wrote {path}")
    if ppm if ppm is not None else "ppm" in cfg.output.formats:
        image = path.with_suffix(".ppm")
        write_ppm(grid, image, header)
        click.echo(f"wrote {image}")


@cli.command("cross-section")
@_config_opt
@_m_opt
@_kind_opt
@_theta_opt
@click.option("--points", type=str, help="Odd number of omega samples (>= 11).")
@_marked_opt
@_workers_opt
@_output_opt
def cross_section(config_path, m, kind, theta, points, marked, workers, output):
    """Success probability along omega at a fixed angle."""
    cfg = load_config(
        config_path,
        {"walk.m": m, "sweep.kind": kind, "sweep.theta": theta, "sweep.omega_points": points, "walk.marked": marked},
    )
    cs = sweep_omega(cfg.walk.m, cfg.sweep.kind, cfg.sweep.theta, cfg.sweep.omega_points, marked=cfg.walk.marked, workers=_workers(workers))
    header = _header(
        "cross-section", cfg, keys=("walk", "sweep"), m=cfg.walk.m, kind=cfg.sweep.kind.value, theta=cfg.sweep.theta
    )
    path = _target(cfg, output, f"cross_m{cfg.walk.m}_{cfg.sweep.kind.value}_{_slug(cfg.sweep.theta)}.csv")
    write_cross_section_csv(cs, _prepare(path), header)
    click.echo(f"wrote {path}")


@cli.command("fit-hill")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@_config_opt
@_fit_opts
@_output_opt
def fit_hill_cmd(input_csv, config_path, fix_center, strict_nk, window, omega_threshold, output):
    """Fit the modified Hill function to a cross-section CSV."""
    cfg = load_config(config_path, _fit_overrides(fix_center, strict_nk, window, omega_threshold))
    cs = read_cross_section_csv(input_csv)
    fit = fit_hill(cs.omega_axis, cs.prob, **_fit_kwargs(cfg))
    report = robustness_epsilon(cs.omega_axis, cs.prob, cfg.fit.omega_threshold)
    fields = _fit_fields(cs.meta, fit, report, cfg, cs.omega_axis.size)
    header = _header("fit-hill", cfg, keys=("fit",), input=Path(input_csv).name)
    path = _target(cfg, output, f"fit_{Path(input_csv).stem}.yaml")
    _write_record(path, header, fields)
    click.echo(f"b={format_float(fit.b)} k={format_float(fit.k)} n={format_float(fit.n)} sigma={format_float(fit.sigma)}")
    click.echo(f"wrote {path}")


@cli.command("scan-theta")
@_config_opt
@_m_opt
@_kind_opt
@click.option("--theta-step", type=str, help="Angle step over [0, pi], e.g. pi/360.")
@click.option("--points", type=str, help="Omega samples per angle.")
@_marked_opt
@_fit_opts
@_workers_opt
@_output_opt
def scan_theta_cmd(config_path, m, kind, theta_step, points, marked, fix_center, strict_nk, window, omega_threshold, workers, output):
    """Hill fits over every angle; reports the most and least robust lines."""
    overrides = {"walk.m": m, "sweep.kind": kind, "scan.theta_step": theta_step, "sweep.omega_points": points, "walk.marked": marked}
    overrides.update(_fit_overrides(fix_center, strict_nk, window, omega_threshold))
    cfg = load_config(config_path, overrides)
    scan = scan_theta(
        cfg.walk.m,
        cfg.sweep.kind,
        theta_grid(cfg.scan.theta_step),
        cfg.sweep.omega_points,
        marked=cfg.walk.marked,
        omega_threshold=cfg.fit.omega_threshold,
        workers=_workers(workers),
        **_fit_kwargs(cfg),
    )
    rows = []
    for i, theta in enumerate(scan.theta_grid):
        fit = scan.fits[i]
        rows.append(
            {
                "theta": theta,
                "b": fit.b if fit else math.nan,
                "k": fit.k if fit else math.nan,
                "n": fit.n if fit else math.nan,
                "c": fit.c if fit else math.nan,
                "sigma": fit.sigma if fit else math.nan,
                "omega_max": scan.omega_max[i],
                "epsilon": scan.epsilon[i],
            }
        )
    header = _header(
        "scan-theta",
        cfg,
        keys=("walk", "sweep", "fit", "scan"),
        theta_best=scan.theta_best,
        theta_worst=scan.theta_worst,
        k_best=scan.best.k,
        k_worst=scan.worst.k,
        failed_fits=len(scan.failures),
    )
    path = _target(cfg, output, f"scan_m{cfg.walk.m}_{cfg.sweep.kind.value}.csv")
    _write_rows(path, header, rows)
    click.echo(f"best  theta={format_angle(scan.theta_best)} k={format_float(scan.best.k)}")
    click.echo(f"worst theta={format_angle(scan.theta_worst)} k={format_float(scan.worst.k)}")
    click.echo(f"wrote {path}")


@cli.command("k-trend")
@click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False), help="CSV with columns m,k to fit directly.")
@click.option("--exclude", type=str, default="", help="Coin sizes to leave out of a --input fit, e.g. 4.")
@_config_opt
@_kind_opt
@click.option("--m-range", type=str, help="Coin sizes, e.g. 4-9.")
@click.option("--theta-step", type=str, help="Angle step of the scans.")
@click.option("--points", type=str, help="Omega samples per angle.")
@_fit_opts
@_workers_opt
@_output_opt
def k_trend_cmd(input_csv, exclude, config_path, kind, m_range, theta_step, points, fix_center, strict_nk, window, omega_threshold, workers, output):
    """Fit k(m) = k1*exp(-m*k2) + k3 to scanned or given robustness values."""
    overrides = {"sweep.kind": kind, "scan.m_range": m_range, "scan.theta_step": theta_step, "sweep.omega_points": points}
    overrides.update(_fit_overrides(fix_center, strict_nk, window, omega_threshold))
    cfg = load_config(config_path, overrides)
    try:
        excluded = [int(v) for v in exclude.replace(",", " ").split()]
    except ValueError:
        raise ConfigError("--exclude", f"expected coin sizes, got {exclude!r}") from None
    if input_csv:
        meta, columns, data = _read_csv(input_csv)
        if "m" not in columns or "k" not in columns:
            raise ValueError(f"{input_csv}: needs columns m and k (got {','.join(columns)})")
        pts = [(int(r[columns.index("m")]), float(r[columns.index("k")])) for r in data]
        trend = fit_k_trend(pts, excluded, kind=cfg.sweep.kind.value)
        fields = {"sequence": cfg.sweep.kind.value, "points": len(pts)}
        fields.update(_trend_fields("trend", trend))
        header = _header("k-trend", cfg, keys=("sweep",), input=Path(input_csv).name)
        path = _target(cfg, output, f"ktrend_{Path(input_csv).stem}.yaml")
        _write_record(path, header, fields)
        click.echo(f"k3={format_float(trend.k3)}")
        click.echo(f"wrote {path}")
        return
    analysis = analyze_sequence(
        cfg.sweep.kind,
        cfg.scan.m_range,
        theta_grid(cfg.scan.theta_step),
        cfg.sweep.omega_points,
        exclusions=cfg.scan.exclusions,
        workers=_workers(workers),
        omega_threshold=cfg.fit.omega_threshold,
        **_fit_kwargs(cfg),
    )
    header = _header("k-trend", cfg, keys=("sweep", "fit", "scan"))
    path = _target(cfg, output, f"ktrend_{cfg.sweep.kind.value}.yaml")
    fields = {"sequence": cfg.sweep.kind.value}
    fields.update(_trend_fields("best", analysis.best_trend))
    fields.update(_trend_fields("worst", analysis.worst_trend))
    _write_record(path, header, fields)
    series = analysis.series("best") + analysis.series("worst")
    series_path = path.with_name(path.stem + "_series.csv")
    _write_rows(series_path, header, series)
    click.echo(f"wrote {path}")
    click.echo(f"wrote {series_path}")
    failed = [t for t in (analysis.best_trend, analysis.worst_trend) if isinstance(t, Exception)]
    if failed:
        raise FitError("; ".join(str(t) for t in failed))


def _analyses(cfg: RunConfig, kinds: Sequence[str], workers: int) -> dict:
    out = {}
    for name in kinds:
        click.echo(f"scanning {name} over m = {','.join(map(str, cfg.scan.m_range))}", err=True)
        out[name] = analyze_sequence(
            name,
            cfg.scan.m_range,
            theta_grid(cfg.scan.theta_step),
            cfg.sweep.omega_points,
            exclusions=cfg.scan.exclusions,
            workers=workers,
            omega_threshold=cfg.fit.omega_threshold,
            **_fit_kwargs(cfg),
        )
    return out


@cli.command()
@click.argument("which", type=click.Choice(["1", "2", "3", "4"]))
@_config_opt
@click.option("--points", type=str, help="Omega samples per cross-section.")
@click.option("--m-range", type=str, help="Coin sizes for tables 2-4.")
@click.option("--theta-step", type=str, help="Angle step of the scans (tables 3, 4).")
@_fit_opts
@_workers_opt
@_output_opt
def tables(which, config_path, points, m_range, theta_step, fix_center, strict_nk, window, omega_threshold, workers, output):
    """Recompute a reference table with deviations from the published values."""
    overrides = {"sweep.omega_points": points, "scan.m_range": m_range, "scan.theta_step": theta_step}
    overrides.update(_fit_overrides(fix_center, strict_nk, window, omega_threshold))
    cfg = load_config(config_path, overrides)
    n = _workers(workers)
    if which == "1":
        rows = table1(cfg.sweep.omega_points, workers=n, **_fit_kwargs(cfg))
        keys = ("sweep", "fit")
    elif which == "2":
        trends = pm_reference_trends(
            cfg.scan.m_range, cfg.sweep.omega_points, exclusions=cfg.scan.exclusions, workers=n, **_fit_kwargs(cfg)
        )
        rows = table2(trends)
        keys = ("sweep", "fit", "scan")
    else:
        prefix = "A" if which == "3" else "H"
        analyses = _analyses(cfg, [prefix + d for d in "123"], n)
        rows = table_sequences(analyses, int(which))
        keys = ("sweep", "fit", "scan")
    header = _header("tables", cfg, keys=keys, table=which)
    path = _target(cfg, output, f"table{which}.csv")
    _write_rows(path, header, rows)
    click.echo(f"wrote {path}")


@cli.command()
@_config_opt
@click.option("--m-range", type=str, help="Coin sizes.")
@click.option("--theta-step", type=str, help="Angle step of the scans.")
@click.option("--points", type=str, help="Omega samples per angle.")
@_fit_opts
@_workers_opt
@_output_opt
def rank(config_path, m_range, theta_step, points, fix_center, strict_nk, window, omega_threshold, workers, output):
    """Rank all sequence kinds by fitted k at the largest coin size."""
    overrides = {"scan.m_range": m_range, "scan.theta_step": theta_step, "sweep.omega_points": points}
    overrides.update(_fit_overrides(fix_center, strict_nk, window, omega_threshold))
    cfg = load_config(config_path, overrides)
    analyses = _analyses(cfg, ["PM", "A1", "A2", "A3", "H1", "H2", "H3"], _workers(workers))
    report = compare_sequences(analyses)
    header = _header("rank", cfg, keys=("sweep", "fit", "scan"))
    path = _prepare(_target(cfg, output, "ranking.txt"))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(report.render())
    click.echo(report.render(), nl=False)
    click.echo(f"wrote {path}")


@cli.command()
@click.option("--seed", type=int, default=None, help="Seed for the random schedules.")
def verify(seed):
    """Run the self-check property suite; exit 1 if any property fails."""
    results = run_properties() if seed is None else run_properties(seed)
    for r in results:
        click.echo(r.line())
    failed = sum(not r.passed for r in results)
    click.echo(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_INVALID if failed else EXIT_OK


@cli.command()
@click.argument("grid_csv", type=click.Path(exists=True, dir_okay=False))
@_output_opt
def heatmap(grid_csv, output):
    """Render a grid CSV as a binary PPM (phi across, zeta descending)."""
    grid = read_grid_csv(grid_csv)
    path = Path(output) if output else Path(grid_csv).with_suffix(".ppm")
    header = {"qrws_version": __version__, "command": "heatmap", "input": Path(grid_csv).name}
    write_ppm(grid, _prepare(path), header)
    click.echo(f"wrote {path}")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="qrws", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except click.ClickException as exc:
        exc.show()
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    return rv if isinstance(rv, int) else EXIT_OK


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
