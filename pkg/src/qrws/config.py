"""
Run configuration: ``key = value`` sections read with :mod:`configparser`.

Sections and keys (all optional, defaults shown by :func:`default_config_text`)::

    [walk]    m, marked, iterations
    [sweep]   kind, resolution, theta, omega, omega_points
    [fit]     fix_center, strict_nk, window, omega_threshold
    [scan]    theta_step, m_range, exclusions
    [output]  directory, formats

Angles accept ``233pi/360``, ``pi/2``, ``-pi`` or decimal radians.  Every
value is checked when the config is built, so a bad key fails before any
computation or file output.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from qrws.schedule import THETA_BEST_REF, SequenceKind, omega_bound
from qrws.sweep import DEFAULT_OMEGA_POINTS, DEFAULT_RESOLUTION

__all__ = [
    "ConfigError",
    "RunConfig",
    "WalkSection",
    "SweepSection",
    "FitSection",
    "ScanSection",
    "OutputSection",
    "parse_angle",
    "format_angle",
    "load_config",
    "default_config_text",
]

MAX_M = 16
FORMATS = ("csv", "ppm")

_ANGLE_RE = re.compile(
    r"^(?P<coef>[+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\s*\*?\s*pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?$",
    re.IGNORECASE,
)


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` names the offending ``[section] key``."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_angle(text: str) -> float:
    """``"233pi/360"`` -> ``233*pi/360``; plain numbers are radians."""
    s = str(text).strip()
    match = _ANGLE_RE.match(s)
    if match:
        coef = match.group("coef")
        if coef in ("", "+"):
            value = 1.0
        elif coef == "-":
            value = -1.0
        else:
            value = float(coef)
        den = float(match.group("den")) if match.group("den") else 1.0
        if den == 0:
            raise ValueError(f"zero denominator in angle {text!r}")
        return value * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"not an angle: {text!r} (use e.g. 233pi/360 or radians)") from None


def format_angle(theta: float) -> str:
    """``N pi/360`` when ``theta`` is such a multiple, else 9 significant digits."""
    steps = theta * 360 / math.pi
    if abs(steps - round(steps)) < 1e-9:
        return f"{int(round(steps))}pi/360"
    return f"{theta:.9g}"


@dataclass(frozen=True)
class WalkSection:
    m: int = 4
    marked: tuple[int, ...] = (0,)
    iterations: int | None = None


@dataclass(frozen=True)
class SweepSection:
    kind: SequenceKind = SequenceKind.PM
    resolution: int = DEFAULT_RESOLUTION
    theta: float = THETA_BEST_REF
    omega: float = 0.0
    omega_points: int = DEFAULT_OMEGA_POINTS


@dataclass(frozen=True)
class FitSection:
    fix_center: bool = False
    strict_nk: bool = False
    window: str = "lobe"
    omega_threshold: float = 0.9


@dataclass(frozen=True)
class ScanSection:
    theta_step: float = math.pi / 360
    m_range: tuple[int, ...] = tuple(range(4, 10))
    exclusions: dict = field(default_factory=lambda: {("PM", "best"): (4,)})


@dataclass(frozen=True)
class OutputSection:
    directory: Path = Path(".")
    formats: tuple[str, ...] = ("csv",)


@dataclass(frozen=True)
class RunConfig:
    walk: WalkSection = WalkSection()
    sweep: SweepSection = SweepSection()
    fit: FitSection = FitSection()
    scan: ScanSection = ScanSection()
    output: OutputSection = OutputSection()

    def header(self) -> dict[str, str]:
        """Flat ``section.key -> text`` view used for output headers."""
        exclusions = "; ".join(
            f"{k}:{c}:{','.join(map(str, ms))}" for (k, c), ms in sorted(self.scan.exclusions.items())
        )
        return {
            "walk.m": str(self.walk.m),
            "walk.marked": ",".join(map(str, self.walk.marked)),
            "walk.iterations": "auto" if self.walk.iterations is None else str(self.walk.iterations),
            "sweep.kind": self.sweep.kind.value,
            "sweep.resolution": str(self.sweep.resolution),
            "sweep.theta": format_angle(self.sweep.theta),
            "sweep.omega": f"{self.sweep.omega:.9g}",
            "sweep.omega_points": str(self.sweep.omega_points),
            "fit.fix_center": str(self.fit.fix_center).lower(),
            "fit.strict_nk": str(self.fit.strict_nk).lower(),
            "fit.window": self.fit.window,
            "fit.omega_threshold": f"{self.fit.omega_threshold:.9g}",
            "scan.theta_step": format_angle(self.scan.theta_step),
            "scan.m_range": ",".join(map(str, self.scan.m_range)),
            "scan.exclusions": exclusions or "none",
        }


def default_config_text() -> str:
    return """\
[walk]
m = 4
marked = 0
iterations = auto

[sweep]
kind = PM
resolution = 181
theta = 233pi/360
omega = 0
omega_points = 201

[fit]
fix_center = false
strict_nk = false
window = lobe
omega_threshold = 0.9

[scan]
theta_step = pi/360
m_range = 4-9
exclusions = PM:best:4

[output]
directory = .
formats = csv
"""


def _int(key: str, text: str, lo: int | None = None, hi: int | None = None) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None
    if lo is not None and value < lo or hi is not None and value > hi:
        span = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ConfigError(key, f"{value} outside {span}")
    return value


def _int_list(key: str, text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        if re.fullmatch(r"\d+-\d+", part):
            a, b = (int(v) for v in part.split("-"))
            if b < a:
                raise ConfigError(key, f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(_int(key, part))
    if not out:
        raise ConfigError(key, "empty list")
    return tuple(out)


def _bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {text!r}")


def _angle(key: str, text: str) -> float:
    try:
        return parse_angle(text)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None


def _exclusions(key: str, text: str) -> dict:
    out: dict[tuple[str, str], tuple[int, ...]] = {}
    if text.strip().lower() in ("", "none"):
        return out
    for item in text.split(";"):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"expected KIND:CASE:M[,M...], got {item.strip()!r}")
        try:
            kind = SequenceKind.parse(parts[0]).value
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        case = parts[1].strip().lower()
        if case not in ("best", "worst"):
            raise ConfigError(key, f"case must be best or worst, got {parts[1]!r}")
        out[(kind, case)] = _int_list(key, parts[2])
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """Read ``path`` (if given) on top of the defaults, apply ``section.key`` overrides, validate.

    Raises
    ------
    ConfigError
        Unknown section/key or an invalid value.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(default_config_text())
    known = {s: set(parser[s]) for s in parser.sections()}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        user = configparser.ConfigParser(interpolation=None)
        try:
            user.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(path), f"malformed config: {exc}") from None
        for section in user.sections():
            if section not in known:
                raise ConfigError(f"[{section}]", "unknown section")
            for key, value in user[section].items():
                if key not in known[section]:
                    raise ConfigError(f"[{section}] {key}", "unknown key")
                parser[section][key] = value
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in known or key not in known[section]:
            raise ConfigError(dotted, "unknown key")
        parser[section][key] = str(value)
    return _build(parser)


def _build(p: configparser.ConfigParser) -> RunConfig:
    w = p["walk"]
    m = _int("[walk] m", w["m"], 2, MAX_M)
    marked = _int_list("[walk] marked", w["marked"])
    bad = [h for h in marked if not 0 <= h < 2**m]
    if bad:
        raise ConfigError("[walk] marked", f"nodes {bad} outside [0, {2**m}) for m={m}")
    iters_text = w["iterations"].strip().lower()
    iterations = None if iters_text in ("", "auto") else _int("[walk] iterations", iters_text, 1)
    walk = WalkSection(m, tuple(sorted(set(marked))), iterations)

    s = p["sweep"]
    try:
        kind = SequenceKind.parse(s["kind"])
    except ValueError as exc:
        raise ConfigError("[sweep] kind", str(exc)) from None
    resolution = _int("[sweep] resolution", s["resolution"], 2)
    theta = _angle("[sweep] theta", s["theta"])
    if not 0.0 <= theta <= math.pi + 1e-12:
        raise ConfigError("[sweep] theta", f"{s['theta']} = {theta:.9g} outside [0, pi]")
    theta = min(theta, math.pi)
    omega = _angle("[sweep] omega", s["omega"])
    bound = omega_bound(theta)
    if abs(omega) > bound + 1e-12:
        raise ConfigError("[sweep] omega", f"|omega| = {abs(omega):.9g} exceeds {bound:.9g} at theta = {theta:.9g}")
    points = _int("[sweep] omega_points", s["omega_points"], 11)
    if points % 2 == 0:
        raise ConfigError("[sweep] omega_points", f"must be odd (got {points})")
    sweep = SweepSection(kind, resolution, theta, omega, points)

    f = p["fit"]
    window = f["window"].strip().lower()
    if window not in ("lobe", "full"):
        raise ConfigError("[fit] window", f"expected lobe or full, got {f['window']!r}")
    threshold = _float("[fit] omega_threshold", f["omega_threshold"])
    if not 0.0 < threshold < 1.0:
        raise ConfigError("[fit] omega_threshold", f"{threshold} outside (0, 1)")
    fit = FitSection(_bool("[fit] fix_center", f["fix_center"]), _bool("[fit] strict_nk", f["strict_nk"]), window, threshold)

    c = p["scan"]
    step = _angle("[scan] theta_step", c["theta_step"])
    if not 0.0 < step <= math.pi:
        raise ConfigError("[scan] theta_step", f"{step:.9g} outside (0, pi]")
    m_range = _int_list("[scan] m_range", c["m_range"])
    if any(v < 2 or v > MAX_M for v in m_range):
        raise ConfigError("[scan] m_range", f"coin sizes must lie in [2, {MAX_M}]")
    scan = ScanSection(step, tuple(sorted(set(m_range))), _exclusions("[scan] exclusions", c["exclusions"]))

    o = p["output"]
    formats = tuple(t.strip().lower() for t in o["formats"].split(",") if t.strip())
    unknown = [t for t in formats if t not in FORMATS]
    if unknown or not formats:
        raise ConfigError("[output] formats", f"expected a subset of {', '.join(FORMATS)}, got {o['formats']!r}")
    output = OutputSection(Path(o["directory"].strip() or "."), formats)
    return RunConfig(walk, sweep, fit, scan, output)
