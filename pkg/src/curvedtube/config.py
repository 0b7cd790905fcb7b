"""Run configuration: a TOML document describing geometry, grid, solver and tasks."""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import curve as curvemod
from . import profiles as P
from . import section as S

TASKS = ("spectrum", "threshold-scan", "certificate", "schroedinger-compare")
PROFILE_FAMILIES = {
    "zero": lambda **kw: P.zero_component(),
    "constant": lambda value: P.constant(value),
    "bump": lambda height, width, center=0.0: P.bump(height, width, center),
    "gaussian": lambda amplitude, width=1.0, center=0.0: P.gaussian(amplitude, width, center),
    "odd_gaussian": lambda amplitude, width=1.0: P.odd_gaussian(amplitude, width),
    "hat": lambda peak, half_width, center=0.0: P.hat(peak, half_width, center),
    "plateau": lambda value, start, stop: P.plateau(value, start, stop),
}
CURVE_FAMILIES = ("line", "circle", "helix", "parabola")


class ConfigError(ValueError):
    """Malformed configuration; ``line``/``column`` locate TOML syntax errors."""

    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line, self.column = line, column


@dataclass
class RunConfig:
    name: str
    description: str
    reference: str
    d: int
    curve: dict
    section: dict
    grid: dict
    solver: dict
    tasks: list
    frame: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    output: str = "out"
    source: Optional[str] = None

    # ------------------------------------------------------------------ builders
    def build_profile(self):
        """Curvature profile and, for named analytic curves, the curve itself."""
        c = self.curve
        kind = c.get("kind")
        if kind == "profile":
            comps = [_component(spec, i) for i, spec in enumerate(c["components"])]
            return P.make_profile(self.d, comps, name=self.name), None
        if kind == "csv":
            return P.read_profile_csv(self._path(c["path"]), self.d), None
        if kind == "curve":
            return _curve_profile(self.d, c)
        raise ConfigError(f"curve.kind must be profile, curve or csv, got {kind!r}")

    def build_section(self):
        s = self.section
        kind = s.get("kind")
        try:
            if kind == "interval":
                sec = S.make_interval(s["a"])
            elif kind == "rectangle":
                sec = S.make_rectangle(s["b"], s["c"])
            elif kind == "disk":
                sec = S.make_disk(s["r"])
            elif kind == "mask":
                mask = S.read_mask(self._path(s["path"]))
                sec = S.make_mask(mask, s["spacing"], s.get("refine", 1))
            else:
                raise ConfigError(f"section.kind must be interval, rectangle, disk or mask, got {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"section: missing parameter {exc}") from None
        if sec.dim != self.d - 1:
            raise ConfigError(f"section of dimension {sec.dim} does not fit d={self.d}")
        return sec

    def initial_rotation(self):
        m = self.d - 1
        if "initial" in self.frame:
            return np.array(self.frame["initial"], dtype=float)
        ang = np.deg2rad(float(self.frame.get("angle_deg", 0.0)))
        R = np.eye(m)
        if m >= 2:
            R[:2, :2] = [[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]]
        return R

    def spacings(self, levels=None):
        n = int(self.grid.get("levels", 1) if levels is None else levels)
        return [float(self.grid["ds"]) / 2**i for i in range(max(1, n))]

    def _path(self, p):
        if os.path.isabs(p) or self.source is None:
            return p
        return os.path.join(os.path.dirname(os.path.abspath(self.source)), p)

    def to_dict(self):
        return {"name": self.name, "description": self.description, "reference": self.reference,
                "d": self.d, "curve": self.curve, "section": self.section, "grid": self.grid,
                "solver": self.solver, "tasks": list(self.tasks), "frame": self.frame,
                "certificate": self.certificate, "scan": self.scan}


def _component(spec, i):
    spec = dict(spec)
    fam = spec.pop("family", None)
    if fam not in PROFILE_FAMILIES:
        raise ConfigError(f"curve.components[{i}]: unknown family {fam!r}; "
                          f"choose from {sorted(PROFILE_FAMILIES)}")
    try:
        return PROFILE_FAMILIES[fam](**spec)
    except TypeError as exc:
        raise ConfigError(f"curve.components[{i}] ({fam}): {exc}") from None


def _curve_profile(d, c):
    fam = c.get("family")
    if fam == "line":
        return P.straight(d), curvemod.line(d)
    if fam == "circle":
        r = float(c["radius"])
        comps = [P.constant(1.0 / r)] + [P.zero_component() for _ in range(d - 2)]
        return P.make_profile(d, comps, name=f"circle(R={r:g})"), curvemod.circle(r, d)
    if fam == "helix":
        if d != 3:
            raise ConfigError("helix needs d = 3")
        a, b = float(c["a"]), float(c["b"])
        q = a * a + b * b
        return P.helix_profile(a / q, b / q), curvemod.helix(a, b)
    if fam == "parabola":
        if d != 2:
            raise ConfigError("parabola needs d = 2")
        unit = curvemod.arc_length_reparametrize(curvemod.parabola())
        lo, hi = unit.interval
        return curvemod.curvatures(unit, np.linspace(lo, hi, 801)), unit
    raise ConfigError(f"curve.family must be one of {CURVE_FAMILIES}, got {fam!r}")


def _require(doc, key, kind, where):
    if key not in doc:
        raise ConfigError(f"{where}: missing key {key!r}")
    val = doc[key]
    if not isinstance(val, kind):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__ if isinstance(kind, type) else kind}")
    return val


def _positive(val, where):
    if not (isinstance(val, (int, float)) and val > 0):
        raise ConfigError(f"{where} must be a positive number, got {val!r}")
    return val


def parse_config(text, source=None):
    """Parse and validate a TOML config string."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            import re
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ConfigError(f"TOML syntax error: {exc}", line, col) from None
    d = _require(doc, "d", int, "config")
    if d < 2:
        raise ConfigError("d must be >= 2")
    curve = _require(doc, "curve", dict, "config")
    section = _require(doc, "section", dict, "config")
    grid = _require(doc, "grid", dict, "config")
    _positive(_require(grid, "ds", (int, float), "grid"), "grid.ds")
    if "L" in grid:
        _positive(grid["L"], "grid.L")
    if "du" in grid:
        _positive(grid["du"], "grid.du")
    if "levels" in grid and not (isinstance(grid["levels"], int) and grid["levels"] >= 1):
        raise ConfigError("grid.levels must be an integer >= 1")
    for key in ("a", "b", "c", "r", "spacing"):
        if key in section:
            _positive(section[key], f"section.{key}")
    solver = dict(doc.get("solver", {}))
    solver.setdefault("k", 3)
    solver.setdefault("tol", 1e-10)
    solver.setdefault("seed", 0)
    if not (isinstance(solver["k"], int) and solver["k"] >= 1):
        raise ConfigError("solver.k must be an integer >= 1")
    _positive(solver["tol"], "solver.tol")
    tasks = doc.get("tasks", [])
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("tasks must be a non-empty list")
    bad = [t for t in tasks if t not in TASKS]
    if bad:
        raise ConfigError(f"unknown task(s) {bad}; choose from {list(TASKS)}")
    if curve.get("kind") == "csv":
        path = curve.get("path", "")
        full = path if source is None or os.path.isabs(path) else \
            os.path.join(os.path.dirname(os.path.abspath(source)), path)
        if not os.path.exists(full):
            raise ConfigError(f"curve.path {path!r} does not exist")
    if section.get("kind") == "mask":
        path = section.get("path", "")
        full = path if source is None or os.path.isabs(path) else \
            os.path.join(os.path.dirname(os.path.abspath(source)), path)
        if not os.path.exists(full):
            raise ConfigError(f"section.path {path!r} does not exist")
    cert = dict(doc.get("certificate", {}))
    if "schedule" in cert:
        sch = cert["schedule"]
        if not (isinstance(sch, list) and sch and all(isinstance(n, int) and n >= 1 for n in sch)):
            raise ConfigError("certificate.schedule must be a list of positive integers")
    return RunConfig(
        name=str(doc.get("name", os.path.splitext(os.path.basename(source or "run"))[0])),
        description=str(doc.get("description", "")),
        reference=str(doc.get("reference", "")),
        d=d, curve=curve, section=section, grid=grid, solver=solver, tasks=list(tasks),
        frame=dict(doc.get("frame", {})), certificate=cert, scan=dict(doc.get("scan", {})),
        output=str(doc.get("output", {}).get("dir", "out")) if isinstance(doc.get("output"), dict) else "out",
        source=source)


def load_config(path):
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text, source=str(path))


def example_dir():
    return resources.files("curvedtube") / "configs"


def list_examples():
    """``[(name, description, reference, path)]`` for every shipped example."""
    out = []
    for entry in sorted(example_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".toml"):
            cfg = parse_config(entry.read_text(), source=str(entry))
            out.append((entry.name[:-5], cfg.description, cfg.reference, str(entry)))
    return out
