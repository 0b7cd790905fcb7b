"""Curvature profiles: the functions kappa_1..kappa_{d-1} of arc length.

A profile fully determines the tube geometry in coordinates, so most of the
package works from a :class:`CurvatureProfile` alone, with no embedded curve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import ArityError, EvaluationError, SmoothnessError

Func = Callable[[np.ndarray], np.ndarray]

SUP_MARGIN = 1.05
_INF_SAMPLE_HALFWIDTH = 100.0


def _vectorized(f):
    """Wrap ``f`` so it accepts and returns float arrays of the same shape."""
    def g(s):
        s = np.asarray(s, dtype=float)
        try:
            out = np.asarray(f(s), dtype=float)
            if out.shape == s.shape:
                return out
            if out.ndim == 0:
                return np.full(s.shape, float(out))
        except (TypeError, ValueError):
            pass
        return np.vectorize(lambda x: float(f(x)), otypes=[float])(s)
    return g


@dataclass(frozen=True)
class Component:
    """One curvature function with optional first and second derivatives."""

    f: Func
    df: Optional[Func] = None
    ddf: Optional[Func] = None
    support: Optional[tuple] = None  # None means unbounded
    sup: Optional[float] = None      # exact sup|f| when known in closed form
    smoothness: str = "C2"
    decays: bool = True
    label: str = "closure"
    kinks: tuple = ()                # points where f is not smooth (quadrature breakpoints)


def zero_component():
    z = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    return Component(z, z, z, support=(0.0, 0.0), sup=0.0, label="zero")


def constant(value):
    v = float(value)
    c = lambda s: np.full(np.shape(s), v)
    z = lambda s: np.zeros(np.shape(s))
    if v == 0.0:
        return zero_component()
    return Component(c, z, z, support=None, sup=abs(v), decays=False, label=f"constant({v:g})")


def bump(height, width, center=0.0):
    """C-infinity bump ``height * exp(1 - 1/(1 - x^2))`` on ``|s - center| < width/2``."""
    height, width, center = float(height), float(width), float(center)
    half = 0.5 * width
    scale = 1.0 / half

    def parts(s):
        x = (np.asarray(s, dtype=float) - center) * scale
        inside = np.abs(x) < 1.0
        xi = np.where(inside, x, 0.0)
        q = 1.0 - xi * xi
        g = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        return xi, q, g, inside

    def f(s):
        return height * parts(s)[2]

    def df(s):
        x, q, g, inside = parts(s)
        return np.where(inside, height * g * (-2.0 * x / q**2) * scale, 0.0)

    def ddf(s):
        x, q, g, inside = parts(s)
        gpp = g * (4.0 * x**2 / q**4 - 2.0 / q**2 - 8.0 * x**2 / q**3)
        return np.where(inside, height * gpp * scale**2, 0.0)

    return Component(f, df, ddf, support=(center - half, center + half), sup=abs(height),
                     smoothness="C2", label=f"bump(h={height:g},w={width:g})")


def gaussian(amplitude, width=1.0, center=0.0):
    """``amplitude * exp(-((s - center)/width)^2)``."""
    A, w, c = float(amplitude), float(width), float(center)

    def f(s):
        x = (np.asarray(s, dtype=float) - c) / w
        return A * np.exp(-x * x)

    def df(s):
        x = (np.asarray(s, dtype=float) - c) / w
        return A * np.exp(-x * x) * (-2.0 * x / w)

    def ddf(s):
        x = (np.asarray(s, dtype=float) - c) / w
        return A * np.exp(-x * x) * (4.0 * x * x - 2.0) / w**2

    return Component(f, df, ddf, support=None, sup=abs(A), label=f"gaussian(A={A:g},w={w:g})")


def odd_gaussian(amplitude, width=1.0):
    """Sign-changing ``amplitude * s * exp(-(s/width)^2)``."""
    A, w = float(amplitude), float(width)

    def f(s):
        s = np.asarray(s, dtype=float)
        return A * s * np.exp(-(s / w) ** 2)

    def df(s):
        s = np.asarray(s, dtype=float)
        return A * np.exp(-(s / w) ** 2) * (1.0 - 2.0 * s * s / w**2)

    def ddf(s):
        s = np.asarray(s, dtype=float)
        return A * np.exp(-(s / w) ** 2) * (4.0 * s**3 / w**4 - 6.0 * s / w**2)

    return Component(f, df, ddf, support=None, sup=abs(A) * w / np.sqrt(2.0 * np.e),
                     label=f"odd_gaussian(A={A:g},w={w:g})")


def hat(peak, half_width, center=0.0):
    """Piecewise linear hat; continuous but not differentiable."""
    p, hw, c = float(peak), float(half_width), float(center)

    def f(s):
        x = np.abs(np.asarray(s, dtype=float) - c) / hw
        return p * np.clip(1.0 - x, 0.0, None)

    return Component(f, None, None, support=(c - hw, c + hw), sup=abs(p),
                     smoothness="C0", label=f"hat(p={p:g},hw={hw:g})", kinks=(c - hw, c, c + hw))


def plateau(value, start, stop):
    """Constant ``value`` on [start, stop], zero elsewhere (jumps at the ends)."""
    v, a, b = float(value), float(start), float(stop)

    def f(s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= a) & (s <= b), v, 0.0)

    return Component(f, None, None, support=(a, b), sup=abs(v), smoothness="C0",
                     label=f"plateau({v:g} on [{a:g},{b:g}])", kinks=(a, b))


def tabulated(s, values):
    """Quintic interpolating spline through samples; zero outside the table."""
    s = np.asarray(s, dtype=float)
    values = np.asarray(values, dtype=float)
    if s.ndim != 1 or s.shape != values.shape or s.size < 2:
        raise ArityError("tabulated curvature needs matching 1-D columns")
    if np.any(np.diff(s) <= 0):
        raise ValueError("arc-length column must be strictly increasing")
    k = min(5, s.size - 1)
    spl = make_interp_spline(s, values, k=k)
    lo, hi = s[0], s[-1]

    def wrap(fun):
        def g(x):
            x = np.asarray(x, dtype=float)
            inside = (x >= lo) & (x <= hi)
            return np.where(inside, fun(np.clip(x, lo, hi)), 0.0)
        return g

    d1 = spl.derivative(1) if k >= 1 else None
    d2 = spl.derivative(2) if k >= 2 else None
    grade = "C2" if k >= 3 else ("C1" if k == 2 else "C0")
    return Component(wrap(spl), wrap(d1) if d1 is not None else None,
                     wrap(d2) if d2 is not None else None, support=(lo, hi),
                     sup=None, smoothness=grade, label="tabulated")


@dataclass(frozen=True)
class CurvatureProfile:
    """Curvatures ``kappa_1..kappa_{d-1}`` as functions of arc length.

    ``sup_norm`` is the estimate of ``||kappa_1||_inf`` used by the validity
    check; it is either exact (closed-form families) or a sampled maximum
    inflated by 5%.
    """

    d: int
    components: tuple
    sup_norm: float
    support: Optional[tuple]
    smoothness: str
    decays: bool
    name: str = "profile"
    notes: tuple = field(default_factory=tuple)

    @property
    def m(self):
        """Transverse dimension d - 1."""
        return self.d - 1

    def kappa(self, s):
        """Array of shape ``(d - 1,) + shape(s)``."""
        s = np.asarray(s, dtype=float)
        return np.stack([c.f(s) for c in self.components])

    def kappa1(self, s):
        return self.components[0].f(np.asarray(s, dtype=float))

    def has_derivatives(self):
        return all(c.df is not None and c.ddf is not None for c in self.components)

    def kappa_derivative(self, s, order):
        s = np.asarray(s, dtype=float)
        if order == 0:
            return self.kappa(s)
        attr = {1: "df", 2: "ddf"}[order]
        rows = []
        for c in self.components:
            fn = getattr(c, attr)
            if fn is None:
                raise SmoothnessError(f"{c.label} has no derivative of order {order}")
            rows.append(fn(s))
        return np.stack(rows)

    def K(self, s, order=0):
        """Full skew curvature matrix, shape ``shape(s) + (d, d)``."""
        k = self.kappa_derivative(s, order)
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (self.d, self.d))
        for i in range(self.d - 1):
            out[..., i, i + 1] = k[i]
            out[..., i + 1, i] = -k[i]
        return out

    def K_transverse(self, s, order=0):
        """Transverse block ``(K_{mu nu})``, indices 2..d, shape ``shape(s) + (d-1, d-1)``."""
        return self.K(s, order)[..., 1:, 1:]

    def is_straight(self, tol=1e-12, window=None, points=20001):
        lo, hi = window or self.sample_window()
        grid = np.linspace(lo, hi, points)
        return bool(np.max(np.abs(self.kappa1(grid))) <= tol)

    def sample_window(self):
        if self.support is None:
            return (-_INF_SAMPLE_HALFWIDTH, _INF_SAMPLE_HALFWIDTH)
        lo, hi = self.support
        margin = max(1.0, 0.1 * (hi - lo))
        return (lo - margin, hi + margin)

    def summary(self):
        return {
            "d": self.d,
            "name": self.name,
            "components": [c.label for c in self.components],
            "support": None if self.support is None else [float(x) for x in self.support],
            "kappa1_sup": float(self.sup_norm),
            "smoothness": self.smoothness,
            "decays": bool(self.decays),
        }


def _union_support(comps):
    sups = [c.support for c in comps]
    if any(s is None for s in sups):
        return None
    nonempty = [s for s in sups if s[1] > s[0]]
    if not nonempty:
        return (0.0, 0.0)
    return (min(s[0] for s in nonempty), max(s[1] for s in nonempty))


_GRADES = {"C0": 0, "C1": 1, "C2": 2}


def _sampled_sup(f, window, n=200001):
    lo, hi = window
    grid = np.linspace(lo, hi, n)
    if 0.0 not in grid and lo < 0.0 < hi:
        grid = np.sort(np.append(grid, 0.0))
    vals = f(grid)
    if not np.all(np.isfinite(vals)):
        bad = grid[~np.isfinite(vals)][0]
        raise EvaluationError(f"curvature evaluator returned a non-finite value at s={bad:g}")
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def make_profile(d, components: Sequence[Component], name="profile"):
    """Assemble a profile from ``d - 1`` components."""
    d = int(d)
    if d < 2:
        raise ArityError("dimension must be >= 2")
    comps = tuple(components)
    if len(comps) != d - 1:
        raise ArityError(f"need {d - 1} curvature functions for d={d}, got {len(comps)}")
    support = _union_support(comps)
    first = comps[0]
    window = (first.support[0] - 1.0, first.support[1] + 1.0) if first.support else \
        (-_INF_SAMPLE_HALFWIDTH, _INF_SAMPLE_HALFWIDTH)
    if first.sup is not None:
        # still sample once so that non-finite evaluators are caught early
        _sampled_sup(first.f, window, n=2001)
        sup = first.sup
    else:
        sup = SUP_MARGIN * _sampled_sup(first.f, window)
    for c in comps[1:]:
        w = (c.support[0] - 1.0, c.support[1] + 1.0) if c.support else window
        _sampled_sup(c.f, w, n=2001)
    grade = min((c.smoothness for c in comps), key=_GRADES.get)
    decays = first.decays
    notes = []
    if any(c.label == "tabulated" for c in comps):
        notes.append("tabulated curvature: derivatives come from a quintic spline")
    return CurvatureProfile(d, comps, float(sup), support, grade, decays, name, tuple(notes))


def profile_from_closures(d, evaluators, support=None, derivatives=None, sup_norm=None,
                          smoothness="C0"):
    """Wrap user closures as a profile.

    Parameters
    ----------
    d : int
    evaluators : sequence of callables
        ``d - 1`` functions of arc length (scalar or vectorized).
    support : (lo, hi) or None
        Interval outside which every curvature vanishes; None for unbounded.
    derivatives : sequence of (df, ddf) pairs, optional
        Needed only by the Schroedinger assembly.
    sup_norm : float, optional
        Known ``||kappa_1||_inf``.  When omitted it is estimated by dense
        sampling over the support (or [-100, 100]) and inflated by 5%.
    """
    evaluators = list(evaluators)
    if len(evaluators) != int(d) - 1:
        raise ArityError(f"need {int(d) - 1} curvature functions for d={d}, got {len(evaluators)}")
    comps = []
    for i, f in enumerate(evaluators):
        df = ddf = None
        grade = smoothness
        if derivatives is not None and derivatives[i] is not None:
            df, ddf = (_vectorized(g) if g is not None else None for g in derivatives[i])
            grade = "C2"
        comps.append(Component(_vectorized(f), df, ddf,
                               support=None if support is None else tuple(map(float, support)),
                               sup=(float(sup_norm) if (i == 0 and sup_norm is not None) else None),
                               smoothness=grade, decays=True, label="closure"))
    if support is not None:
        # closures on a declared support: kappa must vanish outside it
        lo, hi = map(float, support)
        comps = [Component(_restrict(c.f, lo, hi), _restrict(c.df, lo, hi), _restrict(c.ddf, lo, hi),
                           c.support, c.sup, c.smoothness, c.decays, c.label) for c in comps]
    return make_profile(d, comps, name="closures")


def _restrict(f, lo, hi):
    if f is None:
        return None

    def g(s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= lo) & (s <= hi), f(s), 0.0)
    return g


def straight(d):
    return make_profile(d, [zero_component() for _ in range(d - 1)], name="straight")


def helix_profile(kappa, tau):
    """Constant curvature and torsion in R^3."""
    return make_profile(3, [constant(kappa), constant(tau)], name=f"helix(k={kappa:g},t={tau:g})")


def read_profile_csv(path, d=None):
    """Read a ``s,kappa1[,kappa2,...]`` CSV into a tabulated profile."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if not header or header[0] != "s" or any(h != f"kappa{i}" for i, h in enumerate(header[1:], 1)):
            raise ValueError(f"{path}: header must be 's,kappa1[,kappa2,...]', got {header}")
        rows = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise ValueError(f"{path}: ragged CSV")
    dd = rows.shape[1]
    if d is not None and int(d) != dd:
        raise ArityError(f"{path}: {dd - 1} curvature columns but d={d}")
    comps = [tabulated(rows[:, 0], rows[:, i]) for i in range(1, dd)]
    return make_profile(dd, comps, name=str(path))
