"""Reference curves in R^d: arc length, Frenet frames and curvatures."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import profiles
from ._kernels import rotation_steps
from .errors import (ArityError, DegenerateCurveError, FrameContinuityError,
                     FrameDegeneracyError, PreconditionError, RangeError,
                     ToleranceNotMetError)

EPS = np.finfo(float).eps
DEGENERACY_TOL = 1e-7
FD_ORDER = 4


@lru_cache(maxsize=None)
def fd_weights(m, p):
    """Central finite-difference weights for the m-th derivative on offsets -p..p."""
    x = np.arange(-p, p + 1, dtype=float)
    n = x.size
    V = np.array([x**k / factorial(k) for k in range(n)])
    rhs = np.zeros(n)
    rhs[m] = 1.0
    return np.linalg.solve(V, rhs)


def fd_derivative(f, t, m):
    """m-th derivative of a vector valued ``f`` at scalar ``t``, 4th-order central stencil.

    Step ``eps**(1/(m+4)) * max(1, |t|)`` balances the O(h^4) truncation
    against the O(eps/h^m) rounding error.
    """
    if m == 0:
        return np.asarray(f(t), dtype=float)
    p = (m + FD_ORDER - 1) // 2
    w = fd_weights(m, p)
    h = EPS ** (1.0 / (m + FD_ORDER)) * max(1.0, abs(t))
    vals = np.array([np.asarray(f(t + k * h), dtype=float) for k in range(-p, p + 1)])
    return np.tensordot(w, vals, axes=1) / h**m


@dataclass(frozen=True)
class ParametricCurve:
    """A curve ``t -> Gamma(t)`` in R^d.

    ``derivatives[k]`` is the analytic (k+1)-th derivative when supplied;
    missing orders fall back to finite differences of the highest available
    lower order.
    """

    dim: int
    position: Callable
    interval: tuple
    derivatives: tuple = ()
    unit_speed: bool = False
    name: str = "curve"

    def __post_init__(self):
        if self.dim < 2:
            raise ArityError("curve dimension must be >= 2")

    def __call__(self, t):
        return np.asarray(self.position(t), dtype=float)

    def derivative(self, t, order):
        t = float(t)
        if order == 0:
            return self(t)
        if order <= len(self.derivatives):
            return np.asarray(self.derivatives[order - 1](t), dtype=float)
        base = len(self.derivatives)
        f = self.position if base == 0 else self.derivatives[base - 1]
        return fd_derivative(f, t, order - base)

    def speed(self, t):
        return float(np.linalg.norm(self.derivative(t, 1)))

    def frame(self, s):
        """Frenet frame rows at ``s`` (the curve must be unit speed)."""
        return frenet_frame(self, s).frame


@dataclass(frozen=True)
class FrenetFrameSample:
    s: float
    frame: np.ndarray      # rows are e_1..e_d
    orientation: int = 1
    completed: bool = False  # True when higher vectors were a constant completion (straight piece)

    @property
    def tangent(self):
        return self.frame[0]


# --- arc length ----------------------------------------------------------------

def _speed_fn(curve):
    return lambda t: np.linalg.norm(curve.derivative(t, 1))


def arc_length_reparametrize(curve: ParametricCurve, tolerance=1e-10, nodes=400):
    """Reparametrize by arc length.

    Arc length is tabulated by adaptive quadrature of ``|Gamma'|`` per
    segment and inverted by monotone (PCHIP) interpolation, followed by a few
    Newton corrections so that the unit-speed property holds to ``tolerance``.
    """
    t0, t1 = map(float, curve.interval)
    tk = np.linspace(t0, t1, nodes + 1)
    speed = _speed_fn(curve)
    sp = np.array([speed(t) for t in np.linspace(t0, t1, 4 * nodes + 1)])
    if sp.min() <= 1e-10 * max(1.0, sp.max()):
        raise DegenerateCurveError(f"{curve.name}: |Gamma'| vanishes on {curve.interval}")
    if np.max(np.abs(sp - 1.0)) <= tolerance:
        return curve if curve.unit_speed else ParametricCurve(
            curve.dim, curve.position, curve.interval, curve.derivatives, True, curve.name)
    seg = np.empty(nodes)
    for k in range(nodes):
        val, err = integrate.quad(speed, tk[k], tk[k + 1], epsabs=tolerance * 1e-2, epsrel=1e-13, limit=200)
        if err > max(tolerance, 1e-13 * val):
            raise ToleranceNotMetError(f"arc-length quadrature error {err:g} on [{tk[k]:g},{tk[k + 1]:g}]")
        seg[k] = val
    S = np.concatenate([[0.0], np.cumsum(seg)])
    total = S[-1]
    guess = PchipInterpolator(S, tk)
    gx, gw = np.polynomial.legendre.leggauss(12)

    def cumulative(t):
        k = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, nodes - 1)
        a = tk[k]
        half = 0.5 * (t - a)
        pts = a + half * (gx + 1.0)
        return S[k] + half * sum(w * speed(x) for w, x in zip(gw, pts))

    def t_of_s(s):
        # slightly outside [0, total] (finite-difference stencils at the ends) the
        # underlying parametrization is continued, not clamped
        s = float(s)
        if s < 0.0:
            t = t0 + s / speed(t0)
        elif s > total:
            t = t1 + (s - total) / speed(t1)
        else:
            t = float(guess(s))
        for _ in range(8):
            step = (cumulative(t) - s) / speed(t)
            t -= step
            if abs(step) < 1e-15 * max(1.0, abs(t)):
                break
        return t

    def pos(s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return curve(t_of_s(s))
        return np.array([curve(t_of_s(x)) for x in s])

    def tangent(s):
        v = curve.derivative(t_of_s(float(s)), 1)
        return v / np.linalg.norm(v)

    new = ParametricCurve(curve.dim, pos, (0.0, total), (tangent,), True, curve.name + "@arclength")
    check = np.linspace(0.0, total, 9)[1:-1]
    dev = max(abs(np.linalg.norm(fd_derivative(pos, s, 1)) - 1.0) for s in check)
    if dev > max(1e3 * tolerance, 1e-7):
        raise ToleranceNotMetError(f"reparametrized speed deviates from 1 by {dev:g}")
    return new


def arc_length(curve: ParametricCurve):
    t0, t1 = curve.interval
    val, _ = integrate.quad(_speed_fn(curve), t0, t1, epsabs=1e-13, epsrel=1e-13, limit=500)
    return val


# --- Frenet frame --------------------------------------------------------------

def generalized_cross(rows):
    """Vector v with ``det([rows; v]) = |v|^2 > 0`` and v orthogonal to the rows."""
    rows = np.asarray(rows, dtype=float)
    d = rows.shape[1]
    v = np.empty(d)
    for i in range(d):
        unit = np.zeros(d)
        unit[i] = 1.0
        v[i] = np.linalg.det(np.vstack([rows, unit]))
    return v


def _constant_completion(e1):
    d = e1.size
    basis = [e1]
    for k in np.argsort(np.abs(e1)):
        if len(basis) == d - 1:
            break
        v = np.eye(d)[k]
        for b in basis:
            v = v - (v @ b) * b
        n = np.linalg.norm(v)
        if n > 1e-8:
            basis.append(v / n)
    return basis


def _unit_speed_check(curve, s):
    sp = curve.speed(s)
    if abs(sp - 1.0) > 1e-6:
        raise PreconditionError(f"curve is not unit speed at s={s:g} (|Gamma'|={sp:.9g}); "
                                "call arc_length_reparametrize first")


def frenet_frame(curve: ParametricCurve, s, tol=DEGENERACY_TOL):
    """Positively oriented Frenet frame at arc length ``s``.

    Gram-Schmidt on ``Gamma', Gamma'', ..., Gamma^(d-1)``; the last vector is
    the generalized cross product of the others.  When every derivative of
    order >= 2 vanishes (a straight piece) the frame is completed by a fixed
    rule instead.
    """
    s = float(s)
    _unit_speed_check(curve, s)
    d = curve.dim
    e1 = curve.derivative(s, 1)
    e1 = e1 / np.linalg.norm(e1)
    basis = [e1]
    residuals = []
    for k in range(2, d):
        v = curve.derivative(s, k)
        for _ in range(2):
            for b in basis:
                v = v - (v @ b) * b
        n = np.linalg.norm(v)
        residuals.append(n)
        if n <= tol:
            break
        basis.append(v / n)
    completed = False
    if len(basis) < d - 1:
        order = len(basis) + 1
        higher = [np.linalg.norm(curve.derivative(s, k)) for k in range(2, d)]
        if max(higher) <= tol:
            basis = _constant_completion(e1)
            completed = True
        else:
            raise FrameDegeneracyError(order, s)
    rows = np.vstack(basis)
    last = generalized_cross(rows)
    last /= np.linalg.norm(last)
    frame = np.vstack([rows, last])
    return FrenetFrameSample(s, frame, int(np.sign(np.linalg.det(frame))), completed)


def _frame_and_diagonal(curve, s, tol):
    """Frame plus the diagonal of the triangular factor of [Gamma', ..., Gamma^(d)]."""
    sample = frenet_frame(curve, s, tol)
    d = curve.dim
    diag = np.array([curve.derivative(s, k + 1) @ sample.frame[k] for k in range(d)])
    return sample, diag


def curvatures(curve: ParametricCurve, samples, tol=DEGENERACY_TOL):
    """Tabulate kappa_1..kappa_{d-1} on a grid of arc lengths.

    With ``Gamma^(k) = (kappa_1 ... kappa_{k-1}) e_k + (lower frame vectors)``
    for a unit-speed curve, the curvatures are ratios of consecutive diagonal
    entries of the triangular factor; this equals ``e_i' . e_{i+1}`` without
    differentiating the frame numerically.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 2:
        raise ArityError("need at least two sample points")
    d = curve.dim
    kap = np.zeros((d - 1, samples.size))
    frames = []
    for j, s in enumerate(samples):
        sample, diag = _frame_and_diagonal(curve, s, tol)
        if sample.completed:
            kap[:, j] = 0.0
        else:
            for i in range(d - 1):
                kap[i, j] = diag[i + 1] / diag[i] if abs(diag[i]) > tol else 0.0
        frames.append(sample)
        if j > 0 and not (sample.completed or frames[j - 1].completed):
            dots = np.einsum("ij,ij->i", frames[j - 1].frame, sample.frame)
            if np.any(dots < 0.0):
                bad = int(np.argmin(dots)) + 1
                raise FrameContinuityError(
                    f"e_{bad} flips between s={samples[j - 1]:g} and s={s:g}; use a finer grid")
    comps = []
    for i in range(d - 1):
        spline = CubicSpline(samples, kap[i])
        lo, hi = samples[0], samples[-1]

        def f(x, spline=spline, lo=lo, hi=hi):
            x = np.asarray(x, dtype=float)
            return np.where((x >= lo) & (x <= hi), spline(np.clip(x, lo, hi)), 0.0)

        def df(x, spline=spline.derivative(1), lo=lo, hi=hi):
            x = np.asarray(x, dtype=float)
            return np.where((x >= lo) & (x <= hi), spline(np.clip(x, lo, hi)), 0.0)

        def ddf(x, spline=spline.derivative(2), lo=lo, hi=hi):
            x = np.asarray(x, dtype=float)
            return np.where((x >= lo) & (x <= hi), spline(np.clip(x, lo, hi)), 0.0)

        sup = profiles.SUP_MARGIN * float(np.max(np.abs(kap[i])))
        comps.append(profiles.Component(f, df, ddf, support=(lo, hi), sup=sup,
                                        smoothness="C2", label="sampled"))
    prof = profiles.make_profile(d, comps, name=curve.name)
    object.__setattr__(prof, "_samples", (samples, kap))
    return prof


def sampled_values(profile):
    """The (samples, kappa) table behind a profile produced by :func:`curvatures`."""
    return getattr(profile, "_samples")


# --- analytic families -----------------------------------------------------------

def line(d=2, direction=None, origin=None):
    d = int(d)
    u = np.zeros(d) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        u[0] = 1.0
    u = u / np.linalg.norm(u)
    o = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)

    def pos(t):
        t = np.asarray(t, dtype=float)
        return o + np.multiply.outer(t, u)

    derivs = (lambda t: u.copy(),) + tuple((lambda t: np.zeros(d)) for _ in range(d))
    return ParametricCurve(d, pos, (-50.0, 50.0), derivs, True, "line")


def circle(radius=1.0, d=2, by_angle=False):
    """Circle of given radius in the first two coordinates.

    With ``by_angle`` the parameter is the polar angle on [0, 2 pi] (speed
    ``radius``); otherwise it is arc length on [0, 2 pi radius].
    """
    R = float(radius)
    c = 1.0 if by_angle else 1.0 / R
    t1 = 2 * np.pi if by_angle else 2 * np.pi * R

    def pos(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (d,))
        out[..., 0] = R * np.cos(c * t)
        out[..., 1] = R * np.sin(c * t)
        return out

    def deriv(k):
        def f(t):
            out = np.zeros(d)
            # d^k/dt^k of (cos ct, sin ct) is c^k (cos(ct + k pi/2), sin(ct + k pi/2))
            out[0] = R * c**k * np.cos(c * t + k * np.pi / 2)
            out[1] = R * c**k * np.sin(c * t + k * np.pi / 2)
            return out
        return f

    return ParametricCurve(d, pos, (0.0, t1), tuple(deriv(k) for k in range(1, d + 2)),
                           not by_angle or R == 1.0, f"circle(R={R:g})")


def helix(a=1.0, b=1.0, unit_speed=True):
    """Helix ``(a cos t, a sin t, b t)``; arc-length parametrized by default."""
    a, b = float(a), float(b)
    c = 1.0 / np.hypot(a, b) if unit_speed else 1.0

    def pos(t):
        t = np.asarray(t, dtype=float)
        return np.stack([a * np.cos(c * t), a * np.sin(c * t), b * c * t], axis=-1)

    def deriv(k):
        def f(t):
            ph = c * t + k * np.pi / 2
            return np.array([a * c**k * np.cos(ph), a * c**k * np.sin(ph), b * c if k == 1 else 0.0])
        return f

    span = 50.0
    return ParametricCurve(3, pos, (-span, span), tuple(deriv(k) for k in range(1, 5)),
                           unit_speed, f"helix(a={a:g},b={b:g})")


def helix_frame(a, b, s):
    """Closed-form Frenet frame of the unit-speed helix (rows T, N, B)."""
    c = 1.0 / np.hypot(a, b)
    th = c * s
    T = np.array([-a * c * np.sin(th), a * c * np.cos(th), b * c])
    N = np.array([-np.cos(th), -np.sin(th), 0.0])
    B = np.cross(T, N)
    return np.vstack([T, N, B])


def parabola():
    """``(t, t^2)`` on [-1, 1]; not unit speed."""
    def pos(t):
        t = np.asarray(t, dtype=float)
        return np.stack([t, t * t], axis=-1)
    derivs = (lambda t: np.array([1.0, 2.0 * t]), lambda t: np.array([0.0, 2.0]),
              lambda t: np.zeros(2))
    return ParametricCurve(2, pos, (-1.0, 1.0), derivs, False, "parabola")


def rigid_motion(curve: ParametricCurve, Q, shift):
    """Image of ``curve`` under ``x -> Q x + shift``."""
    Q = np.asarray(Q, dtype=float)
    shift = np.asarray(shift, dtype=float)

    def pos(t):
        return np.asarray(curve.position(t)) @ Q.T + shift

    derivs = tuple((lambda t, f=f: Q @ np.asarray(f(t))) for f in curve.derivatives)
    return ParametricCurve(curve.dim, pos, curve.interval, derivs, curve.unit_speed,
                           curve.name + "@moved")


# --- reconstruction from a profile ---------------------------------------------

@dataclass(frozen=True)
class FrenetTable:
    """Frenet frames and positions obtained by integrating the Frenet equations.

    ``frames[k]`` has rows ``e_1..e_d`` at ``s[k]``.
    """

    s: np.ndarray
    frames: np.ndarray
    points: np.ndarray
    profile: object = field(repr=False, default=None)

    @property
    def dim(self):
        return self.frames.shape[1]

    def _locate(self, s):
        s = float(s)
        if s < self.s[0] - 1e-12 or s > self.s[-1] + 1e-12:
            raise RangeError(f"s={s:g} outside [{self.s[0]:g}, {self.s[-1]:g}]")
        h = self.s[1] - self.s[0]
        k = int(min(max(np.floor((s - self.s[0]) / h), 0), self.s.size - 2))
        return k, (s - self.s[k]) / h

    def frame(self, s):
        k, a = self._locate(s)
        if a <= 1e-14:
            return self.frames[k].copy()
        if a >= 1 - 1e-14:
            return self.frames[k + 1].copy()
        # one RK4 sub-step from the node keeps the frame on the ODE solution
        K = self.profile.K(np.array([self.s[k], self.s[k] + 0.5 * a * (self.s[1] - self.s[0]),
                                     float(s)]))
        out, _ = rotation_steps(K[None], self.frames[k].T, a * (self.s[1] - self.s[0]))
        return out[-1].T

    def position(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim:
            return np.array([self.position(x) for x in s])
        k, a = self._locate(s)
        h = self.s[1] - self.s[0]
        p0, p1 = self.points[k], self.points[k + 1]
        m0, m1 = self.frames[k][0] * h, self.frames[k + 1][0] * h
        h00 = 2 * a**3 - 3 * a**2 + 1
        h10 = a**3 - 2 * a**2 + a
        h01 = -2 * a**3 + 3 * a**2
        h11 = a**3 - a**2
        return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1


def integrate_frenet(profile, s_range, step=0.01, origin=None, frame0=None, s0=None):
    """Rebuild a curve with the given curvatures (fundamental theorem of curves).

    Solves ``e_i' = K_ij e_j`` with the same projected RK4 stepper as the Tang
    frame, and integrates ``Gamma' = e_1`` with the cubic Hermite rule.
    """
    lo, hi = map(float, s_range)
    d = profile.d
    s0 = lo if s0 is None else float(s0)
    E0 = np.eye(d) if frame0 is None else np.asarray(frame0, dtype=float)
    n_lo = int(np.ceil((s0 - lo) / step - 1e-9))
    n_hi = int(np.ceil((hi - s0) / step - 1e-9))
    grid = s0 + step * np.arange(-n_lo, n_hi + 1)

    def run(nodes):
        if nodes.size < 2:
            return E0.T[None].copy()
        ds = nodes[1] - nodes[0]
        Ks = profile.K(np.stack([nodes[:-1], nodes[:-1] + 0.5 * ds, nodes[1:]], axis=1))
        out, _ = rotation_steps(Ks, E0.T, ds)
        return out

    fwd = run(grid[n_lo:])
    bwd = run(grid[:n_lo + 1][::-1])
    Et = np.concatenate([bwd[::-1][:-1], fwd])
    frames = np.transpose(Et, (0, 2, 1))
    e1 = frames[:, 0, :]
    de1 = profile.kappa1(grid)[:, None] * frames[:, 1, :]
    inc = 0.5 * step * (e1[:-1] + e1[1:]) + step**2 / 12.0 * (de1[:-1] - de1[1:])
    pts = np.concatenate([np.zeros((1, d)), np.cumsum(inc, axis=0)])
    pts -= pts[n_lo]
    if origin is not None:
        pts += np.asarray(origin, dtype=float)
    return FrenetTable(grid, frames, pts, profile)


def planar_curve_from_profile(profile, s_range, step=0.005):
    """Planar curve with signed curvature ``kappa_1`` as a :class:`ParametricCurve`."""
    tab = integrate_frenet(profile, s_range, step)
    spl = CubicSpline(tab.s, tab.points, axis=0)

    def pos(s):
        return spl(np.asarray(s, dtype=float))

    return ParametricCurve(profile.d, pos, (tab.s[0], tab.s[-1]),
                           (spl.derivative(1), spl.derivative(2), spl.derivative(3)),
                           True, profile.name + "@embedded")
