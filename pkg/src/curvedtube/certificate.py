"""Variational certificate that the spectrum dips below mu_1.

The trial functions are

    Psi_n = phi_n(s) J_1(u),         Phi = phi(s) (R_{mu 2}(s) u_mu) J_1(u),

with ``phi_n`` the piecewise-linear mollifier of 1 and ``phi`` a hat function
on an interval where ``kappa_1`` has constant sign.  With
``Q_1[psi] = Q[psi] - mu_1 ||psi||_g^2`` the energy of ``Psi_n + eps Phi`` is
the quadratic ``q0 + 2 eps q1 + eps^2 q2``; a negative minimum over ``eps``
witnesses a point of the spectrum below ``mu_1`` without any eigensolver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tang
from .errors import ScanResolutionError, StraightTubeError
from .tube import build_tube

DEFAULT_SCHEDULE = (2, 5, 10, 20, 50, 100, 200)
KAPPA_FLOOR = 1e-8
QUAD_ORDER = 8
CHECK_ORDER = 12
SCAN_POINTS = 20001


def mollifier(n, s):
    """1 on ``|s| < n``, linear down to 0 on ``n <= |s| <= 2n + 1``."""
    a = np.abs(np.asarray(s, dtype=float))
    return np.clip((2 * n + 1 - a) / (n + 1), 0.0, 1.0)


def mollifier_derivative(n, s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    ramp = (a > n) & (a < 2 * n + 1)
    return np.where(ramp, -np.sign(s) / (n + 1), 0.0)


@dataclass(frozen=True)
class TrialFamily:
    """Mollifier index ``n`` and the hat weight ``phi`` on ``[alpha, beta]``."""

    n: int
    alpha: float
    beta: float
    sign: float                 # sign of kappa_1 on [alpha, beta]

    @property
    def center(self):
        return 0.5 * (self.alpha + self.beta)

    @property
    def half_width(self):
        return 0.5 * (self.beta - self.alpha)

    def phi_n(self, s):
        return mollifier(self.n, s)

    def dphi_n(self, s):
        return mollifier_derivative(self.n, s)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        return np.clip(1.0 - np.abs(s - self.center) / self.half_width, 0.0, 1.0)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > self.alpha) & (s < self.beta)
        return np.where(inside, -np.sign(s - self.center) / self.half_width, 0.0)

    def mollifier_energy(self):
        """``||phi_n'||^2 = 2 / (n + 1)``."""
        return 2.0 / (self.n + 1)

    def breakpoints(self):
        n = float(self.n)
        return sorted({-(2 * n + 1), -n, n, 2 * n + 1, self.alpha, self.center, self.beta})


def sign_constant_intervals(profile, window=None, points=SCAN_POINTS):
    """Maximal intervals where ``kappa_1`` is nonzero with one sign.

    Endpoints are refined by bisection to where ``kappa_1`` stops having that
    sign.  Returns a list of ``(alpha, beta, sign, integral)``.
    """
    lo, hi = profile.sample_window() if window is None else window
    s = np.linspace(lo, hi, points)
    k = profile.kappa1(s)
    sg = np.sign(k)
    out = []
    i = 0
    n = s.size
    while i < n:
        if sg[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < n and sg[j + 1] == sg[i]:
            j += 1
        seg_k = k[i:j + 1]
        if np.abs(seg_k).max() > KAPPA_FLOOR:
            sign = float(sg[i])
            a = _refine_edge(profile, s[i - 1], s[i], sign) if i > 0 else s[0]
            b = _refine_edge(profile, s[j + 1], s[j], sign) if j + 1 < n else s[-1]
            integral = float(np.trapezoid(seg_k, s[i:j + 1]))
            out.append((float(a), float(b), sign, integral))
        i = j + 1
    return out


def _refine_edge(profile, outside, inside, sign, iters=60):
    """Bisect between a point without the sign and one with it."""
    for _ in range(iters):
        mid = 0.5 * (outside + inside)
        if np.sign(profile.kappa1(np.array([mid]))[0]) == sign:
            inside = mid
        else:
            outside = mid
    return inside if abs(inside - outside) < 1e-14 else 0.5 * (inside + outside)


def build_trial(tube, n, interval=None):
    """Trial family for mollifier index ``n``; ``phi`` is the hat on the best sign-constant interval.

    The interval maximizing ``|int kappa_1|`` is chosen; ties go to the
    positive-curvature interval, then to the one further right.
    """
    prof = tube.profile
    if prof.is_straight():
        raise StraightTubeError("kappa_1 vanishes identically: nothing to certify")
    if interval is None:
        cands = sign_constant_intervals(prof)
        if not cands:
            raise ScanResolutionError(f"no interval with |kappa_1| > {KAPPA_FLOOR:g} found "
                                      f"in the scan window {prof.sample_window()}")
        best = max(abs(c[3]) for c in cands)
        ties = [c for c in cands if abs(c[3]) >= best * (1 - 1e-9)]
        alpha, beta, sign, _ = max(ties, key=lambda c: (c[2], c[0]))
    else:
        alpha, beta = map(float, interval)
        sign = float(np.sign(prof.kappa1(np.array([0.5 * (alpha + beta)]))[0]))
    return TrialFamily(int(n), alpha, beta, sign)


@dataclass
class CertificateResult:
    """Quadratic-in-eps energy data and verdict for one trial family."""

    n: int
    q0: float
    q1: float
    q2: float
    eps_star: float
    min_value: float
    verdict: str
    error: float
    vanishing_term: float
    q1_direct: float
    integral_phi_kappa: float
    q0_bound: float
    degenerate: bool = False
    interval: tuple = ()
    trace: list = field(default_factory=list)

    def row(self):
        return {"n": self.n, "q0": self.q0, "q1": self.q1, "q2": self.q2, "eps_star": self.eps_star,
                "min_value": self.min_value, "verdict": self.verdict, "error": self.error}

    def to_dict(self):
        d = self.row()
        d.update({"vanishing_term": self.vanishing_term, "q1_direct": self.q1_direct,
                  "integral_phi_kappa": self.integral_phi_kappa, "q0_bound": self.q0_bound,
                  "degenerate": self.degenerate, "interval": list(self.interval),
                  "trace": [dict(r) for r in self.trace]})
        return d

    def table(self):
        head = f"{'n':>8} {'q0':>13} {'q1':>13} {'q2':>13} {'eps*':>11} {'min':>13}  verdict"
        lines = [head]
        for r in (self.trace or [self.row()]):
            lines.append(f"{r['n']:>8d} {r['q0']:13.6e} {r['q1']:13.6e} {r['q2']:13.6e} "
                         f"{r['eps_star']:11.4e} {r['min_value']:13.6e}  {r['verdict']}")
        return "\n".join(lines)


def _s_rule(family, profile, order, cell):
    """Gauss nodes/weights in s, split at all kinks, fine cells where kappa lives."""
    n = family.n
    lo_w, hi_w = profile.sample_window()
    pts = set(family.breakpoints())
    pts.update([lo_w, hi_w])
    for c in profile.components:
        if c.support is not None:
            pts.update(x for x in c.support if np.isfinite(x))
        pts.update(c.kinks)
    lo_e = min(-(2 * n + 1), family.alpha)
    hi_e = max(2 * n + 1, family.beta)
    pts = np.array(sorted(x for x in pts if lo_e <= x <= hi_e))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        # unit chunks inside the sampling window so that the curvature test is local
        lo, hi = max(a, lo_w), min(b, hi_w)
        inner = np.arange(np.ceil(lo), hi) if hi > lo else []
        edges.extend(t for t in inner if a < t < b)
        edges.append(b)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        if not (b <= lo_w or a >= hi_w) and not profile.is_straight(window=(a, b), points=201):
            m = int(np.ceil((b - a) / cell))
        elif a >= family.alpha and b <= family.beta:
            m = int(np.ceil((b - a) / (10 * cell)))     # Phi lives here, kappa_1 does not
        else:
            m = 1                                        # polynomial integrand, exact
        e = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(e)
        mids = 0.5 * (e[:-1] + e[1:])
        nodes.append((mids[:, None] + half[:, None] * x[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


class _Fields:
    """Geometry at the (s, u) quadrature points with h = 1 wherever kappa_1 = 0."""

    def __init__(self, tube, s):
        self.tube = tube
        sec = tube.section
        self.s = s
        self.u = sec.quad_nodes
        self.wu = sec.quad_weights
        self.J = sec.j1(self.u)
        self.gJ = sec.grad_j1(self.u)
        prof = tube.profile
        self.k1 = prof.kappa1(s)
        m = tube.d - 1
        # R is evaluated only where it matters (see set_rotation); for d = 2 it is 1.
        self.r = np.ones((s.size, 1)) if m == 1 else np.zeros((s.size, m))
        self.dr = np.zeros((s.size, m))
        self.live = self.k1 != 0.0

    def set_rotation(self, need):
        """Fill R_{mu 2} and its derivative at the s-nodes flagged in ``need``."""
        tube = self.tube
        m = tube.d - 1
        if m == 1:
            return
        idx = np.nonzero(need)[0]
        if idx.size:
            R = tang.rotation_at(tube.frame, self.s[idx])
            Kt = tube.profile.K_transverse(self.s[idx])
            self.r[idx] = R[:, :, 0]
            self.dr[idx] = -np.einsum("kij,kj->ki", R, Kt[:, :, 0])

    def h(self):
        ru = self.r @ self.u.T                       # (Ns, Nu)
        return 1.0 - self.k1[:, None] * ru, ru


def _integrate(ws, wu, f):
    return float(ws @ (f @ wu))


def _quantities(tube, fam, order, cell):
    prof = tube.profile
    s, ws = _s_rule(fam, prof, order, cell)
    F = _Fields(tube, s)
    on_phi = (s >= fam.alpha) & (s <= fam.beta)
    F.set_rotation(F.live | on_phi)
    h, ru = F.h()
    mu1 = tube.mu1
    J, gJ, wu = F.J, F.gJ, F.wu
    pn, dpn = fam.phi_n(s), fam.dphi_n(s)
    ph, dph = fam.phi(s), fam.dphi(s)
    hinv = 1.0 / h
    # Psi_n and Phi with their s- and u-derivatives
    P = pn[:, None] * J[None, :]
    P1 = dpn[:, None] * J[None, :]
    Pu = pn[:, None, None] * gJ[None, :, :]
    dru = F.dr @ F.u.T
    Fh = ph[:, None] * ru * J[None, :]
    F1 = (dph[:, None] * ru + ph[:, None] * dru) * J[None, :]
    Fu = ph[:, None, None] * (F.r[:, None, :] * J[None, :, None] + ru[:, :, None] * gJ[None, :, :])

    def Q1(a, a1, au, b, b1, bu):
        integrand = hinv * a1 * b1 + h * np.einsum("kjm,kjm->kj", au, bu) - mu1 * h * a * b
        return _integrate(ws, wu, integrand)

    q0 = _integrate(ws, wu, hinv * P1 * P1)
    # (Psi_n, kappa_1 R_{mu2} Psi_{n,mu}): vanishes by integration by parts in u
    vanishing = _integrate(ws, wu, P * F.k1[:, None] * np.einsum("km,kjm->kj", F.r, Pu))
    q0_direct = Q1(P, P1, Pu, P, P1, Pu)
    phi_kappa_n = float(ws @ (ph * F.k1 * pn))
    q1 = _integrate(ws, wu, F1 * hinv * P1) - 0.5 * phi_kappa_n
    q1_direct = Q1(Fh, F1, Fu, P, P1, Pu)
    q2 = Q1(Fh, F1, Fu, Fh, F1, Fu)
    phi_kappa = float(ws @ (ph * F.k1))
    return {"q0": q0, "q1": q1, "q2": q2, "vanishing": vanishing, "q0_direct": q0_direct,
            "q1_direct": q1_direct, "phi_kappa": phi_kappa,
            "fields": (ws, wu, h, P, P1, Pu, Fh, F1, Fu, mu1)}


def _cover(tube, fam):
    """Make sure the Tang table covers every s where R is evaluated."""
    if tube.d == 2:
        return tube
    sup = tube.profile.components[0].support
    if sup is not None and all(np.isfinite(sup)):
        lo, hi = min(sup[0], fam.alpha), max(sup[1], fam.beta)
    else:
        lo, hi = min(-(2 * fam.n + 1), fam.alpha), max(2 * fam.n + 1, fam.beta)
    flo, fhi = tube.frame.s_range
    if flo <= lo and fhi >= hi:
        return tube
    fr = tang.solve_frame_ode(tube.profile, (min(lo, flo), max(hi, fhi)), tube.frame.step,
                              tube.frame.R0, tube.frame.s0)
    return build_tube(tube.profile, fr, tube.section, tube.curve)


def _optimize(q0, q1, q2):
    if q2 > 0:
        eps = -q1 / q2
        return eps, q0 - q1 * q1 / q2, False
    # quadratic unbounded below (or linear): any large eps with sign -sign(q1) works
    eps = -np.sign(q1 if q1 != 0 else 1.0) * 1e6
    return eps, q0 + 2 * eps * q1 + eps * eps * q2, True


def evaluate_certificate(tube, family, order=QUAD_ORDER, check_order=CHECK_ORDER, cell=0.05):
    """Compute ``q0, q1, q2``, the optimal ``eps`` and the verdict for one trial family.

    Integrals use tensor Gauss rules: order ``order`` per s-cell (cells split
    at the mollifier and hat breakpoints) times the cross-section rule.  The
    quadrature error is estimated by repeating with ``check_order``.
    """
    tube = _cover(tube, family)
    a = _quantities(tube, family, order, cell)
    b = _quantities(tube, family, check_order, cell)
    q0, q1, q2 = a["q0"], a["q1"], a["q2"]
    eps, val, degenerate = _optimize(q0, q1, q2)
    e0, e1, e2 = (abs(a[k] - b[k]) for k in ("q0", "q1", "q2"))
    err = e0 + 2 * abs(eps) * e1 + eps * eps * e2 + 64 * np.finfo(float).eps * (
        abs(q0) + 2 * abs(eps * q1) + abs(eps * eps * q2))
    if degenerate or val < -err:
        verdict = "certified"
    elif abs(val) <= err:
        verdict = "indeterminate"
    else:
        verdict = "not-certified"
    return CertificateResult(
        n=family.n, q0=q0, q1=q1, q2=q2, eps_star=float(eps), min_value=float(val),
        verdict=verdict, error=float(err), vanishing_term=a["vanishing"], q1_direct=a["q1_direct"],
        integral_phi_kappa=a["phi_kappa"], q0_bound=family.mollifier_energy() / tube.c_minus,
        degenerate=degenerate, interval=(family.alpha, family.beta))


def trial_energy(tube, family, eps, order=QUAD_ORDER, cell=0.05):
    """Direct quadrature of ``Q_1[Psi_n + eps Phi]`` (no use of the quadratic model).

    Returns ``(energy, (q0_direct, q1_direct, q2))`` so callers can compare the
    direct value with the quadratic in ``eps``.
    """
    tube = _cover(tube, family)
    a = _quantities(tube, family, order, cell)
    ws, wu, h, P, P1, Pu, Fh, F1, Fu, mu1 = a["fields"]
    T = P + eps * Fh
    T1 = P1 + eps * F1
    Tu = Pu + eps * Fu
    integrand = T1 * T1 / h + h * np.einsum("kjm,kjm->kj", Tu, Tu) - mu1 * h * T * T
    return _integrate(ws, wu, integrand), (a["q0_direct"], a["q1_direct"], a["q2"])


def certify(tube, n_schedule: Sequence[int] = DEFAULT_SCHEDULE, order=QUAD_ORDER,
            check_order=CHECK_ORDER):
    """Walk the schedule until a trial family certifies; return that result with the trace.

    If the schedule is exhausted the last result is returned with verdict
    ``not-certified`` or ``indeterminate``; it is never silently dropped.
    """
    trace = []
    res = None
    fam0 = build_trial(tube, n_schedule[0])
    for n in sorted(n_schedule):
        fam = TrialFamily(int(n), fam0.alpha, fam0.beta, fam0.sign)
        res = evaluate_certificate(tube, fam, order, check_order)
        trace.append(res.row())
        if res.verdict == "certified":
            break
    res.trace = trace
    return res
