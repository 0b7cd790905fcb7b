"""Tube geometry: metric factor h, validity bounds, embedding and overlap checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import tang
from .errors import ArityError, AssumptionViolation, NotEmbeddableError


@dataclass(frozen=True)
class TubeGeometry:
    """Everything needed to evaluate the tube metric ``diag(h^2, 1, ..., 1)``.

    ``curve`` is optional; without it the tube is treated as an abstract
    Riemannian manifold and only coordinate-level operations are available.
    """

    profile: object
    frame: tang.TangFrameTable
    section: object
    c_minus: float
    c_plus: float
    curve: Optional[object] = None
    flags: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.profile.d

    @property
    def a(self):
        return self.section.radius

    @property
    def mu1(self):
        return self.section.mu1

    def normal_column(self, s):
        """``R_{mu 2}(s)``, shape ``shape(s) + (d-1,)``."""
        return tang.normal_column(self.frame, s)

    def h(self, s, u):
        """``1 - kappa_1(s) R_{mu 2}(s) u_mu``; ``s`` broadcasts against ``u[..., 0]``."""
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        k1 = self.profile.kappa1(s)
        if self.d == 2:
            return 1.0 - k1 * u[..., 0]
        r = self.normal_column(s)
        return 1.0 - k1 * np.einsum("...m,...m->...", r, u)

    def grad_u_h(self, s):
        """Transverse gradient of h, independent of u: ``-kappa_1 R_{mu 2}``."""
        s = np.asarray(s, dtype=float)
        return -self.profile.kappa1(s)[..., None] * self.normal_column(s)

    def summary(self):
        out = {
            "a": float(self.a),
            "kappa1_sup": float(self.profile.sup_norm),
            "a_kappa_sup": float(self.a * self.profile.sup_norm),
            "c_minus": float(self.c_minus),
            "c_plus": float(self.c_plus),
            "frame_step": float(self.frame.step),
            "frame_range": [float(x) for x in self.frame.s_range],
        }
        out.update({k: v for k, v in self.flags.items()})
        return out


def validity_bounds(a, kappa_sup):
    """``C_-, C_+ = 1 -/+ a ||kappa_1||_inf``; raises when ``a ||kappa_1|| >= 1``."""
    if a * kappa_sup >= 1.0:
        raise AssumptionViolation(a, kappa_sup)
    return 1.0 - a * kappa_sup, 1.0 + a * kappa_sup


def build_tube(profile, frame, section, curve=None):
    if not (profile.d == frame.d == section.dim + 1):
        raise ArityError(f"dimension mismatch: profile d={profile.d}, frame d={frame.d}, "
                         f"cross-section dim={section.dim}")
    if not np.isfinite(profile.sup_norm):
        raise ArityError("curvature profile is unbounded")
    cm, cp = validity_bounds(section.radius, profile.sup_norm)
    flags = {"assumption_2i": "satisfied",
             "overlap": "skipped-abstract" if curve is None else "unchecked"}
    return TubeGeometry(profile, frame, section, cm, cp, curve, flags)


def tube_from_profile(profile, section, s_range, step=None, initial=None, s0=0.0, curve=None):
    """Convenience: solve the frame ODE on ``s_range`` and build the tube."""
    frame = tang.solve_frame_ode(profile, s_range, step, initial, s0)
    return build_tube(profile, frame, section, curve)


def embed(tube: TubeGeometry, s, u, curve=None):
    """Point ``Gamma(s) + e~_mu(s) u_mu`` in R^d."""
    curve = curve if curve is not None else tube.curve
    if curve is None:
        raise NotEmbeddableError("abstract profile: no reference curve to embed")
    E = tang.tang_vectors(tube.frame, curve, s)
    u = np.asarray(u, dtype=float)
    base = np.asarray(curve.position(float(s)), dtype=float)
    return base + u @ E[1:]


def embed_jacobian(tube, s, u, curve=None, eps=1e-6):
    """Central-difference Jacobian matrix of the embedding, columns d/ds, d/du_mu."""
    u = np.asarray(u, dtype=float)
    cols = [(embed(tube, s + eps, u, curve) - embed(tube, s - eps, u, curve)) / (2 * eps)]
    for mu in range(u.size):
        du = np.zeros_like(u)
        du[mu] = eps
        cols.append((embed(tube, s, u + du, curve) - embed(tube, s, u - du, curve)) / (2 * eps))
    return np.stack(cols, axis=1)


def overlap_check(tube: TubeGeometry, s_range, resolution, curve=None):
    """Sampled self-distance test of the centreline.

    Cross-sections whose arc lengths differ by more than ``4a`` must have
    centres at least ``2a`` apart (the tube diameter); otherwise a witness
    pair is reported.  Advisory only.
    """
    curve = curve if curve is not None else tube.curve
    if curve is None:
        return {"verdict": "skipped-abstract"}
    lo, hi = map(float, s_range)
    interval = getattr(curve, "interval", None)
    if interval is not None:
        lo, hi = max(lo, float(interval[0])), min(hi, float(interval[1]))
    a = tube.a
    n = max(2, int(np.ceil((hi - lo) / float(resolution))) + 1)
    s = np.linspace(lo, hi, n)
    pts = np.asarray(curve.position(s), dtype=float)
    margin = 2.0 * a
    tree = cKDTree(pts)
    pairs = tree.query_pairs(margin, output_type="ndarray")
    best = None
    if pairs.size:
        far = np.abs(s[pairs[:, 0]] - s[pairs[:, 1]]) > 4.0 * a
        pairs = pairs[far]
        if pairs.size:
            dist = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
            k = int(np.argmin(dist))
            best = (float(s[pairs[k, 0]]), float(s[pairs[k, 1]]), float(dist[k]))
    if best is None:
        report = {"verdict": "passed", "margin": margin, "samples": n}
    else:
        report = {"verdict": "failed", "margin": margin, "samples": n,
                  "witness": {"s1": best[0], "s2": best[1], "distance": best[2]}}
    tube.flags["overlap"] = report["verdict"]
    return report
