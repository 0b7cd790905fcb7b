"""Lowest eigenpairs of the assembled problem and their classification against mu_1.

The generalized problem ``A x = lambda M x`` is solved by shift-invert
Lanczos at shift 0 (``scipy.sparse.linalg.eigsh`` with a sparse LU of ``A``);
a LOBPCG block iteration is the fallback.  Everything is deterministic given
the seed, which fixes the Lanczos starting vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import operator as opmod
from . import tang
from .errors import ArityError, PreconditionError, SolverError
from .tube import build_tube


@dataclass
class SpectralReport:
    """Eigenvalues in ascending order with residuals and threshold classification.

    ``mu1`` is the exact transverse eigenvalue of the cross-section and
    ``threshold`` the same quantity for the discrete transverse stencil of this
    grid.  Classification uses ``threshold`` so that the transverse
    discretization error, which shifts every eigenvalue by nearly the same
    amount, cannot fake a bound state: eigenvalue ``i`` counts as below
    threshold only if ``lambda_i < threshold - margins[i]``.
    """

    eigenvalues: np.ndarray
    residuals: np.ndarray
    mu1: float
    margins: np.ndarray
    variant: str
    grid: dict
    vectors: Optional[np.ndarray] = field(default=None, repr=False)
    solver: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    threshold: float = float("nan")

    @property
    def gaps(self):
        """``lambda_i - threshold``."""
        return self.eigenvalues - self.threshold

    @property
    def below_threshold(self):
        return self.eigenvalues < self.threshold - self.margins

    @property
    def below_count(self):
        return int(np.count_nonzero(self.below_threshold))

    @property
    def k(self):
        return self.eigenvalues.size

    def with_margins(self, margins):
        self.margins = np.maximum(self.margins, np.asarray(margins, dtype=float))
        return self

    def to_dict(self):
        return {
            "variant": self.variant,
            "mu1": float(self.mu1),
            "threshold": float(self.threshold),
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "margins": [float(x) for x in self.margins],
            "below_threshold": [bool(x) for x in self.below_threshold],
            "below_count": self.below_count,
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "diagnostics": dict(self.diagnostics),
        }


def _normalize(vectors, M):
    """M-normalize columns and fix the sign so the largest entry is positive."""
    norms = np.sqrt(np.einsum("ij,i,ij->j", vectors, M, vectors))
    vectors = vectors / norms
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def residual_norms(A, M, values, vectors):
    """``||A x - lambda M x|| / ||M x||`` per pair, with ``M`` a diagonal vector."""
    Mx = M[:, None] * vectors
    R = A @ vectors - Mx * values[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mx, axis=0)


def _solve_eigsh(A, M, k, tol, v0, sigma):
    Mmat = sp.diags(M, format="csc")
    return spla.eigsh(A.tocsc(), k=k, M=Mmat, sigma=sigma, which="LM", v0=v0, tol=tol)


def _solve_lobpcg(A, M, k, tol, rng, maxiter):
    n = A.shape[0]
    X = rng.standard_normal((n, k))
    Mmat = sp.diags(M, format="csr")
    diag = A.diagonal()
    precond = sp.diags(1.0 / np.where(diag > 0, diag, 1.0))
    vals, vecs = spla.lobpcg(A, X, B=Mmat, M=precond, tol=tol, maxiter=maxiter, largest=False)
    return vals, vecs


def lowest_eigenpairs(op, k=6, tol=1e-10, seed=0, mu1=None, sigma=0.0, keep_vectors=True,
                      method="eigsh", maxiter=2000):
    """Compute the ``k`` lowest generalized eigenpairs of ``op``.

    Parameters
    ----------
    op : AssembledOperator
        Stiffness ``A`` and diagonal mass ``M``.
    k : int
        Number of eigenpairs; must be smaller than the number of unknowns.
    tol : float
        Residual tolerance used to flag unconverged pairs.
    seed : int
        Seeds the starting vector; equal seeds give bitwise-equal results.
    mu1 : float, optional
        Threshold for classification; defaults to the cross-section's mu_1
        recorded in the operator provenance.
    sigma : float
        Shift for shift-invert mode.
    method : {"eigsh", "lobpcg"}
        Primary solver; the other one is not tried automatically unless the
        primary raises.

    Returns
    -------
    SpectralReport
    """
    A, M = op.A, op.M
    n = A.shape[0]
    if k < 1 or k >= n - 1:
        raise ArityError(f"k={k} must satisfy 1 <= k < dof - 1 = {n - 1}")
    if mu1 is None:
        mu1 = op.provenance.get("mu1", np.nan)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    info = {"seed": int(seed), "tol": float(tol), "k": int(k)}
    try:
        if method == "lobpcg":
            raise SolverError("lobpcg requested")
        vals, vecs = _solve_eigsh(A, M, k, 0.0, v0, sigma)
        info["method"] = "eigsh-shift-invert"
        info["shift"] = float(sigma)
    except (SolverError, RuntimeError, spla.ArpackError) as exc:
        try:
            vals, vecs = _solve_lobpcg(A, M, k, tol, rng, maxiter)
        except Exception as exc2:  # pragma: no cover - both paths broken
            diag = A.diagonal()
            raise SolverError(f"eigensolvers failed ({exc}; {exc2}); "
                              f"diag(A) range [{diag.min():g}, {diag.max():g}]") from exc2
        info["method"] = "lobpcg"
        if method != "lobpcg":
            info["fallback_reason"] = str(exc)
    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    vecs = _normalize(np.asarray(vecs)[:, order], M)
    res = residual_norms(A, M, vals, vecs)
    converged = res <= tol * np.maximum(1.0, np.abs(vals))
    info["converged"] = [bool(c) for c in converged]
    info["partial"] = not bool(converged.all())
    return SpectralReport(vals, res, float(mu1), 10.0 * res, op.variant, op.grid.meta(),
                          vecs if keep_vectors else None, info, threshold=discrete_threshold(op.grid))


def discrete_threshold(grid):
    """Lowest eigenvalue of the transverse stencil alone (the grid's own mu_1).

    Comparing against this value removes the transverse discretization error
    from threshold comparisons at a fixed spacing.
    """
    tg = grid.transverse
    n = tg.size
    w = 1.0 / (tg.steps[tg.link_dir] * tg.link_delta)
    interior = tg.link_b >= 0
    rows = np.concatenate([tg.link_a[interior], tg.link_b[interior]])
    cols = np.concatenate([tg.link_b[interior], tg.link_a[interior]])
    vals = -np.concatenate([w[interior], w[interior]])
    diag = np.zeros(n)
    np.add.at(diag, tg.link_a, w)
    np.add.at(diag, tg.link_b[interior], w[interior])
    L = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc() + sp.diags(diag, format="csc")
    if n <= 400:
        return float(np.linalg.eigvalsh(L.toarray())[0])
    v0 = np.random.default_rng(0).standard_normal(n)
    return float(spla.eigsh(L, k=1, sigma=0.0, which="LM", v0=v0, return_eigenvectors=False)[0])


def mass_outside(report_or_vec, grid, M, fraction=0.5, index=0):
    """M-weighted mass of an eigenvector in ``|s| > fraction * L``."""
    vec = report_or_vec.vectors[:, index] if hasattr(report_or_vec, "vectors") else report_or_vec
    w = M * vec**2
    far = np.abs(grid.s) > fraction * grid.L
    w = w.reshape(grid.ns, grid.nu)
    return float(w[far].sum() / w.sum())


def orthogonality_defect(report, M):
    """Largest ``|x_i^T M x_j|`` over distinct reported pairs."""
    V = report.vectors
    G = V.T @ (M[:, None] * V)
    np.fill_diagonal(G, 0.0)
    return float(np.abs(G).max()) if G.size else 0.0


def richardson(values, spacings, order=2.0):
    """Extrapolate ``values[i] ~ lam + C h_i^p`` to ``h -> 0`` using the two finest levels.

    Returns ``(estimate, error_estimate, observed_order)``; with three or more
    levels the error estimate is the change between the extrapolations from the
    two finest and two next-finest pairs, otherwise the Richardson correction
    itself.  ``observed_order`` is NaN with fewer than three levels.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if v.shape[0] < 2:
        raise ArityError("need at least two refinement levels")
    idx = np.argsort(-h)
    v, h = v[idx], h[idx]

    def extrap(i, j):
        r = (h[i] / h[j]) ** order
        return v[j] + (v[j] - v[i]) / (r - 1.0)

    est = extrap(-2, -1)
    if v.shape[0] >= 3:
        prev = extrap(-3, -2)
        err = np.abs(est - prev)
        d1 = v[-3] - v[-2]
        d2 = v[-2] - v[-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.log(np.abs(d1 / d2)) / np.log(h[-2] / h[-1])
    else:
        err = np.abs(est - v[-1])
        p = np.full_like(est, np.nan)
    return est, err, p


@dataclass
class RefinementStudy:
    spacings: np.ndarray
    values: np.ndarray          # (levels, k)
    extrapolated: np.ndarray
    error: np.ndarray
    observed_order: np.ndarray
    reports: list

    @property
    def finest(self):
        return self.reports[-1]

    def monotone(self):
        d = np.diff(self.values, axis=0)
        return bool(np.all(d <= 0) or np.all(d >= 0))

    def to_dict(self):
        return {
            "spacings": [float(x) for x in self.spacings],
            "values": [[float(x) for x in row] for row in self.values],
            "extrapolated": [float(x) for x in self.extrapolated],
            "error_estimate": [float(x) for x in self.error],
            "observed_order": [float(x) for x in self.observed_order],
            "monotone": self.monotone(),
        }


def ensure_frame(tube, L):
    """Return ``tube`` with a Tang frame covering ``[-L, L]``, re-integrating if needed."""
    lo, hi = tube.frame.s_range
    if lo <= -L + 1e-12 and hi >= L - 1e-12:
        return tube
    fr = tang.solve_frame_ode(tube.profile, (min(lo, -L), max(hi, L)), tube.frame.step,
                              tube.frame.R0, tube.frame.s0)
    return build_tube(tube.profile, fr, tube.section, tube.curve)


def assemble(tube, grid, variant="form"):
    if variant == "form":
        op = opmod.assemble_form(tube, grid)
    elif variant == "schroedinger":
        op = opmod.assemble_schroedinger(tube, grid)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    op.provenance["mu1"] = float(tube.mu1)
    return op


def solve_tube(tube, L, spacing, k=3, variant="form", seed=0, tol=1e-10, du=None, keep_vectors=True):
    """Grid, assemble and solve in one call; returns ``(report, operator)``."""
    tube = ensure_frame(tube, L)
    grid = opmod.make_grid(tube.section, L, spacing, du)
    op = assemble(tube, grid, variant)
    return lowest_eigenpairs(op, k, tol, seed, tube.mu1, keep_vectors=keep_vectors), op


def refinement_study(tube, L, spacings: Sequence[float], k=3, variant="form", seed=0, tol=1e-10,
                     builder: Optional[Callable] = None, du_ratio=None):
    """Solve on successively refined grids and Richardson-extrapolate.

    ``builder(spacing) -> AssembledOperator`` overrides the default assembly.
    ``du_ratio`` sets the transverse spacing to ``du_ratio * spacing`` (default 1).
    The finest report's margins are raised to twice the change of the gap
    ``lambda - threshold`` between the two finest levels.
    """
    spacings = np.asarray(sorted(spacings, reverse=True), dtype=float)
    reports = []
    for h in spacings:
        if builder is None:
            du = None if du_ratio is None else du_ratio * h
            rep, _ = solve_tube(tube, L, h, k, variant, seed, tol, du, keep_vectors=(h == spacings[-1]))
        else:
            rep = lowest_eigenpairs(builder(h), k, tol, seed, tube.mu1, keep_vectors=(h == spacings[-1]))
        reports.append(rep)
    values = np.array([r.eigenvalues for r in reports])
    est, err, p = richardson(values, spacings)
    fin = reports[-1]
    fin.with_margins(2.0 * np.abs(reports[-1].gaps - reports[-2].gaps))
    fin.diagnostics.update({"refinement": {
        "spacings": [float(x) for x in spacings],
        "values": [[float(x) for x in row] for row in values],
        "extrapolated": [float(x) for x in est],
        "error_estimate": [float(x) for x in err],
        "observed_order": [float(x) for x in p]}})
    return RefinementStudy(spacings, values, est, err, p, reports)


@dataclass
class ThresholdScan:
    Ls: np.ndarray
    eigenvalues: np.ndarray     # (len(Ls), k)
    errors: np.ndarray          # extrapolation error per entry (0 if one spacing)
    reference: np.ndarray       # threshold compared against, per L
    reference_kind: str
    verdict: str
    stable: list
    drifting: list
    gap_ratios: np.ndarray      # gap(L_i) / gap(L_{i+1}) per eigenvalue index

    def to_dict(self):
        return {
            "L": [float(x) for x in self.Ls],
            "eigenvalues": [[float(x) for x in row] for row in self.eigenvalues],
            "errors": [[float(x) for x in row] for row in self.errors],
            "reference": [float(x) for x in self.reference],
            "reference_kind": self.reference_kind,
            "stable_indices": list(self.stable),
            "drifting_indices": list(self.drifting),
            "gap_ratios": [[float(x) for x in row] for row in self.gap_ratios],
            "verdict": self.verdict,
            "note": "truncation scan is an empirical surrogate for the essential-spectrum claim",
        }


def threshold_scan(tube, Ls: Sequence[float], spacings, k=3, variant="form", seed=0, tol=1e-10,
                   stability=1e-3):
    """Lowest eigenvalues as the truncation length grows.

    With one spacing the threshold reference is the grid's own transverse
    eigenvalue (:func:`discrete_threshold`); with two or more, eigenvalues are
    Richardson-extrapolated and compared with the exact ``mu_1``.

    An eigenvalue index is *stable* if it stays below the reference and varies
    by less than ``stability`` (relative) across the scan; it is *drifting*
    if its gap to the reference shrinks with every doubling.
    """
    if not tube.profile.decays:
        raise PreconditionError("curvature does not decay at infinity; the essential-spectrum "
                                "threshold claim does not apply")
    Ls = np.asarray(sorted(Ls), dtype=float)
    spacings = np.atleast_1d(np.asarray(spacings, dtype=float))
    tube = ensure_frame(tube, Ls[-1])
    vals, errs, refs = [], [], []
    for L in Ls:
        if spacings.size == 1:
            rep, op = solve_tube(tube, L, spacings[0], k, variant, seed, tol, keep_vectors=False)
            vals.append(rep.eigenvalues)
            errs.append(np.zeros(k))
            refs.append(discrete_threshold(op.grid))
        else:
            st = refinement_study(tube, L, spacings, k, variant, seed, tol)
            vals.append(st.extrapolated)
            errs.append(st.error)
            refs.append(tube.mu1)
    vals, errs, refs = np.array(vals), np.array(errs), np.array(refs)
    gaps = vals - refs[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gaps[:-1] / gaps[1:]
    stable, drifting = [], []
    for j in range(k):
        col = vals[:, j]
        if np.all(gaps[:, j] < 0) and np.ptp(col) / abs(col.mean()) < stability:
            stable.append(j)
        elif np.all(gaps[:, j] > 0) and np.all(np.diff(gaps[:, j]) < 0):
            drifting.append(j)
    verdict = (f"{len(stable)} eigenvalue(s) stable below threshold, "
               f"{len(drifting)} drifting toward threshold as L grows")
    return ThresholdScan(Ls, vals, errs, refs, "discrete" if spacings.size == 1 else "exact",
                         verdict, stable, drifting, ratios)


def eigenvector_slices(report, grid, index=0, u_index=None, s_value=0.0):
    """Plot data: the eigenvector along the centre u-line and across the s-plane nearest ``s_value``.

    Returns ``(line, plane)`` where ``line`` has columns ``s, psi`` and
    ``plane`` has columns ``u_1..u_m, psi``.
    """
    vec = report.vectors[:, index].reshape(grid.ns, grid.nu)
    U = grid.transverse.nodes
    if u_index is None:
        u_index = int(np.argmin(np.linalg.norm(U, axis=1)))
    line = np.column_stack([grid.s, vec[:, u_index]])
    i = int(np.argmin(np.abs(grid.s - s_value)))
    plane = np.column_stack([U, vec[i]])
    return line, plane


def default_truncation(tube, fallback=20.0, cap=80.0, probe_spacing=0.125):
    """Truncation length ``support bound + 10 / sqrt(mu_1 - lambda_est)``.

    ``lambda_est`` comes from a coarse probe solve and is compared with the
    probe grid's own threshold.  Falls back to ``fallback`` when the support
    is unbounded or the probe finds nothing below threshold; never exceeds
    ``cap``.  Returns ``(L, info)``.
    """
    sup = tube.profile.components[0].support
    if sup is None or not all(np.isfinite(sup)) or tube.profile.is_straight():
        return float(fallback), {"rule": "fallback", "L": float(fallback)}
    bound = max(abs(sup[0]), abs(sup[1]))
    L0 = bound + 10.0
    rep, op = solve_tube(tube, L0, probe_spacing, k=1, keep_vectors=False)
    gap = discrete_threshold(op.grid) - rep.eigenvalues[0]
    if gap <= 0:
        return float(max(fallback, L0)), {"rule": "fallback", "L": float(max(fallback, L0)),
                                          "probe_gap": float(gap)}
    L = min(cap, bound + 10.0 / np.sqrt(gap))
    return float(L), {"rule": "support+10/sqrt(gap)", "L": float(L), "probe_gap": float(gap),
                      "capped": bool(L == cap)}
