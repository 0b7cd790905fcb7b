"""Finite-difference discretization of the tube Laplacian on a truncated straight tube.

Two assemblies are provided:

``form``
    The quadratic form ``int h^-1 |d_s psi|^2 + h |grad_u psi|^2 ds du`` with
    mass ``int h |psi|^2``, i.e. the generalized problem ``A x = lambda M x``.
``schroedinger``
    The unitarily equivalent operator ``-d_s h^-2 d_s - Laplace_u + V`` on the
    flat measure.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import _kernels
from .errors import ArityError, RangeError, SmoothnessError


@dataclass(frozen=True)
class TruncatedGrid:
    """Tensor grid on ``(-L, L) x omega`` with Dirichlet walls at ``s = +-L``."""

    L: float
    ds: float
    s: np.ndarray          # interior s-nodes
    transverse: object     # section.TransverseGrid

    @property
    def ns(self):
        return self.s.size

    @property
    def nu(self):
        return self.transverse.size

    @property
    def dof(self):
        return self.ns * self.nu

    @property
    def cell_volume(self):
        return self.ds * self.transverse.cell_area

    def index(self, i, j):
        return i * self.nu + j

    def s_midpoints(self):
        """Midpoints of the ns + 1 longitudinal links, walls included."""
        return -self.L + (np.arange(self.ns + 1) + 0.5) * self.ds

    def meta(self):
        return {"L": float(self.L), "ds": float(self.ds), "du": [float(x) for x in self.transverse.steps],
                "ns": int(self.ns), "nu": int(self.nu), "dof": int(self.dof)}


def make_grid(section, L, ds, du=None):
    """Uniform grid; ``ds`` is rounded so that ``2L/ds`` is an integer."""
    L = float(L)
    n = int(round(2 * L / float(ds)))
    if n < 2:
        raise ArityError("grid needs at least one interior s-node")
    ds = 2 * L / n
    tg = section.transverse_grid(ds if du is None else du)
    if tg.size == 0:
        raise ArityError("cross-section grid is empty")
    s = -L + ds * np.arange(1, n)
    return TruncatedGrid(L, ds, s, tg)


@dataclass(frozen=True)
class AssembledOperator:
    """Sparse symmetric stiffness ``A`` and diagonal mass ``M`` (stored as a vector)."""

    A: sp.csr_matrix
    M: np.ndarray
    variant: str
    grid: TruncatedGrid
    provenance: dict = field(default_factory=dict)

    @property
    def mass(self):
        return sp.diags(self.M, format="csr")

    def write_matrix_market(self, stem):
        """Write ``<stem>_A.mtx`` and ``<stem>_M.mtx``."""
        scipy.io.mmwrite(f"{stem}_A.mtx", self.A, symmetry="symmetric",
                         comment=f"curvedtube {self.variant} stiffness")
        scipy.io.mmwrite(f"{stem}_M.mtx", self.mass, symmetry="symmetric",
                         comment=f"curvedtube {self.variant} mass (diagonal)")
        return f"{stem}_A.mtx", f"{stem}_M.mtx"


def _check_frame_range(tube, grid):
    lo, hi = tube.frame.s_range
    if lo > -grid.L + 1e-12 or hi < grid.L - 1e-12:
        raise RangeError(f"Tang frame covers [{lo:g}, {hi:g}] but the grid needs [{-grid.L:g}, {grid.L:g}]")


def _to_csr(diag, rows, cols, vals, n):
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A = A + sp.diags(diag, format="csr")
    A.sum_duplicates()
    A.sort_indices()
    return A


def _transverse_link_factor(tg):
    return 1.0 / (tg.steps[tg.link_dir] * tg.link_delta)


def assemble_form(tube, grid: TruncatedGrid):
    """Assemble the weighted Dirichlet form and its mass matrix.

    Longitudinal fluxes carry ``1/h`` at link midpoints, transverse fluxes
    carry ``h`` at link midpoints, and the mass is the nodal ``h`` times the
    cell volume.  Symmetric by construction.
    """
    if grid.dof == 0:
        raise ArityError("empty grid")
    _check_frame_range(tube, grid)
    tg = grid.transverse
    V = grid.cell_volume
    U = tg.nodes
    s_mid = grid.s_midpoints()
    h_long = tube.h(s_mid[:, None], U[None, :, :])
    w_long = V / grid.ds**2 / h_long
    h_tr = tube.h(grid.s[:, None], tg.link_midpoints()[None, :, :])
    w_tr = V * _transverse_link_factor(tg)[None, :] * h_tr
    diag, rows, cols, vals = _kernels.assemble_triplets(
        w_long, w_tr, tg.link_a, tg.link_b, np.zeros((grid.ns, grid.nu)))
    A = _to_csr(diag, rows, cols, vals, grid.dof)
    M = (V * tube.h(grid.s[:, None], U[None, :, :])).ravel()
    return AssembledOperator(A, M, "form", grid, {"geometry": tube.summary(), "grid": grid.meta()})


@dataclass(frozen=True)
class EffectivePotential:
    """``V = -kappa_1^2/(4h^2) + h_ss/(2h^3) - 5 h_s^2/(4h^4)``."""

    tube: object
    smoothness: str = "C2"
    warnings: tuple = ()

    def h_derivatives(self, s, u):
        """``(h, d_s h, d_ss h)`` from the curvature-matrix identities (no differencing of h)."""
        tube = self.tube
        prof = tube.profile
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        K0 = prof.K(s, 0)
        K1 = prof.K(s, 1)
        K2 = prof.K(s, 2)
        k0, k1, k2 = K0[..., 1:, 0], K1[..., 1:, 0], K2[..., 1:, 0]
        T0, T1 = K0[..., 1:, 1:], K1[..., 1:, 1:]
        mv = lambda A, x: np.einsum("...ij,...j->...i", A, x)
        first = k1 - mv(T0, k0)
        second = k2 - mv(T1, k0) - 2.0 * mv(T0, k1) + mv(T0, mv(T0, k0))
        if tube.d == 2:
            w1, w2 = first, second
        else:
            from .tang import rotation_at
            R = rotation_at(tube.frame, s)
            w1, w2 = mv(R, first), mv(R, second)
        h = tube.h(s, u)
        h1 = np.einsum("...m,...m->...", u, w1)
        h11 = np.einsum("...m,...m->...", u, w2)
        return h, h1, h11

    def __call__(self, s, u):
        h, h1, h11 = self.h_derivatives(s, u)
        k1 = self.tube.profile.kappa1(np.asarray(s, dtype=float))
        return -0.25 * k1**2 / h**2 + 0.5 * h11 / h**3 - 1.25 * h1**2 / h**4


def effective_potential(tube):
    """Effective potential of the Schroedinger form; needs analytic curvature derivatives."""
    prof = tube.profile
    if not prof.has_derivatives():
        raise SmoothnessError("effective potential needs first and second curvature derivatives "
                              f"(profile smoothness {prof.smoothness})")
    notes = tuple(n for n in prof.notes if "spline" in n)
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return EffectivePotential(tube, prof.smoothness, notes)


def assemble_schroedinger(tube, grid: TruncatedGrid, potential=None, transverse_sign=-1.0):
    """Assemble ``-d_s h^-2 d_s - Laplace_u + V`` with the flat mass.

    ``transverse_sign=+1`` reproduces ``+Laplace_u`` as a diagnostic; it gives
    an operator that is unbounded below as the grid is refined.
    """
    if grid.dof == 0:
        raise ArityError("empty grid")
    _check_frame_range(tube, grid)
    potential = effective_potential(tube) if potential is None else potential
    tg = grid.transverse
    Vc = grid.cell_volume
    U = tg.nodes
    s_mid = grid.s_midpoints()
    h_long = tube.h(s_mid[:, None], U[None, :, :])
    w_long = Vc / grid.ds**2 / h_long**2
    w_tr = np.broadcast_to(-transverse_sign * Vc * _transverse_link_factor(tg)[None, :],
                           (grid.ns, tg.link_a.size))
    pot = Vc * potential(grid.s[:, None], U[None, :, :])
    diag, rows, cols, vals = _kernels.assemble_triplets(w_long, w_tr, tg.link_a, tg.link_b, pot)
    A = _to_csr(diag, rows, cols, vals, grid.dof)
    M = np.full(grid.dof, Vc)
    return AssembledOperator(A, M, "schroedinger", grid,
                             {"geometry": tube.summary(), "grid": grid.meta(),
                              "transverse_sign": "+" if transverse_sign > 0 else "-"})
