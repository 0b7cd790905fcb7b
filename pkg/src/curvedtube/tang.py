"""Tang frame: the rotation field R(s) solving dR/ds + R K = 0 on the transverse block."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm
from scipy.spatial.transform import Rotation

from ._kernels import rotation_steps
from .errors import IntegratorError, PreconditionError, RangeError

ROTATION_TOL = 1e-10


def is_rotation(R, tol=1e-12):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        return False
    return (abs(np.linalg.det(R) - 1.0) <= tol
            and np.abs(R @ R.T - np.eye(R.shape[0])).max() <= tol)


def default_step(profile):
    """``min(0.01, 0.1 / max(1, ||kappa||_inf (d - 2)))``."""
    if profile.d == 2:
        return 0.01
    kmax = max(c.sup if c.sup is not None else profile.sup_norm for c in profile.components)
    return min(0.01, 0.1 / max(1.0, kmax * (profile.d - 2)))


@dataclass(frozen=True)
class TangFrameTable:
    """Rotation matrices R(s_k) on a uniform grid containing ``s0``."""

    d: int
    s: np.ndarray
    R: np.ndarray          # shape (n, d-1, d-1)
    step: float
    s0: float
    R0: np.ndarray
    drift: float = 0.0     # largest pre-projection orthogonality defect

    @property
    def m(self):
        return self.d - 1

    @property
    def s_range(self):
        return float(self.s[0]), float(self.s[-1])

    def to_csv(self, path):
        """Dump ``s`` and column-major flattened R(s) with 17 significant digits."""
        m = self.m
        header = ["s"] + [f"R{i + 2}{j + 2}" for j in range(m) for i in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for sk, Rk in zip(self.s, self.R):
                w.writerow([f"{sk:.17g}"] + [f"{x:.17g}" for x in Rk.flatten(order="F")])


def solve_frame_ode(profile, s_range, step=None, initial=None, s0=0.0):
    """Integrate the Tang-frame rotation ODE over ``s_range``.

    Classical RK4 with a polar-decomposition projection onto SO(d-1) after
    each step; the grid is ``s0 + k*step`` and covers ``s_range``.  For d = 2
    the rotation is the 1x1 identity and no integration happens.
    """
    lo, hi = map(float, s_range)
    if not hi > lo:
        raise ValueError("empty s_range")
    d = profile.d
    m = d - 1
    R0 = np.eye(m) if initial is None else np.array(initial, dtype=float)
    if not is_rotation(R0, 1e-12) or R0.shape != (m, m):
        raise PreconditionError("initial matrix is not a rotation in R^{d-1}")
    s0 = float(min(max(s0, lo), hi))
    if d == 2:
        grid = np.array([lo, hi])
        return TangFrameTable(d, grid, np.ones((2, 1, 1)), hi - lo, s0, R0)
    step = default_step(profile) if step is None else float(step)
    n_lo = int(np.ceil((s0 - lo) / step - 1e-9))
    n_hi = int(np.ceil((hi - s0) / step - 1e-9))
    grid = s0 + step * np.arange(-n_lo, n_hi + 1)

    def run(nodes):
        if nodes.size < 2:
            return R0[None].copy(), 0.0
        ds = nodes[1] - nodes[0]
        Ks = profile.K_transverse(np.stack([nodes[:-1], nodes[:-1] + 0.5 * ds, nodes[1:]], axis=1))
        return rotation_steps(Ks, R0, ds)

    fwd, dr1 = run(grid[n_lo:])
    bwd, dr2 = run(grid[:n_lo + 1][::-1])
    R = np.concatenate([bwd[::-1][:-1], fwd])
    eye = np.eye(m)
    dev = max(np.abs(np.linalg.det(R) - 1.0).max(),
              np.abs(np.einsum("kij,klj->kil", R, R) - eye).max())
    if dev > ROTATION_TOL:
        raise IntegratorError(f"rotation invariants drifted by {dev:g}")
    return TangFrameTable(d, grid, R, step, s0, R0, max(dr1, dr2))


def _locate(table, s):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lo, hi = table.s_range
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(s < lo - tol) or np.any(s > hi + tol):
        raise RangeError(f"s outside tabulated range [{lo:g}, {hi:g}]")
    h = table.s[1] - table.s[0]
    k = np.clip(np.floor((s - table.s[0]) / h).astype(int), 0, table.s.size - 2)
    a = np.clip((s - table.s[k]) / h, 0.0, 1.0)
    return k, a


def rotation_at(table: TangFrameTable, s):
    """R(s) by geodesic interpolation between the bracketing nodes.

    Accepts a scalar (returns ``(m, m)``) or an array (returns ``shape + (m, m)``).
    """
    scalar = np.ndim(s) == 0
    shape = np.shape(s)
    m = table.m
    if m == 1:
        _locate(table, s)
        out = np.ones(shape + (1, 1))
        return out[0] if scalar and out.ndim == 3 else out
    k, a = _locate(table, np.ravel(s))
    A = table.R[k]
    B = table.R[k + 1]
    rel = np.einsum("kji,kjl->kil", A, B)   # A^T B
    if m == 2:
        ang = np.arctan2(rel[:, 1, 0], rel[:, 0, 0]) * a
        c, sn = np.cos(ang), np.sin(ang)
        step = np.stack([np.stack([c, -sn], -1), np.stack([sn, c], -1)], -2)
    elif m == 3:
        step = Rotation.from_rotvec(Rotation.from_matrix(rel).as_rotvec() * a[:, None]).as_matrix()
    else:
        step = np.array([np.real(expm(ai * logm(ri))) for ai, ri in zip(a, rel)])
    out = np.einsum("kij,kjl->kil", A, step)
    exact0 = a == 0.0
    out[exact0] = A[exact0]
    exact1 = a == 1.0
    out[exact1] = B[exact1]
    out = out.reshape(shape + (m, m))
    return out


def rotation_derivative(table, profile, s):
    """dR/ds = -R K_transverse at ``s``."""
    R = rotation_at(table, s)
    return -R @ profile.K_transverse(s)


def normal_column(table, s):
    """The column ``R_{mu 2}(s)``: shape ``shape(s) + (m,)``."""
    return rotation_at(table, s)[..., :, 0]


def tang_vectors(table: TangFrameTable, frenet, s):
    """Tang frame vectors at ``s``: rows ``e~_1..e~_d`` with ``e~_i = R_ij e_j``.

    ``frenet`` is anything with a ``frame(s)`` method returning Frenet rows
    (a unit-speed :class:`~curvedtube.curve.ParametricCurve` or a
    :class:`~curvedtube.curve.FrenetTable`).
    """
    E = np.asarray(frenet.frame(float(s)))
    R = rotation_at(table, float(s))
    d = table.d
    full = np.eye(d)
    full[1:, 1:] = R
    return full @ E
