"""Hot inner loops, compiled with numba when available.

Set ``CURVEDTUBE_DISABLE_NUMBA=1`` to force the pure numpy path.  Both
implementations of each kernel are importable (``*_numba`` / ``*_numpy``) so
that tests and the benchmark can compare them directly; the undecorated name
dispatches on the flag.
"""
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn

USE_NUMBA = HAVE_NUMBA and os.environ.get("CURVEDTUBE_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


# --- rotation ODE -----------------------------------------------------------

def _project_numpy(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def rotation_steps_numpy(K, R0, ds):
    """Integrate dR/ds = -R K with RK4, projecting onto SO(m) after every step.

    Parameters
    ----------
    K : ndarray, shape (nsteps, 3, m, m)
        Transverse curvature block sampled at the start, midpoint and end of
        each step.
    R0 : ndarray, shape (m, m)
    ds : float
        Signed step.

    Returns
    -------
    R : ndarray, shape (nsteps + 1, m, m)
    drift : float
        Largest ``max|R R^T - I|`` seen *before* projection.
    """
    nsteps, _, m, _ = K.shape
    out = np.empty((nsteps + 1, m, m))
    out[0] = R0
    R = R0.copy()
    eye = np.eye(m)
    drift = 0.0
    for k in range(nsteps):
        k1 = -R @ K[k, 0]
        k2 = -(R + 0.5 * ds * k1) @ K[k, 1]
        k3 = -(R + 0.5 * ds * k2) @ K[k, 1]
        k4 = -(R + ds * k3) @ K[k, 2]
        R = R + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = max(drift, np.abs(R @ R.T - eye).max())
        R = _project_numpy(R)
        out[k + 1] = R
    return out, drift


@njit(cache=True)
def _project_nb(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        for i in range(U.shape[0]):
            U[i, -1] = -U[i, -1]
        Q = U @ Vt
    return Q


@njit(cache=True)
def rotation_steps_numba(K, R0, ds):
    nsteps = K.shape[0]
    m = K.shape[2]
    out = np.empty((nsteps + 1, m, m))
    out[0] = R0
    R = R0.copy()
    eye = np.eye(m)
    drift = 0.0
    for k in range(nsteps):
        k1 = -R @ K[k, 0]
        k2 = -(R + 0.5 * ds * k1) @ K[k, 1]
        k3 = -(R + 0.5 * ds * k2) @ K[k, 1]
        k4 = -(R + ds * k3) @ K[k, 2]
        R = R + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        d = np.abs(R @ R.T - eye).max()
        if d > drift:
            drift = d
        R = _project_nb(R)
        out[k + 1] = R
    return out, drift


def rotation_steps(K, R0, ds):
    K = np.ascontiguousarray(K, dtype=np.float64)
    R0 = np.ascontiguousarray(R0, dtype=np.float64)
    if USE_NUMBA:
        return rotation_steps_numba(K, R0, float(ds))
    return rotation_steps_numpy(K, R0, float(ds))


# --- stencil assembly -------------------------------------------------------
#
# Global index of (s-node i, transverse node j) is i * M + j.
# w_long[i, j]  : coefficient of the longitudinal link between s-nodes i-1 and i
#                 (i = 0 and i = Ns are the Dirichlet walls), shape (Ns + 1, M).
# w_tr[i, l]    : coefficient of transverse link l at s-node i, shape (Ns, nl).
# link_a, link_b: transverse endpoints; link_b == -1 marks a Dirichlet link.
# diag_extra    : additional diagonal (potential), shape (Ns, M).

def assemble_triplets_numpy(w_long, w_tr, link_a, link_b, diag_extra):
    Ns1, M = w_long.shape
    Ns = Ns1 - 1
    diag = diag_extra + w_long[:-1]
    diag += w_long[1:]
    interior = link_b >= 0
    a_in, b_in = link_a[interior], link_b[interior]
    # same accumulation order as the compiled loop, so both paths agree bitwise
    for l in range(link_a.shape[0]):
        diag[:, link_a[l]] += w_tr[:, l]
        if link_b[l] >= 0:
            diag[:, link_b[l]] += w_tr[:, l]
    base = (np.arange(Ns) * M)[:, None]
    # longitudinal couplings between s-nodes i and i+1
    rl = (base[:-1] + np.arange(M)[None, :]).ravel()
    cl = rl + M
    vl = -w_long[1:-1].ravel()
    # transverse couplings
    rt = (base + a_in[None, :]).ravel()
    ct = (base + b_in[None, :]).ravel()
    vt = -w_tr[:, interior].ravel()
    rows = np.concatenate([rl, cl, rt, ct])
    cols = np.concatenate([cl, rl, ct, rt])
    vals = np.concatenate([vl, vl, vt, vt])
    return diag.ravel(), rows, cols, vals


@njit(cache=True)
def assemble_triplets_numba(w_long, w_tr, link_a, link_b, diag_extra):
    Ns = w_long.shape[0] - 1
    M = w_long.shape[1]
    nl = link_a.shape[0]
    n_in = 0
    for l in range(nl):
        if link_b[l] >= 0:
            n_in += 1
    nnz = 2 * ((Ns - 1) * M + Ns * n_in)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    diag = np.empty(Ns * M)
    p = 0
    for i in range(Ns):
        for j in range(M):
            diag[i * M + j] = diag_extra[i, j] + w_long[i, j] + w_long[i + 1, j]
    for i in range(Ns):
        for l in range(nl):
            diag[i * M + link_a[l]] += w_tr[i, l]
            if link_b[l] >= 0:
                diag[i * M + link_b[l]] += w_tr[i, l]
    for i in range(Ns - 1):
        for j in range(M):
            r = i * M + j
            rows[p] = r
            cols[p] = r + M
            vals[p] = -w_long[i + 1, j]
            p += 1
    for i in range(Ns - 1):
        for j in range(M):
            r = i * M + j
            rows[p] = r + M
            cols[p] = r
            vals[p] = -w_long[i + 1, j]
            p += 1
    for i in range(Ns):
        for l in range(nl):
            if link_b[l] >= 0:
                rows[p] = i * M + link_a[l]
                cols[p] = i * M + link_b[l]
                vals[p] = -w_tr[i, l]
                p += 1
    for i in range(Ns):
        for l in range(nl):
            if link_b[l] >= 0:
                rows[p] = i * M + link_b[l]
                cols[p] = i * M + link_a[l]
                vals[p] = -w_tr[i, l]
                p += 1
    return diag, rows, cols, vals


def assemble_triplets(w_long, w_tr, link_a, link_b, diag_extra):
    args = (np.ascontiguousarray(w_long, dtype=np.float64),
            np.ascontiguousarray(w_tr, dtype=np.float64),
            np.ascontiguousarray(link_a, dtype=np.int64),
            np.ascontiguousarray(link_b, dtype=np.int64),
            np.ascontiguousarray(diag_extra, dtype=np.float64))
    if USE_NUMBA:
        return assemble_triplets_numba(*args)
    return assemble_triplets_numpy(*args)
