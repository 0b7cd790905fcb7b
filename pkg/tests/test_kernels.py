import os
import subprocess
import sys

import numpy as np
import pytest

from curvedtube import _kernels as K


def _skew_stack(rng, n, m):
    A = rng.standard_normal((n, 3, m, m))
    return A - np.swapaxes(A, -1, -2)


@pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
def test_rotation_steps_paths_agree(rng):
    Ks = 0.3 * _skew_stack(rng, 200, 3)
    R0 = np.eye(3)
    a, da = K.rotation_steps_numpy(Ks, R0, 0.01)
    b, db = K.rotation_steps_numba(Ks, R0, 0.01)
    assert np.abs(a - b).max() < 1e-13
    assert abs(da - db) < 1e-13


def test_rotation_steps_stay_on_group(rng):
    Ks = 0.5 * _skew_stack(rng, 500, 4)
    out, drift = K.rotation_steps(Ks, np.eye(4), 0.02)
    for R in out[::50]:
        assert abs(np.linalg.det(R) - 1) < 1e-12
        assert np.abs(R @ R.T - np.eye(4)).max() < 1e-12
    # rough generators: the pre-projection drift is the RK4 local error, O(ds^5 |K|^5)
    assert drift < 1e-3


def test_rotation_steps_constant_generator_matches_exponential():
    # dR/ds = -R K with constant K: R(s) = expm(-s K)
    from scipy.linalg import expm
    Kc = np.array([[0.0, 0.7], [-0.7, 0.0]])
    Ks = np.broadcast_to(Kc, (100, 3, 2, 2)).copy()
    out, _ = K.rotation_steps(Ks, np.eye(2), 0.01)
    assert np.abs(out[-1] - expm(-1.0 * Kc)).max() < 1e-10


def _random_assembly(rng, ns=7, M=5, nl=9):
    w_long = rng.random((ns + 1, M)) + 0.5
    w_tr = rng.random((ns, nl)) + 0.5
    la = rng.integers(0, M, nl)
    lb = np.where(rng.random(nl) < 0.3, -1, rng.integers(0, M, nl))
    lb = np.where(lb == la, -1, lb)
    extra = rng.standard_normal((ns, M))
    return w_long, w_tr, la.astype(np.int64), lb.astype(np.int64), extra


@pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
def test_assemble_triplets_paths_bitwise_equal(rng):
    args = _random_assembly(rng)
    a = K.assemble_triplets_numpy(*args)
    b = K.assemble_triplets_numba(*args)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_assemble_triplets_is_a_quadratic_form(rng):
    # x^T A x must equal the explicit sum of weighted squared link differences
    import scipy.sparse as sp
    w_long, w_tr, la, lb, extra = _random_assembly(rng)
    ns, M = extra.shape
    diag, rows, cols, vals = K.assemble_triplets(w_long, w_tr, la, lb, extra)
    n = ns * M
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).toarray() + np.diag(diag)
    x = rng.standard_normal((ns, M))
    e = 0.0
    for i in range(ns + 1):
        lo = x[i - 1] if i > 0 else 0.0
        hi = x[i] if i < ns else 0.0
        e += np.sum(w_long[i] * (hi - lo) ** 2)
    for i in range(ns):
        for l in range(la.size):
            other = x[i, lb[l]] if lb[l] >= 0 else 0.0
            e += w_tr[i, l] * (x[i, la[l]] - other) ** 2
    e += np.sum(extra * x**2)
    assert np.isclose(x.ravel() @ A @ x.ravel(), e, rtol=1e-12)


def test_env_flag_selects_numpy_path():
    code = "import curvedtube._kernels as k; print(k.USE_NUMBA)"
    env = dict(os.environ, CURVEDTUBE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
