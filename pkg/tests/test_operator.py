import numpy as np
import pytest
import scipy.io
import scipy.sparse.linalg as spla

from curvedtube import operator as O
from curvedtube import profiles as P
from curvedtube import section as S
from curvedtube import spectra as SP
from curvedtube import tube as TB
from curvedtube.errors import ArityError, RangeError, SmoothnessError


def _strip(profile, a=0.5, span=40.0):
    return TB.tube_from_profile(profile, S.make_interval(a), (-span, span))


def test_grid_layout():
    g = O.make_grid(S.make_interval(0.5), 1.0, 0.25)
    assert g.ns == 7 and g.nu == 3 and g.dof == 21
    assert np.all(np.abs(g.s) < g.L)
    assert np.allclose(g.s_midpoints(), np.linspace(-0.875, 0.875, 8))
    assert sorted(g.index(i, j) for i in range(g.ns) for j in range(g.nu)) == list(range(g.dof))
    with pytest.raises(ArityError):
        O.make_grid(S.make_interval(0.5), 0.1, 0.25)


def test_form_is_symmetric_and_mass_bounded(bent_strip):
    g = O.make_grid(bent_strip.section, 6.0, 1 / 8)
    op = O.assemble_form(bent_strip, g)
    assert abs(op.A - op.A.T).max() == 0.0
    V = g.cell_volume
    assert op.M.min() >= bent_strip.c_minus * V - 1e-15
    assert op.M.max() <= bent_strip.c_plus * V + 1e-15


def test_form_is_positive_semidefinite(bent_strip):
    op = O.assemble_form(bent_strip, O.make_grid(bent_strip.section, 6.0, 1 / 8))
    lo = spla.eigsh(op.A, k=1, which="SA", tol=1e-8, v0=np.ones(op.A.shape[0]),
                    return_eigenvectors=False)[0]
    assert lo >= -1e-10 * spla.norm(op.A, np.inf)


def test_straight_mass_is_cell_volume(straight_strip):
    g = O.make_grid(straight_strip.section, 3.0, 1 / 8)
    op = O.assemble_form(straight_strip, g)
    assert np.all(op.M == g.cell_volume)


def _hand_assembled(tube, g):
    """Stiffness and mass from first principles of the weighted Dirichlet form.

    E(psi) = sum over longitudinal links  ds*du * (1/h(mid)) ((psi_+ - psi_-)/ds)^2
           + sum over transverse links    ds*du * h(mid)     ((psi_+ - psi_-)/du)^2
    with zero boundary values at s = +-L and u = +-a, A_ij by polarization.
    """
    s = g.s
    u = g.transverse.nodes[:, 0]
    ds, du = g.ds, g.transverse.steps[0]
    a = tube.a
    ns, nu = s.size, u.size

    def h(si, ui):
        return float(1.0 - tube.profile.kappa1(np.array(si)) * ui)

    def energy(x):
        X = x.reshape(ns, nu)
        e = 0.0
        for j in range(nu):
            col = np.concatenate([[0.0], X[:, j], [0.0]])
            sv = np.concatenate([[-g.L], s, [g.L]])
            for i in range(ns + 1):
                e += ds * du / h(0.5 * (sv[i] + sv[i + 1]), u[j]) * ((col[i + 1] - col[i]) / ds) ** 2
        for i in range(ns):
            row = np.concatenate([[0.0], X[i], [0.0]])
            uv = np.concatenate([[-a], u, [a]])
            for j in range(nu + 1):
                e += ds * du * h(s[i], 0.5 * (uv[j] + uv[j + 1])) * ((row[j + 1] - row[j]) / du) ** 2
        return e

    n = ns * nu
    E = np.eye(n)
    Ed = np.array([energy(E[i]) for i in range(n)])
    A = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            A[i, j] = Ed[i] if i == j else 0.5 * (energy(E[i] + E[j]) - Ed[i] - Ed[j])
    M = np.array([ds * du * h(s[i], u[j]) for i in range(ns) for j in range(nu)])
    return A, M


def test_form_matches_hand_assembly_on_5x3_grid(bent_strip):
    g = O.make_grid(bent_strip.section, 0.75, 0.25)
    assert (g.ns, g.nu) == (5, 3)
    op = O.assemble_form(bent_strip, g)
    A, M = _hand_assembled(bent_strip, g)
    assert np.abs(op.A.toarray() - A).max() < 1e-12
    assert np.abs(op.M - M).max() < 1e-15


def test_frame_range_checked():
    prof = P.helix_profile(0.2, 0.2)
    tube = TB.tube_from_profile(prof, S.make_disk(0.5), (-1, 1))
    with pytest.raises(RangeError):
        O.assemble_form(tube, O.make_grid(tube.section, 2.0, 0.25))


def test_straight_box_limit():
    tube = _strip(P.straight(2), span=2.0)
    vals = [SP.solve_tube(tube, 2.0, h, k=1)[0].eigenvalues[0] for h in (1 / 16, 1 / 32)]
    est, _, _ = SP.richardson(np.array(vals)[:, None], [1 / 16, 1 / 32])
    assert est[0] == pytest.approx(np.pi**2 + (np.pi / 4) ** 2, abs=1e-4)
    # the 5-point stencil underestimates box eigenvalues: monotone from below
    assert np.pi**2 < vals[0] < vals[1] < np.pi**2 + (np.pi / 4) ** 2


def test_lowest_eigenvalue_monotone_in_L(bent_strip):
    lam = [SP.solve_tube(bent_strip, L, 1 / 8, k=1)[0].eigenvalues[0] for L in (5.0, 10.0, 20.0)]
    assert lam[0] >= lam[1] >= lam[2]


def test_second_order_convergence(bent_strip):
    study = SP.refinement_study(bent_strip, 6.0, [1 / 4, 1 / 8, 1 / 16], k=1)
    assert 1.7 <= study.observed_order[0] <= 2.3


# --- effective potential ---------------------------------------------------------

def test_potential_vanishes_for_straight(straight_strip):
    V = O.effective_potential(straight_strip)
    assert np.all(V(np.linspace(-3, 3, 7)[:, None], np.linspace(-0.4, 0.4, 5)[None, :, None]) == 0)


def test_potential_constant_curvature_centreline():
    k = 0.8
    tube = _strip(P.make_profile(2, [P.constant(k)]), span=5.0)
    V = O.effective_potential(tube)
    assert V(np.array(1.3), np.array([0.0])) == pytest.approx(-k * k / 4, abs=1e-15)


def _fd_potential(hfun, kap, s, u, step=1e-5):
    h0 = hfun(s)
    h1 = (hfun(s + step) - hfun(s - step)) / (2 * step)
    h11 = (hfun(s + step) - 2 * h0 + hfun(s - step)) / step**2
    return -0.25 * kap(s) ** 2 / h0**2 + 0.5 * h11 / h0**3 - 1.25 * h1**2 / h0**4


def test_potential_gaussian_against_finite_differences():
    tube = _strip(P.profile_from_closures(2, [lambda s: np.exp(-s**2)],
                                          derivatives=[(lambda s: -2 * s * np.exp(-s**2),
                                                        lambda s: (4 * s**2 - 2) * np.exp(-s**2))]),
                  a=0.5, span=5.0)
    V = O.effective_potential(tube)
    u = np.array([0.2])
    kap = lambda s: np.exp(-s**2)
    for s in (0.0, 0.7):
        ref = _fd_potential(lambda x: 1.0 - kap(x) * 0.2, kap, s, u)
        assert V(np.array(s), u) == pytest.approx(ref, abs=1e-6)


def test_potential_gaussian_high_precision_oracle():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    tube = _strip(P.make_profile(2, [P.gaussian(0.8, 1.0)]), span=5.0)
    V = O.effective_potential(tube)
    for s, u in [(0.3, 0.25), (-1.1, -0.4)]:
        h = lambda x: 1 - 0.8 * mp.exp(-x**2) * u
        h0, h1, h11 = h(s), mp.diff(h, s, 1), mp.diff(h, s, 2)
        k = 0.8 * mp.exp(-mp.mpf(s) ** 2)
        ref = -k**2 / (4 * h0**2) + h11 / (2 * h0**3) - 5 * h1**2 / (4 * h0**4)
        assert V(np.array(s), np.array([u])) == pytest.approx(float(ref), abs=1e-12)


def test_potential_three_dimensional_against_finite_differences():
    prof = P.make_profile(3, [P.gaussian(0.6, 1.0), P.constant(0.3)])
    tube = TB.tube_from_profile(prof, S.make_disk(0.5), (-4, 4), step=0.002)
    pot = O.effective_potential(tube)
    u = np.array([0.2, -0.15])
    for s in (-0.8, 0.4):
        h, h1, h11 = pot.h_derivatives(np.array(s), u)
        eps = 1e-4
        f = lambda x: float(tube.h(np.array(x), u))
        assert h1 == pytest.approx((f(s + eps) - f(s - eps)) / (2 * eps), abs=1e-7)
        assert h11 == pytest.approx((f(s + eps) - 2 * f(s) + f(s - eps)) / eps**2, abs=1e-5)


def test_potential_needs_derivatives():
    tube = _strip(P.profile_from_closures(2, [lambda s: 0.3 * np.exp(-s**2)]), span=3.0)
    with pytest.raises(SmoothnessError):
        O.effective_potential(tube)


# --- Schroedinger assembly -----------------------------------------------------------

def test_schroedinger_equals_form_for_straight(straight_strip):
    g = O.make_grid(straight_strip.section, 3.0, 1 / 8)
    f = O.assemble_form(straight_strip, g)
    s = O.assemble_schroedinger(straight_strip, g)
    assert abs(f.A - s.A).max() == 0.0
    assert np.array_equal(f.M, s.M)


def test_schroedinger_diagonal_carries_potential():
    k = 0.6
    curved = _strip(P.make_profile(2, [P.constant(k)]), span=5.0)
    flat = _strip(P.straight(2), span=5.0)
    g = O.make_grid(curved.section, 2.0, 1 / 8)
    centre = int(np.argmin(np.abs(g.transverse.nodes[:, 0])))
    assert g.transverse.nodes[centre, 0] == 0.0
    dc = O.assemble_schroedinger(curved, g).A.diagonal().reshape(g.ns, g.nu)
    df = O.assemble_schroedinger(flat, g).A.diagonal().reshape(g.ns, g.nu)
    assert np.allclose(dc[:, centre] - df[:, centre], -g.cell_volume * k * k / 4, rtol=1e-12)


def test_schroedinger_symmetric(bent_strip):
    op = O.assemble_schroedinger(bent_strip, O.make_grid(bent_strip.section, 4.0, 1 / 8))
    assert abs(op.A - op.A.T).max() == 0.0


def test_plus_sign_variant_is_unbounded_below(straight_strip):
    g = O.make_grid(straight_strip.section, 2.0, 1 / 8)
    op = O.assemble_schroedinger(straight_strip, g, transverse_sign=+1.0)
    assert np.linalg.eigvalsh(op.A.toarray())[0] < 0


def test_matrix_market_round_trip(tmp_path, bent_strip):
    op = O.assemble_form(bent_strip, O.make_grid(bent_strip.section, 2.0, 1 / 4))
    fa, fm = op.write_matrix_market(str(tmp_path / "op"))
    A = scipy.io.mmread(fa).tocsr()
    M = scipy.io.mmread(fm).tocsr()
    assert abs(A - op.A).max() <= 1e-15 * abs(op.A).max()
    assert np.allclose(M.diagonal(), op.M, rtol=1e-15)
