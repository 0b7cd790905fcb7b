import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from curvedtube import curve as C
from curvedtube import profiles as P
from curvedtube import tang as T
from curvedtube.errors import PreconditionError, RangeError


def _rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _invariants(R):
    det = np.abs(np.linalg.det(R) - 1).max()
    orth = np.abs(np.einsum("kij,klj->kil", R, R) - np.eye(R.shape[-1])).max()
    return det, orth


def test_d2_rotation_is_one():
    prof = P.make_profile(2, [P.gaussian(0.7)])
    tab = T.solve_frame_ode(prof, (-5, 5))
    assert np.all(T.rotation_at(tab, np.linspace(-5, 5, 9)) == 1.0)
    assert T.rotation_at(tab, 1.234).shape == (1, 1)


def test_constant_torsion_gives_planar_rotation():
    tau, s0 = 0.4, 1.0
    prof = P.helix_profile(0.3, tau)
    tab = T.solve_frame_ode(prof, (-6, 6), s0=s0)
    for k in range(0, tab.s.size, 97):
        assert np.abs(tab.R[k] - _rot2(tau * (tab.s[k] - s0))).max() < 1e-10


def test_midpoint_interpolation_for_constant_torsion():
    tau = 0.4
    tab = T.solve_frame_ode(P.helix_profile(0.3, tau), (-6, 6))
    s = 0.5 * (tab.s[10] + tab.s[11])
    assert np.abs(T.rotation_at(tab, s) - _rot2(tau * s)).max() < 1e-9
    assert np.array_equal(T.rotation_at(tab, tab.s[10]), tab.R[10])


def test_zero_torsion_keeps_initial_matrix():
    prof = P.make_profile(3, [P.bump(0.3, 2.0), P.zero_component()])
    R0 = _rot2(0.7)
    tab = T.solve_frame_ode(prof, (-3, 3), initial=R0)
    assert np.abs(tab.R - R0).max() < 1e-14


def test_initial_must_be_rotation():
    prof = P.helix_profile(0.3, 0.4)
    with pytest.raises(PreconditionError):
        T.solve_frame_ode(prof, (-1, 1), initial=np.diag([1.0, -1.0]))
    with pytest.raises(PreconditionError):
        T.solve_frame_ode(prof, (-1, 1), initial=2 * np.eye(2))


def test_out_of_range_lookup():
    tab = T.solve_frame_ode(P.helix_profile(0.3, 0.4), (-1, 1))
    with pytest.raises(RangeError):
        T.rotation_at(tab, 1.5)


def test_d4_invariants_and_group_property():
    prof = P.profile_from_closures(4, [lambda s: 0.4 + 0.1 * np.cos(s),
                                       lambda s: 0.3 + 0.2 * np.sin(0.5 * s),
                                       lambda s: 0.5 + 0 * s])
    tab = T.solve_frame_ode(prof, (-10, 10))
    det, orth = _invariants(tab.R)
    assert det <= 1e-10 and orth <= 1e-10
    s = np.linspace(-9.9, 9.9, 23)
    Rs = T.rotation_at(tab, s)
    assert _invariants(Rs)[1] <= 1e-10


def test_initial_condition_enters_by_left_multiplication():
    prof = P.profile_from_closures(4, [lambda s: 0.4 + 0 * s, lambda s: 0.3 * np.cos(s),
                                       lambda s: 0.2 + 0 * s])
    Cm = Rotation.from_euler("zyx", [0.4, 1.0, -0.3]).as_matrix()
    a = T.solve_frame_ode(prof, (-4, 4))
    b = T.solve_frame_ode(prof, (-4, 4), initial=Cm)
    assert np.abs(b.R - np.einsum("ij,kjl->kil", Cm, a.R)).max() < 1e-12


def test_rotation_derivative_matches_finite_difference():
    prof = P.profile_from_closures(3, [lambda s: 0.4 + 0 * s, lambda s: 0.3 * np.cos(s)])
    tab = T.solve_frame_ode(prof, (-3, 3), step=0.005)
    s, h = 0.8, 1e-4
    fd = (T.rotation_at(tab, s + h) - T.rotation_at(tab, s - h)) / (2 * h)
    assert np.abs(fd - T.rotation_derivative(tab, prof, s)).max() < 1e-5


def _tang_fd_errors(step):
    """Max deviation of central differences of the Tang vectors from their derivative law."""
    kap, tau = 0.5, 0.5
    hx = C.helix(1.0, 1.0)
    tab = T.solve_frame_ode(P.helix_profile(kap, tau), (-3, 3), step=step)
    errs = []
    for k in range(200, tab.s.size - 200, 97):
        s = tab.s[k]
        Ep = T.tang_vectors(tab, hx, tab.s[k + 1])
        Em = T.tang_vectors(tab, hx, tab.s[k - 1])
        dE = (Ep - Em) / (2 * step)
        F = hx.frame(s)
        R = T.rotation_at(tab, s)
        errs.append(np.abs(dE[0] - kap * F[1]).max())
        for mu in range(2):
            errs.append(np.abs(dE[mu + 1] + kap * R[mu, 0] * F[0]).max())
    return max(errs)


def test_tang_vector_derivatives_second_order():
    e1 = _tang_fd_errors(0.01)
    e2 = _tang_fd_errors(0.005)
    assert e1 < 1e-4
    assert 3.5 < e1 / e2 < 4.5


def test_tang_vectors_for_straight_line_are_frenet():
    ln = C.line(3)
    tab = T.solve_frame_ode(P.straight(3), (-2, 2))
    E = T.tang_vectors(tab, ln, 0.3)
    assert np.allclose(E, C.frenet_frame(ln, 0.3).frame)


def test_tang_vectors_quarter_turn():
    # theta(s) = tau * s = pi/2 at s = pi / (2 tau); with R = [[cos, -sin], [sin, cos]]
    # and e~_mu = R_mu,nu e_nu the transverse pair becomes (-e_3, e_2)
    tau = 0.5
    hx = C.helix(1.0, 1.0)
    tab = T.solve_frame_ode(P.helix_profile(0.5, tau), (-4, 4))
    s = np.pi / (2 * tau)
    E = T.tang_vectors(tab, hx, s)
    F = hx.frame(s)
    assert np.abs(E[0] - F[0]).max() < 1e-10
    assert np.abs(E[1] + F[2]).max() < 1e-9
    assert np.abs(E[2] - F[1]).max() < 1e-9


def test_planar_circle_tang_normal_is_frenet_normal():
    c = C.circle(2.0)
    tab = T.solve_frame_ode(P.make_profile(2, [P.constant(0.5)]), (0, 10))
    for s in [0.0, 1.3, 7.7]:
        assert np.allclose(T.tang_vectors(tab, c, s)[1], c.frame(s)[1])


def test_csv_dump(tmp_path):
    tab = T.solve_frame_ode(P.helix_profile(0.3, 0.4), (-1, 1), step=0.1)
    path = tmp_path / "R.csv"
    tab.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (tab.s.size, 5)
    assert np.array_equal(data[:, 0], tab.s)
    back = data[:, 1:].reshape(-1, 2, 2).transpose(0, 2, 1)   # column-major
    assert np.array_equal(back, tab.R)
    assert open(path).readline().strip() == "s,R22,R32,R23,R33"
