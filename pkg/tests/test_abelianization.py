import numpy as np
import pytest

from spectral_cmc.abelianization import (AbelianizedConnection, PunctureError, SpinDegeneracyError, Torus,
                                         Weights, build_beta, check_spin_expansion, connection_form,
                                         contour_residue, infer_mu, mu_gamma, stability_of)
from spectral_cmc.abelianization import _coeff_functions
from spectral_cmc.jacobian import HalfLatticeClass

TORUS = Torus(1.3j)
W = Weights(0.1, 0.2)


def _conn(weights=W, chi=0.3 + 0.2j, alpha=0.1 - 0.05j, torus=TORUS):
    return AbelianizedConnection(torus, weights, chi, alpha)


def _interior(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 2, n) + 1j * rng.uniform(0, 1.3, n)
    return w[TORUS.nearest_puncture_distance(w) > 0.05]


def test_weights_domain():
    with pytest.raises(ValueError):
        Weights(0.5, 0.0)
    assert Weights(0.1, -0.2).rhohat == pytest.approx((0.3, 0.15))


def test_zero_weights_diagonal():
    bp, bm = build_beta(0.3 + 0.2j, Weights(0, 0), TORUS)
    assert not np.any(bp) and not np.any(bm)
    w = _interior(20, 0)
    Aw, Awbar = connection_form(_conn(Weights(0, 0)), w)
    assert not np.any(Aw[..., 0, 1]) and not np.any(Aw[..., 1, 0])
    np.testing.assert_array_equal(Aw[..., 0, 0], 0.1 - 0.05j)
    np.testing.assert_array_equal(Awbar, np.diag([-(0.3 + 0.2j), 0.3 + 0.2j]))


def test_traceless():
    w = _interior(50, 1)
    Aw, Awbar = connection_form(_conn(), w)
    assert np.max(np.abs(np.trace(Aw, axis1=-2, axis2=-1))) < 1e-15
    assert abs(np.trace(Awbar)) < 1e-15


@pytest.mark.parametrize("i", range(4))
def test_residues(i):
    R = contour_residue(_conn(), TORUS.punctures[i], radius=0.05, npts=128)
    rho = W.per_puncture()[i]
    np.testing.assert_allclose(R, [[0, rho], [rho, 0]], atol=1e-8)


def test_coefficients_doubly_periodic():
    conn = _conn()
    w = _interior(10, 2)
    bm, bp = _coeff_functions(conn, w)
    for gamma in (1 + TORUS.tau, 1 - TORUS.tau):
        bm2, bp2 = _coeff_functions(conn, w + gamma)
        np.testing.assert_allclose(bm2, bm, rtol=1e-9)
        np.testing.assert_allclose(bp2, bp, rtol=1e-9)


def test_dual_swaps_off_diagonals():
    # (-chi, -alpha) gives the form conjugated by the constant swap matrix
    w = _interior(10, 3)
    A, Ab = connection_form(_conn(), w)
    B, Bb = connection_form(_conn(chi=-(0.3 + 0.2j), alpha=-(0.1 - 0.05j)), w)
    P = np.array([[0, 1], [1, 0]])
    np.testing.assert_allclose(B, P @ A @ P, atol=1e-10)
    np.testing.assert_allclose(Bb, P @ Ab @ P, atol=1e-15)


def test_spin_degeneracy():
    with pytest.raises(SpinDegeneracyError):
        build_beta(TORUS.jac.g1 / 2, W, TORUS)


def test_puncture_proximity():
    with pytest.raises(PunctureError):
        connection_form(_conn(), np.array([1e-4]), clearance=1e-3)


def test_mu_gamma_examples():
    assert mu_gamma(HalfLatticeClass.ZERO, Weights(0.1, 0.2), 1) == pytest.approx(0.3)
    assert mu_gamma(HalfLatticeClass.ZERO, Weights(0.1, 0.2), -1) == pytest.approx(-0.3)
    for s in (1, -1):
        assert mu_gamma(HalfLatticeClass.SYM_A, W, s) == 0
        assert mu_gamma(HalfLatticeClass.SYM_B, W, s) == 0
        assert mu_gamma(HalfLatticeClass.CENTER, Weights(0.15, 0.15), s) == 0
    with pytest.raises(ValueError):
        mu_gamma(HalfLatticeClass.NOT_HALF, W)
    with pytest.raises(ValueError):
        mu_gamma(HalfLatticeClass.ZERO, W, 0)
    assert [stability_of(m) for m in (0.1, 0.0, -0.1)] == ["stable", "semistable", "unstable"]


def test_spin_expansion_reports():
    jac = TORUS.jac
    g = jac.g1 / 2
    r = check_spin_expansion(0.0, np.conj(g), g, jac, W)
    assert (r.residue_ok, r.constant_ok, r.stability) == (True, True, "semistable")
    res = jac.spin_scale * 0.3
    r = check_spin_expansion(res, 0.0, 0.0, jac, W)
    assert (r.residue_ok, r.constant_ok, r.stability) == (True, True, "stable")
    assert infer_mu(res, jac) == pytest.approx(0.3)
    r = check_spin_expansion(0.0, np.conj(g) + 0.01, g, jac, W)
    assert r.residue_ok and not r.constant_ok
