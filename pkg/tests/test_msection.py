import numpy as np
import pytest

from spectral_cmc.abelianization import AbelianizedConnection, Torus, Weights
from spectral_cmc.jacobian import JacLattice
from spectral_cmc.monodromy import monodromy_rep
from spectral_cmc.msection import (MSQuery, alpha_u_derivatives, alpha_u_weight_derivative, solve_alpha_u,
                                   solve_alpha_u_batch, verify_functional_equations)

TAU = 1.3j
W = Weights(0.05, 0.02)


def _chis(n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.4, 0.4, n) + 1j * rng.uniform(-0.4, 0.4, n)


def test_zero_weights_closed_form_from_offset_start():
    chi = _chis(6, 0)
    sol = solve_alpha_u_batch(Weights(0, 0), chi, TAU, guess=np.conj(chi) + 0.05 - 0.03j)
    np.testing.assert_allclose(sol.alpha, np.conj(chi), atol=1e-8)


def test_zero_weights_oracle_monodromy_unitary():
    # d + a dw - chi dwbar is unitary along every lattice loop iff a = conj(chi)
    chi = 0.21 - 0.17j
    for a, unitary in ((np.conj(chi), True), (np.conj(chi) + 0.1, False)):
        rep = monodromy_rep(AbelianizedConnection(Torus(TAU), Weights(0, 0), chi, a))
        moduli = [np.abs(np.diag(rep.generators[k])) for k in ("A", "B")]
        assert np.allclose(moduli, 1, atol=1e-10) is unitary


def test_single_query_and_validation():
    chi = 0.17 + 0.09j
    a = solve_alpha_u(MSQuery(W, chi, TAU))
    b = solve_alpha_u_batch(W, [chi], TAU).alpha[0]
    assert abs(a - b) < 1e-12
    with pytest.raises(ValueError):
        MSQuery(W, JacLattice.for_torus(TAU).g1 / 2, TAU)


def test_symmetries():
    chi = _chis(3, 1)
    pts = np.concatenate([chi, -chi, np.conj(chi)])
    a = solve_alpha_u_batch(W, pts, TAU).alpha
    np.testing.assert_allclose(a[3:6], -a[:3], atol=1e-7)
    np.testing.assert_allclose(a[6:], np.conj(a[:3]), atol=1e-7)


@pytest.mark.parametrize("weights", [Weights(0, 0), Weights(0.05, 0.02)])
def test_functional_equations(weights):
    r = verify_functional_equations(weights, 0.13 - 0.21j, TAU)
    assert r.ok
    if weights.rho0 == 0:
        assert abs(r.shift_a - r.expected_a) < 1e-12 and r.odd_error < 1e-12


def test_full_lattice_translation():
    jac = JacLattice.for_torus(TAU)
    chi = 0.11 + 0.07j
    gamma = 2 * (jac.g1 - jac.g2)
    a = solve_alpha_u_batch(W, [chi, chi + gamma], TAU, guess=np.conj([chi, chi + gamma])).alpha
    assert abs(a[1] - np.conj(gamma) - a[0]) < 1e-7


def test_ift_derivative_matches_finite_differences():
    chi = np.array([0.15 + 0.1j])
    sol = solve_alpha_u_batch(W, chi, TAU)
    D = alpha_u_derivatives(W, chi, sol.alpha, TAU)[0]
    h = 1e-5
    for j, dz in enumerate((h, 1j * h)):
        ap = solve_alpha_u_batch(W, chi + dz, TAU, guess=sol.alpha).alpha[0]
        am = solve_alpha_u_batch(W, chi - dz, TAU, guess=sol.alpha).alpha[0]
        fd = (ap - am) / (2 * h)
        np.testing.assert_allclose(D[:, j], [fd.real, fd.imag], atol=1e-6)


def test_zero_weights_derivative_is_conjugation():
    chi = np.array([0.2 - 0.1j])
    D = alpha_u_derivatives(Weights(0, 0), chi, np.conj(chi), TAU)[0]
    np.testing.assert_allclose(D, np.diag([1.0, -1.0]), atol=1e-8)


def test_weight_derivative():
    chi = np.array([0.15 + 0.1j])
    a0 = solve_alpha_u_batch(W, chi, TAU).alpha
    d = alpha_u_weight_derivative(W, chi, a0, TAU, direction=(1.0, 0.5))[0]
    h = 1e-4
    ap = solve_alpha_u_batch(Weights(W.rho0 + h, W.rho1 + h / 2), chi, TAU, guess=a0).alpha[0]
    am = solve_alpha_u_batch(Weights(W.rho0 - h, W.rho1 - h / 2), chi, TAU, guess=a0).alpha[0]
    assert abs(d - (ap - am) / (2 * h)) < 1e-5
