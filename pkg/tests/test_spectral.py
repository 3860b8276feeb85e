import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral_cmc.jacobian import JacLattice
from spectral_cmc.spectral import (CheckpointError, InfeasibleError, SolverConfig, SpectralDomainError,
                                   closing_residuals, delaunay_coefficients, delaunay_data,
                                   delaunay_periods_by_quadrature, from_dict, homogeneous_data, lawson_direction,
                                   load, save, scan_spin_points, solve_tau_spec, to_dict, whitham_step)


def test_clifford_values():
    d = homogeneous_data(1j)
    assert d.diagnostics["R"] == pytest.approx(np.sqrt(2), abs=1e-15)
    assert abs(d.sym1 - (1 + 1j) / np.sqrt(2)) < 1e-15
    assert abs(d.sym2 - (1 - 1j) / np.sqrt(2)) < 1e-15


@pytest.mark.parametrize("s", [1.0, 1.5, 3.0])
def test_homogeneous_closed_form(s):
    d = homogeneous_data(1j * s)
    assert 2 ** 0.5 <= d.diagnostics["R"]
    xi = np.exp(1j * np.linspace(0.1, 6, 40))
    chi, alpha = d.evaluate(xi)
    # on the unit circle alpha is the zero-weight unitarizable lift
    np.testing.assert_allclose(alpha, np.conj(chi), atol=1e-14)
    assert np.max(np.abs(closing_residuals(d)["vector"])) < 1e-12


def test_homogeneous_domain():
    with pytest.raises(SpectralDomainError):
        homogeneous_data(0.5 + 1j)
    with pytest.raises(SpectralDomainError):
        homogeneous_data(0.5j)


@pytest.mark.parametrize("sp", [0.4, 0.8, 1.3, 2.5])
def test_delaunay_periods_quadrature(sp):
    a, b = delaunay_coefficients(1j * sp)
    assert a != 0
    pa, pb = delaunay_periods_by_quadrature(1j * sp, a, b)
    assert abs(pa) < 1e-8 and abs(pb - 2) < 1e-8


def test_delaunay_sym_point():
    s = 2.0
    sp = solve_tau_spec(2j)
    d = delaunay_data(2j)
    assert d.curve.tau_spec.imag == pytest.approx(sp, abs=1e-14)
    assert d.diagnostics["sym_residual"] < 1e-10
    chi, _ = d.evaluate(np.array([d.sym1]))
    assert abs(chi[0] - JacLattice.for_torus(1j * s).g1 / 2) < 1e-10
    assert abs(abs(d.lam(np.array([d.sym1]))[0]) - 1) < 1e-12
    assert np.max(np.abs(closing_residuals(d)["vector"])) < 1e-10


def test_delaunay_needs_long_torus():
    with pytest.raises(InfeasibleError):
        solve_tau_spec(1.5j)


def test_delaunay_initial_spin_point():
    # at t = 0 the only interior hit is the branch point xi = 1/2, and it is semistable
    hits = scan_spin_points(delaunay_data(2j))
    assert len(hits) == 1
    assert abs(hits[0].xi - 0.5) < 1e-10
    assert hits[0].stability == "semistable"


def test_checkpoint_round_trip(tmp_path):
    for d in (homogeneous_data(1.2j, q=0.5), delaunay_data(2j, mu_sign=-1)):
        p = tmp_path / "state.json"
        save(d, p)
        e = load(p)
        assert to_dict(e) == to_dict(d)
        np.testing.assert_array_equal(e.chi_coeffs, d.chi_coeffs)
        assert e.sym1 == d.sym1 and e.curve == d.curve
    save([homogeneous_data(1j), homogeneous_data(1.1j)], tmp_path / "traj.json")
    assert len(load(tmp_path / "traj.json")) == 2


@pytest.mark.parametrize("field,value", [
    ("schema", 99), ("mu_sign", 0), ("mu_sign", True), ("tau", [1.0]), ("chi_coeffs", []),
    ("t", "0"), ("curve", {"kind": "G2"}),
])
def test_checkpoint_validation(field, value):
    obj = to_dict(homogeneous_data(1j))
    obj[field] = value
    with pytest.raises(CheckpointError) as exc:
        from_dict(obj)
    assert exc.value.field == field


def test_trajectory_error_names_record(tmp_path):
    recs = [to_dict(homogeneous_data(1j)), to_dict(homogeneous_data(1j))]
    recs[1]["sym1"] = None
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"schema": recs[0]["schema"], "trajectory": recs}))
    with pytest.raises(CheckpointError) as exc:
        load(p)
    assert exc.value.field == "trajectory[1].sym1"


def test_zero_step_is_fixed_point():
    d = homogeneous_data(1j)
    assert whitham_step(d, 0.0) is d


def test_small_clifford_step():
    d = whitham_step(homogeneous_data(1j, q=1.0), 0.002, SolverConfig())
    assert d.t == pytest.approx(0.002)
    assert d.diagnostics["residual"] < 1e-8
    assert d.diagnostics["sym_lambda_defect"] < 1e-8
    assert np.max(np.abs(closing_residuals(d)["vector"])) < 1e-8


def test_lawson_direction():
    assert lawson_direction(2, 2) == 1
    assert lawson_direction(2, 1) == 0
    assert lawson_direction(3, 2) == Fraction(1 * 8, 6 * 2)
    with pytest.raises(ValueError):
        lawson_direction(1, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 12))
def test_lawson_direction_ratio(k, l):
    # q is the ratio rho1 / rho0 of the Lawson weights
    rho0 = Fraction(k - 1, 2 * k + 2)
    rho1 = Fraction(l - 1, 2 * l + 2)
    assert lawson_direction(k, l) == rho1 / rho0
