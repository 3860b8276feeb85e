import logging
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral_cmc.abelianization import Weights
from spectral_cmc.reconstruct import (DomainError, ReconstructionError, SurfacePatch, branching_data,
                                      build_surface, choose_pole, cut_distance, discrete_mean_curvature_s3,
                                      export_mesh, lawson_weights, mean_curvature, mesh_arrays,
                                      path_independence_defect, pullback_defect, read_obj, sym_split,
                                      verify_trivial_pullback)
from spectral_cmc.spectral import delaunay_data, homogeneous_data, whitham_step


# -- branching ---------------------------------------------------------------------


def test_branching_examples():
    b = branching_data(Fraction(1, 6), Fraction(1, 6))
    assert (b.k, b.l, b.r0, b.r1) == (2, 2, 2, 2)
    assert b.genus == 4 and b.immersed
    assert b.Q == {"count": 6, "branch_order": 0, "umbilic_order": 1}
    b = branching_data(Fraction(1, 8), 0)
    assert (b.k, b.r0) == (7, 5)
    assert b.Q["branch_order"] == 2 and b.Q["umbilic_order"] == 4
    assert (b.l, b.r1) == (1, 1)
    assert b.P["branch_order"] == 0 and b.P["umbilic_order"] == 0
    assert branching_data("1/6", "1/6") == branching_data(Fraction(1, 6), Fraction(1, 6))


@pytest.mark.parametrize("bad", [0.1, True, Fraction(1, 2), Fraction(-3, 5), "x"])
def test_branching_domain(bad):
    with pytest.raises(DomainError):
        branching_data(bad, 0)


@settings(max_examples=36, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_lawson_weights_are_immersed(k, l):
    b = branching_data(*lawson_weights(k, l))
    assert (b.k, b.l) == (k, l)
    assert b.genus == k * l and b.immersed


# -- sym splitting and pullback ---------------------------------------------------------


def test_sym_split_zero_weights():
    s = sym_split(Weights(0, 0), 0.3 + 0.4j)
    assert dict(s.plus.residues) == {0: 0.25, 1: 0.25, 0.3 + 0.4j: -0.25}
    total = s.plus + s.minus
    assert all(r == 0 for _, r in total.residues)


@pytest.mark.parametrize("w", [Weights(0, 0), Weights(0.1, -0.2)])
def test_sym_split_monodromy(w):
    s = sym_split(w, 0.3 + 0.4j)
    r0 = w.rho0 / 2 + 0.25
    assert s.plus.local_monodromy(0) == pytest.approx(np.exp(-2j * np.pi * r0))
    assert s.minus.local_monodromy(0) == pytest.approx(np.exp(2j * np.pi * r0))
    z = np.array([0.7 - 0.2j, 2 + 1j])
    np.testing.assert_allclose(s.plus(z) + s.minus(z), 0, atol=1e-15)


def test_degenerate_cross_ratio():
    with pytest.raises(DomainError):
        sym_split(Weights(0, 0), 1.0)
    with pytest.raises(DomainError):
        verify_trivial_pullback(1, 0, 1, 1, 0.0)


def test_pullback_examples():
    assert pullback_defect(0, 0, 1, 1, 0.3 + 0.4j) < 1e-12
    assert verify_trivial_pullback(1, 0, 1, 1, 0.3 + 0.4j)


def test_pullback_random():
    rng = np.random.default_rng(11)
    for _ in range(4):
        n0, n1 = rng.integers(-2, 3, 2)
        for k, l in ((2, 1), (2, 2)):
            assert verify_trivial_pullback(int(n0), int(n1), k, l, 0.3 + 0.4j, tol=1e-6)


def test_pullback_other_coverings():
    # the lifted loops close for every covering degree
    assert pullback_defect(1, 0, 1, 2, 0.3 + 0.4j) < 1e-8
    assert pullback_defect(1, 1, 2, 1, 0.3 + 0.4j) < 1e-8
    assert pullback_defect(1, 0, 2, 2, 0.3 + 0.4j) < 1e-8
    # an index that is not a multiple of 1/(l+1) leaves monodromy around 0
    from spectral_cmc.reconstruct import diagonal_form
    assert abs(diagonal_form(0.3, 0.0, 0.5j).local_monodromy(0) - 1) > 0.1


# -- surface ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def clifford_patch():
    return build_surface(homogeneous_data(1j), grid_res=24)


def test_clifford_surface(clifford_patch):
    p = clifford_patch
    assert p.norm_defect < 1e-8
    assert abs(p.H) < 1e-12
    assert discrete_mean_curvature_s3(p)["max"] < 0.05
    assert path_independence_defect(homogeneous_data(1j), grid_res=12) < 1e-7


@pytest.mark.parametrize("s", [1.5, 2.0])
def test_product_torus_mean_curvature(s):
    # S^1(r1) x S^1(r2) with r2 / r1 = s has |H| = (s^2 - 1) / (2 s)
    d = homogeneous_data(1j * s)
    p = build_surface(d, grid_res=24)
    expected = (s * s - 1) / (2 * s)
    assert abs(abs(p.H) - expected) < 1e-12
    disc = discrete_mean_curvature_s3(p)
    assert abs(disc["mean"] - expected) < 0.05 * expected


def test_mean_curvature_formula():
    assert mean_curvature(1j, -1j) == pytest.approx(0.0, abs=1e-15)
    assert mean_curvature(np.exp(0.3j), np.exp(-0.3j)) == pytest.approx(1 / np.tan(0.3))


def test_grid_avoids_cuts(clifford_patch):
    assert np.min(cut_distance(clifford_patch.points, 1j)) >= clifford_patch.margin
    assert not clifford_patch.cells.all()


def test_reconstruction_scope():
    with pytest.raises(ReconstructionError):
        build_surface(delaunay_data(2j))
    d = whitham_step(homogeneous_data(1j), 0.0)
    build_surface(d, grid_res=4)
    with pytest.raises(ReconstructionError):
        build_surface(d.with_(t=0.01))


def _toy_patch(n, quaternions):
    pts = np.arange(n)[None, :] + 1j * np.arange(n)[:, None]
    return SurfacePatch(1j, pts.astype(complex), quaternions, np.ones((n - 1, n - 1), bool), (1j, -1j), 0.0, 0.0)


def test_two_by_two_mesh():
    q = np.zeros((2, 2, 4))
    q[..., 1] = 1.0
    q[0, 1] = [0, 0, 1, 0]
    V, T, _ = mesh_arrays(_toy_patch(2, q))
    assert V.shape == (4, 3) and T.shape == (2, 3)


def test_pole_reselection(caplog):
    q = np.zeros((2, 2, 4))
    q[..., 0] = 1.0
    with caplog.at_level(logging.WARNING):
        p = choose_pole(q, pole=[1, 0, 0, 0])
    assert "selecting another" in caplog.text
    assert np.min(np.linalg.norm(q.reshape(-1, 4) - p, axis=1)) > 1.0


def test_obj_round_trip(tmp_path, clifford_patch):
    path = tmp_path / "clifford.obj"
    meta = export_mesh(clifford_patch, path)
    V, T = read_obj(path)
    V0, T0, _ = mesh_arrays(clifford_patch, meta["pole"])
    np.testing.assert_array_equal(V, V0)
    np.testing.assert_array_equal(T, T0)
    assert (tmp_path / "clifford.mesh.json").exists()
    assert meta["vertices"] == 24 * 24
    assert meta["weights"] == [0.0, 0.0] and meta["t"] == 0.0
