"""Acceptance criteria, one test per criterion.

Each test prints a single line `ACCEPTANCE <n> PASS|FAIL <summary> (<seconds>)`
to the terminal, then asserts the criterion and its runtime budget.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from spectral_cmc.abelianization import AbelianizedConnection, Torus, Weights
from spectral_cmc.elliptic import Lattice, eisenstein_invariants, elliptic_context, theta1
from spectral_cmc.jacobian import JacLattice, half_lattice_distance
from spectral_cmc.monodromy import monodromy_rep, unitarizability_defect
from spectral_cmc.msection import MSQuery, solve_alpha_u, verify_functional_equations
from spectral_cmc.reconstruct import (branching_data, build_surface, discrete_mean_curvature_s3, lawson_weights,
                                      path_independence_defect, verify_trivial_pullback)
from spectral_cmc.spectral import (SolverConfig, delaunay_coefficients, delaunay_data,
                                   delaunay_periods_by_quadrature, flow, homogeneous_data, refinement_certificate,
                                   solve_tau_spec, whitham_step)


def _report(capsys, n, ok, summary, seconds, budget):
    ok = bool(ok) and seconds < budget
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {summary} ({seconds:.1f}s, budget {budget:.0f}s)")
    assert ok, summary


def test_1_elliptic_core(capsys):
    t0 = time.perf_counter()
    worst_ode = worst_leg = worst_theta = 0.0
    for lat in (Lattice(1.0, 1j), Lattice(1 - 1.3j, 1 + 1.3j), Lattice(1.0, 0.3 + 0.8j)):
        ctx = elliptic_context(lat)
        g2, g3 = eisenstein_invariants(lat, rows=400)
        u = (np.arange(20) + 0.5) / 20
        xi = (u[:, None] * lat.gamma1 + u[None, :] * lat.gamma2).ravel()
        p = ctx.wp(xi)
        # scaled by (1 + |p|)^3 so points near the pole are judged relative to the size of the terms
        ode = np.abs(ctx.wp_prime(xi) ** 2 - (4 * p**3 - g2 * p - g3)) / (1 + np.abs(p)) ** 3
        worst_ode = max(worst_ode, float(ode.max()))
        worst_leg = max(worst_leg, ctx.legendre_defect())
    rng = np.random.default_rng(1)
    for tm in (1j, 0.2 + 0.9j, 1.5j):
        z = rng.uniform(-0.5, 0.5, 100) + 1j * rng.uniform(-0.5, 0.5, 100) * tm.imag
        lhs = theta1(z + tm, tm)
        rhs = -np.exp(-1j * np.pi * tm - 2j * np.pi * z) * theta1(z, tm)
        worst_theta = max(worst_theta, float(np.max(np.abs(lhs - rhs) / np.maximum(1, np.abs(lhs)))))
    dt = time.perf_counter() - t0
    ok = worst_ode < 1e-9 and worst_leg < 1e-10 and worst_theta < 1e-10
    _report(capsys, 1, ok, f"ode {worst_ode:.1e} legendre {worst_leg:.1e} theta {worst_theta:.1e}", dt, 5)


def test_2_delaunay_periods(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for s in np.linspace(1.8, 4.5, 10):
        sp = solve_tau_spec(1j * s)
        a, b = delaunay_coefficients(1j * sp)
        pa, pb = delaunay_periods_by_quadrature(1j * sp, a, b)
        worst = max(worst, abs(pa), abs(pb - 2))
    dt = time.perf_counter() - t0
    _report(capsys, 2, worst < 1e-8, f"period error {worst:.1e} over 10 pairs", dt, 10)


def test_3_ms_section_at_zero_weight(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    tau = 1.3j
    jac = JacLattice.for_torus(tau)
    worst = 0.0
    count = 0
    while count < 20:
        chi = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if half_lattice_distance(chi, jac) < 0.05:
            continue
        # start away from the answer so the solver has to find it
        a = solve_alpha_u(MSQuery(Weights(0, 0), chi, tau, guess=np.conj(chi) + 0.05 - 0.03j))
        worst = max(worst, abs(a - np.conj(chi)))
        count += 1
    dt = time.perf_counter() - t0
    _report(capsys, 3, worst < 1e-8, f"max |alpha - conj chi| {worst:.1e} at 20 chi", dt, 30)


def test_4_ms_symmetries_and_functional_equations(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    tau = 1.3j
    jac = JacLattice.for_torus(tau)
    worst = 0.0
    count = 0
    weights = [Weights(0.2, 0.1), Weights(0.1, 0.05)]
    while count < 10:
        chi = complex(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6))
        if half_lattice_distance(chi, jac) < 0.1:
            continue
        r = verify_functional_equations(weights[count % 2], chi, tau)
        errs = [abs(r.shift_a - r.expected_a), abs(r.shift_b - r.expected_b), r.odd_error, r.real_error]
        worst = max(worst, *errs)
        count += 1
    dt = time.perf_counter() - t0
    _report(capsys, 4, worst < 1e-6, f"max symmetry / lattice-law error {worst:.1e} at 10 chi", dt, 300)


def test_5_monodromy(capsys):
    t0 = time.perf_counter()
    w = Weights(0.17, -0.11)
    rep = monodromy_rep(AbelianizedConnection(Torus(1.3j), w, 0.21 + 0.13j, 0.3 - 0.2j))
    eig = 0.0
    for i, rho in enumerate(w.per_puncture()):
        args = np.sort(np.angle(np.linalg.eigvals(rep.generators[f"g{i}"])))
        eig = max(eig, float(np.max(np.abs(args - [-2 * np.pi * abs(rho), 2 * np.pi * abs(rho)]))))
    rel = rep.relation_defect()
    rng = np.random.default_rng(5)
    su2 = []
    for _ in range(6):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        n = np.hypot(abs(a), abs(b))
        su2.append(np.array([[a, -np.conj(b)], [b, np.conj(a)]]) / n)
    d_su2 = unitarizability_defect(su2)
    d_bad = unitarizability_defect([np.diag([2.0, 0.5])])
    dt = time.perf_counter() - t0
    ok = eig < 1e-6 and rel < 1e-7 and d_su2 < 1e-12 and d_bad > 0.1
    _report(capsys, 5, ok, f"eig {eig:.1e} relation {rel:.1e} su2 {d_su2:.1e} diag(2,1/2) {d_bad:.2f}", dt, 60)


def test_6_trivial_pullback(capsys):
    t0 = time.perf_counter()
    m = 0.3 + 0.4j
    fails = [(n0, n1, k, l) for k, l in ((2, 1), (2, 2), (3, 2)) for n0 in range(-2, 3) for n1 in range(-2, 3)
             if not verify_trivial_pullback(n0, n1, k, l, m, tol=1e-6)]
    dt = time.perf_counter() - t0
    _report(capsys, 6, not fails, f"{75 - len(fails)}/75 trivial pullbacks", dt, 120)


@pytest.mark.slow
def test_7_clifford_flow(capsys):
    t0 = time.perf_counter()
    cfg = SolverConfig()
    worst_res = worst_sym = worst_cert = 0.0
    steps = []
    for q in (0.0, 1.0):
        tr = flow(homogeneous_data(1j), q, 0.02, cfg, dt=0.005)
        steps.append(len(tr.log))
        worst_res = max(worst_res, *(e["residual"] for e in tr.log))
        for s in tr.states:
            lam = np.abs(s.lam(np.array([s.sym1, s.sym2])))
            worst_sym = max(worst_sym, float(np.max(np.abs(lam - 1))))
        cert = refinement_certificate(tr.states[-1], cfg)
        worst_cert = max(worst_cert, cert["max_change"])
    dt = time.perf_counter() - t0
    ok = worst_res < 1e-8 and worst_sym < 1e-8 and worst_cert < 1e-7 and min(steps) >= 4
    _report(capsys, 7, ok, f"steps {steps} residual {worst_res:.1e} |lambda|-1 {worst_sym:.1e} "
            f"refinement {worst_cert:.1e}", dt, 900)


def test_8_branching(capsys):
    t0 = time.perf_counter()
    ok = True
    for k in range(1, 7):
        for l in range(1, 7):
            b = branching_data(*lawson_weights(k, l))
            ok &= (b.k, b.l, b.genus) == (k, l, k * l) and b.immersed
    b = branching_data(Fraction(1, 8), Fraction(0))
    ok &= (b.k, b.r0) == (7, 5)
    dt = time.perf_counter() - t0
    _report(capsys, 8, ok, "36 Lawson weight pairs and rho0 = 1/8", dt, 1)


def test_9_reconstruction(capsys):
    t0 = time.perf_counter()
    d = homogeneous_data(1j)
    patch = build_surface(d, grid_res=64)
    norm = patch.norm_defect
    path = path_independence_defect(d, grid_res=64)
    hd = discrete_mean_curvature_s3(patch)["max"]
    dt = time.perf_counter() - t0
    ok = norm < 1e-8 and path < 1e-7 and hd < 0.05
    _report(capsys, 9, ok, f"norm {norm:.1e} path {path:.1e} discrete |H| {hd:.1e}", dt, 300)


@pytest.mark.slow
def test_10_delaunay_branches(capsys):
    t0 = time.perf_counter()
    out = {}
    for sign in (1, -1):
        d = whitham_step(delaunay_data(2j, q=0.0, mu_sign=sign), 0.005, SolverConfig())
        inside = [h for h in d.diagnostics["spin_hits"] if abs(h["lambda"]) < 1]
        out[sign] = (d.diagnostics["residual"], [h["stability"] for h in inside])
    dt = time.perf_counter() - t0
    res = max(out[1][0], out[-1][0])
    stable_ok = len(out[1][1]) > 0 and all(s == "stable" for s in out[1][1])
    unstable_ok = out[-1][1].count("unstable") == 1
    ok = res < 1e-7 and stable_ok and unstable_ok
    _report(capsys, 10, ok, f"residual {res:.1e} mu_sign=+1 {out[1][1]} mu_sign=-1 {out[-1][1]}", dt, 1200)
