"""Finite-dimensional parametrizations of spectral data.

A model maps a SpectralData record to a real unknown vector and back, evaluates
(chi, alpha) on the spectral curve, places the unit-circle samples for the
unitarity condition, and supplies the remaining closing residuals: the Sym
point conditions and the spin expansion at interior half-lattice hits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ..abelianization import mu_gamma, stability_of
from ..elliptic import Lattice, elliptic_context
from ..jacobian import HalfLatticeClass, JacLattice, classify_half
from .data import InfeasibleError, SpectralCurveG0, SpectralCurveG1, SpectralData, SpectralDomainError

DEFAULT_ORDER = 8


def _check_tau(tau: complex) -> float:
    tau = complex(tau)
    if abs(tau.real) > 1e-14 or tau.imag <= 0:
        raise SpectralDomainError(f"tau = {tau} must be purely imaginary with positive imaginary part")
    return tau.imag


def _half_lattice_nearest(chi, jac: JacLattice):
    """Nearest point of (1/2) Lambda to chi, elementwise."""
    a, b = jac.coordinates(2 * np.asarray(chi, dtype=complex))
    return jac.from_coordinates(np.round(a), np.round(b)) / 2


@dataclass(frozen=True)
class SpinHit:
    xi: complex
    lam: complex
    gamma: complex
    cls: HalfLatticeClass
    mu: float
    stability: str


class G0Model:
    """Odd polynomial chi and odd Laurent alpha on xi^2 = lambda.

    Unknowns: chi_coeffs (c1, c3, ...), alpha_coeffs (a_-1, a1, a3, ...), Re/Im xi1.
    Reality and oddness are built in (real coefficients, odd powers), and
    sym2 = conj(sym1), so the circle residuals reduce to the open quarter
    circle 0 < arg xi < pi/2.
    """

    kind = "G0"

    def pack(self, d: SpectralData) -> np.ndarray:
        return np.concatenate([d.chi_coeffs, d.alpha_coeffs, [d.sym1.real, d.sym1.imag]])

    def unpack(self, d: SpectralData, p: np.ndarray) -> SpectralData:
        nc = d.chi_coeffs.size
        na = d.alpha_coeffs.size
        s1 = complex(p[nc + na], p[nc + na + 1])
        return d.with_(chi_coeffs=np.array(p[:nc]), alpha_coeffs=np.array(p[nc:nc + na]),
                       sym1=s1, sym2=s1.conjugate())

    def evaluate(self, d: SpectralData, xi: np.ndarray):
        xi = np.asarray(xi, dtype=complex)
        x2 = xi * xi
        chi = np.zeros_like(xi)
        alpha = np.zeros_like(xi)
        pw = xi.copy()
        for k, c in enumerate(d.chi_coeffs):
            chi = chi + c * pw
            if k + 1 < d.alpha_coeffs.size:
                alpha = alpha + d.alpha_coeffs[k + 1] * pw
            pw = pw * x2
        return chi, alpha + d.alpha_coeffs[0] / xi

    def derivative_chi(self, d: SpectralData, xi):
        xi = np.asarray(xi, dtype=complex)
        return sum((2 * k + 1) * c * xi ** (2 * k) for k, c in enumerate(d.chi_coeffs))

    def samples(self, d: SpectralData, n: int) -> np.ndarray:
        th = (np.arange(n) + 0.5) * np.pi / (2 * n)
        return np.exp(1j * th)

    def validation(self, d: SpectralData, n: int) -> np.ndarray:
        th = (np.arange(n) + 0.3) * np.pi / (2 * n)
        return np.exp(1j * th)

    def structural(self, d: SpectralData) -> np.ndarray:
        jac = JacLattice.for_torus(d.tau)
        chi1, _ = self.evaluate(d, np.array([d.sym1]))
        r = chi1[0] - jac.g1 / 2
        return np.array([r.real, r.imag, abs(d.sym1) - 1.0])

    def with_order(self, d: SpectralData, order: int) -> SpectralData:
        c = np.zeros(order)
        a = np.zeros(order + 1)
        c[:min(order, d.chi_coeffs.size)] = d.chi_coeffs[:order]
        a[:min(order + 1, d.alpha_coeffs.size)] = d.alpha_coeffs[:order + 1]
        return d.with_(chi_coeffs=c, alpha_coeffs=a)

    def order(self, d: SpectralData) -> int:
        return d.chi_coeffs.size

    def scan_grid(self, d: SpectralData, nr: int = 40, nt: int = 160) -> np.ndarray:
        r = (np.arange(1, nr) / nr)[:, None]
        th = (2 * np.pi * np.arange(nt) / nt)[None, :]
        return r * np.exp(1j * th)

    def is_over_zero(self, d: SpectralData, xi) -> bool:
        return abs(xi) < 1e-6

    def series_tail(self, d: SpectralData) -> float:
        """Ratio of the last to the largest retained coefficient."""
        c = np.abs(np.concatenate([d.chi_coeffs, d.alpha_coeffs]))
        return float(max(abs(d.chi_coeffs[-1]), abs(d.alpha_coeffs[-1])) / c.max())


def _fourier_norm(tau_spec: complex, n: np.ndarray) -> np.ndarray:
    return np.cosh(np.pi * n * complex(tau_spec).imag / 2)


class G1Model:
    """Delaunay-type data on the strip |Im xi| < Im(tau_spec)/4 of Sigma = C / (Z + tau_spec Z).

    With s = Im tau, s' = Im tau_spec, Z(xi) = zeta(xi - tau_spec/2) + eta2/2 and
    T(xi) = (pi/2)(tan(pi(xi - tau_spec/2)) + tan(pi(xi + tau_spec/2))):

        chi   = (pi/2s) [-a Z(xi) + (2 + a eta1) xi + f T(xi) + sum c_n S_n(xi)]
        alpha = (pi/2s) [-a' zeta(xi) + (2 + a' eta1) xi + e pi tan(pi xi) + sum d_n S_n(xi)]

    with S_n(xi) = sin(2 pi n xi) / cosh(pi n s'/2), normalized to unit size on the
    circle line so that the coefficients are comparable.

    chi_coeffs = (a, f, c_1..c_N), alpha_coeffs = (a', e, d_1..d_N).  Both are odd,
    real, and shift by the lattice vector pi/s (and its conjugate) under xi -> xi + 1.
    At t = 0 (f, e, c, d) vanish and a = a' = -s'/pi.  The pole of alpha at the
    interior branch point xi = 1/2 carries the spin expansion; the Sym points are
    xi1 on the line Im xi = s'/4 and xi2 = -conj(xi1).
    Unknowns: s', Re xi1, chi_coeffs, alpha_coeffs.
    """

    kind = "G1"

    def pack(self, d: SpectralData) -> np.ndarray:
        return np.concatenate([[d.curve.tau_spec.imag, d.sym1.real], d.chi_coeffs, d.alpha_coeffs])

    def unpack(self, d: SpectralData, p: np.ndarray) -> SpectralData:
        sp = float(p[0])
        if sp <= 0:
            raise InfeasibleError("spectral modulus left the upper half-plane")
        nc = d.chi_coeffs.size
        curve = SpectralCurveG1.delaunay(1j * sp)
        s1 = complex(p[1], sp / 4)
        return d.with_(curve=curve, chi_coeffs=np.array(p[2:2 + nc]), alpha_coeffs=np.array(p[2 + nc:]),
                       sym1=s1, sym2=-s1.conjugate())

    @staticmethod
    def _parts(d: SpectralData):
        ctx = d.curve.context()
        eta1, eta2 = ctx.etas
        return ctx, eta1, eta2, d.curve.tau_spec, float(complex(d.tau).imag)

    def evaluate(self, d: SpectralData, xi: np.ndarray):
        xi = np.asarray(xi, dtype=complex)
        ctx, eta1, eta2, ts, s = self._parts(d)
        a, f = d.chi_coeffs[:2]
        ap, e = d.alpha_coeffs[:2]
        F = -a * (ctx.zeta(xi - ts / 2) + eta2 / 2) + (2 + a * eta1) * xi
        if f:
            F = F + f * (np.pi / 2) * (np.tan(np.pi * (xi - ts / 2)) + np.tan(np.pi * (xi + ts / 2)))
        G = -ap * ctx.zeta(xi) + (2 + ap * eta1) * xi
        if e:
            G = G + e * np.pi * np.tan(np.pi * xi)
        n = np.arange(1, d.chi_coeffs.size - 1)
        if n.size:
            S = np.sin(2 * np.pi * xi[..., None] * n) / _fourier_norm(ts, n)
            F = F + S @ d.chi_coeffs[2:]
            G = G + S[..., :d.alpha_coeffs.size - 2] @ d.alpha_coeffs[2:]
        k = np.pi / (2 * s)
        return k * F, k * G

    def derivative_chi(self, d: SpectralData, xi):
        xi = np.asarray(xi, dtype=complex)
        ctx, eta1, eta2, ts, s = self._parts(d)
        a, f = d.chi_coeffs[:2]
        dF = a * ctx.wp(xi - ts / 2) + 2 + a * eta1
        sec2 = lambda z: 1.0 / np.cos(np.pi * z) ** 2
        dF = dF + f * (np.pi ** 2 / 2) * (sec2(xi - ts / 2) + sec2(xi + ts / 2))
        n = np.arange(1, d.chi_coeffs.size - 1)
        if n.size:
            dF = dF + (2 * np.pi * n * np.cos(2 * np.pi * xi[..., None] * n) / _fourier_norm(ts, n)) @ d.chi_coeffs[2:]
        return np.pi / (2 * s) * dF

    def samples(self, d: SpectralData, n: int) -> np.ndarray:
        x = (np.arange(n) + 0.5) / (2 * n)
        return x + 1j * d.curve.tau_spec.imag / 4

    def validation(self, d: SpectralData, n: int) -> np.ndarray:
        x = (np.arange(n) + 0.3) / (2 * n)
        return x + 1j * d.curve.tau_spec.imag / 4

    def mu(self, d: SpectralData) -> float:
        w = d.weights
        return float(mu_gamma(HalfLatticeClass.CENTER, w, d.mu_sign))

    def structural(self, d: SpectralData) -> np.ndarray:
        jac = JacLattice.for_torus(d.tau)
        chi1, _ = self.evaluate(d, np.array([d.sym1]))
        r = chi1[0] - jac.g1 / 2
        s = float(complex(d.tau).imag)
        e = d.alpha_coeffs[1]
        dchi = self.derivative_chi(d, np.array([0.5 + 0j]))[0].real
        # residue of alpha at 1/2 is -(pi/2s) e; the spin expansion asks for spin_scale * mu / chi'(1/2)
        spin = -(np.pi / (2 * s)) * e - jac.spin_scale.real * self.mu(d) / dchi
        return np.array([r.real, r.imag, spin])

    def with_order(self, d: SpectralData, order: int) -> SpectralData:
        c = np.zeros(order + 2)
        a = np.zeros(order + 2)
        c[:min(order + 2, d.chi_coeffs.size)] = d.chi_coeffs[:order + 2]
        a[:min(order + 2, d.alpha_coeffs.size)] = d.alpha_coeffs[:order + 2]
        return d.with_(chi_coeffs=c, alpha_coeffs=a)

    def order(self, d: SpectralData) -> int:
        return d.chi_coeffs.size - 2

    def scan_grid(self, d: SpectralData, nr: int = 24, nt: int = 120) -> np.ndarray:
        sp = d.curve.tau_spec.imag
        y = np.linspace(-sp / 4, sp / 4, nr + 2)[1:-1][:, None]
        x = (np.arange(nt) / nt)[None, :]
        return x + 1j * y

    def is_over_zero(self, d: SpectralData, xi) -> bool:
        return abs(xi - round(xi.real)) < 1e-6

    def series_tail(self, d: SpectralData) -> float:
        c = np.abs(np.concatenate([d.chi_coeffs[2:], d.alpha_coeffs[2:]]))
        if c.size == 0 or c.max() == 0:
            return 0.0
        return float(max(abs(d.chi_coeffs[-1]), abs(d.alpha_coeffs[-1])) / c.max())


_MODELS = {"G0": G0Model(), "G1": G1Model()}


def model_for(d: SpectralData):
    return _MODELS[d.kind]


# -- initial data ------------------------------------------------------------------


def homogeneous_data(tau: complex, order: int = DEFAULT_ORDER, q: float = 0.0) -> SpectralData:
    """Spectral data of the homogeneous torus of conformal type 2Z + 2 tau Z at t = 0.

    chi(xi) = kappa xi and alpha(xi) = kappa / xi with kappa = pi R / (4 s), R = sqrt(1 + s^2),
    tau = i s.  On |xi| = 1, alpha = conj(chi), the unitarizable lift at zero
    weights.  The Sym point solves kappa xi1 = g1/2 and lies on the unit circle.
    """
    s = _check_tau(tau)
    if s < 1:
        raise SpectralDomainError("homogeneous data requires |tau| >= 1")
    R = np.sqrt(1 + s * s)
    kappa = np.pi * R / (4 * s)
    jac = JacLattice.for_torus(tau)
    xi1 = (jac.g1 / 2) / kappa
    if abs(abs(xi1) - 1) > 1e-12:
        raise InfeasibleError("no unit-circle Sym point")
    c = np.zeros(order)
    a = np.zeros(order + 1)
    c[0] = kappa
    a[0] = kappa
    return SpectralData(SpectralCurveG0(), complex(tau), c, a, complex(xi1), complex(xi1).conjugate(), 0.0, q, 1,
                        {"R": R})


def delaunay_coefficients(tau_spec: complex) -> tuple[float, float]:
    """(a, b) with int_tau_spec (a wp(xi - tau_spec/2) + b) = 0 and int_1 (...) = 2.

    Along a cycle gamma the integral is -a (zeta quasi-period) + b gamma, which by
    the Legendre relation gives a = i tau_spec / pi and b = a eta2 / tau_spec.
    """
    ctx = elliptic_context(Lattice(1.0, complex(tau_spec)))
    eta1, eta2 = ctx.etas
    M = np.array([[-eta2, tau_spec], [-eta1, 1.0]], dtype=complex)
    if abs(np.linalg.det(M)) < 1e-12:
        raise SpectralDomainError("degenerate period system")
    a, b = np.linalg.solve(M, np.array([0.0, 2.0], dtype=complex))
    if abs(a.imag) > 1e-9 or abs(b.imag) > 1e-9:
        raise SpectralDomainError("period coefficients are not real; tau_spec must be purely imaginary")
    return float(a.real), float(b.real)


def delaunay_periods_by_quadrature(tau_spec: complex, a: float, b: float) -> tuple[complex, complex]:
    """Re-evaluate both cycle integrals of a wp(xi - tau_spec/2) + b by adaptive quadrature.

    The 1-cycle runs along the real axis and the tau_spec-cycle along Re xi = 1/4,
    both clear of the poles at tau_spec/2 + lattice.
    """
    ts = complex(tau_spec)
    ctx = elliptic_context(Lattice(1.0, ts))

    def integrate(z0, dz):
        f = lambda u: a * ctx.wp(z0 + u * dz - ts / 2) * dz + b * dz
        re = quad(lambda u: f(u).real, 0, 1, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        im = quad(lambda u: f(u).imag, 0, 1, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        return complex(re, im)

    return integrate(0.25 + 0j, ts), integrate(0j, 1.0 + 0j)


def _sym_line(tau_spec: complex):
    """Point x1 on Im xi = s'/4 where Re F = 1/2, and F there (F = 2s chi / pi at t = 0)."""
    sp = complex(tau_spec).imag
    ctx = elliptic_context(Lattice(1.0, complex(tau_spec)))
    eta1, eta2 = ctx.etas
    a = -sp / np.pi
    F = lambda x: -a * (ctx.zeta(x + 1j * sp / 4 - 1j * sp / 2) + eta2 / 2) + (2 + a * eta1) * (x + 1j * sp / 4)
    x1 = brentq(lambda x: complex(F(x)).real - 0.5, 1e-9, 0.5, xtol=1e-15, rtol=1e-15)
    return x1, complex(F(x1))


def solve_tau_spec(tau: complex) -> float:
    """Im tau_spec of the Delaunay torus of conformal type 2Z + 2 tau Z (requires Im tau > sqrt 3)."""
    s = _check_tau(tau)
    if s <= np.sqrt(3) + 1e-9:
        raise InfeasibleError("2-lobed Delaunay data needs Im tau > sqrt(3)")
    g = lambda sp: 2 * _sym_line(1j * sp)[1].imag - s
    lo, hi = 0.05, 1.0
    while g(hi) < 0:
        hi *= 2
        if hi > 200:
            raise InfeasibleError("no spectral modulus found")
    while g(lo) > 0:
        lo /= 2
        if lo < 1e-4:
            raise InfeasibleError("no spectral modulus found")
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


def delaunay_data(tau: complex, tau_spec: complex | None = None, order: int = DEFAULT_ORDER,
                  q: float = 0.0, mu_sign: int = 1) -> SpectralData:
    """2-lobed Delaunay spectral data at t = 0.

    With tau_spec omitted it is solved from the Sym condition; when given, the
    Sym residual of the pair is recorded in the diagnostics.
    """
    s = _check_tau(tau)
    if tau_spec is None:
        sp = solve_tau_spec(tau)
    else:
        sp = _check_tau(tau_spec)
    a, b = delaunay_coefficients(1j * sp)
    x1, F1 = _sym_line(1j * sp)
    curve = SpectralCurveG1.delaunay(1j * sp)
    c = np.zeros(order + 2)
    al = np.zeros(order + 2)
    c[0] = a
    al[0] = a
    s1 = complex(x1, sp / 4)
    jac = JacLattice.for_torus(tau)
    sym_res = abs(np.pi / (2 * s) * F1 - jac.g1 / 2)
    return SpectralData(curve, complex(tau), c, al, s1, -s1.conjugate(), 0.0, q, mu_sign,
                        {"a": a, "b": b, "sym_residual": float(sym_res)})


# -- interior half-lattice hits --------------------------------------------------------


def _contour(fn, center, radius, n=64):
    th = 2 * np.pi * np.arange(n) / n
    z = center + radius * np.exp(1j * th)
    return z, fn(z), radius * np.exp(1j * th)


def scan_spin_points(d: SpectralData, tol: float = 1e-10) -> list[SpinHit]:
    """Points of the open unit lambda-disc (away from lambda = 0) where chi hits (1/2) Lambda.

    Coarse grid for candidates, Newton refinement of chi(xi) = gamma, then the
    residue of alpha there gives mu = residue * chi'(xi0) / spin_scale.
    """
    m = model_for(d)
    jac = JacLattice.for_torus(d.tau)
    grid = m.scan_grid(d)
    chi, _ = d.evaluate(grid.ravel())
    gam = _half_lattice_nearest(chi, jac)
    dist = np.abs(chi - gam)
    scale = min(abs(jac.g1), abs(jac.g2))
    cand = grid.ravel()[dist < 0.08 * scale]
    hits: list[SpinHit] = []
    for z in cand:
        for _ in range(50):
            if m.is_over_zero(d, z):
                break
            c = d.evaluate(np.array([z]))[0][0]
            g = _half_lattice_nearest(c, jac)
            dc = m.derivative_chi(d, np.array([z]))[0]
            step = (c - g) / dc
            z = z - step
            if abs(step) < 1e-14:
                break
        if m.is_over_zero(d, z):
            continue
        c = d.evaluate(np.array([z]))[0][0]
        g = complex(_half_lattice_nearest(c, jac))
        if abs(c - g) > 1e-8:
            continue
        lam = complex(d.lam(np.array([z]))[0])
        if not abs(lam) < 1 - 1e-9:
            continue
        if any(abs(h.lam - lam) < 1e-7 for h in hits):
            continue
        zz, vals, dz = _contour(lambda u: d.evaluate(u)[1], z, 1e-2)
        res = complex(np.mean(vals * dz))
        dchi = complex(m.derivative_chi(d, np.array([z]))[0])
        mu = float((res * dchi / jac.spin_scale).real)
        hits.append(SpinHit(complex(z), lam, g, classify_half(g, jac), mu, stability_of(mu, tol)))
    return hits
