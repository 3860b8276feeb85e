"""Theta and Weierstrass functions on complex tori.

All evaluators reduce their arguments to a fundamental cell of a reduced
lattice basis before summing the theta series, so the number of terms
needed only depends on the nome of the reduced modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_TOL = 1e-12


class EllipticDomainError(ValueError):
    """Invalid lattice or modulus."""


class PoleError(ValueError):
    """Evaluation too close to a lattice point."""


def n_terms_for(modulus: complex, tol: float = DEFAULT_TOL) -> int:
    """Number of theta terms for arguments with |Im z| <= Im(modulus)/2.

    The n-th term is bounded by exp(-pi Im(modulus) (n^2 - 1/4)), so we stop
    once that is below tol * 1e-4.
    """
    y = float(np.imag(modulus))
    if y <= 0:
        raise EllipticDomainError(f"modulus {modulus} not in upper half-plane")
    target = -math.log(tol * 1e-4)
    n = 1
    while math.pi * y * (n * n - 0.25) < target:
        n += 1
    return n + 1


def _series_arrays(modulus: complex, nterms: int):
    n = np.arange(nterms)
    q = np.exp(1j * np.pi * modulus)
    # (-1)^n q^{(n+1/2)^2}
    coef = 2.0 * (-1.0) ** n * np.exp(1j * np.pi * modulus * (n + 0.5) ** 2)
    freq = (2 * n + 1) * np.pi
    return coef, freq, q


def theta1(z, modulus: complex, nterms: int | None = None, tol: float = DEFAULT_TOL):
    """Odd Jacobi theta function with theta1(z + 1) = -theta1(z).

    theta1(z | t) = 2 sum_n (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z),  q = exp(i pi t).
    The argument is shifted by integer multiples of the modulus first and the
    quasi-periodicity factor is applied afterwards.
    """
    modulus = complex(modulus)
    if modulus.imag <= 0:
        raise EllipticDomainError(f"modulus {modulus} not in upper half-plane")
    if nterms is None:
        nterms = n_terms_for(modulus, tol)
    z = np.asarray(z, dtype=complex)
    m = np.round(z.imag / modulus.imag)
    zr = z - m * modulus
    coef, freq, _ = _series_arrays(modulus, nterms)
    val = np.sin(zr[..., None] * freq) @ coef
    # theta1(z + m t) = (-1)^m exp(-i pi m^2 t - 2 pi i m z) theta1(z)
    log_factor = -1j * np.pi * m * m * modulus - 2j * np.pi * m * zr
    sign = np.where(np.mod(m, 2) == 0, 1.0, -1.0)
    out = sign * np.exp(log_factor) * val
    return out if out.ndim else complex(out)


def theta1_derivatives(u, modulus: complex, nterms: int, order: int = 3):
    """Values of theta1 and its first `order` derivatives, no argument reduction."""
    u = np.asarray(u, dtype=complex)
    coef, freq, _ = _series_arrays(modulus, nterms)
    ph = u[..., None] * freq
    s, c = np.sin(ph), np.cos(ph)
    out = [s @ coef]
    patterns = [c, -s, -c, s]
    for k in range(1, order + 1):
        out.append(patterns[(k - 1) % 4] @ (coef * freq**k))
    return out


@dataclass(frozen=True)
class Lattice:
    """Rank-2 lattice gamma1 Z + gamma2 Z with Im(gamma2/gamma1) > 0."""

    gamma1: complex
    gamma2: complex

    def __post_init__(self):
        g1, g2 = complex(self.gamma1), complex(self.gamma2)
        if g1 == 0 or g2 == 0:
            raise EllipticDomainError("lattice generators must be nonzero")
        if (g2 / g1).imag <= 0:
            raise EllipticDomainError("Im(gamma2/gamma1) must be positive")
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)

    @property
    def modulus(self) -> complex:
        return self.gamma2 / self.gamma1

    def scaled(self, c: complex) -> "Lattice":
        return Lattice(c * self.gamma1, c * self.gamma2)

    def reduced_basis(self) -> tuple[complex, complex]:
        """Gauss-reduced oriented basis (w1, w2) with |Re(w2/w1)| <= 1/2, |w2/w1| >= 1."""
        w1, w2 = self.gamma1, self.gamma2
        for _ in range(200):
            if abs(w2) < abs(w1):
                w1, w2 = w2, -w1
            t = w2 / w1
            k = round(t.real)
            if k == 0 and abs(w2) >= abs(w1) * (1 - 1e-15):
                break
            w2 = w2 - k * w1
        if (w2 / w1).imag < 0:
            w2 = -w2
        return w1, w2

    def coordinates(self, z):
        """Real coordinates (a, b) with z = a gamma1 + b gamma2."""
        z = np.asarray(z, dtype=complex)
        g1, g2 = self.gamma1, self.gamma2
        det = (np.conj(g1) * g2).imag
        a = (np.conj(z) * g2).imag / det
        b = (np.conj(g1) * z).imag / det
        return a, b

    def contains(self, z, tol: float = 1e-9) -> bool:
        a, b = self.coordinates(z)
        return bool(abs(a - round(a)) < tol and abs(b - round(b)) < tol)


@dataclass(frozen=True)
class EllipticContext:
    """Weierstrass functions for one lattice.

    Built through :func:`elliptic_context`; the cached reduced basis and
    theta constants make repeated evaluation cheap.
    """

    lattice: Lattice
    tol: float = DEFAULT_TOL
    trunc: int = 0
    _w1: complex = field(default=0j, repr=False)
    _w2: complex = field(default=0j, repr=False)

    @property
    def reduced_modulus(self) -> complex:
        return self._w2 / self._w1

    @cached_property
    def _theta_consts(self):
        _, d1, _, d3 = theta1_derivatives(0.0, self.reduced_modulus, self.trunc)
        return complex(d1), complex(d3)

    @cached_property
    def _reduced_etas(self) -> tuple[complex, complex]:
        d1, d3 = self._theta_consts
        w1 = self._w1
        eta1 = -d3 / (3.0 * d1 * w1)
        t = self.reduced_modulus
        th, th1 = theta1_derivatives(t / 2, t, self.trunc, order=1)
        eta2 = 2.0 * ((th1 / th) / w1 + eta1 * (t / 2))
        return complex(eta1), complex(eta2)

    def _reduce(self, z):
        """Split z = z0 + m w1 + n w2 with z0 in the centered reduced cell."""
        z = np.asarray(z, dtype=complex)
        t = self.reduced_modulus
        u = z / self._w1
        n = np.round(u.imag / t.imag)
        u = u - n * t
        m = np.round(u.real)
        u = u - m
        return u, m, n

    def _check_pole(self, u):
        if np.any(np.abs(u * self._w1) < self.tol ** 0.5 * 1e-3):
            raise PoleError("argument within tolerance of a lattice point")

    def wp(self, xi):
        """Weierstrass p-function."""
        u, _, _ = self._reduce(xi)
        self._check_pole(u)
        th, d1, d2, _ = theta1_derivatives(u, self.reduced_modulus, self.trunc, order=3)
        c1, c3 = self._theta_consts
        logpp = d2 / th - (d1 / th) ** 2
        out = -(logpp - c3 / (3.0 * c1)) / self._w1**2
        return out if out.ndim else complex(out)

    def wp_prime(self, xi):
        u, _, _ = self._reduce(xi)
        self._check_pole(u)
        th, d1, d2, d3 = theta1_derivatives(u, self.reduced_modulus, self.trunc, order=3)
        a, b, c = d1 / th, d2 / th, d3 / th
        logppp = c - 3.0 * a * b + 2.0 * a**3
        out = -logppp / self._w1**3
        return out if out.ndim else complex(out)

    def zeta(self, xi):
        """Weierstrass zeta, quasi-periodic: zeta(z + w) = zeta(z) + eta(w)."""
        u, m, n = self._reduce(xi)
        self._check_pole(u)
        th, d1 = theta1_derivatives(u, self.reduced_modulus, self.trunc, order=1)
        e1, e2 = self._reduced_etas
        out = (d1 / th) / self._w1 + e1 * u + m * e1 + n * e2
        return out if out.ndim else complex(out)

    @cached_property
    def etas(self) -> tuple[complex, complex]:
        """Quasi-periods eta_i = 2 zeta(gamma_i / 2) of the user basis."""
        g1, g2 = self.lattice.gamma1, self.lattice.gamma2
        return 2.0 * self.zeta(g1 / 2), 2.0 * self.zeta(g2 / 2)

    @property
    def eta1(self) -> complex:
        return self.etas[0]

    @property
    def eta2(self) -> complex:
        return self.etas[1]

    @cached_property
    def roots(self) -> tuple[complex, complex, complex]:
        """e1, e2, e3 = p at gamma1/2, (gamma1+gamma2)/2, gamma2/2."""
        g1, g2 = self.lattice.gamma1, self.lattice.gamma2
        return self.wp(g1 / 2), self.wp((g1 + g2) / 2), self.wp(g2 / 2)

    @cached_property
    def invariants(self) -> tuple[complex, complex]:
        e1, e2, e3 = self.roots
        g2 = 2.0 * (e1 * e1 + e2 * e2 + e3 * e3)
        g3 = 4.0 * e1 * e2 * e3
        return g2, g3

    @property
    def g2(self) -> complex:
        return self.invariants[0]

    @property
    def g3(self) -> complex:
        return self.invariants[1]

    def legendre_defect(self) -> float:
        g1, g2 = self.lattice.gamma1, self.lattice.gamma2
        e1, e2 = self.etas
        return abs(e1 * g2 - e2 * g1 - 2j * np.pi)


def elliptic_context(lattice: Lattice, tol: float = DEFAULT_TOL) -> EllipticContext:
    w1, w2 = lattice.reduced_basis()
    trunc = n_terms_for(w2 / w1, tol)
    return EllipticContext(lattice, tol, trunc, w1, w2)


def zeta_quasi_periods(lattice: Lattice, tol: float = DEFAULT_TOL) -> tuple[complex, complex]:
    return elliptic_context(lattice, tol).etas


def wp(xi, ctx: EllipticContext):
    return ctx.wp(xi)


def wp_prime(xi, ctx: EllipticContext):
    return ctx.wp_prime(xi)


# -- slow cross-check oracles -------------------------------------------------
#
# Eisenstein-ordered lattice sums: the inner sum over one lattice row is done in
# closed form with cotangent identities, the outer sum runs over rows.


def _row_power_sum(x, k: int):
    """sum over integers m of (x + m)^(-k) for k in {2, 4, 6}."""
    c = 1.0 / np.tan(np.pi * x)
    s2 = 1.0 + c * c
    if k == 2:
        return np.pi**2 * s2
    if k == 4:
        return np.pi**4 * s2 * (1.0 + 3.0 * c * c) / 3.0
    if k == 6:
        return np.pi**6 * s2 * (2.0 + 15.0 * c * c + 15.0 * c**4) / 15.0
    raise ValueError(k)


def eisenstein_invariants(lattice: Lattice, rows: int = 200) -> tuple[complex, complex]:
    """g2 = 60 G4, g3 = 140 G6 from row sums over |n| <= rows."""
    w1, w2 = lattice.gamma1, lattice.gamma2
    t = w2 / w1
    zeta4, zeta6 = np.pi**4 / 90, np.pi**6 / 945
    G4 = 2 * zeta4
    G6 = 2 * zeta6
    for n in range(1, rows + 1):
        G4 += 2 * _row_power_sum(n * t, 4)
        G6 += 2 * _row_power_sum(n * t, 6)
    G4 /= w1**4
    G6 /= w1**6
    return complex(60 * G4), complex(140 * G6)


def eisenstein_zeta(z: complex, lattice: Lattice, rows: int = 200) -> complex:
    """Weierstrass zeta as the row-ordered lattice sum."""
    w1 = lattice.gamma1
    t = lattice.gamma2 / w1
    x = z / w1
    total = np.pi / np.tan(np.pi * x) + x * np.pi**2 / 3.0
    for n in range(1, rows + 1):
        for sgn in (1, -1):
            nt = sgn * n * t
            cn = 1.0 / np.tan(np.pi * nt)
            total += (np.pi / np.tan(np.pi * (x - nt)) + np.pi * cn
                      + x * np.pi**2 * (1.0 + cn * cn))
    return complex(total / w1)
