"""Points of Jac(T^2) as complex numbers modulo an explicit lattice."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

HALF_TOL = 1e-9


class JacobianDomainError(ValueError):
    pass


@dataclass(frozen=True)
class JacLattice:
    """Lattice g1 Z + g2 Z of a Jacobian, with the torus modulus it came from."""

    tau: complex
    g1: complex
    g2: complex

    @classmethod
    def for_torus(cls, tau: complex) -> "JacLattice":
        """Jacobian lattice of T^2 = C / ((1+tau) Z + (1-tau) Z)."""
        tau = complex(tau)
        if tau.imag == 0:
            raise JacobianDomainError("tau must not be real")
        d = tau - np.conj(tau)
        return cls(tau, np.pi * 1j * (1 + tau) / d, np.pi * 1j * (1 - tau) / d)

    @classmethod
    def for_double_cover(cls, tau: complex) -> "JacLattice":
        """Jacobian lattice (pi i / 2 tau) Z + (pi i / 2) Z of C / (2 Z + 2 tau Z)."""
        tau = complex(tau)
        if tau.imag == 0:
            raise JacobianDomainError("tau must not be real")
        return cls(tau, np.pi * 1j / (2 * tau), np.pi * 1j / 2)

    @property
    def spin_scale(self) -> complex:
        """2 pi i / (tau - conj(tau)), the prefactor of the spin-point expansion."""
        return 2j * np.pi / (self.tau - np.conj(self.tau))

    def coordinates(self, z):
        z = np.asarray(z, dtype=complex)
        det = (np.conj(self.g1) * self.g2).imag
        a = (np.conj(z) * self.g2).imag / det
        b = (np.conj(self.g1) * z).imag / det
        return a, b

    def from_coordinates(self, a, b):
        return a * self.g1 + b * self.g2

    def contains(self, z, tol: float = HALF_TOL) -> bool:
        a, b = self.coordinates(z)
        scale = max(abs(self.g1), abs(self.g2))
        return bool(abs(self.from_coordinates(a - np.round(a), b - np.round(b))) < tol * scale)


class HalfLatticeClass(enum.Enum):
    ZERO = "Zero"
    CENTER = "Center"
    SYM_A = "SymA"
    SYM_B = "SymB"
    NOT_HALF = "NotHalf"


@dataclass(frozen=True)
class JacobianPoint:
    chi: complex
    lattice: JacLattice


@dataclass(frozen=True)
class LineConnectionPoint:
    """The flat line bundle connection d + alpha dw - chi dwbar."""

    chi: JacobianPoint
    alpha: complex


def reduce(chi_raw: complex, lattice: JacLattice) -> JacobianPoint:
    """Representative in the half-open parallelogram [0,1) g1 + [0,1) g2."""
    a, b = lattice.coordinates(chi_raw)
    a = float(a - np.floor(a))
    b = float(b - np.floor(b))
    # guard the half-open boundary against rounding just below 1
    if a >= 1.0 - 1e-15:
        a = 0.0
    if b >= 1.0 - 1e-15:
        b = 0.0
    return JacobianPoint(complex(lattice.from_coordinates(a, b)), lattice)


def classify_half(chi: JacobianPoint | complex, lattice: JacLattice | None = None,
                  tol: float = HALF_TOL) -> HalfLatticeClass:
    """Class of 2 chi modulo 2 Lambda, or NOT_HALF away from the half lattice."""
    if isinstance(chi, JacobianPoint):
        lattice = chi.lattice
        chi = chi.chi
    a, b = lattice.coordinates(2 * complex(chi))
    ia, ib = round(float(a)), round(float(b))
    off = abs(lattice.from_coordinates(a - ia, b - ib)) / 2
    if off > tol * max(abs(lattice.g1), abs(lattice.g2)):
        return HalfLatticeClass.NOT_HALF
    return {
        (0, 0): HalfLatticeClass.ZERO,
        (1, 1): HalfLatticeClass.CENTER,
        (1, 0): HalfLatticeClass.SYM_A,
        (0, 1): HalfLatticeClass.SYM_B,
    }[(ia % 2, ib % 2)]


def half_lattice_distance(chi: complex, lattice: JacLattice) -> float:
    """Distance from chi to the nearest point of (1/2) Lambda."""
    a, b = lattice.coordinates(2 * complex(chi))
    return float(abs(lattice.from_coordinates(a - np.round(a), b - np.round(b))) / 2)


def dual(p: LineConnectionPoint) -> LineConnectionPoint:
    """(chi, alpha) -> (-chi, -alpha); the alpha lift follows the chi reduction."""
    lat = p.chi.lattice
    q = reduce(-p.chi.chi, lat)
    shift = q.chi - (-p.chi.chi)
    return LineConnectionPoint(q, -p.alpha + np.conj(shift))


def translate(p: LineConnectionPoint, gamma: complex) -> LineConnectionPoint:
    """Gauge action of a lattice vector: (chi, alpha) -> (chi + gamma, alpha + conj(gamma))."""
    return LineConnectionPoint(JacobianPoint(p.chi.chi + gamma, p.chi.lattice),
                               p.alpha + np.conj(gamma))
