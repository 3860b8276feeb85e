"""Flat SL(2,C) connections on the four-punctured torus from line bundle data.

The connection on T^2 = C / ((1+tau) Z + (1-tau) Z) is

    d + [[alpha dw - chi dwbar, beta_minus], [beta_plus, -alpha dw + chi dwbar]]

with beta_pm = b_pm(w) dw, where b_pm solve dbar b = -+ 2 chi b (i.e. are
meromorphic sections of the bundles dbar +- 2 chi dwbar written in the periodic
frame) with simple poles at the half periods.  Each b is expanded in a basis of
Kronecker theta quotients, one per puncture, normalized to unit residue, so the
prescribed residues fix the coefficients directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .elliptic import Lattice, n_terms_for, theta1, theta1_derivatives
from .jacobian import HalfLatticeClass, JacLattice, classify_half, half_lattice_distance

SPIN_TOL = 1e-9


class SpinDegeneracyError(ValueError):
    """chi lies on the half lattice, where the theta basis degenerates."""


class PunctureError(ValueError):
    pass


@dataclass(frozen=True)
class Weights:
    rho0: float
    rho1: float

    def __post_init__(self):
        for r in (self.rho0, self.rho1):
            if not -0.5 < r < 0.5:
                raise ValueError(f"weight {r} outside (-1/2, 1/2)")

    @property
    def rhohat(self) -> tuple[float, float]:
        return self.rho0 / 2 + 0.25, self.rho1 / 2 + 0.25

    def per_puncture(self) -> np.ndarray:
        """Off-diagonal residues at omega_0..omega_3."""
        return np.array([self.rho0, self.rho1, self.rho0, self.rho1], dtype=float)


@dataclass(frozen=True)
class Torus:
    """T^2 = C / ((1+tau) Z + (1-tau) Z) with its four half periods."""

    tau: complex

    @cached_property
    def lattice(self) -> Lattice:
        return Lattice(1 - self.tau, 1 + self.tau)

    @cached_property
    def jac(self) -> JacLattice:
        return JacLattice.for_torus(self.tau)

    @property
    def punctures(self) -> np.ndarray:
        t = complex(self.tau)
        return np.array([0.0, 0.5 - t / 2, 1.0, 0.5 + t / 2], dtype=complex)

    @cached_property
    def _theta_setup(self):
        w1, w2 = self.lattice.reduced_basis()
        T = w2 / w1
        n = n_terms_for(T, 1e-14)
        d1 = theta1_derivatives(0.0, T, n, order=1)[1]
        return w1, w2, T, n, complex(d1)

    def nearest_puncture_distance(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        best = np.full(w.shape, np.inf)
        for p in self.punctures:
            a, b = self.lattice.coordinates(w - p)
            d = np.full(w.shape, np.inf)
            for da in (-1, 0, 1):
                for db in (-1, 0, 1):
                    z = (a - np.round(a) + da) * self.lattice.gamma1 + (b - np.round(b) + db) * self.lattice.gamma2
                    d = np.minimum(d, np.abs(z))
            best = np.minimum(best, d)
        return best


def _multiplier_params(chi, torus: Torus):
    """(a, b) with unit-residue sections of multiplier exp(-2(chi wbar - conj(chi) w))."""
    w1, w2, T, _, _ = torus._theta_setup
    chi = np.asarray(chi, dtype=complex)
    a = (np.conj(chi) * w1 - chi * np.conj(w1)) / (np.pi * 1j)
    b = (np.conj(chi) * w2 - chi * np.conj(w2)) / (np.pi * 1j)
    a, b = a.real, b.real
    return a - np.round(a), b - np.round(b)


class _NodeTheta:
    """chi-independent part of the theta quotients at a fixed set of points.

    With du = u - u_j reduced to du_r = du - m T (|Im du_r| <= Im T / 2),
    theta1(du + v) / theta1(du) = exp(-2 pi i m v) theta1(du_r + v) / theta1(du_r),
    and theta1(du_r + v) = sum_n c_n e^{i pi (2n+1) du_r} e^{i pi (2n+1) v} is a
    matrix product between a node table and a chi table.
    """

    def __init__(self, w: np.ndarray, torus: "Torus"):
        w1, _, T, n, _ = torus._theta_setup
        self.du = (w.ravel()[:, None] - torus.punctures[None, :]) / w1
        self.m = np.round(self.du.imag / T.imag)
        dur = self.du - self.m * T
        self.k = np.arange(-n, n)
        self.freq = (2 * self.k + 1) * np.pi
        c = -1j * (-1.0) ** self.k * np.exp(1j * np.pi * T * (self.k + 0.5) ** 2)
        self.table = c[:, None] * np.exp(1j * self.freq[:, None] * dur.ravel()[None, :])
        self.inv_theta = 1.0 / theta1(dur, T, n)


_NODE_CACHE: dict = {}


def _node_theta(w: np.ndarray, torus: "Torus") -> _NodeTheta:
    key = (complex(torus.tau), w.shape, hash(w.tobytes()))
    hit = _NODE_CACHE.get(key)
    if hit is None:
        if len(_NODE_CACHE) > 64:
            _NODE_CACHE.clear()
        hit = _NODE_CACHE[key] = _NodeTheta(w, torus)
    return hit


def basis_sections(w, chi, torus: Torus, sign: int = -1):
    """Unit-residue theta-quotient sections h_j(w), j = 0..3.

    sign = -1 gives the holomorphic part of b_minus (multiplier
    exp(-2(chi wbar - conj(chi) w))), sign = +1 that of b_plus.
    Returns an array of shape chi.shape + w.shape + (4,).
    """
    w1, w2, T, n, d1 = torus._theta_setup
    chi = np.asarray(chi, dtype=complex)
    w = np.asarray(w, dtype=complex)
    a, b = _multiplier_params(-chi if sign == 1 else chi, torus)
    if np.any((np.abs(a) < SPIN_TOL) & (np.abs(b) < SPIN_TOL)):
        raise SpinDegeneracyError("chi is (numerically) a half-lattice point")
    v = (a * T - b).ravel()
    nt = _node_theta(w, torus)
    num = np.exp(1j * v[:, None] * nt.freq[None, :]) @ nt.table
    num = num.reshape(v.shape + nt.du.shape)
    ex = np.exp(2j * np.pi * (a.ravel()[:, None, None] * nt.du - nt.m * v[:, None, None]))
    h = ex * num * nt.inv_theta * (d1 / w1 / theta1(v, T, n))[:, None, None]
    return h.reshape(chi.shape + w.shape + (4,))


@dataclass(frozen=True)
class AbelianizedConnection:
    """Connection data (weights, chi, alpha) on a rhombic torus.

    chi and alpha may be arrays of equal shape, in which case every evaluation
    is batched over them.
    """

    torus: Torus
    weights: Weights
    chi: complex | np.ndarray
    alpha: complex | np.ndarray

    @cached_property
    def beta_coefficients(self):
        return build_beta(self.chi, self.weights, self.torus)

    def form(self, w):
        """dw- and dwbar-coefficients of the connection form at w.

        Shapes: Aw has chi.shape + w.shape + (2, 2); Awbar has chi.shape + (2, 2).
        """
        return connection_form(self, w)


def _gauge_factor(chi, w):
    chi = np.asarray(chi, dtype=complex)[..., None]
    return np.exp(2 * (chi * np.conj(w) - np.conj(chi) * w))


def build_beta(chi, weights: Weights, torus: Torus):
    """Coefficient vectors (beta_plus, beta_minus) in the unit-residue basis.

    With the basis normalized to unit residue, the residue system is diagonal:
    the coefficient of the j-th section is rho_j divided by the value of the
    periodic gauge factor at the j-th half period.
    """
    chi = np.asarray(chi, dtype=complex)
    rho = weights.per_puncture()
    if not np.any(rho):
        # no prescribed residues: beta = 0 even on the half lattice
        z = np.zeros(chi.shape + (4,), dtype=complex)
        return z, z.copy()
    if np.any(np.vectorize(lambda c: half_lattice_distance(c, torus.jac))(chi) < SPIN_TOL):
        raise SpinDegeneracyError("chi is a half-lattice point; use the spin expansion")
    e = _gauge_factor(chi, torus.punctures)
    beta_minus = rho / e
    beta_plus = rho * e
    return beta_plus, beta_minus


def _coeff_functions(conn: AbelianizedConnection, w):
    w = np.asarray(w, dtype=complex)
    chi = np.asarray(conn.chi, dtype=complex)
    bp, bm = conn.beta_coefficients
    if not np.any(conn.weights.per_puncture()):
        z = np.zeros(chi.shape + w.shape, dtype=complex)
        return z, z
    # finite-difference batches repeat chi; the sections depend on chi only
    uniq, inv = np.unique(chi.ravel(), return_inverse=True)
    hm = basis_sections(w, uniq, conn.torus, sign=-1)[inv].reshape(chi.shape + w.shape + (4,))
    hp = basis_sections(w, uniq, conn.torus, sign=+1)[inv].reshape(chi.shape + w.shape + (4,))
    g = np.exp(2 * (chi[..., None] * np.conj(w) - np.conj(chi)[..., None] * w))
    b_minus = g * np.einsum("...nj,...j->...n", hm, bm)
    b_plus = np.einsum("...nj,...j->...n", hp, bp) / g
    return b_minus, b_plus


def connection_form(conn: AbelianizedConnection, w, clearance: float = 0.0):
    w = np.asarray(w, dtype=complex)
    if clearance > 0 and np.any(conn.torus.nearest_puncture_distance(w) < clearance):
        raise PunctureError("evaluation point too close to a puncture")
    chi = np.asarray(conn.chi, dtype=complex)
    alpha = np.asarray(conn.alpha, dtype=complex)
    b_minus, b_plus = _coeff_functions(conn, w)
    shape = chi.shape + w.shape
    Aw = np.empty(shape + (2, 2), dtype=complex)
    al = np.broadcast_to(alpha[..., None], shape) if alpha.ndim else alpha
    Aw[..., 0, 0] = al
    Aw[..., 1, 1] = -al
    Aw[..., 0, 1] = b_minus
    Aw[..., 1, 0] = b_plus
    Awbar = np.zeros(chi.shape + (2, 2), dtype=complex)
    Awbar[..., 0, 0] = -chi
    Awbar[..., 1, 1] = chi
    return Aw, Awbar


def contour_residue(conn: AbelianizedConnection, center: complex, radius: float = 0.05,
                    npts: int = 64) -> np.ndarray:
    """Residue matrix at center by trapezoidal loop quadrature.

    The off-diagonal entries are measured in the holomorphic frame of E + E*,
    i.e. after removing the smooth unitary factor exp(+-2(chi wbar - conj(chi) w))
    relative to its value at the center; otherwise the loop integral picks up
    an O(radius^2) area term.
    """
    th = 2 * np.pi * np.arange(npts) / npts
    w = center + radius * np.exp(1j * th)
    dw = 1j * radius * np.exp(1j * th) * (2 * np.pi / npts)
    Aw, Awbar = connection_form(conn, w)
    chi = np.asarray(conn.chi, dtype=complex)[..., None]
    rel = np.exp(2 * (chi * np.conj(w - center) - np.conj(chi) * (w - center)))
    Aw = Aw.copy()
    Aw[..., 0, 1] /= rel
    Aw[..., 1, 0] *= rel
    total = np.einsum("...nij,n->...ij", Aw, dw) + Awbar * np.sum(np.conj(dw))
    return total / (2j * np.pi)


# -- spin points ------------------------------------------------------------------


def mu_gamma(cls: HalfLatticeClass, weights: Weights, sign: int = 1) -> float:
    """Residue weight of alpha at a half-lattice point of the given class."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if cls is HalfLatticeClass.NOT_HALF:
        raise ValueError("mu_gamma is only defined on the half lattice")
    if cls is HalfLatticeClass.ZERO:
        return sign * (weights.rho0 + weights.rho1)
    if cls is HalfLatticeClass.CENTER:
        return sign * (weights.rho0 - weights.rho1)
    return 0.0


def stability_of(mu: float, tol: float = 1e-12) -> str:
    if mu > tol:
        return "stable"
    if mu < -tol:
        return "unstable"
    return "semistable"


@dataclass(frozen=True)
class SpinExpansionReport:
    residue_ok: bool
    constant_ok: bool
    stability: str
    expected_residue: complex
    mu: float


def check_spin_expansion(residue: complex, constant: complex, gamma: complex, jac: JacLattice,
                         weights: Weights, tol: float = 1e-8, sign: int = 1) -> SpinExpansionReport:
    """Compare local Laurent data of alpha(chi) at a half-lattice point gamma.

    residue and constant are the coefficients of (chi - gamma)^-1 and (chi - gamma)^0.
    """
    cls = classify_half(gamma, jac)
    mu = mu_gamma(cls, weights, sign)
    expected = jac.spin_scale * mu
    return SpinExpansionReport(
        residue_ok=bool(abs(residue - expected) < tol),
        constant_ok=bool(abs(constant - np.conj(gamma)) < tol),
        stability=stability_of(mu),
        expected_residue=complex(expected),
        mu=float(mu),
    )


def infer_mu(residue: complex, jac: JacLattice) -> float:
    """Residue weight implied by a measured residue of alpha in chi."""
    return float((residue / jac.spin_scale).real)
