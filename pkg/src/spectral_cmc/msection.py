"""Mehta-Seshadri section: the alpha making the abelianized monodromy unitarizable.

For fixed weights and chi the unitarizable alpha is found by Newton's method on
two real trace conditions (traces of a unitary representation are real),
followed by a check of the full unitarizability defect.  All routines accept
arrays of chi and solve the independent problems in one batched pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abelianization import AbelianizedConnection, Torus, Weights
from .jacobian import JacLattice, half_lattice_distance
from .monodromy import MonodromyRep, monodromy_rep, unitarizability

FD_STEP = 1e-6
NEAR_SPIN = 1e-3
# iterations allowed from the initial guess before falling back to continuation
DIRECT_ITER = 12

class NoConvergenceError(RuntimeError):
    def __init__(self, msg, last):
        super().__init__(msg)
        self.last = last


class SpuriousRootError(RuntimeError):
    def __init__(self, msg, alpha, defect):
        super().__init__(msg)
        self.alpha = alpha
        self.defect = defect


@dataclass(frozen=True)
class MSQuery:
    weights: Weights
    chi: complex
    tau: complex
    guess: complex | None = None
    tol: float = 1e-10
    max_iter: int = 30

    def __post_init__(self):
        if half_lattice_distance(self.chi, JacLattice.for_torus(self.tau)) < self.tol:
            raise ValueError("chi lies on the half lattice")


_DIRS = np.array([0, FD_STEP, -FD_STEP, 1j * FD_STEP, -1j * FD_STEP])


@dataclass
class MSSolution:
    alpha: np.ndarray
    iterations: int
    residual: np.ndarray
    defect: np.ndarray | None = None
    degraded: np.ndarray | None = None
    hermitian: np.ndarray | None = None  # log-parameters of the invariant form, (n, 3)


def herm_exp(x: np.ndarray) -> np.ndarray:
    """exp of the traceless hermitian matrix [[x0, x1 + i x2], [x1 - i x2, -x0]], batched."""
    r = np.sqrt(np.sum(x * x, axis=-1))
    small = r < 1e-8
    rs = np.where(small, 1.0, r)
    sh = np.where(small, 1.0 + r * r / 6, np.sinh(rs) / rs)
    ch = np.cosh(r)
    H = np.empty(x.shape[:-1] + (2, 2), dtype=complex)
    H[..., 0, 0] = ch + sh * x[..., 0]
    H[..., 1, 1] = ch - sh * x[..., 0]
    H[..., 0, 1] = sh * (x[..., 1] + 1j * x[..., 2])
    H[..., 1, 0] = sh * (x[..., 1] - 1j * x[..., 2])
    return H


def _unitarity_residual(mats: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Stacked real and imaginary parts of M^H H M - H; mats has shape (..., G, 2, 2)."""
    E = np.conj(np.swapaxes(mats, -1, -2)) @ H[..., None, :, :] @ mats - H[..., None, :, :]
    E = E.reshape(E.shape[:-3] + (-1,))
    return np.concatenate([E.real, E.imag], axis=-1)


def _generator_stack(rep: MonodromyRep) -> np.ndarray:
    return np.stack(rep.matrices(), axis=-3)


def _system(torus, weights, chi, alpha, x, vary_chi: bool = False):
    """Residual r(alpha, x) and its Jacobian in (Re a, Im a, x0, x1, x2) [and (Re chi, Im chi)]."""
    n = chi.shape[0]
    if vary_chi:
        ca = np.concatenate([np.broadcast_to(chi[:, None], (n, 5)), chi[:, None] + _DIRS[None, 1:]], axis=1)
        aa = np.concatenate([alpha[:, None] + _DIRS[None, :], np.broadcast_to(alpha[:, None], (n, 4))], axis=1)
    else:
        ca = np.broadcast_to(chi[:, None], (n, 5))
        aa = alpha[:, None] + _DIRS[None, :]
    rep = monodromy_rep(AbelianizedConnection(torus, weights, np.ascontiguousarray(ca), np.ascontiguousarray(aa)))
    G = _generator_stack(rep)  # (n, 5 or 9, G, 2, 2)
    H = herm_exp(x)
    r_all = _unitarity_residual(G, H[:, None])
    h2 = 2 * FD_STEP
    r = r_all[:, 0]
    cols = [(r_all[:, 1] - r_all[:, 2]) / h2, (r_all[:, 3] - r_all[:, 4]) / h2]
    M0 = G[:, 0]
    for k in range(3):
        e = np.zeros(3)
        e[k] = FD_STEP
        cols.append((_unitarity_residual(M0, herm_exp(x + e)) - _unitarity_residual(M0, herm_exp(x - e))) / h2)
    J = np.stack(cols, axis=-1)
    Jc = None
    if vary_chi:
        Jc = np.stack([(r_all[:, 5] - r_all[:, 6]) / h2, (r_all[:, 7] - r_all[:, 8]) / h2], axis=-1)
    return r, J, Jc, M0


def _initial_x(torus, weights, chi, alpha):
    rep = monodromy_rep(AbelianizedConnection(torus, weights, chi, alpha))
    out = np.zeros((chi.size, 3))
    for i in range(chi.size):
        Hi = unitarizability([m[i] for m in rep.matrices()]).hermitian_form
        w, V = np.linalg.eigh(Hi)
        L = (V * np.log(w)) @ V.conj().T
        out[i] = [L[0, 0].real, L[0, 1].real, L[0, 1].imag]
    return out


def _newton(torus, weights, chi, alpha, tol, max_iter, x=None):
    """Batched Levenberg-Marquardt on the unitarity residual in (alpha, H).

    Returns (alpha, x, iterations, residual norms, converged mask).
    """
    alpha = alpha.copy()
    x = np.zeros((chi.size, 3)) if x is None else x.copy()
    n = chi.size
    mu = np.full(n, 1e-6)
    done = np.zeros(n, dtype=bool)
    cost = np.full(n, np.inf)
    prev = None  # (alpha, x, J, r) at the last accepted point
    it = 0
    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~done)
        r, J, _, _ = _system(torus, weights, chi[act], alpha[act], x[act])
        c = np.sum(r * r, axis=1)
        if prev is not None:
            pa, px, pJ, pr, pc = prev
            worse = c > pc[act] * (1 + 1e-12) + 1e-30
            # rejected steps: restore and raise damping
            alpha[act[worse]] = pa[act[worse]]
            x[act[worse]] = px[act[worse]]
            r[worse], J[worse], c[worse] = pr[act[worse]], pJ[act[worse]], pc[act[worse]]
            mu[act[worse]] *= 10
            mu[act[~worse]] = np.maximum(mu[act[~worse]] / 10, 1e-12)
        cost[act] = c
        JtJ = np.swapaxes(J, -1, -2) @ J
        g = np.swapaxes(J, -1, -2) @ r[..., None]
        D = np.einsum("nii->ni", JtJ)
        A = JtJ + (mu[act][:, None] * (D + 1e-12 * D.max(axis=1, keepdims=True) + 1e-300))[..., None] * np.eye(5)
        step = -np.linalg.solve(A, g)[..., 0]
        stored = (alpha.copy(), x.copy(), np.zeros((n,) + J.shape[1:]), np.zeros((n, r.shape[1])), cost.copy())
        stored[2][act], stored[3][act] = J, r
        prev = stored
        small = (np.abs(step[:, :2]).max(axis=1) < tol) | (c < 1e-28)
        done[act[small]] = True
        # the final small step is applied too: it costs nothing and squares the error
        alpha[act] += step[:, 0] + 1j * step[:, 1]
        x[act] += step[:, 2:]
        if done.all():
            break
    return alpha, x, it, np.sqrt(cost), done


def _defects(torus, weights, chi, alpha):
    rep = monodromy_rep(AbelianizedConnection(torus, weights, chi, alpha))
    d = np.array([_defect_single(rep, i) for i in range(chi.size)])
    return d, d / np.maximum(1.0, _rep_scale(rep)) ** 2


def solve_alpha_u_batch(weights: Weights, chi, tau: complex, guess=None, tol: float = 1e-10,
                        max_iter: int = 30, verify: bool = True, defect_tol: float = 1e-12,
                        stages: int = 8, hermitian_guess=None) -> MSSolution:
    """Newton iteration for alpha^u at every chi in a 1-d array.

    Starts from guess (default conj(chi), exact at zero weights).  Queries whose
    root fails the defect check are redone by continuation in the weights from
    zero, where the unitarizable branch is known in closed form.
    """
    torus = Torus(tau)
    chi = np.atleast_1d(np.asarray(chi, dtype=complex)).ravel()
    start = np.conj(chi) if guess is None else np.atleast_1d(np.asarray(guess, dtype=complex)).ravel()
    if hermitian_guess is not None:
        x0 = np.asarray(hermitian_guess, dtype=float).reshape(chi.size, 3)
    else:
        x0 = None if guess is None else _initial_x(torus, weights, chi, start)
    alpha, x, it, fnorm, done = _newton(torus, weights, chi, start, tol, min(max_iter, DIRECT_ITER), x0)
    sol = MSSolution(alpha, it, fnorm, hermitian=x)
    sol.degraded = np.array([half_lattice_distance(c, torus.jac) < NEAR_SPIN for c in chi])
    if not verify:
        if not done.all():
            raise NoConvergenceError(f"Newton did not converge for {np.count_nonzero(~done)} queries", alpha)
        return sol
    defects, rel = _defects(torus, weights, chi, alpha)
    redo = ~done | (rel > defect_tol)
    if np.any(redo):
        c = chi[redo]
        a = np.conj(c)
        xs = np.zeros((c.size, 3))
        a_old = None
        ok = np.ones(c.shape, dtype=bool)
        for s in np.linspace(0, 1, stages + 1)[1:]:
            w = Weights(weights.rho0 * s, weights.rho1 * s)
            # secant predictor along the continuation
            pred = a if a_old is None else 2 * a - a_old
            a_old = a
            a, xs, _, fn, ok = _newton(torus, w, c, pred, tol, max_iter, xs)
        if not ok.all():
            raise NoConvergenceError("Newton did not converge along the weight continuation", a)
        alpha[redo] = a
        x[redo] = xs
        fnorm[redo] = fn
        d, r = _defects(torus, weights, c, a)
        defects[redo], rel[redo] = d, r
    sol.defect = defects
    bad = rel > defect_tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SpuriousRootError(f"trace conditions met but defect {defects[i]:.3e} at chi={chi[i]}",
                                alpha[i], defects[i])
    return sol


def _rep_scale(rep: MonodromyRep) -> np.ndarray:
    return np.max([np.abs(m).max(axis=(-2, -1)) for m in rep.matrices()], axis=0)


def _defect_single(rep: MonodromyRep, i: int) -> float:
    return unitarizability([m[i] for m in rep.matrices()]).defect


def solve_alpha_u(q: MSQuery) -> complex:
    """alpha^u(chi) for a single query."""
    sol = solve_alpha_u_batch(q.weights, q.chi, q.tau, q.guess, q.tol, q.max_iter)
    return complex(sol.alpha[0])


def _hermitian_params(torus, weights, chi, alpha):
    """Log-parameters of the invariant hermitian form at a solved (chi, alpha)."""
    return _initial_x(torus, weights, chi, alpha)


def alpha_u_derivatives(weights: Weights, chi, alpha, tau: complex, x=None):
    """Real Jacobian d(Re a, Im a) / d(Re chi, Im chi) of alpha^u, shape (n, 2, 2).

    Implicit function theorem on the unitarity residual r(alpha, H; chi) = 0,
    solved in the least-squares sense (the residual is overdetermined).
    """
    torus = Torus(tau)
    chi = np.atleast_1d(np.asarray(chi, dtype=complex)).ravel()
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex)).ravel()
    if x is None:
        x = _hermitian_params(torus, weights, chi, alpha)
    _, J, Jc, _ = _system(torus, weights, chi, alpha, x, vary_chi=True)
    return -(np.linalg.pinv(J, rcond=1e-10) @ Jc)[:, :2, :]


def alpha_u_weight_derivative(weights: Weights, chi, alpha, tau: complex, direction=(1.0, 0.0),
                              h: float = 1e-6, x=None):
    """d alpha^u / ds along weights + s * direction, by the implicit function theorem."""
    torus = Torus(tau)
    chi = np.atleast_1d(np.asarray(chi, dtype=complex)).ravel()
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex)).ravel()
    if x is None:
        x = _hermitian_params(torus, weights, chi, alpha)
    _, J, _, _ = _system(torus, weights, chi, alpha, x)
    H = herm_exp(x)
    rs = []
    for sgn in (1, -1):
        w = Weights(weights.rho0 + sgn * h * direction[0], weights.rho1 + sgn * h * direction[1])
        rep = monodromy_rep(AbelianizedConnection(torus, w, chi, alpha))
        rs.append(_unitarity_residual(_generator_stack(rep), H))
    dr = (rs[0] - rs[1]) / (2 * h)
    d = -(np.linalg.pinv(J, rcond=1e-10) @ dr[..., None])[:, :2, 0]
    return d[:, 0] + 1j * d[:, 1]


@dataclass(frozen=True)
class FunctionalReport:
    shift_a: complex
    shift_b: complex
    expected_a: complex
    expected_b: complex
    odd_error: float
    real_error: float | None
    tol: float

    @property
    def ok(self) -> bool:
        errs = [abs(self.shift_a - self.expected_a), abs(self.shift_b - self.expected_b), self.odd_error]
        if self.real_error is not None:
            errs.append(self.real_error)
        return max(errs) < self.tol


def verify_functional_equations(weights: Weights, chi: complex, tau: complex, tol: float = 1e-6) -> FunctionalReport:
    """Check the lattice, oddness and (for tau in iR) reality laws of alpha^u at chi.

    Translating chi by 2 g_k (g_k generators of the Jacobian lattice) must shift
    alpha^u by conj(2 g_k); alpha^u(-chi) = -alpha^u(chi); and for purely
    imaginary tau, alpha^u(conj chi) = conj alpha^u(chi).
    """
    jac = JacLattice.for_torus(tau)
    ga, gb = 2 * jac.g1, 2 * jac.g2
    pts = [chi, chi + ga, chi + gb, -chi]
    real = abs(complex(tau).real) < 1e-14
    if real:
        pts.append(np.conj(chi))
    pts = np.array(pts, dtype=complex)
    guess = np.conj(pts)
    a = solve_alpha_u_batch(weights, pts, tau, guess=guess).alpha
    return FunctionalReport(
        shift_a=complex(a[1] - a[0]),
        shift_b=complex(a[2] - a[0]),
        expected_a=complex(np.conj(ga)),
        expected_b=complex(np.conj(gb)),
        odd_error=float(abs(a[3] + a[0])),
        real_error=float(abs(a[4] - np.conj(a[0]))) if real else None,
        tol=tol,
    )
