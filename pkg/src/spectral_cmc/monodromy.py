"""Parallel transport and monodromy of flat 2x2 connections.

A connection is anything callable as ``form(w) -> (Aw, Awbar)`` returning the
dw- and dwbar-coefficients at an array of points w (shapes ``batch + w.shape +
(2, 2)`` and ``batch + (2, 2)`` or ``batch + w.shape + (2, 2)``).  Parallel
frames solve dY = -A Y, so transport along p1 then p2 is T(p2) @ T(p1).

Two integrators are provided: :func:`transport` uses scipy's adaptive DOP853
pair and is the reference; :func:`transport_magnus` is a fixed-grid sixth-order
Magnus scheme, batched over connections, used in the inner loops of the
Mehta-Seshadri solver and the flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

CLEARANCE = 0.02


class IntegrationError(RuntimeError):
    pass


# -- paths ----------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Line (center is None) from start to end, or arc around center."""

    start: complex
    end: complex
    center: complex | None = None
    turns: float = 0.0  # signed angle / 2 pi swept by an arc

    def point(self, s):
        s = np.asarray(s, dtype=float)
        if self.center is None:
            return self.start + (self.end - self.start) * s
        r0 = self.start - self.center
        return self.center + r0 * np.exp(2j * np.pi * self.turns * s)

    def velocity(self, s):
        s = np.asarray(s, dtype=float)
        if self.center is None:
            return np.full(s.shape, self.end - self.start, dtype=complex)
        r0 = self.start - self.center
        k = 2j * np.pi * self.turns
        return r0 * k * np.exp(k * s)

    @property
    def length(self) -> float:
        if self.center is None:
            return abs(self.end - self.start)
        return abs(self.start - self.center) * 2 * np.pi * abs(self.turns)


def line(a: complex, b: complex) -> Segment:
    return Segment(complex(a), complex(b))


def circle(center: complex, start: complex, turns: float = 1.0) -> Segment:
    center, start = complex(center), complex(start)
    end = center + (start - center) * np.exp(2j * np.pi * turns)
    return Segment(start, complex(end), center, turns)


@dataclass(frozen=True)
class Path:
    segments: tuple[Segment, ...]

    def __add__(self, other: "Path") -> "Path":
        return Path(self.segments + other.segments)

    def reversed(self) -> "Path":
        segs = []
        for s in reversed(self.segments):
            if s.center is None:
                segs.append(Segment(s.end, s.start))
            else:
                segs.append(Segment(s.end, s.start, s.center, -s.turns))
        return Path(tuple(segs))

    @property
    def start(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    def sample(self, n: int = 200) -> np.ndarray:
        return np.concatenate([s.point(np.linspace(0, 1, n)) for s in self.segments])

    def clearance(self, distance: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.min(distance(self.sample())))


def lasso(base: complex, center: complex, radius: float = 0.05) -> Path:
    """Straight to the circle of given radius around center, once around CCW, back."""
    d = center - base
    touch = center - radius * d / abs(d)
    return Path((line(base, touch), circle(center, touch, 1.0), line(touch, base)))


# -- adaptive reference integrator -----------------------------------------------


def _rhs_factory(form, seg: Segment):
    def rhs(s, y):
        w = seg.point(s)
        dz = seg.velocity(s)
        Aw, Awbar = form(np.array([w]))
        Aw = np.asarray(Aw)[..., 0, :, :] if np.ndim(Aw) > 2 else Aw
        Awbar = np.asarray(Awbar)
        if Awbar.ndim > 2 and Awbar.shape[-3] == 1:
            Awbar = Awbar[..., 0, :, :]
        M = -(Aw * dz + Awbar * np.conj(dz))
        Y = y.reshape(2, 2)
        return (M @ Y).ravel()

    return rhs


def transport(form, path: Path, tol: float = 1e-11) -> np.ndarray:
    """Fundamental solution along path by adaptive DOP853 (unbatched)."""
    Y = np.eye(2, dtype=complex)
    for seg in path.segments:
        sol = solve_ivp(_rhs_factory(form, seg), (0.0, 1.0), Y.ravel(), method="DOP853",
                        rtol=tol, atol=tol * 1e-2)
        if not sol.success:
            raise IntegrationError(f"{sol.message} on segment starting at {seg.start}")
        Y = sol.y[:, -1].reshape(2, 2)
    return Y


# -- batched sixth-order Magnus -------------------------------------------------

_GAUSS_C = np.array([0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10])


def _grid(seg: Segment, hmax: float, kappa: float, distance) -> np.ndarray:
    """Breakpoints in [0, 1] with local step min(hmax, kappa * distance to poles)."""
    L = seg.length
    if L == 0:
        return np.array([0.0, 1.0])
    if distance is None:
        n = max(1, math.ceil(L / hmax))
        return np.linspace(0.0, 1.0, n + 1)
    pts = [0.0]
    s = 0.0
    while s < 1.0:
        d = float(distance(np.atleast_1d(seg.point(s)))[0])
        h = min(hmax, kappa * d) / L
        h = max(h, 1e-6)
        s = min(1.0, s + h)
        pts.append(s)
    return np.array(pts)


@dataclass(frozen=True)
class MagnusGrid:
    """Quadrature nodes of a path for the Magnus scheme."""

    nodes: np.ndarray  # (S, 3) complex points
    dz: np.ndarray  # (S, 3) dz/ds scaled by step length (i.e. h * z'(s))

    @classmethod
    def build(cls, path: Path, hmax: float = 0.01, kappa: float = 0.08, distance=None) -> "MagnusGrid":
        nodes, dzs = [], []
        for seg in path.segments:
            br = _grid(seg, hmax, kappa, distance)
            h = np.diff(br)
            s = br[:-1, None] + h[:, None] * _GAUSS_C[None, :]
            nodes.append(seg.point(s))
            dzs.append(seg.velocity(s) * h[:, None])
        return cls(np.concatenate(nodes), np.concatenate(dzs))

    @property
    def steps(self) -> int:
        return self.nodes.shape[0]


def _comm(a, b):
    return a @ b - b @ a


def expm_traceless(X: np.ndarray) -> np.ndarray:
    """exp of traceless 2x2 matrices: cosh(d) I + sinh(d)/d X with d^2 = -det X."""
    d2 = -(X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0])
    d = np.sqrt(d2)
    small = np.abs(d) < 1e-6
    dsafe = np.where(small, 1.0, d)
    sinhc = np.where(small, 1.0 + d2 / 6.0 + d2 * d2 / 120.0, np.sinh(dsafe) / dsafe)
    cosh = np.where(small, 1.0 + d2 / 2.0 + d2 * d2 / 24.0, np.cosh(d))
    out = sinhc[..., None, None] * X
    out[..., 0, 0] += cosh
    out[..., 1, 1] += cosh
    return out


def ordered_product(E: np.ndarray) -> np.ndarray:
    """E[S-1] @ ... @ E[0] along axis -3, by pairwise reduction."""
    while E.shape[-3] > 1:
        if E.shape[-3] % 2:
            last = E[..., -1:, :, :]
            E = E[..., :-1, :, :]
            E = np.concatenate([E[..., 1::2, :, :] @ E[..., 0::2, :, :], last], axis=-3)
        else:
            E = E[..., 1::2, :, :] @ E[..., 0::2, :, :]
    return E[..., 0, :, :]


def transport_magnus(form, grid: MagnusGrid) -> np.ndarray:
    """Transport along a prepared grid; batch shape taken from the connection."""
    Aw, Awbar = form(grid.nodes.ravel())
    Aw = np.asarray(Aw)
    S = grid.steps
    Aw = Aw.reshape(Aw.shape[:-3] + (S, 3, 2, 2))
    Awbar = np.asarray(Awbar)
    if Awbar.ndim >= 3 and Awbar.shape[-3] == grid.nodes.size:
        Awbar = Awbar.reshape(Awbar.shape[:-3] + (S, 3, 2, 2))
    else:
        Awbar = Awbar[..., None, None, :, :]
    dz = grid.dz[..., None, None]
    A = -(Aw * dz + Awbar * np.conj(dz))
    A1, A2, A3 = A[..., 0, :, :], A[..., 1, :, :], A[..., 2, :, :]
    a1 = A2
    a2 = (math.sqrt(15) / 3) * (A3 - A1)
    a3 = (10.0 / 3) * (A3 - 2 * A2 + A1)
    C1 = _comm(a1, a2)
    C2 = -(1.0 / 60) * _comm(a1, 2 * a3 + C1)
    Om = a1 + a3 / 12 + (1.0 / 240) * _comm(-20 * a1 - a3 + C1, a2 + C2)
    return ordered_product(expm_traceless(Om))


# -- representations -------------------------------------------------------------


@dataclass(frozen=True)
class MonodromyRep:
    """Generators (A, B, g0, g1, g2, g3) of the punctured-torus monodromy.

    Relation: B^-1 A^-1 B A = g3 g0 g2 g1, the lassos of
    :func:`torus_generators` taken in their angular order at the basepoint.  For a rep without torus cycles, A and B are None.
    """

    generators: dict[str, np.ndarray]
    order: tuple[str, ...] = ("A", "B", "g0", "g1", "g2", "g3")

    def matrices(self) -> list[np.ndarray]:
        return [self.generators[k] for k in self.order if k in self.generators]

    def relation_defect(self) -> float:
        g = self.generators
        lhs = np.linalg.inv(g["B"]) @ np.linalg.inv(g["A"]) @ g["B"] @ g["A"]
        rhs = g["g3"] @ g["g0"] @ g["g2"] @ g["g1"]
        return float(np.max(np.abs(lhs - rhs)))

    def det_defect(self) -> float:
        return float(max(np.max(np.abs(np.linalg.det(m) - 1)) for m in self.matrices()))

    def conjugated(self, P: np.ndarray) -> "MonodromyRep":
        Pi = np.linalg.inv(P)
        return MonodromyRep({k: P @ v @ Pi for k, v in self.generators.items()}, self.order)


def torus_generators(tau: complex, radius: float = 0.05, basepoint: complex | None = None) -> dict[str, Path]:
    """Based loops on C / ((1+tau) Z + (1-tau) Z), tau purely imaginary.

    The default basepoint p = 0.3 + 0.2 tau is the lower left corner of the
    fundamental parallelogram spanned by A (+2) and B (+tau then +1); gk is a
    straight lasso from p to the representative of the k-th half period inside it.
    """
    tau = complex(tau)
    p = 0.3 + 0.2 * tau if basepoint is None else complex(basepoint)
    reps = [1 + tau, 1.5 + tau / 2, 2 + tau, 0.5 + tau / 2]
    loops = {
        "A": Path((line(p, p + 2),)),
        "B": Path((line(p, p + tau), line(p + tau, p + 1 + tau))),
    }
    for k, c in enumerate(reps):
        loops[f"g{k}"] = lasso(p, c, radius)
    return loops


def monodromy_rep(conn, basepoint: complex | None = None, tol: float = 1e-11,
                  method: str = "magnus", hmax: float = 0.01, kappa: float = 0.08) -> MonodromyRep:
    """Monodromy of an abelianized connection along the standard generators.

    method 'adaptive' uses :func:`transport` (unbatched connections only);
    'magnus' uses the batched fixed-grid scheme.
    """
    torus = conn.torus
    loops = torus_generators(torus.tau, basepoint=basepoint)
    for name, path in loops.items():
        if path.clearance(torus.nearest_puncture_distance) < CLEARANCE:
            raise IntegrationError(f"loop {name} passes within {CLEARANCE} of a puncture")
    gens = {}
    for name, path in loops.items():
        if method == "adaptive":
            gens[name] = transport(conn.form, path, tol)
        else:
            grid = cached_grid(torus, name, path, hmax, kappa)
            gens[name] = transport_magnus(conn.form, grid)
    return MonodromyRep(gens)


_GRID_CACHE: dict = {}


def cached_grid(torus, name: str, path: Path, hmax: float, kappa: float) -> MagnusGrid:
    key = (complex(torus.tau), name, path, hmax, kappa)
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = MagnusGrid.build(path, hmax, kappa, torus.nearest_puncture_distance)
    return _GRID_CACHE[key]


# -- unitarizability ------------------------------------------------------------


def _herm_from_params(x: np.ndarray) -> np.ndarray:
    X = np.array([[x[0], x[1] + 1j * x[2]], [x[1] - 1j * x[2], -x[0]]])
    w, V = np.linalg.eigh(X)
    return (V * np.exp(w)) @ V.conj().T


def _defect_residual(x, mats):
    H = _herm_from_params(x)
    res = [(M.conj().T @ H @ M - H).ravel() for M in mats]
    r = np.concatenate(res)
    return np.concatenate([r.real, r.imag])


@dataclass(frozen=True)
class UnitarizabilityResult:
    defect: float
    hermitian_form: np.ndarray
    converged: bool


def unitarizability(rep: MonodromyRep | Sequence[np.ndarray], iters: int = 200,
                    tol: float = 1e-14) -> UnitarizabilityResult:
    """Minimize sum ||M^H H M - H||_F^2 over H = exp(X), X hermitian traceless.

    Levenberg-Marquardt from a few starts; the best minimizer is returned.
    """
    mats = rep.matrices() if isinstance(rep, MonodromyRep) else [np.asarray(m) for m in rep]
    starts = [np.zeros(3)]
    # start from the averaged form sum M^H M as well; it is exact for finite groups
    avg = sum(M.conj().T @ M for M in mats) + np.eye(2)
    avg = avg / np.sqrt(np.linalg.det(avg).real)
    w, V = np.linalg.eigh(avg)
    L = (V * np.log(w)) @ V.conj().T
    starts.append(np.array([L[0, 0].real, L[0, 1].real, L[0, 1].imag]))
    best = None
    for x0 in starts:
        sol = least_squares(_defect_residual, x0, args=(mats,), method="lm", max_nfev=iters * 4,
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        val = float(np.sum(sol.fun**2))
        if best is None or val < best[0]:
            best = (val, sol)
    val, sol = best
    return UnitarizabilityResult(val, _herm_from_params(sol.x), bool(sol.status > 0))


def unitarizability_defect(rep, iters: int = 200, tol: float = 1e-14) -> float:
    return unitarizability(rep, iters, tol).defect


TRACE_PAIRS = (("A",), ("B",), ("A", "B"), ("A", "g0"), ("B", "g0"), ("A", "g1"), ("B", "g1"))


def trace_residuals(rep: MonodromyRep | Sequence[np.ndarray], pairs=None) -> np.ndarray:
    """Imaginary parts of traces of the listed generator words.

    For a plain sequence of matrices the words are all M_i and M_i M_j (i < j).
    """
    if not isinstance(rep, MonodromyRep):
        mats = [np.asarray(m) for m in rep]
        out = [np.trace(m).imag for m in mats]
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                out.append(np.trace(mats[i] @ mats[j]).imag)
        return np.array(out)
    g = rep.generators
    out = []
    for word in pairs or TRACE_PAIRS:
        M = g[word[0]]
        for k in word[1:]:
            M = M @ g[k]
        out.append(np.trace(M, axis1=-2, axis2=-1).imag)
    return np.array(out)
