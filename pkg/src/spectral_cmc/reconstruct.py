"""Rational-weight combinatorics, Sym-point splitting and surface reconstruction."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy.integrate import solve_ivp

from .abelianization import Weights
from .monodromy import lasso, transport
from .spectral.data import SpectralData, atomic_write_json

log = logging.getLogger(__name__)

CUT_MARGIN = 0.02
# x-range and height (in units of tau) of the four cuts l1..l4 on C / (2Z + 2 tau Z)
CUTS = ((0.0, 1.0, 0.0), (0.5, 1.5, 0.5), (0.0, 1.0, 1.0), (0.5, 1.5, 1.5))
# the strip 3/2 < Re w < 2 meets no cut; frames are transported up it and then sideways
SPINE = 1.75


class DomainError(ValueError):
    pass


class ReconstructionError(RuntimeError):
    pass


# -- branching combinatorics ---------------------------------------------------------


def _as_fraction(x) -> Fraction:
    if isinstance(x, bool) or not isinstance(x, (Rational, str)):
        raise DomainError(f"weight {x!r} must be an exact rational (int, Fraction or 'p/q')")
    try:
        return Fraction(x)
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(str(exc)) from exc


@dataclass(frozen=True)
class BranchingData:
    k: int
    l: int
    r0: int
    r1: int

    @property
    def genus(self) -> int:
        return self.k * self.l

    @property
    def P(self) -> dict:
        """The 2k + 2 points P_i."""
        return {"count": 2 * self.k + 2, "branch_order": self.l - self.r1, "umbilic_order": self.r1 - 1}

    @property
    def Q(self) -> dict:
        """The 2l + 2 points Q_j."""
        return {"count": 2 * self.l + 2, "branch_order": self.k - self.r0, "umbilic_order": self.r0 - 1}

    @property
    def immersed(self) -> bool:
        return self.P["branch_order"] == 0 and self.Q["branch_order"] == 0


def _order_pair(rho: Fraction) -> tuple[int, int]:
    pq = (2 * rho + 1) / 4
    p, q = pq.numerator, pq.denominator
    if q % 2:
        return q - 1, 2 * p
    return q // 2 - 1, p


def branching_data(rho0, rho1) -> BranchingData:
    """Exact (k, l, r0, r1) from rational weights in (-1/2, 1/2)."""
    r = [_as_fraction(rho0), _as_fraction(rho1)]
    for x in r:
        if not -Fraction(1, 2) < x < Fraction(1, 2):
            raise DomainError(f"weight {x} outside (-1/2, 1/2)")
    k, r0 = _order_pair(r[0])
    l, r1 = _order_pair(r[1])
    if k < 1 or l < 1:
        raise DomainError(f"weights {r[0]}, {r[1]} give no covering (k = {k}, l = {l})")
    return BranchingData(k, l, r0, r1)


def lawson_weights(k: int, l: int) -> tuple[Fraction, Fraction]:
    """Weights (k - 1)/(2k + 2), (l - 1)/(2l + 2) of the immersed genus k l surfaces."""
    return Fraction(k - 1, 2 * k + 2), Fraction(l - 1, 2 * l + 2)


# -- Sym-point splitting -------------------------------------------------------------


@dataclass(frozen=True)
class AbelianForm:
    """Scalar Fuchsian form sum_p r_p dz / (z - p) on the sphere."""

    residues: tuple  # ((point, residue), ...)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return sum(r / (z - p) for p, r in self.residues)

    def residue_at_infinity(self) -> complex:
        return -sum(r for _, r in self.residues)

    def local_monodromy(self, point) -> complex:
        """Transport around point with dY = -A Y, counterclockwise."""
        r = dict(self.residues)[point] if point != np.inf else self.residue_at_infinity()
        return complex(np.exp(-2j * np.pi * r))

    def __add__(self, other: "AbelianForm") -> "AbelianForm":
        acc: dict = {}
        for p, r in self.residues + other.residues:
            acc[p] = acc.get(p, 0) + r
        return AbelianForm(tuple(acc.items()))


@dataclass(frozen=True)
class SymSplit:
    plus: AbelianForm
    minus: AbelianForm
    rho_hat: tuple[float, float]
    m: complex

    @property
    def parabolic_weights(self) -> dict:
        """Weights of the + eigenline at the four punctures."""
        r0, r1 = self.rho_hat
        return {0: r0, 1: r1, self.m: r1, np.inf: r0}


def _check_m(m) -> complex:
    m = complex(m)
    if not np.isfinite(m) or abs(m) < 1e-12 or abs(m - 1) < 1e-12:
        raise DomainError(f"degenerate cross ratio m = {m}")
    return m


def diagonal_form(c0, c1, m) -> AbelianForm:
    """c0 dz/z + c1 (dz/(z - 1) - dz/(z - m))."""
    return AbelianForm(((0, c0), (1, c1), (m, -c1)))


def sym_split(weights: Weights, m) -> SymSplit:
    """The two line-bundle connections d +- rho^0 dz/z +- rho^1 (dz/(z-1) - dz/(z-m))."""
    m = _check_m(m)
    r0 = weights.rho0 / 2 + 0.25
    r1 = weights.rho1 / 2 + 0.25
    return SymSplit(diagonal_form(r0, r1, m), diagonal_form(-r0, -r1, m), (r0, r1), m)


def _sphere_loops(m: complex) -> tuple[complex, dict]:
    pts = {0: 0j, 1: 1 + 0j, "m": m}
    arr = np.array(list(pts.values()))
    gap = min(abs(a - b) for i, a in enumerate(arr) for b in arr[i + 1:])
    radius = min(0.25, 0.3 * gap)
    base = complex(arr.real.mean(), arr.imag.max() + 1.0 + np.ptp(arr.real))
    loops = {k: lasso(base, p, radius) for k, p in pts.items()}
    for name, path in loops.items():
        pts_on = path.sample(400)
        others = [p for k, p in pts.items() if k != name]
        if min(np.min(np.abs(pts_on - p)) for p in others) < 0.5 * radius:
            raise DomainError(f"loop around {name} passes too close to another puncture")
    return base, loops


def _scalar_as_matrix(form: AbelianForm):
    def f(w):
        w = np.asarray(w, dtype=complex)
        a = form(w)
        Aw = np.zeros(w.shape + (2, 2), dtype=complex)
        Aw[..., 0, 0] = a
        Aw[..., 1, 1] = -a
        return Aw, np.zeros((2, 2), dtype=complex)

    return f


def verify_trivial_pullback(n0: int, n1: int, k: int, l: int, m, tol: float = 1e-8) -> bool:
    """Transport d +- n0/(l+1) dz/z +- n1/(k+1)(dz/(z-1) - dz/(z-m)) around the punctures.

    The covering unwraps the loops around 0 and infinity (l + 1)-fold and those
    around 1 and m (k + 1)-fold; all lifted monodromies must be the identity.
    """
    return pullback_defect(n0, n1, k, l, m) < tol


def pullback_defect(n0: int, n1: int, k: int, l: int, m) -> float:
    m = _check_m(m)
    if k < 1 or l < 1:
        raise DomainError("k and l must be positive")
    form = _scalar_as_matrix(diagonal_form(n0 / (l + 1), n1 / (k + 1), m))
    _, loops = _sphere_loops(m)
    M = {name: transport(form, path) for name, path in loops.items()}
    # the loop around infinity is the inverse of the product of the finite ones
    M_inf = np.linalg.inv(M["m"] @ M[1] @ M[0])
    lifted = [np.linalg.matrix_power(M[0], l + 1), np.linalg.matrix_power(M_inf, l + 1),
              np.linalg.matrix_power(M[1], k + 1), np.linalg.matrix_power(M["m"], k + 1)]
    return float(max(np.max(np.abs(X - np.eye(2))) for X in lifted))


# -- surface reconstruction -----------------------------------------------------------


@dataclass
class SurfacePatch:
    """Frame values f = F_lambda1 F_lambda2^-1 on a grid of C / (2Z + 2 tau Z).

    points: (N, N) complex grid; quaternions: (N, N, 4) with f = [[a, -conj b], [b, conj a]]
    stored as (Re a, Im a, Re b, Im b); cells: (N-1, N-1) mask of grid cells not
    crossing a cut.
    """

    tau: complex
    points: np.ndarray
    quaternions: np.ndarray
    cells: np.ndarray
    sym_lambdas: tuple[complex, complex]
    H: float
    margin: float
    t: float = 0.0
    q: float = 0.0

    @property
    def norm_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.quaternions, axis=-1) - 1)))


def mean_curvature(l1: complex, l2: complex) -> float:
    v = 1j * (l1 + l2) / (l1 - l2)
    return float(v.real)


def cut_distance(w, tau: complex) -> np.ndarray:
    """Distance from w to the cuts l1..l4 (and their translates by 2 and 2 tau)."""
    w = np.asarray(w, dtype=complex)
    s = complex(tau).imag
    best = np.full(w.shape, np.inf)
    for x0, x1, h in CUTS:
        for dx in (-2.0, 0.0, 2.0):
            for dy in (-2 * s, 0.0, 2 * s):
                x = w.real - dx
                y = w.imag - dy - h * s
                cx = np.clip(x, x0, x1)
                best = np.minimum(best, np.hypot(x - cx, y))
    return best


def _crosses_cut(y0: float, y1: float, xa: float, xb: float, s: float) -> bool:
    for x0, x1, h in CUTS:
        for c in (h * s, h * s + 2 * s):
            if min(y0, y1) <= c <= max(y0, y1) and max(xa, x0) <= min(xb, x1):
                return True
    return False


def homogeneous_family(d: SpectralData):
    """Constant-coefficient associated family of a homogeneous torus.

    A_w = [[0, kappa/lambda], [kappa, 0]], A_wbar = [[0, -kappa], [-kappa lambda, 0]]
    commute, are skew-hermitian together on |lambda| = 1, and have the joint
    eigenvalues (alpha, -chi) = (kappa/xi, -kappa xi) of the spectral data.
    """
    if d.kind != "G0":
        raise ReconstructionError("surface reconstruction is implemented for homogeneous (G0) data only")
    if d.t != 0 or np.any(d.chi_coeffs[1:]) or np.any(d.alpha_coeffs[1:]):
        raise ReconstructionError("surface reconstruction needs the t = 0 homogeneous data (chi = kappa xi)")
    kappa = float(d.chi_coeffs[0])
    if abs(kappa - d.alpha_coeffs[0]) > 1e-12 * abs(kappa):
        raise ReconstructionError("alpha is not the unitary lift of chi")

    def connection(lam: complex):
        Aw = np.array([[0, kappa / lam], [kappa, 0]], dtype=complex)
        Awb = np.array([[0, -kappa], [-kappa * lam, 0]], dtype=complex)
        return Aw, Awb

    return connection


def _line_transport(Aw, Awb, a: complex, b: complex, Y0: np.ndarray, s_eval: np.ndarray) -> np.ndarray:
    """Solutions of dY = -A Y along the segment a -> b at parameters s_eval in [0, 1]."""
    v = b - a
    M = -(Aw * v + Awb * np.conj(v))
    if abs(v) == 0:
        return np.broadcast_to(Y0, (len(s_eval), 2, 2)).copy()
    sol = solve_ivp(lambda s, y: (M @ y.reshape(2, 2)).ravel(), (0.0, 1.0), Y0.ravel(),
                    method="DOP853", t_eval=s_eval, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise ReconstructionError(sol.message)
    return sol.y.T.reshape(-1, 2, 2)


def _frames(Aw, Awb, xs: np.ndarray, ys: np.ndarray, spine: float) -> np.ndarray:
    """F(x + i y) for a grid, transported up Re w = spine from spine + i ys[0], then sideways."""
    base = complex(spine, ys[0])
    top = complex(spine, ys[-1])
    sv = (ys - ys[0]) / (ys[-1] - ys[0]) if ys[-1] != ys[0] else np.zeros_like(ys)
    up = _line_transport(Aw, Awb, base, top, np.eye(2, dtype=complex), sv)
    out = np.empty((ys.size, xs.size, 2, 2), dtype=complex)
    left = xs <= spine
    for j, y in enumerate(ys):
        for mask, end in ((left, xs.min()), (~left, xs.max())):
            if not mask.any():
                continue
            a, b = complex(spine, y), complex(end, y)
            svals = (xs[mask] - spine) / (end - spine) if end != spine else np.zeros(mask.sum())
            order = np.argsort(svals)
            Y = _line_transport(Aw, Awb, a, b, up[j], svals[order])
            tmp = np.empty_like(Y)
            tmp[order] = Y
            out[j, mask] = tmp
    return out


def _quaternion(f: np.ndarray) -> np.ndarray:
    a = f[..., 0, 0]
    b = f[..., 1, 0]
    return np.stack([a.real, a.imag, b.real, b.imag], axis=-1)


def _grid(tau: complex, n: int):
    s = complex(tau).imag
    xs = (np.arange(n) + 0.5) * 2.0 / n
    ys = (np.arange(n) + 0.5) * 2.0 * s / n
    return xs, ys


def build_surface(d: SpectralData, grid_res: int = 64, spine: float = SPINE) -> SurfacePatch:
    """f = F_lambda1 F_lambda2^-1 on a grid, frames normalized to the identity at the spine base."""
    family = homogeneous_family(d)
    l1, l2 = complex(d.lam(d.sym1)), complex(d.lam(d.sym2))
    for lam in (l1, l2):
        if abs(abs(lam) - 1) > 1e-8:
            raise ReconstructionError(f"Sym point lambda = {lam} is off the unit circle")
        Aw, Awb = family(lam)
        if np.max(np.abs(Awb + Aw.conj().T)) > 1e-10:
            raise ReconstructionError("connection at a Sym point is not unitary")
        # closing: the frame must be +-1 around both periods of the torus
        for per in (2.0, 2 * complex(d.tau)):
            M = _line_transport(Aw, Awb, 0j, per, np.eye(2, dtype=complex), np.array([1.0]))[0]
            if min(np.max(np.abs(M - np.eye(2))), np.max(np.abs(M + np.eye(2)))) > 1e-8:
                raise ReconstructionError(f"monodromy at lambda = {lam} along {per} is not +-1")
    xs, ys = _grid(d.tau, grid_res)
    F1 = _frames(*family(l1), xs, ys, spine)
    F2 = _frames(*family(l2), xs, ys, spine)
    # F2 is in SU(2): its inverse is the adjoint
    f = F1 @ np.conj(np.swapaxes(F2, -1, -2))
    s = complex(d.tau).imag
    pts = xs[None, :] + 1j * ys[:, None]
    margin = min(CUT_MARGIN, 0.49 * min(2.0 / grid_res, 2 * s / grid_res))
    if np.min(cut_distance(pts, d.tau)) < margin:
        raise ReconstructionError("grid meets a cut")
    cells = np.ones((grid_res - 1, grid_res - 1), dtype=bool)
    for j in range(grid_res - 1):
        for i in range(grid_res - 1):
            cells[j, i] = not _crosses_cut(ys[j], ys[j + 1], xs[i], xs[i + 1], s)
    return SurfacePatch(complex(d.tau), pts, _quaternion(f), cells, (l1, l2), mean_curvature(l1, l2), margin,
                        float(d.t), float(d.q))


def path_independence_defect(d: SpectralData, grid_res: int = 16, spines=(1.6, 1.9)) -> float:
    """Max frame difference between two homotopic cut-avoiding transport paths.

    Both spines lie in the cut-free strip 3/2 < Re w < 2; the frames are
    referred to the common basepoint by transporting along its bottom row.
    """
    family = homogeneous_family(d)
    xs, ys = _grid(d.tau, grid_res)
    worst = 0.0
    for lam in (complex(d.lam(d.sym1)), complex(d.lam(d.sym2))):
        Aw, Awb = family(lam)
        Fs = []
        for sp in spines:
            F = _frames(Aw, Awb, xs, ys, sp)
            # re-base at spines[0] + i ys[0]
            G = _line_transport(Aw, Awb, complex(spines[0], ys[0]), complex(sp, ys[0]),
                                np.eye(2, dtype=complex), np.array([1.0]))[0]
            Fs.append(F @ G)
        worst = max(worst, float(np.max(np.abs(Fs[0] - Fs[1]))))
    return worst


# -- mesh export -----------------------------------------------------------------------


def _pole_candidates():
    eye = np.eye(4)
    return np.concatenate([eye, -eye, np.full((1, 4), 0.5), np.full((1, 4), -0.5)])


def stereographic(q: np.ndarray, pole: np.ndarray) -> np.ndarray:
    """Project unit quaternions from pole onto the orthogonal 3-space."""
    pole = pole / np.linalg.norm(pole)
    # orthonormal basis of the complement of pole
    basis = np.linalg.svd(np.eye(4) - np.outer(pole, pole))[0][:, :3]
    c = q @ pole
    return (q @ basis) / (1 - c)[..., None]


def choose_pole(q: np.ndarray, pole=None, min_gap: float = 1e-3) -> np.ndarray:
    pts = q.reshape(-1, 4)
    if pole is not None:
        pole = np.asarray(pole, dtype=float)
        pole = pole / np.linalg.norm(pole)
        if np.min(np.linalg.norm(pts - pole, axis=1)) > min_gap:
            return pole
        log.warning("projection pole %s lies on the surface; selecting another", pole)
    best, gap = None, -1.0
    for c in _pole_candidates():
        c = c / np.linalg.norm(c)
        g = float(np.min(np.linalg.norm(pts - c, axis=1)))
        if g > gap:
            best, gap = c, g
    return best


def mesh_arrays(patch: SurfacePatch, pole=None):
    """Vertices (N*N, 3) and triangles (T, 3) of the stereographic image."""
    n_rows, n_cols = patch.points.shape
    p = choose_pole(patch.quaternions, pole)
    V = stereographic(patch.quaternions.reshape(-1, 4), p)
    tris = []
    for j in range(n_rows - 1):
        for i in range(n_cols - 1):
            if not patch.cells[j, i]:
                continue
            a, b = j * n_cols + i, j * n_cols + i + 1
            c, e = (j + 1) * n_cols + i, (j + 1) * n_cols + i + 1
            tris += [(a, b, e), (a, e, c)]
    return V, np.array(tris, dtype=int).reshape(-1, 3), p


def export_mesh(patch: SurfacePatch, path: str | os.PathLike, pole=None) -> dict:
    """Write an OBJ mesh and a JSON sidecar <stem>.mesh.json with the frame data."""
    V, T, p = mesh_arrays(patch, pole)
    path = os.fspath(path)
    lines = [f"# stereographic projection from pole {' '.join(repr(float(x)) for x in p)}"]
    lines += [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in V]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in T]
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    meta = {
        "vertices": int(V.shape[0]),
        "triangles": int(T.shape[0]),
        "pole": [float(x) for x in p],
        "H": patch.H,
        "sym_lambdas": [[z.real, z.imag] for z in patch.sym_lambdas],
        "tau": [patch.tau.real, patch.tau.imag],
        "t": patch.t,
        "q": patch.q,
        "weights": [patch.t, patch.q * patch.t],
        "grid": list(patch.points.shape),
        "norm_defect": patch.norm_defect,
    }
    atomic_write_json(os.path.splitext(path)[0] + ".mesh.json", meta)
    return meta


def read_obj(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    V, T = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                V.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                T.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(V, dtype=float).reshape(-1, 3), np.array(T, dtype=int).reshape(-1, 3)


# -- discrete mean curvature -----------------------------------------------------------


def cotangent_laplacian(V: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cotangent Laplacian applied to the vertex positions, and barycentric vertex areas."""
    L = np.zeros_like(V)
    area = np.zeros(V.shape[0])
    for k in range(3):
        i, j, o = T[:, k], T[:, (k + 1) % 3], T[:, (k + 2) % 3]
        u, v = V[i] - V[o], V[j] - V[o]
        cr = np.linalg.norm(_cross_nd(u, v), axis=1)
        cot = np.einsum("ij,ij->i", u, v) / cr
        w = 0.5 * cot
        np.add.at(L, i, w[:, None] * (V[j] - V[i]))
        np.add.at(L, j, w[:, None] * (V[i] - V[j]))
    for k in range(3):
        a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
        ar = 0.5 * np.linalg.norm(_cross_nd(b - a, c - a), axis=1)
        np.add.at(area, T[:, k], ar / 3)
    return L, area


def _cross_nd(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vector whose norm is the parallelogram area, in any dimension."""
    if u.shape[1] == 3:
        return np.cross(u, v)
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    return np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))[:, None]


def _interior_vertices(T: np.ndarray, n: int) -> np.ndarray:
    """Vertices whose one-ring is closed (every incident edge has two triangles)."""
    edges = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = np.zeros(n, dtype=bool)
    boundary[uniq[counts == 1].ravel()] = True
    used = np.zeros(n, dtype=bool)
    used[T.ravel()] = True
    return used & ~boundary


def discrete_mean_curvature_s3(patch: SurfacePatch) -> dict:
    """Mean curvature of the S^3 surface from the cotangent Laplacian of its R^4 mesh.

    For a surface in the unit S^3, Delta f = 2 H_vec - 2 f, so the S^3 mean
    curvature vector is (Delta f + 2 f) / 2, measured relative to the sphere
    term |f| = 1.
    """
    _, T, _ = mesh_arrays(patch)
    Q = patch.quaternions.reshape(-1, 4)
    L, area = cotangent_laplacian(Q, T)
    inner = _interior_vertices(T, Q.shape[0])
    lap = L[inner] / area[inner, None]
    H = 0.5 * (lap + 2 * Q[inner])
    Hn = np.linalg.norm(H, axis=1)
    return {"max": float(Hn.max()), "mean": float(Hn.mean()), "vertices": int(inner.sum())}

