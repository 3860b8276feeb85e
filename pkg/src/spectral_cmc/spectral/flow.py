"""Closing conditions and the generalized Whitham flow in the weight t.

Weights are rho0 = t, rho1 = q t.  Each step predicts along the tangent of the
solution curve and corrects with damped Gauss-Newton on

    r = [alpha(xi_k) - alpha^u(chi(xi_k)) at the circle samples,
         chi(xi1) - g1/2, |lambda(xi1)| - 1 (G0) or the spin residual at xi = 1/2 (G1)].

The Jacobian is assembled from cheap finite differences of the ansatz and the
implicit-function derivative of alpha^u, so each iteration costs one batched
Mehta-Seshadri solve plus one batched derivative evaluation.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..abelianization import Weights
from ..msection import alpha_u_derivatives, alpha_u_weight_derivative, solve_alpha_u_batch
from .data import InfeasibleError, SpectralData, save
from .models import model_for, scan_spin_points

log = logging.getLogger(__name__)


class FlowTermination(RuntimeError):
    """dt fell below the minimum; carries the last good state."""

    def __init__(self, msg, last: SpectralData):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    samples: int | None = None  # circle samples; default makes the G0 system square
    max_iter: int = 10
    min_dt: float = 1e-5
    fd_step: float = 1e-7
    validation: int = 12
    tail_ratio: float = 1e-3
    accept_tol: float = 1e-8  # least-squares floor accepted when Gauss-Newton is stationary above tol
    validation_tol: float = 1e-8  # residual between the samples; raises the order when exceeded
    max_order: int = 32


def default_samples(d: SpectralData, cfg: SolverConfig) -> int:
    if cfg.samples:
        return cfg.samples
    m = model_for(d)
    return m.order(d) + (2 if d.kind == "G1" else 0)


@dataclass
class _Eval:
    r: np.ndarray
    R: np.ndarray  # complex condition-(4) residuals
    xs: np.ndarray
    chi: np.ndarray
    alpha: np.ndarray
    alpha_u: np.ndarray
    herm: np.ndarray
    struct: np.ndarray


def _evaluate(d: SpectralData, n: int, guess=None, herm=None) -> _Eval:
    m = model_for(d)
    xs = m.samples(d, n)
    chi, alpha = d.evaluate(xs)
    if d.t == 0 and d.q * d.t == 0:
        au = np.conj(chi)
        hx = np.zeros((n, 3))
    else:
        sol = solve_alpha_u_batch(d.weights, chi, d.tau, guess=alpha if guess is None else guess,
                                  hermitian_guess=herm)
        au, hx = sol.alpha, sol.hermitian
    R = alpha - au
    st = m.structural(d)
    return _Eval(np.concatenate([R.real, R.imag, st]), R, xs, chi, alpha, au, hx, st)


def _model_jacobian(d: SpectralData, n: int, h: float):
    """Central differences of (chi, alpha) at the (moving) samples and of the structural residuals."""
    m = model_for(d)
    p = m.pack(d)
    dchi, dal, dst = [], [], []
    for j in range(p.size):
        hj = h * max(1.0, abs(p[j]))
        vals = []
        for sgn in (1, -1):
            q = p.copy()
            q[j] += sgn * hj
            dj = m.unpack(d, q)
            c, a = dj.evaluate(m.samples(dj, n))
            vals.append((c, a, m.structural(dj)))
        dchi.append((vals[0][0] - vals[1][0]) / (2 * hj))
        dal.append((vals[0][1] - vals[1][1]) / (2 * hj))
        dst.append((vals[0][2] - vals[1][2]) / (2 * hj))
    return np.array(dchi).T, np.array(dal).T, np.array(dst).T


def _jacobian(d: SpectralData, ev: _Eval, n: int, h: float) -> np.ndarray:
    dchi, dal, dst = _model_jacobian(d, n, h)
    if d.t == 0 and d.q * d.t == 0:
        # alpha^u = conj(chi): d(Re, Im) alpha^u / d(Re, Im) chi = diag(1, -1)
        D = np.broadcast_to(np.array([[1.0, 0.0], [0.0, -1.0]]), (n, 2, 2))
    else:
        D = alpha_u_derivatives(d.weights, ev.chi, ev.alpha_u, d.tau, x=ev.herm)
    dre = dchi.real[:, None, :]
    dim = dchi.imag[:, None, :]
    dau = D[:, :, 0:1] * dre + D[:, :, 1:2] * dim  # (n, 2, P)
    JR = dal.real - dau[:, 0, :]
    JI = dal.imag - dau[:, 1, :]
    return np.vstack([JR, JI, dst])


def _time_derivative(d: SpectralData, ev: _Eval, n: int, h: float = 1e-7) -> np.ndarray:
    m = model_for(d)
    if d.t == 0:
        # start of the flow: differentiate alpha^u at t = h in the flow direction
        w = Weights(0.0, 0.0)
    else:
        w = d.weights
    au_t = alpha_u_weight_derivative(w, ev.chi, ev.alpha_u, d.tau, direction=(1.0, d.q),
                                     x=ev.herm if d.t else None)
    st_t = (m.structural(d.with_(t=d.t + h)) - m.structural(d.with_(t=max(d.t - h, 0.0)))) / (
        h + min(h, d.t))
    return np.concatenate([-au_t.real, -au_t.imag, st_t])


RCOND = 1e-8


def _lstsq(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    # truncated SVD: the G1 pole terms are nearly representable by the Fourier modes
    # on the circle line, so tiny singular values carry no information
    return np.linalg.lstsq(J, r, rcond=RCOND)[0]


@dataclass
class CorrectorResult:
    data: SpectralData
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    stationary: bool = False

    def acceptable(self, cfg: SolverConfig) -> bool:
        return self.converged or (self.stationary and self.residual < cfg.accept_tol)


def correct(d: SpectralData, cfg: SolverConfig, n: int | None = None, ev: _Eval | None = None) -> CorrectorResult:
    """Gauss-Newton with step halving at fixed t, q."""
    m = model_for(d)
    n = n or default_samples(d, cfg)
    ev = ev or _evaluate(d, n)
    cost = float(np.max(np.abs(ev.r)))
    hist = [cost]
    for it in range(1, cfg.max_iter + 1):
        if cost < cfg.tol:
            return CorrectorResult(d, cost, it - 1, True, hist)
        J = _jacobian(d, ev, n, cfg.fd_step)
        step = _lstsq(J, -ev.r)
        p = m.pack(d)
        accepted = False
        for lam in (1.0, 0.5, 0.25, 0.125):
            try:
                dn = m.unpack(d, p + lam * step)
                evn = _evaluate(dn, n, guess=ev.alpha_u + 0j, herm=ev.herm)
            except (InfeasibleError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.debug("trial step %s failed: %s", lam, exc)
                continue
            cn = float(np.max(np.abs(evn.r)))
            if cn < cost or cn < cfg.tol:
                d, ev, cost, accepted = dn, evn, cn, True
                break
        hist.append(cost)
        log.debug("corrector iteration %d: residual %.3e", it, cost)
        if not accepted or hist[-1] > 0.5 * hist[-2]:
            # least-squares floor of the overdetermined system: no further progress
            return CorrectorResult(d, cost, len(hist) - 1, cost < cfg.tol, hist, stationary=True)
    return CorrectorResult(d, cost, len(hist) - 1, cost < cfg.tol, hist)


def closing_residuals(d: SpectralData, circle_samples: int | None = None) -> dict:
    """Residuals of the closing conditions, grouped by condition.

    (1) and (2) hold by construction of the ansatz and are reported as zeros;
    (3) lists spin residuals at interior half-lattice hits; (4) the circle
    residuals alpha - alpha^u(chi) (real and imaginary parts); (5) the Sym
    point residuals chi(xi_i) - g_i/2 (mod the lattice) and |lambda(xi_i)| - 1.
    """
    n = circle_samples or default_samples(d, SolverConfig())
    ev = _evaluate(d, n)
    from ..jacobian import JacLattice

    jac = JacLattice.for_torus(d.tau)
    chi1 = d.evaluate(np.array([d.sym1, d.sym2]))[0]
    lam = d.lam(np.array([d.sym1, d.sym2]))
    # the Sym conditions are equalities of Jacobian classes: compare modulo the lattice
    r = np.array([chi1[0] - jac.g1 / 2, chi1[1] - jac.g2 / 2])
    a, b = jac.coordinates(r)
    r = jac.from_coordinates(a - np.round(a), b - np.round(b))
    c5 = np.array([r[0].real, r[0].imag, r[1].real, r[1].imag, abs(lam[0]) - 1, abs(lam[1]) - 1])
    c3 = ev.struct[2:] if d.kind == "G1" else np.zeros(0)
    c4 = np.concatenate([ev.R.real, ev.R.imag])
    out = {"1": np.zeros(1), "2": np.zeros(1), "3": c3, "4": c4, "5": c5}
    out["vector"] = np.concatenate([out[k] for k in ("1", "2", "3", "4", "5")])
    return out


def _validation_residual(d: SpectralData, cfg: SolverConfig) -> float:
    m = model_for(d)
    xs = m.validation(d, cfg.validation)
    chi, alpha = d.evaluate(xs)
    if d.t == 0:
        return float(np.max(np.abs(alpha - np.conj(chi))))
    sol = solve_alpha_u_batch(d.weights, chi, d.tau, guess=alpha)
    return float(np.max(np.abs(alpha - sol.alpha)))


def _diagnose(d: SpectralData, res: CorrectorResult, cfg: SolverConfig) -> SpectralData:
    m = model_for(d)
    hits = scan_spin_points(d)
    lam = np.abs(d.lam(np.array([d.sym1, d.sym2])))
    diag = dict(d.diagnostics)
    diag.update({
        "residual": res.residual,
        "iterations": res.iterations,
        "convergence": "tolerance" if res.converged else "least-squares floor",
        "history": res.history,
        "validation_residual": _validation_residual(d, cfg),
        "sym_lambda_defect": float(np.max(np.abs(lam - 1))),
        "series_tail": m.series_tail(d),
        "spin_hits": [{"xi": h.xi, "lambda": h.lam, "class": h.cls.value, "mu": h.mu, "stability": h.stability}
                      for h in hits],
    })
    return d.with_(diagnostics=diag)


def _raise_order(res: CorrectorResult, cfg: SolverConfig):
    """Increase the series order until the tail and the between-sample residual are small."""
    m = model_for(res.data)
    out = res.data
    while m.order(out) + 4 <= cfg.max_order:
        if (m.series_tail(out) <= cfg.tail_ratio and res.residual <= cfg.tol
                and _validation_residual(out, cfg) <= cfg.validation_tol):
            break
        up = m.with_order(out, m.order(out) + 4)
        nxt = correct(up, cfg, default_samples(up, cfg))
        if not nxt.acceptable(cfg):
            break
        out, res = nxt.data, nxt
    return out, res


def whitham_step(d: SpectralData, dt: float, cfg: SolverConfig = SolverConfig()) -> SpectralData:
    """Advance t by dt (halving dt on failure) and return the corrected data."""
    if dt == 0:
        return d
    m = model_for(d)
    n = default_samples(d, cfg)
    ev0 = _evaluate(d, n)
    J = _jacobian(d, ev0, n, cfg.fd_step)
    rt = _time_derivative(d, ev0, n)
    tangent = _lstsq(J, -rt)
    p0 = m.pack(d)
    h = dt
    while abs(h) >= cfg.min_dt:
        try:
            pred = m.unpack(d, p0 + h * tangent).with_(t=d.t + h)
            res = correct(pred, cfg, n)
        except (InfeasibleError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.info("step %.3g failed (%s); halving", h, exc)
            h /= 2
            continue
        if res.acceptable(cfg):
            out, res = _raise_order(res, cfg)
            out = _diagnose(out, res, cfg)
            if h != dt:
                # finish the requested step from the accepted intermediate state
                return whitham_step(out, dt - h, cfg)
            return out
        log.info("step %.3g: corrector stalled at %.3e; halving", h, res.residual)
        h /= 2
    raise FlowTermination(f"dt fell below {cfg.min_dt} at t = {d.t}", d)


def refinement_certificate(d: SpectralData, cfg: SolverConfig = SolverConfig(), extra_order: int = 4) -> dict:
    """Re-solve with doubled samples and order + extra_order; report the changes.

    Differences are measured on the validation samples (chi and alpha values),
    at the Sym point, and in the maximal circle residual.
    """
    m = model_for(d)
    n = default_samples(d, cfg)
    fine = m.with_order(d, m.order(d) + extra_order)
    res = correct(fine, cfg, 2 * n)
    f = res.data
    xs = m.validation(d, cfg.validation)
    c0, a0 = d.evaluate(xs)
    c1, a1 = f.evaluate(xs)
    base_res = float(np.max(np.abs(_evaluate(d, n).r)))
    coarse_on_fine = float(np.max(np.abs(_evaluate(d, 2 * n).R)))
    changes = {
        "chi_change": float(np.max(np.abs(c1 - c0))),
        "alpha_change": float(np.max(np.abs(a1 - a0))),
        "sym_change": float(abs(f.sym1 - d.sym1)),
        "residual_change": abs(coarse_on_fine - float(res.residual)),
    }
    return {**changes, "residual_base": base_res, "residual_fine": float(res.residual),
            "max_change": max(changes.values())}


@dataclass
class Trajectory:
    states: list[SpectralData]
    log: list[dict]


def flow(d0: SpectralData, q: float, t_target: float, cfg: SolverConfig = SolverConfig(), dt: float = 0.005,
         checkpoint: str | os.PathLike | None = None, resume: bool = False, on_step=None) -> Trajectory:
    """Continue d0 in t along direction q up to t_target with steps dt.

    The trajectory is saved to checkpoint after every step; on_step(state, entry)
    is called with each accepted state and its log entry.
    """
    d0 = d0.with_(q=float(q))
    states = [d0]
    if resume and checkpoint and os.path.exists(checkpoint):
        from .data import load

        loaded = load(checkpoint)
        states = loaded if isinstance(loaded, list) else [loaded]
    entries = []
    while states[-1].t < t_target - 1e-15:
        cur = states[-1]
        h = min(dt, t_target - cur.t)
        t0 = time.perf_counter()
        nxt = whitham_step(cur, h, cfg)
        nxt = nxt.with_(t=round(nxt.t, 15))
        states.append(nxt)
        entry = {"t": nxt.t, "residual": nxt.diagnostics.get("residual"), "seconds": time.perf_counter() - t0,
                 "stability": [h_["stability"] for h_ in nxt.diagnostics.get("spin_hits", [])]}
        entries.append(entry)
        log.info("t = %.4f residual %.2e (%.1fs)", nxt.t, entry["residual"], entry["seconds"])
        if checkpoint:
            save(states, checkpoint)
        if on_step is not None:
            on_step(nxt, entry)
    return Trajectory(states, entries)


def lawson_direction(k: int, l: int) -> Fraction:
    """q = (l - 1)(2k + 2) / ((2l + 2)(k - 1)) for the Lawson surface xi_{k,l}."""
    if k == 1:
        raise ValueError("k = 1 makes the Lawson direction undefined (division by zero)")
    if k < 1 or l < 1:
        raise ValueError("k and l must be positive integers")
    return Fraction((l - 1) * (2 * k + 2), (2 * l + 2) * (k - 1))
