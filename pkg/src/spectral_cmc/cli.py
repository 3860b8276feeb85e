"""Command-line front end: spectral-cmc {torus, flow, ms-solve, check, mesh}."""

from __future__ import annotations

import os

# cap BLAS/OpenMP worker threads before numpy is loaded
_THREADS = os.environ.get("SPECTRAL_CMC_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _THREADS

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from fractions import Fraction  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .abelianization import Weights  # noqa: E402
from .spectral.data import CheckpointError, SpectralData, atomic_write_json, load, save, validate_dict  # noqa: E402

log = logging.getLogger("spectral_cmc")


class UsageError(ValueError):
    pass


def parse_complex(text: str) -> complex:
    """'a+bi' style strings: '1i', '0.3+0.2i', '-i', '2'."""
    s = text.strip().replace(" ", "").replace("I", "i").replace("j", "i")
    if s.endswith("i"):
        head = s[:-1]
        if head == "" or head[-1] in "+-":
            s = head + "1i"
    try:
        return complex(s.replace("i", "j"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from exc


def parse_rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _writable(path: str) -> str:
    d = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise UsageError(f"output directory {d} is not writable")
    return path


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, default=_json_default))


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(type(o))


def _load_state(path: str, index: int = -1) -> SpectralData:
    data = load(path)
    if isinstance(data, list):
        if not data:
            raise CheckpointError("trajectory", "empty")
        return data[index]
    return data


# -- commands ---------------------------------------------------------------------------


def cmd_torus(args) -> int:
    from .spectral.models import delaunay_data, homogeneous_data

    out = _writable(args.out)
    if args.type == "homogeneous":
        d = homogeneous_data(args.tau, order=args.order, q=float(args.q))
    else:
        d = delaunay_data(args.tau, tau_spec=args.tau_spec, order=args.order, q=float(args.q),
                          mu_sign=args.mu_sign)
    save(d, out)
    _emit({"out": out, "kind": d.kind, "tau": d.tau, "sym1": d.sym1, "diagnostics": d.diagnostics})
    return 0


def cmd_flow(args) -> int:
    from .reconstruct import DomainError, branching_data
    from .spectral.flow import FlowTermination, SolverConfig, flow

    d0 = _load_state(args.source)
    os.makedirs(args.out, exist_ok=True)
    _writable(os.path.join(args.out, "trajectory.json"))
    q, t = args.q, args.t
    report = {"q": str(q), "t_target": str(t), "steps": []}
    try:
        report["branching"] = _branching_report(branching_data(t, q * t))
    except DomainError as exc:
        report["branching"] = {"error": str(exc)}
    if args.dry_run:
        report["status"] = "dry-run"
        atomic_write_json(os.path.join(args.out, "report.json"), report)
        _emit(report)
        return 0
    cfg = SolverConfig(tol=args.tol, samples=args.samples, min_dt=args.min_dt)
    count = [0]

    def on_step(state, entry):
        count[0] += 1
        save(state, os.path.join(args.out, f"state_{count[0]:04d}.json"))
        report["steps"].append(entry)
        log.info("t = %.6g residual %.3e", entry["t"], entry["residual"])

    save(d0.with_(q=float(q)), os.path.join(args.out, "state_0000.json"))
    status = 0
    try:
        flow(d0, float(q), float(t), cfg, dt=args.dt, checkpoint=os.path.join(args.out, "trajectory.json"),
             resume=args.resume, on_step=on_step)
        report["status"] = "ok"
    except FlowTermination as exc:
        report["status"] = "terminated"
        report["termination"] = {"message": str(exc), "last_t": exc.last.t}
        save(exc.last, os.path.join(args.out, "last_good.json"))
        status = 3
    atomic_write_json(os.path.join(args.out, "report.json"), json.loads(json.dumps(report, default=_json_default)))
    _emit(report)
    return status


def _branching_report(b) -> dict:
    return {"k": b.k, "l": b.l, "r0": b.r0, "r1": b.r1, "genus": b.genus, "P": b.P, "Q": b.Q,
            "immersed": b.immersed}


def cmd_ms_solve(args) -> int:
    from .msection import solve_alpha_u_batch

    chi = np.array(args.chi, dtype=complex)
    sol = solve_alpha_u_batch(Weights(args.rho0, args.rho1), chi, args.tau, tol=args.tol)
    _emit({"tau": args.tau, "weights": [args.rho0, args.rho1],
           "results": [{"chi": c, "alpha_u": complex(a), "defect": float(e), "degraded": bool(g)}
                       for c, a, e, g in zip(chi, sol.alpha, sol.defect, sol.degraded)]})
    return 0


def _check_elliptic() -> list[tuple[str, bool, str]]:
    from .elliptic import Lattice, elliptic_context, theta1

    rng = np.random.default_rng(0)
    lat = Lattice(1.0, 0.3 + 1.1j)
    ctx = elliptic_context(lat)
    z = (rng.uniform(0.05, 0.95, 400) + rng.uniform(0.05, 0.95, 400) * lat.gamma2)
    g2, g3 = ctx.invariants
    w = ctx.wp(z)
    ode = float(np.max(np.abs(ctx.wp_prime(z) ** 2 - (4 * w ** 3 - g2 * w - g3)) / np.maximum(1, np.abs(w) ** 3)))
    leg = ctx.legendre_defect()
    T = 0.2 + 1.3j
    u = rng.uniform(-1, 1, 100) + 1j * rng.uniform(-0.5, 0.5, 100)
    qp = max(float(np.max(np.abs(theta1(u + 1, T) + theta1(u, T)))),
             float(np.max(np.abs(theta1(u + T, T) + np.exp(-1j * np.pi * T - 2j * np.pi * u) * theta1(u, T)))))
    return [("elliptic: wp ODE residual", ode < 1e-9, f"{ode:.2e}"),
            ("elliptic: Legendre relation", leg < 1e-10, f"{leg:.2e}"),
            ("elliptic: theta quasi-periodicity", qp < 1e-10, f"{qp:.2e}")]


def _check_pullback(k: int, l: int, m: complex) -> list[tuple[str, bool, str]]:
    from .reconstruct import pullback_defect

    out = []
    for n0, n1 in ((0, 0), (1, 0), (0, 1), (1, 1), (2, -1)):
        e = pullback_defect(n0, n1, k, l, m)
        out.append((f"pullback: n0={n0} n1={n1} k={k} l={l}", e < 1e-6, f"{e:.2e}"))
    return out


def _check_ms() -> list[tuple[str, bool, str]]:
    from .msection import verify_functional_equations

    rep = verify_functional_equations(Weights(0.2, 0.1), 0.17 - 0.31j, 1j)
    zero = verify_functional_equations(Weights(0.0, 0.0), 0.17 - 0.31j, 1j)
    err = max(rep.odd_error, rep.real_error, abs(rep.shift_a - rep.expected_a), abs(rep.shift_b - rep.expected_b))
    return [("ms: functional equations at weights (0.2, 0.1)", rep.ok, f"{err:.2e}"),
            ("ms: functional equations at weights (0, 0)", zero.ok, "")]


def _check_checkpoint(path: str) -> list[tuple[str, bool, str]]:
    with open(path) as fh:
        obj = json.load(fh)
    records = obj["trajectory"] if isinstance(obj, dict) and "trajectory" in obj else [obj]
    for i, r in enumerate(records):
        try:
            validate_dict(r)
        except CheckpointError as exc:
            field = exc.field if len(records) == 1 else f"trajectory[{i}].{exc.field}"
            return [(f"checkpoint: {path}", False, f"invalid field {field}: {exc}")]
    return [(f"checkpoint: {path}", True, f"{len(records)} record(s)")]


def cmd_check(args) -> int:
    results = []
    suites = {args.lemma} if args.lemma else set(args.suite or ["elliptic", "pullback", "ms"])
    if args.checkpoint:
        results += _check_checkpoint(args.checkpoint)
        suites.discard("checkpoint")
    if "elliptic" in suites:
        results += _check_elliptic()
    if "pullback" in suites:
        results += _check_pullback(args.k, args.l, args.m)
    if "ms" in suites:
        results += _check_ms()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_mesh(args) -> int:
    from .reconstruct import build_surface, discrete_mean_curvature_s3, export_mesh

    d = _load_state(args.source, args.index)
    out = _writable(args.out)
    patch = build_surface(d, args.grid)
    pole = None
    if args.pole:
        pole = np.array([float(x) for x in args.pole.split(",")])
        if pole.size != 4:
            raise UsageError("--pole needs four comma-separated numbers")
    meta = export_mesh(patch, out, pole)
    meta["mean_curvature_s3"] = discrete_mean_curvature_s3(patch)
    _emit(meta)
    return 0


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectral-cmc", description="CMC surfaces from flows of spectral data")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("torus", help="write initial spectral data of a homogeneous or Delaunay torus")
    t.add_argument("--type", choices=["homogeneous", "delaunay"], required=True)
    t.add_argument("--tau", type=parse_complex, required=True)
    t.add_argument("--tau-spec", type=parse_complex, default=None)
    t.add_argument("--order", type=int, default=8)
    t.add_argument("--q", type=parse_rational, default=Fraction(0))
    t.add_argument("--mu-sign", type=int, choices=[1, -1], default=1)
    t.add_argument("--out", default="torus.json")
    t.set_defaults(func=cmd_torus)

    f = sub.add_parser("flow", help="run the Whitham flow from a checkpoint")
    f.add_argument("--from", dest="source", required=True)
    f.add_argument("--q", type=parse_rational, required=True)
    f.add_argument("--t", type=parse_rational, required=True)
    f.add_argument("--dt", type=positive, default=0.005)
    f.add_argument("--tol", type=positive, default=1e-10)
    f.add_argument("--min-dt", type=positive, default=1e-5)
    f.add_argument("--samples", type=int, default=None)
    f.add_argument("--resume", action="store_true")
    f.add_argument("--dry-run", action="store_true", help="write the branching report without stepping")
    f.add_argument("--out", default="trajectory")
    f.set_defaults(func=cmd_flow)

    m = sub.add_parser("ms-solve", help="unitarizable lift alpha^u(chi)")
    m.add_argument("--tau", type=parse_complex, required=True)
    m.add_argument("--chi", type=parse_complex, action="append", required=True)
    m.add_argument("--rho0", type=float, required=True)
    m.add_argument("--rho1", type=float, required=True)
    m.add_argument("--tol", type=positive, default=1e-10)
    m.set_defaults(func=cmd_ms_solve)

    c = sub.add_parser("check", help="run invariant suites")
    c.add_argument("--suite", action="append", choices=["elliptic", "pullback", "ms"])
    c.add_argument("--lemma", choices=["pullback"], default=None)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--l", type=int, default=1)
    c.add_argument("--m", type=parse_complex, default=complex(0.3, 0.4))
    c.add_argument("--checkpoint", default=None)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("mesh", help="reconstruct the surface and export an OBJ mesh")
    s.add_argument("--from", dest="source", required=True)
    s.add_argument("--index", type=int, default=-1)
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--pole", default=None)
    s.add_argument("--out", default="surface.obj")
    s.set_defaults(func=cmd_mesh)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: invalid checkpoint: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
