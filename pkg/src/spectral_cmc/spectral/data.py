"""Spectral curves, spectral data records and their JSON checkpoints."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

SCHEMA = 1


class SpectralDomainError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralCurveG0:
    """xi^2 = lambda over the (1+eps)-disc; sigma(xi) = -xi."""

    kind: str = "G0"

    def lam(self, xi):
        return np.asarray(xi) ** 2

    def sigma(self, xi):
        return -np.asarray(xi)


@dataclass(frozen=True)
class SpectralCurveG1:
    """Sigma = C / (Z + tau_spec Z) with lambda = (m0 P + m1) / (m2 P + m3), P = wp.

    The Delaunay model uses (m0, m1, m2, m3) = (0, A, 1, -e3) with e3 = wp(tau_spec/2)
    and A = sqrt((e1 - e3)(e2 - e3)); the unit circle then pulls back to the
    lines Im xi = +-Im(tau_spec)/4 and xi = 1/2 is the branch point inside the disc.
    """

    tau_spec: complex
    moebius: tuple[complex, complex, complex, complex]
    kind: str = "G1"

    @classmethod
    def delaunay(cls, tau_spec: complex) -> "SpectralCurveG1":
        from ..elliptic import Lattice, elliptic_context

        tau_spec = complex(tau_spec)
        if abs(tau_spec.real) > 1e-14 or tau_spec.imag <= 0:
            raise SpectralDomainError("tau_spec must be purely imaginary with positive imaginary part")
        ctx = elliptic_context(Lattice(1.0, tau_spec))
        e1 = ctx.wp(0.5)
        e3 = ctx.wp(tau_spec / 2)
        e2 = ctx.wp(0.5 + tau_spec / 2)
        A = np.sqrt(((e1 - e3) * (e2 - e3)).real)
        return cls(tau_spec, (0j, complex(A), 1 + 0j, complex(-e3.real)))

    def context(self):
        from ..elliptic import Lattice, elliptic_context

        return elliptic_context(Lattice(1.0, self.tau_spec))

    def lam(self, xi):
        m0, m1, m2, m3 = self.moebius
        P = self.context().wp(np.asarray(xi, dtype=complex))
        return (m0 * P + m1) / (m2 * P + m3)

    def sigma(self, xi):
        return -np.asarray(xi)


@dataclass(frozen=True)
class SpectralData:
    """Truncated spectral data at flow time t in direction q.

    G0: chi = sum_k chi_coeffs[k] xi^(2k+1), alpha = alpha_coeffs[0] / xi +
    sum_k alpha_coeffs[k+1] xi^(2k+1).
    G1: see :mod:`.delaunay` for the meaning of the coefficient vectors.
    """

    curve: SpectralCurveG0 | SpectralCurveG1
    tau: complex
    chi_coeffs: np.ndarray
    alpha_coeffs: np.ndarray
    sym1: complex
    sym2: complex
    t: float = 0.0
    q: float = 0.0
    mu_sign: int = 1
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def kind(self) -> str:
        return self.curve.kind

    @property
    def weights(self):
        from ..abelianization import Weights

        return Weights(self.t, self.q * self.t)

    def with_(self, **kw) -> "SpectralData":
        return replace(self, **kw)

    def evaluate(self, xi):
        """(chi(xi), alpha(xi)) for an array of points."""
        from .models import model_for

        return model_for(self).evaluate(self, np.asarray(xi, dtype=complex))

    def lam(self, xi):
        return self.curve.lam(xi)


def _c(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _uc(v) -> complex:
    return complex(v[0], v[1])


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_dict(d: SpectralData) -> dict:
    if d.kind == "G0":
        curve = {"kind": "G0"}
    else:
        curve = {"kind": "G1", "tau_spec": _c(d.curve.tau_spec), "moebius": [_c(m) for m in d.curve.moebius]}
    return {
        "schema": SCHEMA,
        "curve": curve,
        "tau": _c(d.tau),
        "chi_coeffs": [float(c) for c in d.chi_coeffs],
        "alpha_coeffs": [float(c) for c in d.alpha_coeffs],
        "sym1": _c(d.sym1),
        "sym2": _c(d.sym2),
        "t": float(d.t),
        "q": float(d.q),
        "mu_sign": int(d.mu_sign),
        "diagnostics": _jsonable(d.diagnostics),
    }


class CheckpointError(ValueError):
    """Malformed checkpoint; .field names the offending entry."""

    def __init__(self, field: str, problem: str):
        super().__init__(f"checkpoint field {field!r}: {problem}")
        self.field = field


def _is_pair(v) -> bool:
    return isinstance(v, list) and len(v) == 2 and all(_is_real(x) for x in v)


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_dict(obj) -> None:
    """Raise CheckpointError for the first malformed field of a single record."""
    if not isinstance(obj, dict):
        raise CheckpointError("<root>", "not a JSON object")
    if obj.get("schema") != SCHEMA:
        raise CheckpointError("schema", f"unsupported version {obj.get('schema')!r}")
    cv = obj.get("curve")
    if not isinstance(cv, dict) or cv.get("kind") not in ("G0", "G1"):
        raise CheckpointError("curve", "expected an object with kind G0 or G1")
    if cv["kind"] == "G1":
        if not _is_pair(cv.get("tau_spec")):
            raise CheckpointError("curve.tau_spec", "expected [re, im]")
        mo = cv.get("moebius")
        if not (isinstance(mo, list) and len(mo) == 4 and all(_is_pair(m) for m in mo)):
            raise CheckpointError("curve.moebius", "expected four [re, im] pairs")
    for f in ("tau", "sym1", "sym2"):
        if not _is_pair(obj.get(f)):
            raise CheckpointError(f, "expected [re, im]")
    for f in ("chi_coeffs", "alpha_coeffs"):
        v = obj.get(f)
        if not (isinstance(v, list) and v and all(_is_real(x) for x in v)):
            raise CheckpointError(f, "expected a non-empty list of reals")
    for f in ("t", "q"):
        if not _is_real(obj.get(f)):
            raise CheckpointError(f, "expected a real number")
    if isinstance(obj.get("mu_sign"), bool) or obj.get("mu_sign") not in (1, -1):
        raise CheckpointError("mu_sign", "expected +1 or -1")


def from_dict(obj: dict) -> SpectralData:
    validate_dict(obj)
    cv = obj["curve"]
    if cv["kind"] == "G0":
        curve = SpectralCurveG0()
    else:
        curve = SpectralCurveG1(_uc(cv["tau_spec"]), tuple(_uc(m) for m in cv["moebius"]))
    return SpectralData(
        curve=curve,
        tau=_uc(obj["tau"]),
        chi_coeffs=np.array(obj["chi_coeffs"], dtype=float),
        alpha_coeffs=np.array(obj["alpha_coeffs"], dtype=float),
        sym1=_uc(obj["sym1"]),
        sym2=_uc(obj["sym2"]),
        t=float(obj["t"]),
        q=float(obj["q"]),
        mu_sign=int(obj["mu_sign"]),
        diagnostics=obj.get("diagnostics", {}),
    )


def atomic_write_json(path: str | os.PathLike, payload) -> None:
    """Write JSON to a temp file in the target directory, then rename over path."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(data: SpectralData | list[SpectralData], path) -> None:
    if isinstance(data, SpectralData):
        atomic_write_json(path, to_dict(data))
    else:
        atomic_write_json(path, {"schema": SCHEMA, "trajectory": [to_dict(d) for d in data]})


def load(path) -> SpectralData | list[SpectralData]:
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict) and "trajectory" in obj:
        if obj.get("schema") != SCHEMA:
            raise CheckpointError("schema", f"unsupported version {obj.get('schema')!r}")
        out = []
        for i, o in enumerate(obj["trajectory"]):
            try:
                out.append(from_dict(o))
            except CheckpointError as exc:
                raise CheckpointError(f"trajectory[{i}].{exc.field}", str(exc)) from exc
        return out
    return from_dict(obj)
