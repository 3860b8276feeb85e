import json

import numpy as np
import pytest

from spectral_cmc.cli import main, parse_complex, parse_rational
from spectral_cmc.spectral import load


@pytest.mark.parametrize("text,value", [("1i", 1j), ("0.3+0.2i", 0.3 + 0.2j), ("-i", -1j), ("2", 2), ("1.2i", 1.2j)])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


def test_parse_rational():
    from fractions import Fraction
    assert parse_rational("2/3") == Fraction(2, 3)


@pytest.fixture
def clifford(tmp_path):
    out = tmp_path / "clifford.json"
    assert main(["torus", "--type", "homogeneous", "--tau", "1i", "--out", str(out)]) == 0
    return out


def test_torus_homogeneous(clifford, capsys):
    d = load(clifford)
    assert d.diagnostics["R"] == pytest.approx(np.sqrt(2))


def test_torus_delaunay(tmp_path, capsys):
    out = tmp_path / "d.json"
    assert main(["torus", "--type", "delaunay", "--tau", "1.2i", "--tau-spec", "0.8i", "--out", str(out)]) == 0
    d = load(out)
    from spectral_cmc.spectral import delaunay_periods_by_quadrature
    pa, pb = delaunay_periods_by_quadrature(d.curve.tau_spec, d.diagnostics["a"], d.diagnostics["b"])
    assert abs(pa) < 1e-8 and abs(pb - 2) < 1e-8


def test_missing_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["torus", "--tau", "1i"])
    assert exc.value.code != 0


def test_flow_q0(clifford, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["flow", "--from", str(clifford), "--q", "0", "--t", "0.01", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert all(s["residual"] < 1e-8 for s in report["steps"])
    states = sorted(out.glob("state_*.json"))
    assert len(states) >= 3
    for p in states:
        assert load(p).weights.rho1 == 0


def test_flow_dry_run_branching(clifford, tmp_path, capsys):
    out = tmp_path / "plan"
    assert main(["flow", "--from", str(clifford), "--q", "2/3", "--t", "1/6", "--dry-run", "--out", str(out)]) == 0
    b = json.loads((out / "report.json").read_text())["branching"]
    assert (b["k"], b["l"], b["genus"]) == (2, 17, 34)


def test_ms_solve(capsys):
    assert main(["ms-solve", "--tau", "1.3i", "--chi", "0.2+0.1i", "--rho0", "0", "--rho1", "0"]) == 0
    res = json.loads(capsys.readouterr().out)["results"][0]
    assert np.allclose(res["alpha_u"], [0.2, -0.1], atol=1e-8)


def test_check_pullback(capsys):
    assert main(["check", "--lemma", "pullback", "--k", "2", "--l", "1"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_check_default_suites(capsys):
    assert main(["check"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_corrupted_checkpoint(clifford, capsys):
    obj = json.loads(clifford.read_text())
    obj["mu_sign"] = 7
    clifford.write_text(json.dumps(obj))
    assert main(["check", "--checkpoint", str(clifford)]) != 0
    assert "mu_sign" in capsys.readouterr().out
    assert main(["mesh", "--from", str(clifford), "--out", str(clifford.with_suffix(".obj"))]) == 2
    assert "mu_sign" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["mesh", "--from", str(tmp_path / "nope.json")]) == 2


def test_mesh(clifford, tmp_path, capsys):
    out = tmp_path / "clifford.obj"
    assert main(["mesh", "--from", str(clifford), "--grid", "16", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "clifford.mesh.json").read_text())
    assert meta["vertices"] == 256
    assert load(clifford).kind == "G0"
