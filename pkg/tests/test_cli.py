import json
import math

import numpy as np
import pytest

from bpre import cli, io
from bpre.verify import Check


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return str(p)


def run(tmp_path, *argv, out="out"):
    code = cli.main([*argv, "--out", str(tmp_path / out)])
    return code, tmp_path / out


DOUBLING = {"kind": "iid", "states": [{"2": 1.0}]}
GEO = {"kind": "iid", "states": [{"family": "geometric", "p": 0.6}]}


def test_classify_doubling(tmp_path, capsys):
    code, out = run(tmp_path, "classify", "--config", write_cfg(tmp_path, {"seed": 1, "environment": DOUBLING}))
    assert code == 0
    doc = json.loads((out / "classify.json").read_text())
    c = doc["classification"]
    assert c["mu"] == pytest.approx(math.log(2))
    assert c["supercritical"] and c["degenerate_env"]
    assert doc["format_version"] == io.FORMAT_VERSION and doc["config"]["seed"] == 1
    printed = json.loads(capsys.readouterr().out)
    assert printed["mu"] == pytest.approx(0.6931471805599453)
    header, rows = io.read_csv(out / "extinction.csv")
    assert header == ["n", "q_n", "increment"] and float(rows[-1][1]) == 0.0


def test_missing_seed(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", "--config", write_cfg(tmp_path, {"environment": GEO}))
    assert code == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_schema_error_has_line(tmp_path, capsys):
    path = write_cfg(tmp_path, {"seed": 1, "environment": GEO, "horizon": -3})
    code, _ = run(tmp_path, "simulate", "--config", path)
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    line = next(i for i, ln in enumerate(open(path), 1) if '"horizon"' in ln)
    assert f"cfg.json:{line}:" in err and "horizon" in err


def test_json_syntax_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  "horizon": 3,,\n}\n')
    code, _ = run(tmp_path, "simulate", "--config", str(p))
    assert code == cli.EXIT_CONFIG
    assert "bad.json:3:" in capsys.readouterr().err


def test_unknown_key_and_bad_env(tmp_path):
    assert run(tmp_path, "simulate", "--config", write_cfg(tmp_path, {"seed": 1, "horizn": 3}))[0] == 2
    bad = {"seed": 1, "environment": {"kind": "iid", "states": [{"0": 0.5, "1": 0.6}]}}
    assert run(tmp_path, "simulate", "--config", write_cfg(tmp_path, bad))[0] == 2


def test_refuse_subcritical(tmp_path):
    env = {"kind": "iid", "states": [{"0": 0.5, "1": 0.5}]}
    code, _ = run(tmp_path, "charfn", "--config", write_cfg(tmp_path, {"seed": 1, "environment": env}))
    assert code == cli.EXIT_REFUSAL


def test_refuse_short_path(tmp_path):
    cfg = {"seed": 1, "environment": GEO, "path_length": 5, "T": 100}
    assert run(tmp_path, "charfn", "--config", write_cfg(tmp_path, cfg))[0] == cli.EXIT_REFUSAL


def test_density_bernoulli(tmp_path):
    cfg = {"seed": 3, "bernoulli": {"lambda": 0.5}, "x_max": 3.0, "x_points": 301, "particles": 20000}
    code, out = run(tmp_path, "density", "--config", write_cfg(tmp_path, cfg))
    assert code == 0
    header, rows = io.read_csv(out / "density.csv")
    assert header == ["x", "f_direct", "f_derivative", "f_kde"]
    x = np.array([float(r[0]) for r in rows])
    f = np.array([float(r[1]) for r in rows])
    inside = np.abs(x) <= 1.8
    assert np.max(np.abs(f[inside] - 0.25)) <= 2e-2


def test_density_bpre(tmp_path):
    cfg = {"seed": 3, "environment": GEO, "replicas": 20000, "x_max": 10, "x_points": 201}
    code, out = run(tmp_path, "density", "--config", write_cfg(tmp_path, cfg))
    assert code == 0
    doc = json.loads((out / "density.json").read_text())
    assert doc["q"] == pytest.approx(2 / 3, abs=1e-10)
    assert abs(doc["direct"]["atom"] + doc["direct"]["total_mass"] - 1) < 2e-2


def test_charfn_and_bounds(tmp_path):
    cfg = {"seed": 3, "environment": GEO, "replicas": 5000, "T": 50}
    code, out = run(tmp_path, "charfn", "--config", write_cfg(tmp_path, cfg), "--dt", "0.1")
    assert code == 0
    header, rows = io.read_csv(out / "charfn.csv")
    assert header == ["t", "re_psi", "im_psi", "abs_psi", "depth_used"]
    assert len(rows) == 1001
    b = json.loads((out / "bounds.json").read_text())["bounds"]
    assert b["rho_hat"] < 1 and b["quad_ok"]
    assert json.loads((out / "bounds.json").read_text())["config"]["dt"] == 0.1


def test_bernoulli_command(tmp_path):
    code, out = run(tmp_path, "bernoulli", "--seed", "1", "--lambda", "0.5", "--particles", "20000")
    assert code == 0
    doc = json.loads((out / "bernoulli.json").read_text())
    assert doc["trend"] == "decaying" and doc["ks_uniform"] < 2e-2
    code, out = run(tmp_path, "bernoulli", "--seed", "1", "--lambda", "0.3333333333333333",
                    "--particles", "2000", "--T-max", "1e4", out="third")
    header, rows = io.read_csv(out / "decay.csv")
    assert min(float(r[2]) for r in rows) >= 0.05


def test_verify_degenerate(tmp_path, capsys):
    cfg = {"seed": 2, "environment": DOUBLING, "replicas": 2000}
    code, out = run(tmp_path, "verify", "--config", write_cfg(tmp_path, cfg))
    assert code == 0
    status = {r[0]: r[1] for r in io.read_csv(out / "verify.csv")[1]}
    assert status["quadratic_bound"] == "vacuous"
    assert status["variance_recursion"] == "pass"
    assert "martingale_mean" in capsys.readouterr().out


def test_verify_failure_exit(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "verify_suite", lambda *a, **k: [Check("x", "fail", 1.0, 0.0)])
    cfg = {"seed": 2, "environment": DOUBLING}
    assert run(tmp_path, "verify", "--config", write_cfg(tmp_path, cfg))[0] == cli.EXIT_VERIFY


def test_flags_override_and_threads_excluded(tmp_path):
    cfg = {"seed": 1, "environment": GEO, "replicas": 100}
    code, out = run(tmp_path, "simulate", "--config", write_cfg(tmp_path, cfg), "--replicas", "50",
                    "--horizon", "5", "--threads", "3")
    assert code == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["replicas"] == 50 and doc["config"]["horizon"] == 5
    assert "threads" not in doc["config"]
    assert (out / "replicas.csv").read_text().startswith("# format_version=1\n# config=")


def test_simulate_threads_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 5, "environment": GEO, "replicas": 20000, "horizon": 20})
    _, a = run(tmp_path, "simulate", "--config", cfg, "--threads", "1", out="a")
    _, b = run(tmp_path, "simulate", "--config", cfg, "--threads", "8", out="b")
    for name in ("replicas.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_csv_float_roundtrip(tmp_path):
    vals = [math.pi, 1e-300, -2.5e17, 0.1 + 0.2]
    io.write_csv(tmp_path / "x.csv", ["v"], [[v] for v in vals])
    _, rows = io.read_csv(tmp_path / "x.csv")
    assert [float(r[0]) for r in rows] == vals


def test_json_nonfinite(tmp_path):
    io.write_json(tmp_path / "x.json", {"a": float("inf"), "b": np.float64(1.5), "c": np.arange(2)})
    doc = json.loads((tmp_path / "x.json").read_text())
    assert doc["a"] == "inf" and doc["b"] == 1.5 and doc["c"] == [0, 1]
