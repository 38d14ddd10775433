"""Command-line frontend.

Usage::

    bpre classify --config env.json --seed 7 --out run/
    bpre simulate --config env.json --seed 7 --replicas 100000 --horizon 30
    bpre charfn   --config env.json --seed 7 --T 100 --dt 0.05
    bpre density  --config env.json --seed 7 --T 200
    bpre bernoulli --lambda 0.5 --seed 7
    bpre verify   --config env.json --seed 7

Exit codes: 0 ok, 2 config error, 3 numeric refusal, 4 verification failure.
``--threads`` only affects speed; artifacts are byte-identical for any value.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from . import io
from .charfn import PathTooShortError, bound_suite, build_grid, CharFnGrid
from .density import invert_derivative, invert_direct, kde
from .env import EnvironmentProcess, sample_path
from .gf import classify, compose_F, extinction_prob
from .sim import atom_and_moments, simulate_W
from .smoothing import BernoulliMeasure, SmoothingSpec, bernoulli_charfn, decay_report, smoothing_iterate
from .verify import verify_suite

EXIT_OK, EXIT_CONFIG, EXIT_REFUSAL, EXIT_VERIFY = 0, 2, 3, 4

COMMANDS = ("classify", "simulate", "charfn", "density", "bernoulli", "verify")

DEFAULTS = {
    "horizon": 30,
    "replicas": 10_000,
    "path_length": 2000,
    "T": 200.0,
    "dt": 0.05,
    "tail_eps": 1e-4,
    "x_max": 20.0,
    "x_points": 801,
    "window": "fejer",
    "lambda": 0.5,
    "depth": 12,
    "iterations": 40,
    "particles": 100_000,
    "T_max": 1000.0,
    "ks_samples": 10_000,
}

_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_prob_vec = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "environment": {
            "type": "object",
            "required": ["states"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["iid", "markov"]},
                "states": {"type": "array", "minItems": 1, "items": {"type": "object"}},
                "weights": _prob_vec,
                "transition": {"type": "array", "items": _prob_vec, "minItems": 1},
                "initial": _prob_vec,
                "require_ergodic": {"type": "boolean"},
            },
        },
        "bernoulli": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        },
        "horizon": _posint,
        "replicas": _posint,
        "path_length": _posint,
        "T": _pos,
        "dt": _pos,
        "tail_eps": _pos,
        "w_mean_tail": _pos,
        "x_max": _pos,
        "x_points": {"type": "integer", "minimum": 2},
        "window": {"enum": ["fejer", "gaussian"]},
        "sigma_w": _pos,
        "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "depth": _posint,
        "iterations": _posint,
        "particles": _posint,
        "T_max": _pos,
        "ks_samples": _posint,
    },
}


class ConfigError(Exception):
    pass


class NumericRefusal(Exception):
    pass


def _line_of(text: str, path) -> int | None:
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = json.dumps(keys[-1])
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def load_config(path: str | None, overrides: dict) -> dict:
    """Merge defaults, the JSON file and command-line overrides, then validate."""
    text, cfg = "", {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror}") from e
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}:1: top level must be an object")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        line = _line_of(text, list(e.absolute_path)) if text else None
        loc = f"{path}:{line}" if line else (path or "<flags>")
        raise ConfigError(f"{loc}: at {where}: {e.message}") from e
    resolved = dict(DEFAULTS)
    resolved.update(cfg)
    return resolved


def _process(cfg) -> EnvironmentProcess:
    if "environment" not in cfg:
        raise ConfigError("this command needs an 'environment' entry")
    try:
        return EnvironmentProcess.from_json(cfg["environment"])
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"environment: {e}") from e


def _path(cfg, proc):
    return sample_path(proc, cfg["path_length"], [cfg["seed"], 0])


def _require_supercritical(proc, cfg):
    cls = classify(proc, 1, cfg["seed"])
    if not cls.supercritical:
        raise NumericRefusal(f"environment is not supercritical (mu = {cls.mu:g})")
    if "w_mean_tail" not in cfg and not math.isfinite(cls.kesten_stigum_estimate):
        raise NumericRefusal("Kesten-Stigum functional is infinite; pass an explicit w_mean_tail")
    return cls


def cmd_classify(cfg, out: Path, threads: int):
    proc = _process(cfg)
    cls = classify(proc, cfg["ks_samples"], [cfg["seed"], 3])
    path = _path(cfg, proc)
    ext = extinction_prob(path)
    io.write_csv(out / "extinction.csv", ["n", "q_n", "increment"], ext.rows(), cfg)
    io.write_json(out / "classify.json",
                  {"classification": cls.as_dict(), "extinction": {"q": ext.q, "converged": ext.converged,
                                                                    "depth": ext.depth}, "path_id": path.path_id},
                  cfg)
    print(json.dumps(io.to_jsonable({"mu": cls.mu, "supercritical": cls.supercritical,
                                     "degenerate_env": cls.degenerate_env, "q": ext.q})))
    return EXIT_OK


def _summary(sample, path):
    mom = atom_and_moments(sample)
    ext = extinction_prob(path)
    q_n = float(compose_F(path, 0.0, sample.horizon).real)
    return {**mom.as_dict(), "q": ext.q, "q_horizon": q_n, "replicas": sample.replicas,
            "horizon": sample.horizon, "path_id": path.path_id, "saturated": int(sample.saturated.sum())}


def cmd_simulate(cfg, out: Path, threads: int):
    proc = _process(cfg)
    path = _path(cfg, proc)
    sample = simulate_W(path, cfg["replicas"], cfg["horizon"], [cfg["seed"], 1], threads)
    io.write_csv(out / "replicas.csv", ["replica_id", "W_n", "extinct_at"],
                 ((i, w, (e if e >= 0 else None)) for i, (w, e) in enumerate(zip(sample.values, sample.extinct_at))),
                 cfg)
    io.write_json(out / "summary.json", _summary(sample, path), cfg)
    return EXIT_OK


def _grid(cfg, path, T, threads):
    try:
        return build_grid(path, T, cfg["dt"], cfg["tail_eps"], cfg.get("w_mean_tail", 1.0), threads=threads)
    except PathTooShortError as e:
        raise NumericRefusal(str(e)) from e


def cmd_charfn(cfg, out: Path, threads: int):
    proc = _process(cfg)
    _require_supercritical(proc, cfg)
    path = _path(cfg, proc)
    grid = _grid(cfg, path, cfg["T"], threads)
    sample = simulate_W(path, cfg["replicas"], cfg["horizon"], [cfg["seed"], 1], threads)
    try:
        rep = bound_suite(grid, path, sample)
    except PathTooShortError as e:
        raise NumericRefusal(str(e)) from e
    except ValueError as e:
        raise NumericRefusal(str(e)) from e
    io.write_csv(out / "charfn.csv", ["t", "re_psi", "im_psi", "abs_psi", "depth_used"], grid.rows(), cfg)
    io.write_json(out / "bounds.json", {"bounds": rep.as_dict(), "path_id": path.path_id}, cfg)
    return EXIT_OK


def _write_density(out, cfg, x, direct, deriv, kd, extra):
    f_k = kd.f if kd is not None else [None] * x.size
    rows = ((xi, a, (b if np.isfinite(b) else None), c) for xi, a, b, c in zip(x, direct.f, deriv.f, f_k))
    io.write_csv(out / "density.csv", ["x", "f_direct", "f_derivative", "f_kde"], rows, cfg)
    payload = {"direct": direct.summary(), "derivative": deriv.summary(), **extra}
    if kd is not None:
        payload["kde"] = kd.summary()
    io.write_json(out / "density.json", payload, cfg)


def cmd_density(cfg, out: Path, threads: int):
    xs = np.linspace(-cfg["x_max"], cfg["x_max"], cfg["x_points"])
    win = dict(window=cfg["window"], sigma_w=cfg.get("sigma_w"))
    if "bernoulli" in cfg or "environment" not in cfg:
        lam = cfg.get("bernoulli", {}).get("lambda", cfg["lambda"])
        grid = CharFnGrid.from_function(lambda t: bernoulli_charfn(lam, t), cfg["T"], cfg["dt"])
        direct = invert_direct(grid, 0.0, xs, **win)
        deriv = invert_derivative(grid, xs, **win)
        y = smoothing_iterate(SmoothingSpec.bernoulli(lam), np.zeros(cfg["particles"]), cfg["iterations"],
                              np.random.default_rng([cfg["seed"], 4]))
        kd = kde(y, x_grid=xs)
        _write_density(out, cfg, xs, direct, deriv, kd, {"lambda": lam})
        return EXIT_OK
    proc = _process(cfg)
    _require_supercritical(proc, cfg)
    path = _path(cfg, proc)
    grid = _grid(cfg, path, cfg["T"], threads)
    q = extinction_prob(path).q
    x = np.linspace(0, cfg["x_max"], cfg["x_points"])
    direct = invert_direct(grid, q, x, **win)
    deriv = invert_derivative(grid, x, **win)
    sample = simulate_W(path, cfg["replicas"], cfg["horizon"], [cfg["seed"], 1], threads)
    try:
        kd = kde(sample, x_grid=x)
    except ValueError:
        kd = None
    _write_density(out, cfg, x, direct, deriv, kd, {"q": q, "path_id": path.path_id})
    return EXIT_OK


def cmd_bernoulli(cfg, out: Path, threads: int):
    lam = cfg.get("bernoulli", {}).get("lambda", cfg["lambda"])
    extra = np.pi / lam ** np.arange(0, 60)
    rep = decay_report(lambda t: bernoulli_charfn(lam, t), cfg["T_max"], extra_points=extra[extra <= cfg["T_max"]])
    io.write_csv(out / "decay.csv", ["window_lo", "window_hi", "sup_abs_psi", "argmax"], rep.rows(), cfg)
    y = smoothing_iterate(SmoothingSpec.bernoulli(lam), np.zeros(cfg["particles"]), cfg["iterations"],
                          np.random.default_rng([cfg["seed"], 4]))
    meas = BernoulliMeasure(lam, cfg["depth"])
    emp = np.searchsorted(np.sort(y), meas.locations, side="right") / y.size
    ks_atoms = float(np.max(np.abs(emp - np.cumsum(meas.weights)))) if lam < 0.5 else None
    payload = {"lambda": lam, "trend": rep.trend, "particles": cfg["particles"], "iterations": cfg["iterations"],
               "particle_mean": float(y.mean()), "particle_var": float(y.var()),
               "ks_uniform": float(stats.kstest(y, stats.uniform(-2, 4).cdf).statistic) if lam == 0.5 else None,
               "ks_finite_depth": ks_atoms}
    io.write_json(out / "bernoulli.json", payload, cfg)
    return EXIT_OK


def cmd_verify(cfg, out: Path, threads: int):
    proc = _process(cfg)
    path = _path(cfg, proc)
    try:
        checks = verify_suite(path, cfg["replicas"], cfg["horizon"], cfg["seed"], threads)
    except PathTooShortError as e:
        raise NumericRefusal(str(e)) from e
    io.write_csv(out / "verify.csv", ["name", "status", "margin", "tolerance"], (c.row() for c in checks), cfg)
    io.write_json(out / "verify.json", {"checks": [dict(zip(("name", "status", "margin", "tolerance"), c.row()),
                                                        detail=c.detail) for c in checks]}, cfg)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {c.status:<7}  margin={io.fmt(c.margin)}  tol={io.fmt(c.tolerance)}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_VERIFY


HANDLERS = {"classify": cmd_classify, "simulate": cmd_simulate, "charfn": cmd_charfn,
            "density": cmd_density, "bernoulli": cmd_bernoulli, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpre", description="Quenched branching processes in random environment.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (does not change results)")
    for name, typ in (("horizon", int), ("replicas", int), ("path-length", int), ("T", float), ("dt", float),
                      ("tail-eps", float), ("x-max", float), ("x-points", int), ("lambda", float), ("depth", int),
                      ("iterations", int), ("particles", int), ("T-max", float), ("sigma-w", float)):
        p.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    p.add_argument("--window", choices=("fejer", "gaussian"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "out", "threads")}
    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out, max(1, args.threads))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericRefusal as e:
        print(f"numeric refusal: {e}", file=sys.stderr)
        return EXIT_REFUSAL


if __name__ == "__main__":
    sys.exit(main())
