"""Command-line front end.

Every command writes ``<out>/<command>.csv`` (header row first) and
``<out>/manifest.json``.  Exit status: 0 when every check passes, 2 when a
check fails beyond its margin, 1 on usage or domain errors.

Parameters come from ``--config FILE`` (INI: a ``[model]`` section with
``family=...`` and its parameters, a ``[run]`` section with any long flag
name, dashes or underscores) and are overridden by flags.  The seed is
taken from ``--seed``, then the config, then ``$POLYMERLAB_SEED``.

CSV columns per command::

    free-energy   beta, n, M, seed, mean, stderr, bound, margin, passed
    scaling       beta, n, M, seed, mean, stderr, excluded
    wat           check, model, beta, n, M, seed, c, F_n, estimate, stderr, bound, margin, passed
    fkg           t, u, beta, n, M, seed, mean, stderr, margin, passed
    path          t, beta, n, M, seed, mean, stderr, margin, passed
    pinning       n, log_pinning_per_n, f_hat, f_raw
    ibp           model, s, residual, tolerance, passed
    concentration n, beta, x, upper, lower, reference, k_hat, k_hat_piecewise
    gaussian-eq   check, model, beta, n, M, seed, h, c, derivative, ..., margin, passed
    selftest      suite, instances, max_abs_error, tolerance, passed
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import warnings
from pathlib import Path

from . import experiments as ex
from .env import DomainError, EnvModel, Gaussian, ibp_residual, model_from_mapping, parse_model_spec, shipped_models
from .mc import Ensemble, default_workers
from .oracles import oracle_suites
from .pinning import exact_free_energy, pinning_free_energy
from .replica import InterpolationPoint, fkg_gap, path_check
from .report import write_csv, write_manifest

SEED_ENV = "POLYMERLAB_SEED"
COMMANDS = ("free-energy", "scaling", "wat", "fkg", "path", "pinning", "ibp",
            "concentration", "gaussian-eq", "selftest")
STOCHASTIC = {"free-energy", "scaling", "wat", "fkg", "path", "concentration", "gaussian-eq"}
IBP_TOLERANCE = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# (flag, type, default, help)
_RUN_FLAGS = [
    ("beta", float, None, "inverse temperature"),
    ("betas", _floats, None, "comma-separated beta grid"),
    ("n", int, None, "path length"),
    ("ns", _ints, None, "comma-separated path lengths (concentration)"),
    ("m", int, None, "environment replicates"),
    ("seed", int, None, "master seed (or $POLYMERLAB_SEED)"),
    ("t", float, None, "pinning parameter (pinning)"),
    ("n-max", int, None, "pinning length"),
    ("t-grid", _floats, None, "comma-separated t grid (fkg, path)"),
    ("u-grid", _floats, None, "comma-separated u grid (fkg)"),
    ("h", float, None, "finite-difference step (gaussian-eq)"),
    ("slope-min", float, None, "lower end of accepted scaling slope"),
    ("slope-max", float, None, "upper end of accepted scaling slope"),
    ("variance-factor", float, None, "accepted ratio of n*Var across lengths"),
    ("instances", int, None, "random instances per oracle suite (selftest)"),
]

_MODEL_FLAGS = [
    ("var", "variance"), ("rate", "rate"), ("shape", "shape"), ("scale", "scale"),
    ("a-plus", "a_plus"), ("a-minus", "a_minus"), ("p-plus", "p_plus"),
    ("mgf-bound", "mgf_bound"), ("factor", "factor"),
]

DEFAULTS = {
    "free-energy": {"beta": 0.5, "n": 64, "m": 400},
    "scaling": {"betas": list(ex.DEFAULT_SCALING_BETAS), "m": 400,
                "slope_min": 3.2, "slope_max": 4.8},
    "wat": {"beta": 0.3, "n": 50, "m": 1000},
    "fkg": {"beta": 0.3, "n": 16, "m": 2000, "t_grid": [0.1, 0.5, 1.0],
            "u_grid": [0.0, 1.0, 2.0]},
    "path": {"beta": 0.3, "n": 16, "m": 2000, "t_grid": [0.5, 1.0]},
    "pinning": {"t": 0.4, "n_max": 4000},
    "ibp": {},
    "concentration": {"beta": 0.5, "ns": [32, 64], "m": 2000, "variance_factor": 2.5},
    "gaussian-eq": {"beta": 0.4, "n": 32, "m": 2000, "h": 0.02},
    "selftest": {"seed": 0, "instances": 200},
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polymerlab", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI config file with [model] and [run] sections")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: ./out)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: available cores); results do not depend on it")
    p.add_argument("--model", help="environment family: gaussian, centered_poisson, "
                                   "centered_gamma, compound_two_atom")
    p.add_argument("--model-spec", help='full spec, e.g. "family=centered_poisson, rate=1.0"')
    for flag, key in _MODEL_FLAGS:
        p.add_argument(f"--{flag}", type=float, default=None, dest=f"model_{key}",
                       help=f"model parameter {key}")
    for flag, typ, default, help_ in _RUN_FLAGS:
        p.add_argument(f"--{flag}", type=typ, default=default, help=help_)
    return p


def _read_config(path: Path | None) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise UsageError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}".replace("\n", " "))
    model = dict(cp["model"]) if cp.has_section("model") else {}
    run = {}
    if cp.has_section("run"):
        types = {f.replace("-", "_"): typ for f, typ, _, _ in _RUN_FLAGS}
        for k, v in cp["run"].items():
            key = k.replace("-", "_")
            if key in ("out", "workers"):
                run[key] = v
                continue
            if key not in types:
                raise UsageError(f"unknown key {k!r} in [run] section of {path}")
            try:
                run[key] = types[key](v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for {k!r} in {path}: {exc}")
    return model, run


def resolve(args: argparse.Namespace) -> tuple[dict, EnvModel | None]:
    """Merge defaults < config < flags; returns the run config and the model."""
    cfg_model, cfg_run = _read_config(args.config)
    run = dict(DEFAULTS[args.command])
    run.update({k: v for k, v in cfg_run.items() if k not in ("out", "workers")})
    for flag, *_ in _RUN_FLAGS:
        key = flag.replace("-", "_")
        val = getattr(args, key)
        if val is not None:
            run[key] = val
    if args.command in STOCHASTIC and run.get("seed") is None:
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is None:
            raise UsageError(f"a seed is required: pass --seed, set it in the config, or set {SEED_ENV}")
        try:
            run["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer")

    model_section = dict(cfg_model)
    if args.model_spec:
        model_section = dict(parse_model_spec(args.model_spec).spec())
    if args.model:
        if model_section.get("family") != args.model:
            model_section = {"family": args.model}
    for _, key in _MODEL_FLAGS:
        val = getattr(args, f"model_{key}")
        if val is not None:
            model_section[key] = val
    model = None
    if model_section:
        model = model_from_mapping(model_section)
    elif args.command not in ("pinning", "ibp", "selftest"):
        model = Gaussian(1.0)
    run["out"] = str(args.out or cfg_run.get("out") or "out")
    return run, model


def _need(run, *keys):
    for k in keys:
        if run.get(k) is None:
            raise UsageError(f"missing parameter --{k.replace('_', '-')}")


def _run_command(cmd: str, run: dict, model: EnvModel | None, workers: int):
    """Returns (csv rows, manifest results, passed)."""
    seed = run.get("seed")
    if cmd == "free-energy":
        _need(run, "n", "m")
        betas = run.get("betas") or [run["beta"]]
        rows, ok = [], True
        for b in betas:
            est = ex.estimate_pn(model, b, run["n"], run["m"], seed, workers)
            margin = 0.0 - est.mean + ex.SIGMAS * est.stderr
            ok &= margin >= 0
            rows.append({"beta": b, "n": run["n"], "M": run["m"], "seed": seed,
                         "mean": est.mean, "stderr": est.stderr, "bound": 0.0,
                         "margin": margin, "passed": margin >= 0})
        return rows, {"estimates": rows}, ok

    if cmd == "scaling":
        res = ex.scaling_fit(model, run["betas"], run["m"], seed, workers)
        rows = [{"beta": b, "n": n, "M": e.replicates, "seed": seed, "mean": e.mean,
                 "stderr": e.stderr, "excluded": b in res.excluded} for b, n, e in res.points]
        lo, hi = run["slope_min"], run["slope_max"]
        ok = lo <= res.slope <= hi
        return rows, {"slope": res.slope, "slope_stderr": res.slope_stderr,
                      "slope_ci95": list(res.slope_ci), "intercept": res.intercept,
                      "prefactor": res.prefactor, "accepted_slope": [lo, hi],
                      "caveat": res.caveat, "excluded": res.excluded}, ok

    if cmd == "wat":
        _need(run, "beta", "n", "m")
        r = ex.wat_check(model, run["beta"], run["n"], run["m"], seed, workers)
        return [r.row()], {"check": r.row(), "note": r.note}, r.passed

    if cmd == "fkg":
        ens = Ensemble(run["n"], run["m"], seed, workers)
        pts = [InterpolationPoint(t, u, run["beta"]) for t in run["t_grid"] for u in run["u_grid"]]
        ests = fkg_gap(ens, pts, model)
        rows = []
        for pt, e in zip(pts, ests):
            margin = e.mean + ex.SIGMAS * e.stderr
            rows.append({"t": pt.t, "u": pt.u, "beta": pt.beta, "n": ens.n, "M": ens.replicates,
                         "seed": seed, "mean": e.mean, "stderr": e.stderr, "margin": margin,
                         "passed": margin >= 0})
        return rows, {"points": len(rows)}, all(r["passed"] for r in rows)

    if cmd == "path":
        ens = Ensemble(run["n"], run["m"], seed, workers)
        rows = []
        for t in run["t_grid"]:
            e = path_check(ens, t, run["beta"], model)
            margin = -e.mean + ex.SIGMAS * e.stderr
            rows.append({"t": t, "beta": run["beta"], "n": ens.n, "M": ens.replicates,
                         "seed": seed, "mean": e.mean, "stderr": e.stderr, "margin": margin,
                         "passed": margin >= 0})
        return rows, {"points": len(rows)}, all(r["passed"] for r in rows)

    if cmd == "pinning":
        curve = pinning_free_energy(run["t"], run["n_max"])
        rows = [{"n": m, "log_pinning_per_n": v, "f_hat": curve.f_hat, "f_raw": curve.raw}
                for m, v in curve.values]
        t = run["t"]
        ratio = curve.f_hat / (t * t / 2) if t > 0 else math.nan
        return rows, {"t": t, "n_max": run["n_max"], "f_hat": curve.f_hat, "f_raw": curve.raw,
                      "f_exact": exact_free_energy(t), "ratio_to_half_t_squared": ratio}, None

    if cmd == "ibp":
        models = [model] if model is not None else list(shipped_models())
        rows = []
        for m in models:
            for s in (0.0, m.mgf_bound / 8, m.mgf_bound / 4, m.mgf_bound / 2):
                res = ibp_residual(m, s)
                rows.append({"model": str(m), "s": s, "residual": res,
                             "tolerance": IBP_TOLERANCE, "passed": res <= IBP_TOLERANCE})
        return rows, {"max_residual": max(r["residual"] for r in rows)}, all(r["passed"] for r in rows)

    if cmd == "concentration":
        ns = run["ns"]
        if len(ns) != 2:
            raise UsageError("--ns needs exactly two lengths")
        vs = ex.variance_scaling(model, run["beta"], tuple(ns), run["m"], seed, workers,
                                 run["variance_factor"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tails = ex.concentration_tails(model, run["beta"], ns[-1], run["m"], seed, workers)
        return list(tails.rows()), {"variance_scaling": vs.row(), "k_hat": tails.k_hat,
                                    "k_hat_piecewise": tails.k_hat_piecewise,
                                    "dominated": tails.dominated, "n_var": tails.n_var}, vs.passed

    if cmd == "gaussian-eq":
        r = ex.gaussian_equality_check(run["beta"], run["n"], run["m"], seed, model,
                                       run["h"], workers)
        return [r.row()], {"check": r.row()}, r.passed

    if cmd == "selftest":
        rows = oracle_suites(run["seed"], run["instances"], max_n_partition=8,
                             max_n_phi=6, max_n_pinning=8)
        for r in rows:
            r.pop("seconds")
        return rows, {"suites": rows}, all(r["passed"] for r in rows)

    raise UsageError(f"unknown command {cmd}")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg, model = resolve(args)
        workers = args.workers or default_workers()
        if workers < 1:
            raise UsageError("--workers must be >= 1")
        rows, results, passed = _run_command(args.command, cfg, model, workers)
    except UsageError as exc:
        print(f"polymerlab: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError) as exc:
        kind = "domain error" if isinstance(exc, DomainError) else "error"
        print(f"polymerlab: {kind}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    out = Path(cfg.pop("out"))
    config = {**cfg, "model": model.spec() if model is not None else None}
    csv_name = f"{args.command}.csv"
    write_csv(out / csv_name, rows)
    write_manifest(out / "manifest.json", args.command, config, results, csv_name, passed)
    status = "PASS" if passed else ("FAIL" if passed is False else "DONE")
    print(f"{args.command}: {status} -> {out / csv_name}")
    return 0 if passed is not False else 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
