"""Command-line front end: ``hazdiff fit`` and ``hazdiff simulate``.

Exit codes: 0 on success, 2 for usage or input errors, 3 when estimation
fails numerically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import ALGORITHM
from .data import DataError, load_csv
from .nuisance import NuisanceError, parse_terms, read_external_nuisance
from .pipeline import fit
from .scores import ScoreConfig, ScoreError
from .simulate import SCENARIOS, ScenarioError, ScenarioSpec, run_monte_carlo, summarize_to_table
from .solvers import ConvergenceError
from .variance import VarianceError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class UsageError(Exception):
    pass


def _plain(obj):
    """Convert numpy containers to JSON-ready Python values; NaN becomes ``null``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(doc) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(_plain(doc), indent=2, allow_nan=False) + "\n"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _run_manifest(manifest: dict, started: float, jobs: int | None = None) -> dict:
    run = dict(manifest, duration_seconds=time.perf_counter() - started)
    if jobs is not None:
        run["jobs"] = jobs
    return run


def cmd_fit(args) -> int:
    started = time.perf_counter()
    covariates = [c for c in args.covariates.split(",") if c] if args.covariates else None
    sample = load_csv(args.data, covariates=covariates, tau=args.tau)
    if args.ps == "external" and not args.pi_file:
        raise UsageError("--ps external needs --pi-file")
    if args.censor == "external" and not args.sc_file:
        raise UsageError("--censor external needs --sc-file")
    method = ScoreConfig(args.score).method
    try:
        parse_terms(args.ps_spec, sample.covariate_names)
    except NuisanceError as err:
        raise UsageError(f"--ps-spec: {err}") from None
    if method in ("score1s", "score2s") and args.censor not in (None, "none"):
        raise UsageError(f"--score {args.score} is a simplified score; use --censor none")
    external = None
    if args.ps == "external" or args.censor == "external":
        ext_ps, ext_sc = read_external_nuisance(
            args.pi_file if args.ps == "external" else None,
            args.sc_file if args.censor == "external" else None, sample.n)
        external = (ext_ps, ext_sc)
    config = ScoreConfig(method, gamma_design=args.gamma_design)
    censor = args.censor
    est = fit(sample, config, ps_spec=args.ps_spec, censor=censor, variance=args.variance,
              boot_b=args.boot_b, seed=args.seed, jobs=args.jobs, external=external)
    resolved = {
        "score": method, "ps": args.ps, "ps_spec": args.ps_spec, "censor": censor or "default",
        "variance": args.variance, "boot_b": args.boot_b if args.variance == "bootstrap" else None,
        "gamma_design": args.gamma_design, "covariates": list(sample.covariate_names), "tau": sample.tau,
        "rng": ALGORITHM,
    }
    manifest = {"command": "fit", "config": resolved, "version": __version__, "seed": args.seed,
                "input": {"path": Path(args.data).name, "sha256": _sha256(args.data)}}
    if args.pi_file and args.ps == "external":
        manifest["input"]["pi_sha256"] = _sha256(args.pi_file)
    if args.sc_file and args.censor == "external":
        manifest["input"]["sc_sha256"] = _sha256(args.sc_file)
    doc = {
        "method": est.method, "beta": est.beta, "se": est.se, "ci95": est.ci95,
        "covariance": est.covariance, "variance_source": est.variance_source,
        "diagnostics": est.diagnostics, "nuisance": est.nuisance, "manifest": manifest,
    }
    _emit(dumps(doc), args.out)
    run = _run_manifest(manifest, started, args.jobs)
    if args.out:
        Path(args.out + ".run.json").write_text(dumps(run), encoding="utf-8")
    else:
        print(f"hazdiff: fit finished in {run['duration_seconds']:.2f}s", file=sys.stderr)
    return EXIT_OK


def _read_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{path}: no such config file")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as err:
        raise UsageError(f"{path}: cannot parse config: {err}") from None


_SIM_DEFAULTS = {"scenario": None, "n": 1000, "reps": 500, "seed": 0,
                 "methods": "score1s,score2s,regression", "bootstrap_b": 100}


def _resolve_simulation(args) -> dict:
    cfg = dict(_SIM_DEFAULTS)
    if args.config:
        extra = _read_config(args.config)
        unknown = set(extra) - set(cfg) - {"jobs"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(extra)
    for key in _SIM_DEFAULTS:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["methods"], (list, tuple)):
        cfg["methods"] = ",".join(cfg["methods"])
    if cfg["scenario"] is None:
        raise UsageError("--scenario is required (or give it in --config)")
    if cfg["scenario"] not in SCENARIOS:
        raise UsageError(f"unknown scenario {cfg['scenario']}; valid ids are {', '.join(map(str, SCENARIOS))}")
    if cfg["reps"] < 1:
        raise UsageError("--reps must be at least 1")
    if cfg["n"] < 10:
        raise UsageError("--n must be at least 10")
    return cfg


def _default_jobs(args, cfg_jobs=None) -> int:
    if args.jobs is not None:
        return args.jobs
    env = os.environ.get("HAZDIFF_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"HAZDIFF_JOBS must be an integer, got {env!r}") from None
    return int(cfg_jobs or 1)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg = _resolve_simulation(args)
    cfg_jobs = _read_config(args.config).get("jobs") if args.config else None
    jobs = _default_jobs(args, cfg_jobs)
    spec = ScenarioSpec(cfg["scenario"], cfg["n"], cfg["seed"])
    summary = run_monte_carlo(spec, cfg["methods"], cfg["reps"], jobs=jobs, bootstrap_b=cfg["bootstrap_b"])
    manifest = {"command": "simulate", "config": dict(cfg, rng=ALGORITHM), "version": __version__,
                "seed": cfg["seed"]}
    table = summarize_to_table(summary, "text")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summarize_to_table(summary, "csv", decimals=None), encoding="utf-8")
        (out / "table.txt").write_text(table, encoding="utf-8")
        (out / "summary.json").write_text(dumps({**summary.to_dict(), "manifest": manifest}), encoding="utf-8")
        (out / "manifest.json").write_text(dumps(_run_manifest(manifest, started, jobs)), encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazdiff", description="Hazard-difference estimation for competing risks.")
    parser.add_argument("--version", action="version", version=f"hazdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate hazard differences from a CSV file")
    f.add_argument("data", help="CSV with time, status, treatment and covariate columns")
    f.add_argument("--score", default="2s", choices=["1", "2", "1s", "2s", "reg"])
    f.add_argument("--ps", default="logistic", choices=["logistic", "external"])
    f.add_argument("--ps-spec", default=None, help="propensity terms, e.g. z1,z2,z1:z2")
    f.add_argument("--censor", default=None, choices=["none", "cox", "external"],
                   help="censoring model (default: none for 1s/2s, cox for 1/2)")
    f.add_argument("--variance", default="model", choices=["model", "bootstrap", "none"])
    f.add_argument("--boot-b", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--covariates", default=None, help="comma-separated covariate columns")
    f.add_argument("--tau", type=float, default=None)
    f.add_argument("--gamma-design", default="z", choices=["z", "az"])
    f.add_argument("--pi-file", default=None)
    f.add_argument("--sc-file", default=None)
    f.add_argument("--out", default=None, help="write the JSON result here instead of stdout")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    s.add_argument("--scenario", type=int, default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--methods", default=None, help="e.g. score1s,score2s,regression,score1+boot")
    s.add_argument("--bootstrap-b", dest="bootstrap_b", type=int, default=None)
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default $HAZDIFF_JOBS or 1)")
    s.add_argument("--config", default=None, help="JSON or TOML file with the same keys")
    s.add_argument("--out-dir", default=None)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, DataError, ScenarioError, FileNotFoundError) as err:
        print(f"hazdiff: input error [{type(err).__module__.rsplit('.', 1)[-1]}]: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ScoreError, NuisanceError, VarianceError, ConvergenceError, np.linalg.LinAlgError,
            ArithmeticError) as err:
        print(f"hazdiff: estimation failed [{type(err).__module__.rsplit('.', 1)[-1]}]: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
