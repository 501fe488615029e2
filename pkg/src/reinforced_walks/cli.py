"""Command-line entry point.

    reinforced-walks --print-config > run.toml
    reinforced-walks simulate --config run.toml --out results/
    reinforced-walks verify --config run.toml --theorem sync-rate --out results/

Exit codes: 0 success / test passed, 2 test failed, 3 invalid configuration,
4 size budget exceeded.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analytics as an
from . import oracle
from .applications import UrnSpec, graph_to_schedule, pa_trajectory, urn_to_schedule, write_degree_csv
from .ensemble import (
    EnsembleResult,
    TimeWindow,
    grid_from_dict,
    manifest,
    moment_stream,
    run_ensemble,
    union,
    write_manifest,
    write_moments_csv,
    write_snapshots_csv,
)
from .errors import BudgetExceeded, GridMismatch, InvalidParameters, ReinforcedWalksError, ScheduleExhausted
from .model import ModelParams

log = logging.getLogger("reinforced_walks")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3, 4

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "replications": 1000,
    "model": {
        "n_walkers": 2,
        "rho": 1.0,
        "alpha": 0.5,
        "q": 0.5,
        "schedule": {"kind": "power", "c": 1.0, "gamma": 0.75, "offset": 2, "clamp": False},
        "initial": {"kind": "deterministic", "values": [0.5]},
    },
    "grid": {"kind": "geometric", "base": 100, "ratio": 1.333521432163324, "count": 17, "extra_steps": [0], "terminal": 100000},
    "verify": {
        "n": 10000,
        "t": [0.5, 1.0, 2.0],
        "cov_t": [0.5, 1.0, 1.5, 2.0],
        "level": 0.01,
        "window": [1000, 100000],
        "slope_tol": 0.1,
        "prefactor_tol": 0.15,
        "separation": 0.15,
        "polarization_threshold": 0.02,
        "polarization_floor": 0.05,
        "q_tol": 0.01,
        "sync_threshold": 0.01,
        "fixation_fraction": 0.95,
        "expect_fixation": True,
        "cov_tol": 0.2,
    },
    "oracle": {"horizon": 4, "z0": [0.5]},
}

THEOREM_NAMES = (
    "polarization",
    "convergence-q",
    "exact-variance",
    "fixation",
    "sync",
    "sync-rate",
    "conv-rate",
    "rate-separation",
    "fclt-z",
    "fclt-sync",
    "fclt-q",
    "fclt-sync-q",
    "covariance",
)
FCLT_THEOREMS = {"fclt-z": "fluct_z", "fclt-sync": "sync_rho1", "fclt-q": "fluct_q", "fclt-sync-q": "sync_q"}


class ConfigError(ReinforcedWalksError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("schedule", "initial", "grid"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None) -> dict[str, Any]:
    """Read a TOML config (or a JSON manifest written by ``simulate``) over the defaults."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    p = Path(path)
    try:
        if p.suffix == ".json":
            data = json.loads(p.read_text())
            data = data.get("config", data)
        else:
            with open(p, "rb") as fh:
                data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from None
    unknown = set(data) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    return _merge(DEFAULT_CONFIG, data)


def apply_overrides(cfg: dict[str, Any], args: argparse.Namespace) -> dict[str, Any]:
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        cfg["replications"] = args.reps
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg['seed']!r}")
    if not isinstance(cfg["replications"], int) or cfg["replications"] < 1:
        raise ConfigError(f"replications must be a positive integer, got {cfg['replications']!r}")
    return cfg


def params_from_config(cfg: dict[str, Any]) -> ModelParams:
    try:
        return ModelParams.from_dict(cfg["model"])
    except KeyError as exc:
        raise ConfigError(f"missing config field model.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ReinforcedWalksError):
            raise
        raise ConfigError(f"invalid model config: {exc}") from None


def grid_from_config(cfg: dict[str, Any]):
    try:
        return grid_from_dict(cfg["grid"])
    except KeyError as exc:
        raise ConfigError(f"missing config field grid.{exc.args[0]}") from None


# ---------------------------------------------------------------------------
# commands


def _run(cfg, grid, threads, record_draws=False) -> EnsembleResult:
    params = params_from_config(cfg)
    return run_ensemble(params, grid, cfg["replications"], cfg["seed"], record_draws=record_draws, threads=threads)


def _out(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(cfg, out_dir, threads, fmt="csv") -> int:
    res = _run(cfg, grid_from_config(cfg), threads)
    out = _out(out_dir)
    recs = moment_stream(res)
    if fmt == "csv":
        write_snapshots_csv(res, out / "snapshots.csv")
        write_moments_csv(recs, out / "moments.csv")
    else:
        data = {
            "steps": [int(s) for s in res.steps],
            "reduced": res.reduced,
            "snapshots": res.snapshots.tolist(),
            "moments": [r.__dict__ for r in recs],
        }
        (out / "snapshots.json").write_text(json.dumps(data) + "\n")
    write_manifest(res, out / "manifest.json", {"config": cfg})
    log.info("wrote %d replications x %d steps to %s", res.replications, len(res.steps), out)
    return EXIT_OK


def _verify_grid(cfg, theorem: str, params: ModelParams):
    grid = grid_from_config(cfg)
    v = cfg["verify"]
    if theorem in FCLT_THEOREMS or theorem == "covariance":
        g = params.schedule.gamma
        n = int(v["n"])
        extra = []
        if theorem in ("fclt-z", "covariance"):
            ts = v["cov_t"] if theorem == "covariance" else v["t"]
            extra = [an.fluct_index(n, t) for t in ts]
        else:
            extra = list(TimeWindow(n, g, tuple(v["t"])).steps())
        grid = union(grid, extra)
    return grid


def run_verification(cfg, theorem: str, threads) -> list[an.TestReport]:
    if theorem not in THEOREM_NAMES:
        raise ConfigError(f"unknown theorem {theorem!r}; choose from {', '.join(THEOREM_NAMES)}")
    params = params_from_config(cfg)
    v = cfg["verify"]
    res = _run(cfg, _verify_grid(cfg, theorem, params), threads, record_draws=theorem == "fixation")
    if theorem == "polarization":
        return [an.polarization_test(res, v["polarization_threshold"], v["polarization_floor"])]
    if theorem == "convergence-q":
        return [an.convergence_to_q_test(res, v["q_tol"])]
    if theorem == "exact-variance":
        return [an.exact_variance_test(res)]
    if theorem == "fixation":
        return [an.fixation_test(res, v["fixation_fraction"], v["expect_fixation"])]
    if theorem == "sync":
        return [an.synchronization_test(res, v["sync_threshold"])]
    if theorem in ("sync-rate", "conv-rate", "rate-separation"):
        lo, hi = v["window"]
        tab = an.rate_table(res, lo, hi)
        if theorem == "sync-rate":
            return [an.sync_rate_test(tab, params, v["slope_tol"], v["prefactor_tol"])]
        if theorem == "conv-rate":
            return [an.conv_rate_test(tab, params, v["slope_tol"], v["prefactor_tol"])]
        return [an.rate_separation_test(tab, params.schedule.gamma, v["separation"])]
    n = int(v["n"])
    if theorem == "covariance":
        spec = an.VtSpec.from_params("fluct_z", params)
        spec.check()
        ts = v["cov_t"]
        x = an.scaled_fluct_process(res, spec, n, ts)
        calib = an.simulate_time_changed_bm(an.plugin_variances(res, spec, n, ts, horizon_corrected=False), cfg["seed"])
        cal = an.covariance_structure_test(
            calib, an.fluct_covariance_target(res, spec, n, ts, horizon_corrected=False), v["cov_tol"], "covariance-calibration"
        )
        rep = an.covariance_structure_test(x, an.fluct_covariance_target(res, spec, n, ts), v["cov_tol"])
        return [cal, rep]
    spec = an.VtSpec.from_params(FCLT_THEOREMS[theorem], params)
    spec.check()
    return an.fclt_marginal_tests(res, spec, n, v["t"], v["level"])


def cmd_verify(cfg, theorem, out_dir, threads) -> int:
    reports = run_verification(cfg, theorem, threads)
    out = _out(out_dir)
    payload = {"theorem": theorem, "passed": all(r.passed for r in reports), "reports": [r.to_dict() for r in reports]}
    (out / f"report-{theorem}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for r in reports:
        log.info("%s: statistic=%.6g threshold=%.6g %s", r.name, r.statistic, r.threshold, "PASS" if r.passed else "FAIL")
    return EXIT_OK if payload["passed"] else EXIT_FAIL


def cmd_rates(cfg, out_dir, threads) -> int:
    params = params_from_config(cfg)
    res = _run(cfg, grid_from_config(cfg), threads)
    lo, hi = cfg["verify"]["window"]
    tab = an.rate_table(res, lo, hi)
    out = _out(out_dir)
    tab.write_csv(out / "rates.csv")
    s_th, c_th = an.theoretical_slopes(params.schedule.gamma)
    s_pref, c_pref = an.theoretical_prefactors(params, tab.mean_zz)
    with open(out / "slopes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "slope", "intercept", "r2", "prefactor", "expected_slope", "expected_prefactor"])
        for name, fit, pref, es, ep in (
            ("sync_msq", tab.sync_fit, tab.sync_prefactor, s_th, s_pref),
            ("conv_msq", tab.conv_fit, tab.conv_prefactor, c_th, c_pref),
        ):
            w.writerow([name, repr(fit.slope), repr(fit.intercept), repr(fit.r2), repr(pref), repr(es), repr(ep)])
    return EXIT_OK


def cmd_graph(delta, n_max, seed, lam, out_dir) -> int:
    traj = pa_trajectory(delta, n_max, seed)
    sched = graph_to_schedule(traj, lam)
    out = _out(out_dir)
    write_degree_csv(traj, out / "degrees.csv")
    rates = sched.values(2, sched.horizon)
    with open(out / "schedule.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "max_degree", "r_n"])
        for k, (d, r) in enumerate(zip(traj.max_degrees, rates)):
            w.writerow([k + 2, int(d), repr(float(r))])
    return EXIT_OK


def cmd_urn(spec_path, horizon, out_dir) -> int:
    try:
        with open(spec_path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read urn spec {spec_path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse urn spec {spec_path}: {exc}") from None
    try:
        spec = UrnSpec.from_dict(data.get("urn", data))
    except KeyError as exc:
        raise ConfigError(f"missing urn field {exc.args[0]}") from None
    sched, rho, q = urn_to_schedule(spec, horizon)
    out = _out(out_dir)
    with open(out / "urn_schedule.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "r_n", "rho", "q"])
        for n, r in enumerate(sched.rates):
            w.writerow([n, repr(float(r)), repr(rho), "" if q is None else repr(q)])
    return EXIT_OK


def cmd_oracle(cfg, out_dir) -> int:
    params = params_from_config(cfg)
    oc = cfg["oracle"]
    horizon = int(oc["horizon"])
    z0 = np.asarray(oc["z0"], dtype=np.float64)
    if z0.size == 1:
        z0 = np.full(params.n_walkers, float(z0[0]))
    out = _out(out_dir)
    if params.n_walkers <= oracle.MAX_WALKERS and horizon <= oracle.MAX_HORIZON:
        oracle.write_distribution_csv(oracle.enumerate_distribution(params, z0, horizon), out / "distribution.csv")
    mp = oracle.exact_moments(params, z0, horizon)
    cols = {"n": mp.steps, "mean_zbar": mp.mean_zbar(), "var_zbar": mp.var_zbar(), "mean_sq_sync": mp.mean_sq_sync()}
    if params.rho == 1:
        m = float(mp.mean_zbar()[0])
        x0 = m * (1 - m)  # z0 is deterministic; equals 1/4 - Var[Z_0] when m = 1/2
        if params.alpha == 0 or params.n_walkers == 1:
            cols["x_exact_alpha0"] = oracle.variance_recursion_alpha0(x0, params.schedule, horizon)
        if params.alpha > 0:
            lo, hi = oracle.variance_bounds_interacting(x0, params.schedule, params.alpha, params.n_walkers, horizon)
            cols["x_lower"], cols["x_upper"] = lo, hi
    with open(out / "moments_exact.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reinforced-walks", description=__doc__.splitlines()[0])
    parser.add_argument("--print-config", action="store_true", help="print the effective configuration as TOML and exit")
    parser.add_argument("--config", help="TOML config (used with --print-config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="TOML config file or JSON manifest")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--reps", type=int, help="number of replications")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    common(sub.add_parser("simulate", help="run an ensemble and export snapshots"))
    p = sub.add_parser("verify", help="run one theorem check; exit 0 iff it passes")
    common(p)
    p.add_argument("--theorem", required=True, help=", ".join(THEOREM_NAMES))
    common(sub.add_parser("rates", help="synchronization / convergence rate tables"))
    p = sub.add_parser("graph", help="grow a preferential-attachment tree and derive r_n")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--n-max", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--out", default=".")
    p = sub.add_parser("urn", help="step sizes and kernel of a balanced urn")
    p.add_argument("--spec", required=True, help="TOML urn spec")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out", default=".")
    common(sub.add_parser("oracle", help="exact distributions and moment recursions"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.print_config:
            sys.stdout.write(tomli_w.dumps(load_config(args.config)))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        if args.command == "graph":
            return cmd_graph(args.delta, args.n_max, args.seed, args.lam, args.out)
        if args.command == "urn":
            return cmd_urn(args.spec, args.horizon, args.out)
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.threads, args.format)
        if args.command == "verify":
            return cmd_verify(cfg, args.theorem, args.out, args.threads)
        if args.command == "rates":
            return cmd_rates(cfg, args.out, args.threads)
        return cmd_oracle(cfg, args.out)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ReinforcedWalksError, ScheduleExhausted, GridMismatch) as exc:
        msg = exc.args[0] if exc.args else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
