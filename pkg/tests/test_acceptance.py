"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``[PASS]`` / ``[FAIL]`` line to ``ACCEPTANCE_LINES``;
pytest prints them in a closing section.  Also runnable as a script:

    python tests/test_acceptance.py
"""
from __future__ import annotations

import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from reinforced_walks import analytics as an  # noqa: E402
from reinforced_walks import oracle  # noqa: E402
from reinforced_walks.applications import graph_to_schedule, pa_trajectory  # noqa: E402
from reinforced_walks.cli import main as cli_main  # noqa: E402
from reinforced_walks.ensemble import (  # noqa: E402
    EnsembleResult,
    ExplicitSteps,
    Geometric,
    RecordingGrid,
    TimeWindow,
    moment_stream,
    run_ensemble,
    union,
    write_moments_csv,
    write_snapshots_csv,
)
from reinforced_walks.model import Deterministic, ModelParams, SymmetricBeta  # noqa: E402
from reinforced_walks.schedules import Explicit, PowerLaw  # noqa: E402

pytestmark = pytest.mark.acceptance


def record(k: int, passed: bool, text: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {k}: {text}")


# ---------------------------------------------------------------------------
# run configurations, shared with the determinism check


@dataclass(frozen=True)
class RunSpec:
    params: ModelParams
    grid: RecordingGrid
    replications: int
    seed: int
    record_draws: bool = False

    def run(self, replications: int | None = None, threads: int = 1) -> EnsembleResult:
        m = self.replications if replications is None else replications
        return run_ensemble(self.params, self.grid, m, self.seed, self.record_draws, threads)


def oracle_configs() -> list[tuple[ModelParams, tuple[float, ...], int]]:
    """Ten enumerable systems: (params, z0, horizon)."""
    pl = PowerLaw(1.0, 0.75, 2)
    ex = Explicit([0.5, 0.4, 0.3, 0.25])
    rows = [
        (1, 1.0, 0.0, 0.5, ex, (0.5,), 4),
        (1, 0.6, 0.0, 0.3, pl, (0.2,), 4),
        (2, 1.0, 0.5, 0.5, ex, (0.5, 0.5), 4),
        (2, 1.0, 0.0, 0.5, pl, (0.3, 0.8), 4),
        (2, 0.5, 1.0, 0.4, ex, (0.1, 0.9), 3),
        (2, 0.0, 0.5, 0.7, pl, (0.2, 0.6), 4),
        (3, 1.0, 0.3, 0.5, pl, (0.2, 0.5, 0.9), 3),
        (3, 0.8, 0.6, 0.2, ex, (0.4, 0.4, 0.7), 4),
        (3, 0.3, 1.0, 0.6, pl, (0.5, 0.5, 0.5), 4),
        (3, 1.0, 0.9, 0.5, ex, (0.1, 0.3, 0.95), 4),
    ]
    return [
        (ModelParams(n_w, rho, alpha, q, sched, Deterministic(z0)), z0, h)
        for n_w, rho, alpha, q, sched, z0, h in rows
    ]


def single_walker(gamma: float) -> ModelParams:
    return ModelParams(1, 1.0, 0.0, 0.5, PowerLaw(0.5, gamma, 1), Deterministic((0.5,)))


RATE_GRID = union(Geometric(100, 10**0.125, 25), [10**6])
FCLT_N = 10**4
FCLT_T = (0.5, 1.0, 2.0)
COV_T = (0.5, 1.0, 1.5, 2.0)
REGIMES = {0.75: (1.0, 2), 1.0: (2.0, 3)}  # gamma -> (c, offset)


def fclt_specs(gamma: float) -> tuple[RunSpec, RunSpec]:
    c, off = REGIMES[gamma]
    sched = PowerLaw(c, gamma, off)
    win = TimeWindow(FCLT_N, gamma, FCLT_T)
    grid_a = union(win, [an.fluct_index(FCLT_N, t) for t in COV_T], [10**6])
    run_a = RunSpec(ModelParams(2, 1.0, 0.5, 0.5, sched), grid_a, 5000, 31)
    run_b = RunSpec(ModelParams(2, 0.5, 0.5, 0.3, sched), win, 5000, 32)
    return run_a, run_b


def rate_spec(gamma: float) -> RunSpec:
    c, off = REGIMES[gamma]
    return RunSpec(ModelParams(8, 1.0, 0.5, 0.5, PowerLaw(c, gamma, off)), RATE_GRID, 1000, 21)


def all_specs() -> dict[str, RunSpec]:
    specs = {}
    for k, (p, _, h) in enumerate(oracle_configs()):
        specs[f"1.{k}"] = RunSpec(p, ExplicitSteps((h,)), 100000, 100 + k)
    for g in (0.4, 0.8):
        specs[f"2.{g}"] = RunSpec(single_walker(g), ExplicitSteps((100, 1000, 10000)), 100000, 11)
        specs[f"3.{g}"] = RunSpec(single_walker(g), Geometric(10, 10, 5), 10000, 12)
        specs[f"5.{g}"] = RunSpec(single_walker(g), ExplicitSteps((100000,)), 1000, 13, record_draws=True)
    specs["4"] = RunSpec(ModelParams(2, 0.5, 0.5, 0.5, PowerLaw(1.0, 0.75, 2), SymmetricBeta(1.0)), ExplicitSteps((0, 10**4)), 1000, 14)
    for g in REGIMES:
        specs[f"6.{g}"] = rate_spec(g)
        a, b = fclt_specs(g)
        specs[f"7a.{g}"], specs[f"7b.{g}"] = a, b
    return specs


SPECS = all_specs()


_RUNS: dict[str, tuple[EnsembleResult, float]] = {}


def cached_run(key: str) -> tuple[EnsembleResult, float]:
    """Full-size result of one configuration and its runtime, computed once per session."""
    if key not in _RUNS:
        t0 = time.perf_counter()
        res = SPECS[key].run()
        _RUNS[key] = (res, time.perf_counter() - t0)
    return _RUNS[key]


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    pvals = []
    for k, (p, z0, h) in enumerate(oracle_configs()):
        dist = oracle.enumerate_distribution(p, z0, h)[-1]
        res, _ = cached_run(f"1.{k}")
        pvals.append(oracle.chi_square_gof(dist, res.snapshots[:, 0, :]).pvalue)
    elapsed = time.perf_counter() - t0
    passed = min(pvals) > 0.01 and elapsed < 120
    record(1, passed, f"10 configs, min chi-square p = {min(pvals):.3g} (> 0.01), {elapsed:.0f}s (< 120s)")
    assert passed, pvals


def test_criterion_02_exact_recursion():
    parts, ok, total = [], True, 0.0
    for g in (0.4, 0.8):
        res, dt = cached_run(f"2.{g}")
        rep = an.exact_variance_test(res)
        total += dt
        ok &= rep.passed
        parts.append(f"gamma={g}: max |z| = {rep.statistic:.2f}")
    passed = ok and total < 300
    record(2, passed, f"{'; '.join(parts)} (<= 4), {total:.0f}s (< 300s)")
    assert passed


def test_criterion_03_polarization():
    lo, _ = cached_run("3.0.4")
    hi, _ = cached_run("3.0.8")
    r_lo = an.polarization_test(lo)
    r_hi = an.polarization_test(hi)
    passed = r_lo.passed and r_hi.passed
    record(
        3,
        passed,
        f"gamma=0.4 gap {r_lo.statistic:.2e} (<= 0.02); gamma=0.8 gap {r_hi.statistic:.4f} "
        f"vs envelope {r_hi.details['envelope']:.4f} (>= envelope - 4 SE, >= 0.05)",
    )
    assert passed


def test_criterion_04_convergence_to_q():
    res, _ = cached_run("4")
    rep = an.convergence_to_q_test(res, 0.01)
    record(4, rep.passed, f"mean |Z_n - q| = {rep.statistic:.4f} at n = 10^4 (<= 0.01)")
    assert rep.passed


def test_criterion_05_fixation():
    fix, _ = cached_run("5.0.4")
    ctl, _ = cached_run("5.0.8")
    r_fix = an.fixation_test(fix, 0.95, expect_fixation=True)
    r_ctl = an.fixation_test(ctl, 0.20, expect_fixation=False)
    passed = r_fix.passed and r_ctl.passed
    record(5, passed, f"gamma=0.4 fixated {r_fix.statistic:.1%} (>= 95%); control gamma=0.8 {r_ctl.statistic:.1%} (<= 20%)")
    assert passed


def rate_reports(gamma: float):
    res, dt = cached_run(f"6.{gamma}")
    tab = an.rate_table(res, 1000, 100000)
    p = res.params
    return [an.sync_rate_test(tab, p), an.conv_rate_test(tab, p), an.rate_separation_test(tab, gamma)], dt


def describe_rates(reports) -> str:
    s, c, sep = reports
    text = (
        f"sync slope {s.statistic:.3f} (target {s.details['expected_slope']:.2f}), prefactor err "
        f"{s.details['prefactor_relative_error']:.1%}; conv slope {c.statistic:.3f} "
        f"(target {c.details['expected_slope']:.2f}), prefactor err {c.details['prefactor_relative_error']:.1%}"
    )
    if sep.details["applicable"]:
        text += f"; gap {sep.statistic:.3f} (>= 0.15)"
    return text


def test_criterion_06_sync_rates():
    reports, dt = rate_reports(0.75)
    passed = all(r.passed for r in reports) and dt < 1800
    record(6, passed, f"{describe_rates(reports)}; {dt:.0f}s")
    assert passed


def fclt_reports(gamma: float) -> list[an.TestReport]:
    out = []
    for key, theorems in ((f"7a.{gamma}", ("fluct_z", "sync_rho1")), (f"7b.{gamma}", ("fluct_q", "sync_q"))):
        res, _ = cached_run(key)
        for th in theorems:
            spec = an.VtSpec.from_params(th, res.params)
            out.extend(an.fclt_marginal_tests(res, spec, FCLT_N, FCLT_T))
    return out


def describe_ks(reports) -> str:
    worst = max(reports, key=lambda r: r.statistic / r.threshold)
    n_pass = sum(r.passed for r in reports)
    return f"{n_pass}/{len(reports)} KS tests pass; worst {worst.name} D = {worst.statistic:.4f} vs {worst.threshold:.4f}"


def test_criterion_07_fclt_marginals():
    reports = fclt_reports(0.75)
    passed = all(r.passed for r in reports)
    record(7, passed, describe_ks(reports))
    assert passed, [(r.name, r.statistic, r.threshold) for r in reports if not r.passed]


def test_criterion_08_covariance():
    res, _ = cached_run("7a.0.75")
    spec = an.VtSpec.from_params("fluct_z", res.params)
    synth = an.simulate_time_changed_bm(an.plugin_variances(res, spec, FCLT_N, COV_T, horizon_corrected=False), 5)
    cal = an.covariance_structure_test(synth, an.fluct_covariance_target(res, spec, FCLT_N, COV_T, horizon_corrected=False))
    x = an.scaled_fluct_process(res, spec, FCLT_N, COV_T)
    rep = an.covariance_structure_test(x, an.fluct_covariance_target(res, spec, FCLT_N, COV_T))
    passed = cal.passed and rep.passed
    record(8, passed, f"calibration max rel err {cal.statistic:.3f}; ensemble max rel err {rep.statistic:.3f} (<= 0.20)")
    assert passed


def test_criterion_09_gamma_one():
    rates, _ = rate_reports(1.0)
    ks = fclt_reports(1.0)
    passed = all(r.passed for r in rates) and all(r.passed for r in ks)
    record(9, passed, f"c=2, alpha=0.5: {describe_rates(rates)}; {describe_ks(ks)}")
    assert passed


def test_criterion_10_pa_exponent():
    n = np.unique(np.geomspace(1000, 10**5 - 1, 60).astype(int))
    parts, ok = [], True
    for delta in (0.0, 2.0):
        slopes = []
        for k in range(20):
            r = graph_to_schedule(pa_trajectory(delta, 10**5, 0, k), 0.5).values(2, 10**5)
            slopes.append(np.polyfit(np.log(n), np.log(r[n - 2]), 1)[0])
        med = float(np.median(slopes))
        target = -(1 + delta) / (2 + delta)
        ok &= abs(med - target) <= 0.05
        parts.append(f"delta={delta:g}: median slope {med:.3f} (target {target:.2f} +- 0.05)")
    record(10, ok, "; ".join(parts))
    assert ok


def export_bytes(res: EnsembleResult) -> bytes:
    with tempfile.TemporaryDirectory() as d:
        write_snapshots_csv(res, Path(d) / "s.csv")
        write_moments_csv(moment_stream(res), Path(d) / "m.csv")
        extra = b""
        if res.draws is not None:
            extra = res.draws.tobytes() + res.fix_run_start.tobytes() + res.fix_last.tobytes()
        return (Path(d) / "s.csv").read_bytes() + (Path(d) / "m.csv").read_bytes() + extra


def test_criterion_11_determinism():
    mismatched = []
    full = 0
    for key, spec in SPECS.items():
        m = min(spec.replications, 64)
        a = spec.run(m, threads=1)
        b = spec.run(m, threads=3)
        if export_bytes(a) != export_bytes(b):
            mismatched.append(key)
        # the prefix of the full run must agree too (replication j only sees stream j)
        if key in _RUNS and _RUNS[key][0].snapshots[:m].tobytes() != a.snapshots.tobytes():
            mismatched.append(key + "-prefix")
        if spec.replications * spec.params.n_walkers * int(spec.grid.steps()[-1]) <= 5 * 10**8:
            if export_bytes(spec.run(threads=1)) != export_bytes(spec.run(threads=3)):
                mismatched.append(key + "-full")
            full += 1
    with tempfile.TemporaryDirectory() as d:
        cfg = Path(d) / "run.toml"
        cfg.write_text("seed = 5\nreplications = 200\n[model]\nn_walkers = 3\n")
        outs = []
        for threads in ("1", "3"):
            out = Path(d) / threads
            for cmd in ("simulate", "rates"):
                cli_main([cmd, "--config", str(cfg), "--out", str(out), "--threads", threads])
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outs[0] != outs[1]:
            mismatched.append("cli")
    passed = not mismatched
    record(
        11,
        passed,
        f"{len(SPECS)} run configs (first <= 64 replications) + {full} at full size + CLI exports, "
        f"threads 1 vs 3: {'all byte-identical' if passed else 'mismatch in ' + ', '.join(mismatched)}",
    )
    assert passed


if __name__ == "__main__":
    failures = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failures += 1
    for line in ACCEPTANCE_LINES:
        print(line)
    sys.exit(1 if failures else 0)
