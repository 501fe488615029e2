"""Independent replications of a walk system, recorded on a step grid."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ._backend import get_kernels
from .errors import BudgetExceeded, GridMismatch, InvalidParameters
from .model import ModelParams, sequential_mean
from .rng import WALK, stream_keys

MEMORY_BUDGET = 10**8  # stored float values before switching to reduced snapshots
DRAWS_BUDGET = 10**7


# ---------------------------------------------------------------------------
# recording grids


class RecordingGrid:
    def steps(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Geometric(RecordingGrid):
    base_n: int
    ratio: float
    count: int

    def steps(self):
        if self.ratio <= 1 or self.count < 1 or self.base_n < 0:
            raise InvalidParameters("geometric grid needs ratio > 1, count >= 1, base_n >= 0")
        raw = np.floor(self.base_n * self.ratio ** np.arange(self.count)).astype(np.int64)
        return np.unique(raw)


@dataclass(frozen=True)
class ExplicitSteps(RecordingGrid):
    values: tuple[int, ...]

    def steps(self):
        arr = np.unique(np.asarray(self.values, dtype=np.int64))
        if arr.size == 0 or arr[0] < 0:
            raise InvalidParameters("explicit grid needs at least one nonnegative step")
        return arr


@dataclass(frozen=True)
class TimeWindow(RecordingGrid):
    """Steps floor(n + n**gamma * t): the time change of the synchronisation limit theorems."""

    n: int
    gamma_exp: float
    t_grid: tuple[float, ...]

    def index(self, t: float) -> int:
        return window_index(self.n, self.gamma_exp, t)

    def steps(self):
        return np.unique(np.array([self.index(t) for t in self.t_grid], dtype=np.int64))


def window_index(n: int, gamma: float, t: float) -> int:
    return int(math.floor(n + n**gamma * t))


def union(*grids: RecordingGrid | Sequence[int]) -> ExplicitSteps:
    parts = [g.steps() if isinstance(g, RecordingGrid) else np.asarray(g, dtype=np.int64) for g in grids]
    return ExplicitSteps(tuple(int(s) for s in np.unique(np.concatenate(parts))))


def grid_from_dict(d: dict[str, Any]) -> RecordingGrid:
    kind = d.get("kind", "steps")
    if kind == "geometric":
        g = Geometric(int(d["base"]), float(d["ratio"]), int(d["count"]))
    elif kind == "steps":
        g = ExplicitSteps(tuple(int(s) for s in d["steps"]))
    elif kind == "window":
        g = TimeWindow(int(d["n"]), float(d["gamma"]), tuple(float(t) for t in d["t"]))
    else:
        raise InvalidParameters(f"unknown grid kind {kind!r}")
    extra = [int(s) for s in d.get("extra_steps", [])]
    if "terminal" in d:
        extra.append(int(d["terminal"]))
    return union(g, extra) if extra else g


# ---------------------------------------------------------------------------
# results


@dataclass(eq=False)
class EnsembleResult:
    """Snapshots of ``replications`` trajectories at ``steps``.

    ``snapshots`` has shape (replications, len(steps), N) holding raw z, or
    (replications, len(steps), 3) holding (z_bar, z(0) - z_bar, mean sync
    square) when ``reduced`` is set.
    """

    params: ModelParams
    steps: np.ndarray
    snapshots: np.ndarray
    reduced: bool
    master_seed: int
    replications: int
    fix_run_start: np.ndarray | None = None
    fix_last: np.ndarray | None = None
    draws: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def params_digest(self) -> str:
        return self.params.digest()

    def col(self, step: int) -> int:
        idx = np.searchsorted(self.steps, step)
        if idx >= len(self.steps) or self.steps[idx] != step:
            raise GridMismatch(f"step {step} was not recorded")
        return int(idx)

    def zbar(self) -> np.ndarray:
        """(replications, steps) array of walker averages."""
        if self.reduced:
            return self.snapshots[:, :, 0]
        return sequential_mean(self.snapshots)

    def sync_dev(self, walker: int = 0) -> np.ndarray:
        """Z_n(i) - Z_n for one walker, shape (replications, steps)."""
        if self.reduced:
            if walker != 0:
                raise GridMismatch("reduced snapshots keep only walker 0")
            return self.snapshots[:, :, 1]
        return self.snapshots[:, :, walker] - self.zbar()

    def sync_msq(self) -> np.ndarray:
        """Walker-averaged (Z_n(i) - Z_n)^2, shape (replications, steps)."""
        if self.reduced:
            return self.snapshots[:, :, 2]
        dev = self.snapshots - self.zbar()[:, :, None]
        return sequential_mean(dev * dev)

    def plugin_limit(self) -> np.ndarray:
        """Terminal z_bar of each replication, the plug-in estimate of the limit Z."""
        return self.zbar()[:, -1]

    @property
    def terminal_step(self) -> int:
        return int(self.steps[-1])


def run_ensemble(
    params: ModelParams,
    grid: RecordingGrid,
    replications: int,
    master_seed: int,
    record_draws: bool = False,
    threads: int | None = 1,
    backend: str | None = None,
    memory_budget: int = MEMORY_BUDGET,
) -> EnsembleResult:
    """Simulate replications 0..M-1, replication j driven by stream (master_seed, j).

    Output does not depend on ``threads``; replications are split into
    contiguous blocks and each block is run by the selected kernel.
    """
    if replications < 1:
        raise InvalidParameters(f"replications must be >= 1, got {replications}")
    steps = grid.steps()
    start = params.schedule.start
    if steps[0] < start:
        raise InvalidParameters(f"grid starts at {steps[0]} but the schedule starts at {start}")
    n_w = params.n_walkers
    rates = np.ascontiguousarray(params.schedule.values(start, int(steps[-1])))
    reduced = n_w * replications * len(steps) > memory_budget
    width = 3 if reduced else n_w
    if reduced and 3 * replications * len(steps) > memory_budget:
        raise BudgetExceeded(
            f"{replications} replications x {len(steps)} grid steps exceeds the snapshot budget; use a coarser grid"
        )
    if record_draws and n_w != 1:
        raise InvalidParameters("draw recording is only supported for a single walker")

    reps = np.arange(replications)
    z0 = params.sample_initial(master_seed, reps)
    keys = stream_keys(master_seed, reps, WALK)
    out = np.zeros((replications, len(steps), width))
    fix_start = fix_last = draws = None
    if record_draws:
        fix_start = np.zeros(replications, dtype=np.int64)
        fix_last = np.zeros(replications, dtype=np.int8)
        if replications * len(rates) <= DRAWS_BUDGET:
            draws = np.zeros((replications, len(rates)), dtype=np.uint8)

    kern = get_kernels(backend)
    t0, _ = params.targets()

    def run_block(lo: int, hi: int) -> None:
        kern.simulate(
            z0[lo:hi],
            rates,
            float(params.rho),
            float(params.alpha),
            float(params.q),
            keys[lo:hi],
            int(start),
            steps,
            out[lo:hi],
            reduced,
            None if fix_start is None else fix_start[lo:hi],
            None if fix_last is None else fix_last[lo:hi],
            None if draws is None else draws[lo:hi],
        )

    n_threads = max(1, min(int(threads or 1), replications))
    bounds = np.linspace(0, replications, n_threads + 1).astype(int)
    if n_threads == 1:
        run_block(0, replications)
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            list(pool.map(run_block, bounds[:-1], bounds[1:]))
    return EnsembleResult(
        params, steps, out, reduced, master_seed, replications, fix_start, fix_last, draws
    )


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentRecord:
    n: int
    mean_zbar: float
    var_zbar: float
    mean_sq_sync: float
    mean_sq_conv_proxy: float


def plugin_tail(result: EnsembleResult) -> np.ndarray:
    """Per-replication estimate of E[(Z_T - Z)^2 | F_T] at the terminal step T.

    Uses sum_{k >= T} r_k^2 * rho^2 * Z_T (1 - Z_T) / N, the conditional
    variance of the remaining increments with the draw variances frozen at
    their terminal value.
    """
    sched = result.params.schedule
    if not hasattr(sched, "tail_sum_sq"):
        raise InvalidParameters(f"{type(sched).__name__} has no closed-form tail sum")
    z = result.plugin_limit()
    p = result.params
    return sched.tail_sum_sq(result.terminal_step) * p.rho**2 * z * (1 - z) / p.n_walkers


def moment_stream(result: EnsembleResult, tail_correction: bool = False) -> list[MomentRecord]:
    """Per-step ensemble moments.

    ``mean_sq_conv_proxy`` estimates E[(Z_n - Z)^2] with the terminal z_bar as
    plug-in Z: sample variance of the deviations plus their squared mean.
    With ``tail_correction`` the expected squared distance between the
    terminal value and the limit is added back (see :func:`plugin_tail`).
    """
    zbar = result.zbar()
    sync = result.sync_msq()
    dev = zbar - zbar[:, -1:]
    ddof = 1 if result.replications > 1 else 0
    tail = plugin_tail(result).mean() if tail_correction else 0.0
    records = []
    for g, n in enumerate(result.steps):
        d = dev[:, g]
        records.append(
            MomentRecord(
                n=int(n),
                mean_zbar=float(zbar[:, g].mean()),
                var_zbar=float(zbar[:, g].var(ddof=ddof)),
                mean_sq_sync=float(sync[:, g].mean()),
                mean_sq_conv_proxy=float(d.var(ddof=ddof) + d.mean() ** 2 + tail),
            )
        )
    return records


# ---------------------------------------------------------------------------
# exports


def write_snapshots_csv(result: EnsembleResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if result.reduced:
            w.writerow(["rep", "n", "zbar", "sync_msq"])
            zb, sm = result.zbar(), result.sync_msq()
            for m in range(result.replications):
                for g, n in enumerate(result.steps):
                    w.writerow([m, int(n), repr(float(zb[m, g])), repr(float(sm[m, g]))])
        else:
            w.writerow(["rep", "n", "walker", "z"])
            snap = result.snapshots
            for m in range(result.replications):
                for g, n in enumerate(result.steps):
                    for i in range(snap.shape[2]):
                        w.writerow([m, int(n), i, repr(float(snap[m, g, i]))])


def write_moments_csv(records: Sequence[MomentRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "mean_zbar", "var_zbar", "mean_sq_sync", "mean_sq_conv_proxy"])
        for r in records:
            w.writerow([r.n] + [repr(v) for v in (r.mean_zbar, r.var_zbar, r.mean_sq_sync, r.mean_sq_conv_proxy)])


def manifest(result: EnsembleResult) -> dict[str, Any]:
    return {
        "params": result.params.to_dict(),
        "params_digest": result.params_digest,
        "master_seed": result.master_seed,
        "replications": result.replications,
        "steps": [int(s) for s in result.steps],
        "reduced": result.reduced,
    }


def write_manifest(result: EnsembleResult, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    data = manifest(result)
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
