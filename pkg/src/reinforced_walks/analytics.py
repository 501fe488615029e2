"""Statistical checks of the long-run behaviour of an ensemble.

Covers polarization / convergence criteria, fixation detection, rate
regressions for synchronization and convergence, the limit variance
functions V_t of the functional limit theorems, scaled fluctuation
processes and the distributional tests applied to them.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import special, stats

from . import oracle
from .ensemble import EnsembleResult, moment_stream, window_index
from .errors import GridMismatch, Inconclusive, InadmissibleRegime, InvalidParameters
from .model import ModelParams
from .schedules import PowerLaw, StepSchedule

THEOREMS = ("fluct_z", "sync_rho1", "fluct_q", "sync_q")
REGIMES = ("gamma_lt_1", "gamma_eq_1")
EXCLUDE_BELOW = 0.01  # replications with Z(1-Z) below this are dropped from standardized tests


# ---------------------------------------------------------------------------
# reports


@dataclass
class TestReport:
    name: str
    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    details: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


# ---------------------------------------------------------------------------
# limit variance functions


@dataclass(frozen=True)
class VtSpec:
    theorem: str
    regime: str
    c: float
    gamma: float
    alpha: float
    rho: float
    q: float
    n_walkers: int
    z_limit: float = 0.5

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise InvalidParameters(f"unknown theorem {self.theorem!r}; expected one of {THEOREMS}")
        if self.regime not in REGIMES:
            raise InvalidParameters(f"unknown regime {self.regime!r}; expected one of {REGIMES}")

    @classmethod
    def from_params(cls, theorem: str, params: ModelParams, z_limit: float = 0.5) -> "VtSpec":
        sched = params.schedule
        if not isinstance(sched, PowerLaw):
            raise InadmissibleRegime("limit theorems need r_n ~ c / n^gamma (a power-law schedule)")
        regime = "gamma_eq_1" if sched.gamma == 1 else "gamma_lt_1"
        return cls(theorem, regime, sched.c, sched.gamma, params.alpha, params.rho, params.q, params.n_walkers, z_limit)

    @property
    def beta(self) -> float:
        return 1.0 - self.rho * (1.0 - self.alpha)

    @property
    def kappa(self) -> float:
        """Exponential (gamma < 1) or power (gamma = 1) rate of the time change."""
        if self.theorem == "sync_rho1":
            return self.c * self.alpha
        if self.theorem == "fluct_q":
            return self.c * (1.0 - self.rho)
        if self.theorem == "sync_q":
            return self.c * self.beta
        return 0.0

    def check(self) -> None:
        """Raise :class:`InadmissibleRegime` naming the violated condition."""
        lt = self.regime == "gamma_lt_1"
        if lt and not 0.5 < self.gamma < 1:
            raise InadmissibleRegime(f"regime gamma_lt_1 needs 1/2 < gamma < 1, got gamma = {self.gamma}")
        if not lt and self.gamma != 1:
            raise InadmissibleRegime(f"regime gamma_eq_1 needs gamma = 1, got gamma = {self.gamma}")
        if self.theorem in ("fluct_z", "sync_rho1"):
            if self.rho != 1:
                raise InadmissibleRegime(f"{self.theorem} needs rho = 1, got rho = {self.rho}")
            if not self.alpha > 0:
                raise InadmissibleRegime(f"{self.theorem} needs alpha > 0 (rho (1 - alpha) < 1)")
        else:
            if not self.rho < 1:
                raise InadmissibleRegime(f"{self.theorem} needs rho < 1, got rho = {self.rho}")
            if self.q in (0.0, 1.0):
                raise InadmissibleRegime(f"{self.theorem} needs q outside {{0, 1}}, got q = {self.q}")
        if not lt and self.theorem != "fluct_z" and not 2 * self.kappa > 1:
            cond = {"sync_rho1": "2 c alpha > 1", "fluct_q": "2 c (1 - rho) > 1", "sync_q": "2 c (1 - rho (1 - alpha)) > 1"}
            raise InadmissibleRegime(f"gamma = 1 requires {cond[self.theorem]}; got {2 * self.kappa:.6g}")

    def variance_scale(self, z=None):
        """V_t / (time factor), for one or many plug-in values of Z."""
        z = self.z_limit if z is None else np.asarray(z, dtype=np.float64)
        n_w, c = self.n_walkers, self.c
        zz = z * (1 - z)
        qq = self.q * (1 - self.q) * self.rho**2
        lt = self.regime == "gamma_lt_1"
        k = self.kappa
        if self.theorem == "fluct_z":
            return c * c * zz / (n_w * (2 * self.gamma - 1))
        if self.theorem == "sync_rho1":
            return (1 - 1 / n_w) * (c * zz / (2 * self.alpha) if lt else c * c * zz / (2 * k - 1))
        if self.theorem == "fluct_q":
            base = c * qq / (2 * n_w * (1 - self.rho)) if lt else c * c * qq / (n_w * (2 * k - 1))
        else:
            base = (1 - 1 / n_w) * (c * qq / (2 * self.beta) if lt else c * c * qq / (2 * k - 1))
        # q-variants do not depend on Z; broadcast to the shape of z
        return base + 0.0 * np.asarray(z)

    def time_factor(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.theorem == "fluct_z":
            return t ** (2 * self.gamma - 1)
        if self.regime == "gamma_lt_1":
            return np.exp(2 * self.kappa * t)
        return (1 + t) ** (2 * self.kappa - 1)


def v_t(spec: VtSpec, t: float, z=None):
    """Limit variance V_t of the selected theorem, at plug-in Z (scalar or array)."""
    spec.check()
    if np.any(np.asarray(t) < 0):
        raise InvalidParameters("t must be nonnegative")
    out = spec.variance_scale(z) * spec.time_factor(t)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# scaled processes


def _column(result: EnsembleResult, step: int) -> int:
    try:
        return result.col(step)
    except GridMismatch as exc:
        raise GridMismatch(f"{exc.args[0]}; add it to the recording grid") from None


def fluct_index(n: int, t: float) -> int:
    return int(math.floor(n * t))


def scaled_fluct_process(
    result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float], z_limit=None
) -> np.ndarray:
    """(replications, len(t_grid)) matrix of t^{2g-1} n^{g-1/2} (Z_{floor(nt)} - Z) for fluct_z,
    or n^{g/2} e^{kt} (Z_{floor(n+n^g t)} - q) (resp. (1+t)^k n^{1/2} at gamma = 1) for fluct_q.

    ``z_limit`` defaults to each replication's terminal z_bar.
    """
    zbar = result.zbar()
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if spec.theorem == "fluct_z":
        z = result.plugin_limit() if z_limit is None else np.broadcast_to(z_limit, (result.replications,))
        cols = [_column(result, fluct_index(n, t)) for t in t_grid]
        g = spec.gamma
        return t_grid ** (2 * g - 1) * n ** (g - 0.5) * (zbar[:, cols] - z[:, None])
    if spec.theorem == "fluct_q":
        cols = [_column(result, window_index(n, spec.gamma, t)) for t in t_grid]
        return _sync_scale(spec, n, t_grid) * (zbar[:, cols] - spec.q)
    raise InvalidParameters(f"{spec.theorem} is a synchronization theorem; use scaled_sync_process")


def _sync_scale(spec: VtSpec, n: int, t_grid: np.ndarray) -> np.ndarray:
    if spec.regime == "gamma_lt_1":
        return n ** (spec.gamma / 2) * np.exp(spec.kappa * t_grid)
    return math.sqrt(n) * (1 + t_grid) ** spec.kappa


def scaled_sync_process(
    result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float], walker: int = 0
) -> np.ndarray:
    """(replications, len(t_grid)) matrix of the scaled deviation Z(i) - Z_bar on the index map floor(n + n^g t)."""
    if spec.theorem not in ("sync_rho1", "sync_q"):
        raise InvalidParameters(f"{spec.theorem} is not a synchronization theorem")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    cols = [_column(result, window_index(n, spec.gamma, t)) for t in t_grid]
    return _sync_scale(spec, n, t_grid) * result.sync_dev(walker)[:, cols]


def scaled_process(result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float]) -> np.ndarray:
    if spec.theorem in ("fluct_z", "fluct_q"):
        return scaled_fluct_process(result, spec, n, t_grid)
    return scaled_sync_process(result, spec, n, t_grid)


def horizon_factor(spec: VtSpec, n: int, t, terminal: int):
    """Share of V_t still visible when Z is replaced by the value at step ``terminal``.

    For fluct_z, Z_{nt} - Z_T misses the fluctuation after T, whose variance
    relative to the full one is (nt / T)^{2g-1}.  Other theorems compare with a
    known centre (q or the current average) and need no correction.
    """
    t = np.asarray(t, dtype=np.float64)
    if spec.theorem != "fluct_z":
        return np.ones_like(t)
    return 1.0 - (n * t / terminal) ** (2 * spec.gamma - 1)


def plugin_variances(
    result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float], horizon_corrected: bool = True
) -> np.ndarray:
    """(replications, len(t_grid)) matrix of V_t at each replication's terminal z_bar."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    z = result.plugin_limit()
    vt = v_t(spec, t_grid[None, :], z[:, None])
    if not horizon_corrected:
        return vt
    return vt * horizon_factor(spec, n, t_grid, result.terminal_step)[None, :]


# ---------------------------------------------------------------------------
# distributional tests


def ks_threshold(m: int, level: float = 0.01, n_tests: int = 1) -> float:
    """Asymptotic critical value of the one-sample KS distance at ``level / n_tests``."""
    return float(special.kolmogi(level / n_tests) / math.sqrt(m))


def mixed_gaussian_test(
    samples,
    vt_per_replication,
    z_limits=None,
    level: float = 0.01,
    n_tests: int = 1,
    name: str = "mixed-gaussian",
) -> TestReport:
    """KS test of samples / sqrt(V_t) against N(0, 1).

    Replications whose plug-in Z has Z(1 - Z) < 0.01 (or whose V_t is not
    positive) are excluded.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    v = np.broadcast_to(np.asarray(vt_per_replication, dtype=np.float64), x.shape)
    keep = v > 0
    if z_limits is not None:
        z = np.asarray(z_limits, dtype=np.float64).reshape(-1)
        keep &= z * (1 - z) >= EXCLUDE_BELOW
    m = int(keep.sum())
    if m == 0:
        return TestReport(name, float("nan"), float("nan"), False, 0, {"inconclusive": "all replications excluded"})
    std = x[keep] / np.sqrt(v[keep])
    res = stats.kstest(std, "norm")
    thr = ks_threshold(m, level, n_tests)
    return TestReport(
        name,
        float(res.statistic),
        thr,
        bool(res.statistic < thr),
        m,
        {
            "excluded": int(len(x) - m),
            "level": level,
            "bonferroni": n_tests,
            "pvalue": float(res.pvalue),
            "std_mean": float(std.mean()),
            "std_var": float(std.var(ddof=1)) if m > 1 else float("nan"),
        },
    )


def fclt_marginal_tests(
    result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float] = (0.5, 1.0, 2.0), level: float = 0.01
) -> list[TestReport]:
    """One standardized KS test per grid time, Bonferroni-corrected over the grid."""
    x = scaled_process(result, spec, n, t_grid)
    vt = plugin_variances(result, spec, n, t_grid)
    z = result.plugin_limit() if spec.theorem in ("fluct_z", "sync_rho1") else None
    return [
        mixed_gaussian_test(x[:, k], vt[:, k], z, level, len(t_grid), name=f"{spec.theorem}[t={t}]")
        for k, t in enumerate(t_grid)
    ]


def simulate_time_changed_bm(vt: np.ndarray, seed: int) -> np.ndarray:
    """Sample W_{V_t} on a grid: ``vt`` is (replications, times), nondecreasing along each row."""
    vt = np.asarray(vt, dtype=np.float64)
    inc = np.diff(np.concatenate([np.zeros((vt.shape[0], 1)), vt], axis=1), axis=1)
    if (inc < -1e-15).any():
        raise InvalidParameters("V_t must be nondecreasing in t")
    gen = np.random.default_rng(seed)
    return np.cumsum(gen.standard_normal(vt.shape) * np.sqrt(np.maximum(inc, 0.0)), axis=1)


def covariance_structure_test(
    process: np.ndarray,
    expected_cov: np.ndarray | Callable[[int, int], Any],
    tol: float = 0.20,
    name: str = "covariance",
) -> TestReport:
    """Compare the empirical covariance matrix of ``process`` (replications x times) with its target.

    ``expected_cov`` is a (times x times) matrix, or a callable (j, k) -> value
    or per-replication array (averaged).  Pass when the largest relative
    error over all pairs is at most ``tol``.
    """
    x = np.asarray(process, dtype=np.float64)
    m, k = x.shape
    if k < 3:
        raise InvalidParameters("covariance test needs at least 3 grid times")
    if callable(expected_cov):
        target = np.array([[float(np.mean(expected_cov(a, b))) for b in range(k)] for a in range(k)])
    else:
        target = np.asarray(expected_cov, dtype=np.float64)
    if np.any(np.diag(target) <= 0):
        raise InvalidParameters("singular grid: a target variance is not positive")
    emp = np.cov(x, rowvar=False)
    rel = np.abs(emp - target) / np.abs(target)
    worst = float(rel.max())
    return TestReport(
        name,
        worst,
        tol,
        worst <= tol,
        m,
        {"empirical": emp, "target": target, "relative_error": rel},
    )


def increment_covariance(process: np.ndarray, s_idx: int, t_idx: int) -> tuple[float, float]:
    """Cov(X_t - X_s, X_s) across replications and its standard error."""
    x = np.asarray(process, dtype=np.float64)
    a = x[:, t_idx] - x[:, s_idx]
    b = x[:, s_idx]
    prod = (a - a.mean()) * (b - b.mean())
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(len(prod)))


def fluct_covariance_target(
    result: EnsembleResult, spec: VtSpec, n: int, t_grid: Sequence[float], horizon_corrected: bool = True
) -> np.ndarray:
    """Mean plug-in V_{min(s,t)}, by default with the terminal-horizon correction at max(s,t)."""
    t = np.asarray(t_grid, dtype=np.float64)
    z = result.plugin_limit()
    lo = np.minimum.outer(t, t)
    hi = np.maximum.outer(t, t)
    scale = float(np.mean(spec.variance_scale(z)))
    target = scale * spec.time_factor(lo)
    if horizon_corrected:
        target = target * horizon_factor(spec, n, hi, result.terminal_step)
    return target


# ---------------------------------------------------------------------------
# regressions and rates


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_regression(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least squares of log y on log n."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 3:
        raise InvalidParameters("rate regression needs at least 3 points")
    n, y = pts[:, 0], pts[:, 1]
    if (y <= 0).any() or (n <= 0).any():
        raise InvalidParameters("rate regression needs positive n and y")
    lx, ly = np.log(n), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid**2).sum()) / ss_tot
    return RateFit(float(slope), float(intercept), r2)


def fixed_slope_prefactor(points: Sequence[tuple[float, float]], slope: float) -> float:
    """Geometric mean of y * n^{-slope}: the prefactor C in y ~ C n^slope with the slope held fixed."""
    pts = np.asarray(points, dtype=np.float64)
    return float(np.exp(np.mean(np.log(pts[:, 1]) - slope * np.log(pts[:, 0]))))


def regression_window(steps: np.ndarray, lo: int | None = None, hi: int | None = None) -> np.ndarray:
    """Mask of grid steps in [lo, hi]; by default drops the lowest decade of the positive grid."""
    steps = np.asarray(steps)
    pos = steps[steps > 0]
    lo = 10 * pos.min() if lo is None else lo
    hi = steps.max() if hi is None else hi
    return (steps >= lo) & (steps <= hi)


@dataclass(frozen=True)
class RateTable:
    n: np.ndarray
    sync_msq: np.ndarray
    conv_msq: np.ndarray
    sync_fit: RateFit
    conv_fit: RateFit
    sync_prefactor: float
    conv_prefactor: float
    mean_zz: float
    window: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "sync_msq", "conv_msq", "sync_fitted", "conv_fitted", "in_window"])
            for n, s, c, win in zip(self.n, self.sync_msq, self.conv_msq, self.window):
                # the power-law fit is undefined at n = 0
                sf = repr(math.exp(self.sync_fit.intercept) * float(n) ** self.sync_fit.slope) if n > 0 else ""
                cf = repr(math.exp(self.conv_fit.intercept) * float(n) ** self.conv_fit.slope) if n > 0 else ""
                w.writerow([int(n), repr(float(s)), repr(float(c)), sf, cf, int(win)])


def theoretical_slopes(gamma: float) -> tuple[float, float]:
    """(sync, conv) exponents of the mean-square decays for rho = 1."""
    return -gamma, -(2 * gamma - 1)


def theoretical_prefactors(params: ModelParams, mean_zz: float) -> tuple[float, float]:
    """Constants of E[(Z_n(i) - Z_n)^2] and E[(Z_n - Z)^2] for rho = 1, as multiples of E[Z(1-Z)]."""
    sched = params.schedule
    if not isinstance(sched, PowerLaw):
        raise InadmissibleRegime("rate constants need a power-law schedule")
    c, g, a, n_w = sched.c, sched.gamma, params.alpha, params.n_walkers
    if g < 1:
        sync = (1 - 1 / n_w) * c * mean_zz / (2 * a)
    else:
        if not 2 * c * a > 1:
            raise InadmissibleRegime(f"gamma = 1 requires 2 c alpha > 1; got {2 * c * a:.6g}")
        sync = (1 - 1 / n_w) * c * c * mean_zz / (2 * c * a - 1)
    conv = c * c * mean_zz / (n_w * (2 * g - 1))
    return sync, conv


def rate_table(result: EnsembleResult, lo: int | None = None, hi: int | None = None, tail_correction: bool = True) -> RateTable:
    recs = moment_stream(result, tail_correction=tail_correction)
    n = np.array([r.n for r in recs])
    sync = np.array([r.mean_sq_sync for r in recs])
    conv = np.array([r.mean_sq_conv_proxy for r in recs])
    win = regression_window(n, lo, hi)
    win &= n < result.terminal_step  # the plug-in makes the terminal point degenerate
    g = result.params.schedule.gamma
    s_th, c_th = theoretical_slopes(g)
    z = result.plugin_limit()
    mean_zz = float(np.mean(z * (1 - z)))
    sp = list(zip(n[win], sync[win]))
    cp = list(zip(n[win], conv[win]))
    return RateTable(
        n, sync, conv, rate_regression(sp), rate_regression(cp),
        fixed_slope_prefactor(sp, s_th), fixed_slope_prefactor(cp, c_th), mean_zz, win,
    )


def sync_rate_test(table: RateTable, params: ModelParams, slope_tol: float = 0.1, prefactor_tol: float = 0.15) -> TestReport:
    g = params.schedule.gamma
    expected_slope, _ = theoretical_slopes(g)
    expected_pref, _ = theoretical_prefactors(params, table.mean_zz)
    return _rate_report("sync-rate", table.sync_fit, expected_slope, table.sync_prefactor, expected_pref, slope_tol, prefactor_tol, int(table.window.sum()))


def conv_rate_test(table: RateTable, params: ModelParams, slope_tol: float = 0.1, prefactor_tol: float = 0.15) -> TestReport:
    g = params.schedule.gamma
    _, expected_slope = theoretical_slopes(g)
    _, expected_pref = theoretical_prefactors(params, table.mean_zz)
    return _rate_report("conv-rate", table.conv_fit, expected_slope, table.conv_prefactor, expected_pref, slope_tol, prefactor_tol, int(table.window.sum()))


def _rate_report(name, fit, slope, pref, expected_pref, slope_tol, prefactor_tol, size) -> TestReport:
    slope_err = abs(fit.slope - slope)
    pref_err = abs(pref / expected_pref - 1)
    return TestReport(
        name,
        fit.slope,
        slope_tol,
        bool(slope_err <= slope_tol and pref_err <= prefactor_tol),
        size,
        {
            "expected_slope": slope,
            "slope_error": slope_err,
            "r2": fit.r2,
            "prefactor": pref,
            "expected_prefactor": expected_pref,
            "prefactor_relative_error": pref_err,
            "prefactor_tolerance": prefactor_tol,
        },
    )


def rate_separation_test(table: RateTable, gamma: float, min_gap: float = 0.15) -> TestReport:
    """Synchronization must decay faster than convergence when 1/2 < gamma < 1.

    At gamma = 1 both exponents equal -1 and there is nothing to separate;
    the report then passes with ``applicable`` set to False.
    """
    gap = table.conv_fit.slope - table.sync_fit.slope
    applicable = gamma < 1
    return TestReport(
        "rate-separation",
        gap,
        min_gap,
        bool(gap >= min_gap) if applicable else True,
        int(table.window.sum()),
        {"sync_slope": table.sync_fit.slope, "conv_slope": table.conv_fit.slope, "applicable": applicable},
    )


# ---------------------------------------------------------------------------
# convergence, polarization, synchronization, fixation


def _var_with_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    m = len(x)
    d = x - x.mean()
    var = float(d @ d / (m - 1))
    m4 = float(np.mean(d**4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / m)


def initial_gap(params: ModelParams) -> float:
    """x_0 = 1/4 - Var[Z_0] for independent, identically distributed initial coordinates."""
    _, v = params.initial.mean_and_var()
    return 0.25 - v / params.n_walkers


def polarization_test(
    result: EnsembleResult, threshold: float = 0.02, floor: float = 0.05, band: float = 0.05
) -> TestReport:
    """Polarization dichotomy for rho = 1 via x_n = 1/4 - Var[Z_n].

    If sum r_n^2 diverges: pass when the terminal x_n is at most ``threshold``
    and x_n is nonincreasing along the grid (within 4 SE).  Otherwise: pass
    when the terminal x_n is at least ``floor`` and not below the oracle's
    lower envelope by more than 4 SE (for N = 1, alpha = 0 the envelope is
    exact and the match must hold both ways).
    """
    params = result.params
    if params.rho != 1:
        raise InadmissibleRegime(f"polarization needs rho = 1, got rho = {params.rho}; use convergence_to_q_test")
    zbar = result.zbar()
    xs, ses = [], []
    for g in range(len(result.steps)):
        v, se = _var_with_se(zbar[:, g])
        xs.append(0.25 - v)
        ses.append(se)
    x_t, se_t = xs[-1], ses[-1]
    term = zbar[:, -1]
    details: dict[str, Any] = {
        "steps": result.steps,
        "gap": xs,
        "gap_se": ses,
        "polarized_fraction": float(np.mean(np.minimum(term, 1 - term) <= band)),
    }
    sched = params.schedule
    diverges = sched.sum_sq_diverges()
    if diverges is None:
        r = sched.values(sched.start, result.terminal_step)
        diverges = False
        details["sum_sq"] = float((r * r).sum())
    details["sum_sq_diverges"] = diverges
    start = sched.start
    horizon = result.terminal_step - start
    if diverges:
        monotone = all(xs[k + 1] <= xs[k] + 4 * math.hypot(ses[k], ses[k + 1]) for k in range(len(xs) - 1))
        details["monotone"] = monotone
        passed = x_t <= threshold and monotone
        thr = threshold
    else:
        x0 = initial_gap(params)
        if params.n_walkers == 1 or params.alpha == 0:
            env = float(oracle.variance_product_alpha0(x0, sched, horizon)[-1])
            exact = params.n_walkers == 1
        else:
            env = float(oracle.variance_bounds_interacting(x0, sched, params.alpha, params.n_walkers, horizon)[0][-1])
            exact = False
        details.update(envelope=env, envelope_exact=exact, floor=floor)
        ok_env = abs(x_t - env) <= 4 * se_t if exact else x_t >= env - 4 * se_t
        passed = ok_env and x_t >= floor
        thr = env
    return TestReport("polarization", x_t, thr, bool(passed), result.replications, details)


def exact_variance_test(result: EnsembleResult, steps: Sequence[int] | None = None, n_se: float = 4.0) -> TestReport:
    """Simulated 1/4 - Var[Z_n] against the exact chain x_{n+1} = (1 - r_n^2) x_n (rho = 1, alpha = 0 or N = 1)."""
    params = result.params
    if params.rho != 1 or not (params.alpha == 0 or params.n_walkers == 1):
        raise InadmissibleRegime("the exact variance chain holds for rho = 1 with alpha = 0 or N = 1")
    steps = result.steps if steps is None else np.asarray(steps)
    sched = params.schedule
    x_exact = oracle.variance_recursion_alpha0(initial_gap(params), sched, int(max(steps)) - sched.start)
    zs = result.zbar() if params.n_walkers == 1 else result.snapshots[:, :, 0]
    worst = 0.0
    rows = []
    for s in steps:
        v, se = _var_with_se(zs[:, result.col(int(s))])
        ex = float(x_exact[int(s) - sched.start])
        z_score = abs(0.25 - v - ex) / se if se > 0 else (0.0 if abs(0.25 - v - ex) < 1e-15 else float("inf"))
        worst = max(worst, z_score)
        rows.append({"n": int(s), "simulated": 0.25 - v, "exact": ex, "se": se, "z": z_score})
    return TestReport("exact-variance", worst, n_se, worst <= n_se, result.replications, {"rows": rows})


def convergence_to_q_test(result: EnsembleResult, tol: float = 0.01) -> TestReport:
    """Mean |Z_n - q| at the terminal step, for rho < 1."""
    params = result.params
    if params.rho >= 1:
        raise InadmissibleRegime("convergence to q needs rho < 1")
    dev = np.abs(result.plugin_limit() - params.q)
    stat = float(dev.mean())
    return TestReport(
        "convergence-q", stat, tol, stat <= tol, result.replications,
        {"q": params.q, "n": result.terminal_step, "max_deviation": float(dev.max())},
    )


def synchronization_test(result: EnsembleResult, threshold: float = 1e-2) -> TestReport:
    """Terminal mean (Z_n(i) - Z_n)^2 below its first recorded value and below ``threshold``."""
    params = result.params
    if not params.rho * (1 - params.alpha) < 1:
        raise InadmissibleRegime("synchronization needs rho (1 - alpha) < 1")
    sync = result.sync_msq().mean(axis=0)
    # compare against the first step after the start: identical initial walkers give zero there
    later = np.flatnonzero(result.steps > params.schedule.start)
    g0 = int(later[0]) if later.size > 1 else 0
    first, last = float(sync[g0]), float(sync[-1])
    return TestReport(
        "sync", last, threshold, bool(last < threshold and last < first), result.replications,
        {"first": first, "first_step": int(result.steps[g0]), "n": result.terminal_step},
    )


def fixation_detector(draws: Sequence[int]) -> int | None:
    """Smallest 1-based index M such that the draws are constant from M on.

    A trailing run is only accepted as fixation when it covers at least
    half of the observed horizon; otherwise None.
    """
    d = np.asarray(draws).reshape(-1)
    if d.size == 0:
        return None
    change = np.flatnonzero(d[1:] != d[:-1])
    m = int(change[-1]) + 2 if change.size else 1
    return fixation_from_run(m, d.size)


def fixation_from_run(run_start: int, horizon: int) -> int | None:
    """Apply the detector's acceptance rule to a recorded final-run start."""
    return run_start if 2 * (horizon - run_start + 1) >= horizon else None


def fixation_test(result: EnsembleResult, threshold: float = 0.95, expect_fixation: bool = True) -> TestReport:
    """Fraction of replications with a fixation index; at least (or, for a control, at most) ``threshold``."""
    if result.fix_run_start is None:
        raise InvalidParameters("fixation test needs a run with record_draws enabled (N = 1)")
    horizon = result.terminal_step - result.params.schedule.start
    fixed = np.array([fixation_from_run(int(m), horizon) is not None for m in result.fix_run_start])
    frac = float(fixed.mean())
    passed = frac >= threshold if expect_fixation else frac <= threshold
    return TestReport(
        "fixation", frac, threshold, bool(passed), result.replications,
        {"horizon": horizon, "expect_fixation": expect_fixation, "fixed_on_one": float(np.mean(result.fix_last[fixed] == 1)) if fixed.any() else float("nan")},
    )


def conv2_series(schedule: StepSchedule, horizon: int) -> tuple[float, float]:
    """Partial sum of exp(-sum_{k<=n} r_k^2) for 1 <= n < horizon, and the ratio of the
    last term times horizon to the partial sum (small when the series has effectively converged)."""
    r = schedule.values(schedule.start, schedule.start + horizon)
    s = np.cumsum(r * r)
    terms = np.exp(-s[1:])
    total = float(terms.sum())
    return total, float(terms[-1] * horizon / total)
