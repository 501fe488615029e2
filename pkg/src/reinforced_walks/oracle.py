"""Exact reference computations: outcome enumeration and moment recursions.

Nothing here uses random numbers, so these serve as ground truth for the
Monte Carlo engine and the statistical tests.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import BudgetExceeded, InvalidParameters
from .model import ModelParams, sequential_mean
from .schedules import StepSchedule

MAX_WALKERS = 4
MAX_HORIZON = 8
MAX_ATOMS = 2_000_000
MERGE_DECIMALS = 12


# ---------------------------------------------------------------------------
# enumeration


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Finite law of the state vector at one step: ``atoms[k]`` has mass ``probs[k]``."""

    step: int
    atoms: np.ndarray
    probs: np.ndarray

    @property
    def zbar(self) -> np.ndarray:
        return sequential_mean(self.atoms)

    def mean_zbar(self) -> float:
        return float(self.probs @ self.zbar)

    def var_zbar(self) -> float:
        m = self.mean_zbar()
        return float(self.probs @ (self.zbar - m) ** 2)

    def mean_sq_sync(self) -> float:
        dev = self.atoms - self.zbar[:, None]
        return float(self.probs @ sequential_mean(dev * dev))

    def marginal_zbar(self) -> tuple[np.ndarray, np.ndarray]:
        """Law of the walker average, with atoms merged."""
        return _merge(self.zbar[:, None], self.probs)


def _outcomes(n_walkers: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n_walkers)), dtype=bool)


def _merge(atoms: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = probs > 0
    atoms, probs = atoms[keep], probs[keep]
    keys = np.round(atoms, MERGE_DECIMALS)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=probs, minlength=len(first))
    return atoms[first], merged


def children(z: np.ndarray, params: ModelParams, r: float) -> tuple[np.ndarray, np.ndarray]:
    """All 2^N successors of state ``z`` under step size ``r`` with their probabilities."""
    outs = _outcomes(len(z))
    p = (1.0 - params.alpha) * z + params.alpha * sequential_mean(z)
    probs = np.prod(np.where(outs, p, 1.0 - p), axis=1)
    t0, t1 = params.targets()
    nxt = (1.0 - r) * z + r * np.where(outs, t1, t0)
    return nxt, probs


def enumerate_distribution(params: ModelParams, z0: Sequence[float], horizon: int) -> list[ExactDistribution]:
    """Exact law of Z_n for n = start .. start + horizon, starting from the fixed vector ``z0``.

    Uses the same arithmetic as the simulation kernels, so simulated states
    coincide with atoms up to rounding.
    """
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    n_w = len(z0)
    if n_w != params.n_walkers:
        raise InvalidParameters(f"z0 has {n_w} entries for {params.n_walkers} walkers")
    if n_w > MAX_WALKERS or horizon > MAX_HORIZON:
        raise BudgetExceeded(f"enumeration is limited to N <= {MAX_WALKERS} and horizon <= {MAX_HORIZON}")
    if horizon < 0:
        raise InvalidParameters("horizon must be nonnegative")
    start = params.schedule.start
    rates = params.schedule.values(start, start + horizon)
    outs = _outcomes(n_w)
    t0, t1 = params.targets()
    target = np.where(outs, t1, t0)
    atoms, probs = z0[None, :], np.ones(1)
    dists = [ExactDistribution(start, atoms, probs)]
    for k, r in enumerate(rates):
        if len(atoms) * len(outs) > MAX_ATOMS:
            raise BudgetExceeded(f"{len(atoms) * len(outs)} atoms at step {start + k + 1} exceeds {MAX_ATOMS}")
        p = (1.0 - params.alpha) * atoms + params.alpha * sequential_mean(atoms)[:, None]
        w = np.prod(np.where(outs[None, :, :], p[:, None, :], 1.0 - p[:, None, :]), axis=2)
        nxt = (1.0 - r) * atoms[:, None, :] + r * target[None, :, :]
        atoms, probs = _merge(nxt.reshape(-1, n_w), (probs[:, None] * w).reshape(-1))
        dists.append(ExactDistribution(start + k + 1, atoms, probs))
    return dists


def write_distribution_csv(dists: Sequence[ExactDistribution], path: str | Path) -> None:
    n_w = dists[0].atoms.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"z{i + 1}" for i in range(n_w)] + ["probability"])
        for d in dists:
            for atom, p in zip(d.atoms, d.probs):
                w.writerow([d.step] + [repr(float(v)) for v in atom] + [repr(float(p))])


@dataclass(frozen=True)
class GofResult:
    statistic: float
    pvalue: float
    dof: int
    unmatched: int


def chi_square_gof(dist: ExactDistribution, samples: np.ndarray, min_expected: float = 5.0) -> GofResult:
    """Pearson chi-square of simulated states against an enumerated law.

    Samples are matched to atoms after rounding to 9 decimals; cells with
    expected count below ``min_expected`` are pooled into one cell.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    m = len(samples)
    atom_keys = np.round(dist.atoms, 9)
    uniq, inv = np.unique(atom_keys, axis=0, return_inverse=True)
    p = np.bincount(inv.reshape(-1), weights=dist.probs, minlength=len(uniq))
    s_keys = np.round(samples, 9)
    pos = np.zeros(m, dtype=np.int64)
    # lexicographic search of each sample row among the unique atom rows
    view = lambda a: np.ascontiguousarray(a).view([("", a.dtype)] * a.shape[1]).reshape(-1)
    u_view, s_view = view(uniq), view(s_keys)
    pos = np.searchsorted(u_view, s_view)
    pos_c = np.minimum(pos, len(uniq) - 1)
    hit = u_view[pos_c] == s_view
    unmatched = int((~hit).sum())
    if unmatched:
        return GofResult(float("inf"), 0.0, 0, unmatched)
    observed = np.bincount(pos_c, minlength=len(uniq)).astype(float)
    expected = p * m
    small = expected < min_expected
    if small.any():
        observed = np.append(observed[~small], observed[small].sum())
        expected = np.append(expected[~small], expected[small].sum())
        if expected[-1] == 0:
            observed, expected = observed[:-1], expected[:-1]
    if len(expected) < 2:
        return GofResult(0.0, 1.0, 0, 0)
    expected = expected * (observed.sum() / expected.sum())
    res = stats.chisquare(observed, expected)
    return GofResult(float(res.statistic), float(res.pvalue), len(expected) - 1, 0)


# ---------------------------------------------------------------------------
# exact one-step identities


@dataclass(frozen=True)
class ConditionalMoments:
    mean_zbar: float
    var_zbar: float
    var_sync: np.ndarray
    mean_sync: np.ndarray


def conditional_moments(z: np.ndarray, params: ModelParams, r: float) -> ConditionalMoments:
    """E[Z_{n+1} | F_n], Var[Z_{n+1} | F_n] and, per walker, the conditional
    mean and variance of Z_{n+1}(i) - Z_{n+1}, by summing over the 2^N outcomes."""
    nxt, probs = children(np.asarray(z, dtype=np.float64), params, r)
    zb = sequential_mean(nxt)
    mz = float(probs @ zb)
    dev = nxt - zb[:, None]
    md = probs @ dev
    return ConditionalMoments(mz, float(probs @ (zb - mz) ** 2), probs @ (dev - md) ** 2, md)


# ---------------------------------------------------------------------------
# moment recursions


def _rates(schedule: StepSchedule, horizon: int) -> np.ndarray:
    return schedule.values(schedule.start, schedule.start + horizon)


def variance_recursion_alpha0(x0: float, schedule: StepSchedule, horizon: int) -> np.ndarray:
    """x_0 .. x_horizon with x_{n+1} = (1 - r_n^2) x_n, where x_n = 1/4 - Var[Z_n(i)]."""
    x = np.empty(horizon + 1)
    x[0] = x0
    for k, r in enumerate(_rates(schedule, horizon)):
        x[k + 1] = (1.0 - r * r) * x[k]
    return x


def variance_product_alpha0(x0: float, schedule: StepSchedule, horizon: int) -> np.ndarray:
    """Closed form x_n = x_0 prod_{k<n} (1 - r_k^2), via cumulative log sums."""
    r = _rates(schedule, horizon)
    return x0 * np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(-r * r))]))


def variance_bounds_interacting(
    x0: float, schedule: StepSchedule, alpha: float, n_walkers: int, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Envelopes of x_n = 1/4 - Var[Z_n] for rho = 1, alpha > 0.

    lower: x_{n+1} = (1 - r_n^2 / N) x_n
    upper: x_{n+1} = (1 - C r_n^2) x_n with C = (1 - (1 - alpha)^2) / N
    """
    if not 0 < alpha <= 1:
        raise InvalidParameters("interacting bounds need 0 < alpha <= 1")
    r2 = _rates(schedule, horizon) ** 2
    c = (1.0 - (1.0 - alpha) ** 2) / n_walkers
    lower = x0 * np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(-r2 / n_walkers))]))
    upper = x0 * np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(-c * r2))]))
    return lower, upper


def lemma_a1_iterate(a: float, schedule: StepSchedule, k_bound: float, x0: float, horizon: int) -> np.ndarray:
    """x_{n+1} = (1 - a r_n) x_n + K r_n^2 with the worst-case constant K."""
    if not a > 0:
        raise InvalidParameters("the contraction constant a must be positive")
    x = np.empty(horizon + 1)
    x[0] = x0
    for k, r in enumerate(_rates(schedule, horizon)):
        x[k + 1] = (1.0 - a * r) * x[k] + k_bound * r * r
    return x


@dataclass(frozen=True, eq=False)
class MomentPath:
    """Exact first and second moments of the walker vector along a schedule."""

    steps: np.ndarray
    mean: np.ndarray  # (steps, N)
    second: np.ndarray  # (steps, N, N), E[Z Z^T]

    def var_zbar(self) -> np.ndarray:
        n = self.mean.shape[1]
        m = self.mean.sum(axis=1) / n
        return self.second.sum(axis=(1, 2)) / n**2 - m**2

    def mean_sq_sync(self) -> np.ndarray:
        """E[(Z_n(i) - Z_n)^2] averaged over walkers."""
        n = self.mean.shape[1]
        diag = np.trace(self.second, axis1=1, axis2=2) / n
        return diag - self.second.sum(axis=(1, 2)) / n**2

    def mean_zbar(self) -> np.ndarray:
        return self.mean.mean(axis=1)


def exact_moments(params: ModelParams, z0: Sequence[float], horizon: int, record: Sequence[int] | None = None) -> MomentPath:
    """Propagate E[Z_n] and E[Z_n Z_n^T] exactly (valid for any N).

    With P = (1 - alpha) I + (alpha/N) 1 1^T, B = (1 - r) I + r rho P,
    b = r (1 - rho) q 1 and s = r rho:
        mu'  = B mu + b
        S'   = B S B^T + B mu b^T + b mu^T B^T + b b^T
               + s^2 (diag(P mu) - diag(diag(P S P^T)))
    The last term is the conditional covariance of the draws averaged over F_n.
    """
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    n_w = params.n_walkers
    if len(z0) == 1:
        z0 = np.full(n_w, z0[0])
    start = params.schedule.start
    rates = params.schedule.values(start, start + horizon)
    want = set(range(start, start + horizon + 1)) if record is None else set(int(s) for s in record)
    eye = np.eye(n_w)
    pm = (1.0 - params.alpha) * eye + params.alpha / n_w
    mu, s2 = z0.copy(), np.outer(z0, z0)
    steps, means, seconds = [], [], []

    def keep(n):
        if n in want:
            steps.append(n)
            means.append(mu.copy())
            seconds.append(s2.copy())

    keep(start)
    for k, r in enumerate(rates):
        bm = (1.0 - r) * eye + r * params.rho * pm
        b = np.full(n_w, r * (1.0 - params.rho) * params.q)
        s = r * params.rho
        pmu = pm @ mu
        psp = np.diag(pm @ s2 @ pm.T)
        bmu = bm @ mu
        s2 = bm @ s2 @ bm.T + np.outer(bmu, b) + np.outer(b, bmu) + np.outer(b, b) + s * s * np.diag(pmu - psp)
        mu = bmu + b
        keep(start + k + 1)
    return MomentPath(np.array(steps), np.array(means), np.array(seconds))
