"""Interacting reinforced random walks on [0, 1].

Walker i evolves as

    Z_{n+1}(i) = (1 - r_n) Z_n(i) + r_n (rho I_{n+1}(i) + (1 - rho) q)

where the draws I_{n+1}(i) are conditionally independent Bernoulli variables
with success probability (1 - alpha) Z_n(i) + alpha Z_n and Z_n is the
walker average.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import special

from .errors import InvalidKernel, InvalidParameters, NotRepresentable
from .rng import INITIAL, RandomStream, stream_keys, uniforms
from .schedules import StepSchedule, schedule_from_dict, step_size


# ---------------------------------------------------------------------------
# initial laws


class InitialLaw:
    def sample(self, n_walkers: int, keys: np.ndarray) -> np.ndarray:
        """One row of Z_0 per key (replication)."""
        raise NotImplementedError

    def mean_and_var(self) -> tuple[float, float]:
        """Mean and variance of a single coordinate."""
        raise NotImplementedError

    def satisfies_assumptions(self, n_walkers: int) -> bool:
        """Permutation invariance, E[Z_0(i)] = 1/2 and E[Z_0 (1 - Z_0)] > 0."""
        m, v = self.mean_and_var()
        return abs(m - 0.5) < 1e-12 and m * (1 - m) - v / n_walkers > 0

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(InitialLaw):
    values: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        if not vals or any(not 0 <= v <= 1 for v in vals):
            raise InvalidParameters("deterministic initial values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    def row(self, n_walkers: int) -> np.ndarray:
        if len(self.values) == 1:
            return np.full(n_walkers, self.values[0])
        if len(self.values) != n_walkers:
            raise InvalidParameters(f"{len(self.values)} initial values given for {n_walkers} walkers")
        return np.array(self.values)

    def sample(self, n_walkers, keys):
        return np.tile(self.row(n_walkers), (len(keys), 1))

    def mean_and_var(self):
        return float(np.mean(self.values)), 0.0

    def satisfies_assumptions(self, n_walkers):
        # a non-constant deterministic vector is not permutation invariant
        return len(set(self.values)) == 1 and super().satisfies_assumptions(n_walkers)

    def to_dict(self):
        return {"kind": "deterministic", "values": list(self.values)}


@dataclass(frozen=True)
class SymmetricBeta(InitialLaw):
    """Independent Beta(a, a) coordinates, sampled by inverse CDF."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameters(f"beta shape must be positive, got {self.a}")

    def sample(self, n_walkers, keys):
        u = uniforms(np.asarray(keys)[:, None], np.arange(n_walkers))
        return special.betaincinv(self.a, self.a, u)

    def mean_and_var(self):
        return 0.5, 1.0 / (4.0 * (2.0 * self.a + 1.0))

    def to_dict(self):
        return {"kind": "beta", "a": self.a}


@dataclass(frozen=True)
class TwoPoint(InitialLaw):
    """Independent coordinates equal to ``hi`` with probability ``p``, else ``lo``."""

    p: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.lo <= 1 and 0 <= self.hi <= 1):
            raise InvalidParameters("two-point law needs p, lo, hi in [0, 1]")

    def sample(self, n_walkers, keys):
        u = uniforms(np.asarray(keys)[:, None], np.arange(n_walkers))
        return np.where(u < self.p, self.hi, self.lo)

    def mean_and_var(self):
        m = self.p * self.hi + (1 - self.p) * self.lo
        return m, self.p * (1 - self.p) * (self.hi - self.lo) ** 2

    def to_dict(self):
        return {"kind": "two_point", "p": self.p, "lo": self.lo, "hi": self.hi}


def initial_from_dict(d: dict[str, Any]) -> InitialLaw:
    kind = d.get("kind", "deterministic")
    if kind == "deterministic":
        vals = d.get("values", d.get("value", 0.5))
        return Deterministic(tuple(np.atleast_1d(vals).tolist()))
    if kind == "beta":
        return SymmetricBeta(float(d["a"]))
    if kind == "two_point":
        return TwoPoint(float(d["p"]), float(d["lo"]), float(d["hi"]))
    raise InvalidParameters(f"unknown initial law kind {kind!r}")


# ---------------------------------------------------------------------------
# parameters and kernels


@dataclass(frozen=True)
class KernelSpec:
    """K(0)(1) and K(1)(1); the complements K(y)(0) are implied."""

    k0_to_1: float
    k1_to_1: float


def kernel_decompose(kernel: KernelSpec) -> tuple[float, float | None]:
    """Write K(y) = rho delta_y + (1 - rho) q and return ``(rho, q)``.

    ``q`` is ``None`` when ``rho == 1``: the kernel is then pure reinforcement
    and does not determine q.
    """
    k0, k1 = float(kernel.k0_to_1), float(kernel.k1_to_1)
    if not (0 <= k0 <= 1 and 0 <= k1 <= 1):
        raise InvalidKernel(f"kernel rows must be probability vectors, got K(0)(1)={k0}, K(1)(1)={k1}")
    rho = k1 - k0
    if rho < 0:
        raise NotRepresentable(f"K(1)(1) < K(0)(1) gives rho = {rho} < 0")
    if rho == 1:
        return 1.0, None
    # k0 <= 1 - rho holds exactly, so any excess over 1 is rounding
    q = min(1.0, k0 / (1 - rho))
    return rho, q


@dataclass(frozen=True, eq=False)
class ModelParams:
    n_walkers: int
    rho: float
    alpha: float
    q: float
    schedule: StepSchedule
    initial: InitialLaw = Deterministic((0.5,))

    def __post_init__(self):
        if int(self.n_walkers) != self.n_walkers or self.n_walkers < 1:
            raise InvalidParameters(f"n_walkers must be a positive integer, got {self.n_walkers}")
        for name in ("rho", "alpha", "q"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidParameters(f"{name} must lie in [0, 1], got {v}")
        if isinstance(self.initial, Deterministic):
            self.initial.row(self.n_walkers)

    def targets(self) -> tuple[float, float]:
        """Walk targets rho * I + (1 - rho) q for I = 0 and I = 1."""
        t0 = (1.0 - self.rho) * self.q
        return t0, self.rho + t0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_walkers": int(self.n_walkers),
            "rho": float(self.rho),
            "alpha": float(self.alpha),
            "q": float(self.q),
            "schedule": self.schedule.to_dict(),
            "initial": self.initial.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelParams":
        return cls(
            n_walkers=int(d["n_walkers"]),
            rho=float(d["rho"]),
            alpha=float(d.get("alpha", 0.0)),
            q=float(d.get("q", 0.5)),
            schedule=schedule_from_dict(d["schedule"]),
            initial=initial_from_dict(d.get("initial", {})),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def sample_initial(self, master_seed: int, replications) -> np.ndarray:
        keys = stream_keys(master_seed, replications, INITIAL)
        return np.ascontiguousarray(self.initial.sample(self.n_walkers, keys), dtype=np.float64)


# ---------------------------------------------------------------------------
# state and one-step dynamics


def sequential_mean(z: np.ndarray) -> np.ndarray | float:
    """Mean over the last axis, summed left to right.

    The compiled kernels sum in the same order, which keeps both backends
    bit-identical (``np.mean`` uses pairwise summation).
    """
    z = np.asarray(z, dtype=np.float64)
    s = z[..., 0].copy()
    for i in range(1, z.shape[-1]):
        s += z[..., i]
    s = s / z.shape[-1]
    return float(s) if s.ndim == 0 else s


@dataclass(frozen=True, eq=False)
class WalkState:
    step: int
    z: np.ndarray
    z_bar: float

    @classmethod
    def from_values(cls, step: int, z) -> "WalkState":
        arr = np.array(z, dtype=np.float64).reshape(-1)
        arr.setflags(write=False)
        return cls(int(step), arr, sequential_mean(arr))

    @classmethod
    def initial(cls, params: ModelParams, master_seed: int = 0, replication: int = 0) -> "WalkState":
        z0 = params.sample_initial(master_seed, [replication])[0]
        return cls.from_values(params.schedule.start, z0)


def draw_probabilities(state: WalkState, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * state.z + alpha * state.z_bar


def apply_draws(state: WalkState, params: ModelParams, draws) -> WalkState:
    """Advance one step with the Bernoulli outcomes given explicitly."""
    r = step_size(params.schedule, state.step)
    t0, t1 = params.targets()
    target = np.where(np.asarray(draws, dtype=bool), t1, t0)
    return WalkState.from_values(state.step + 1, (1.0 - r) * state.z + r * target)


def step(state: WalkState, params: ModelParams, rng: RandomStream) -> WalkState:
    """Sample I_{n+1} from ``rng`` (counters n*N .. n*N + N - 1) and advance."""
    n_w = len(state.z)
    u = rng.uniforms(state.step * n_w, n_w)
    return apply_draws(state, params, u < draw_probabilities(state, params.alpha))


def conditional_mean_increments(state: WalkState, params: ModelParams) -> tuple[float, float]:
    """E[Z_{n+1} - q | F_n] and the factor contracting Z_n(i) - Z_n in conditional mean."""
    r = step_size(params.schedule, state.step)
    mean_dev = (1.0 - (1.0 - params.rho) * r) * (state.z_bar - params.q)
    factor = 1.0 - (1.0 - params.rho * (1.0 - params.alpha)) * r
    return mean_dev, factor


def conditional_variances(state: WalkState, params: ModelParams) -> tuple[np.ndarray, float]:
    """Var[Z_{n+1}(i) - Z_{n+1} | F_n] for every i, and Var[Z_{n+1} | F_n]."""
    r = step_size(params.schedule, state.step)
    n_w = len(state.z)
    p = draw_probabilities(state, params.alpha)
    v = p * (1.0 - p)
    scale = (r * params.rho) ** 2
    var_sync = scale * ((1 - 1 / n_w) ** 2 * v + (v.sum() - v) / n_w**2)
    var_bar = scale * v.sum() / n_w**2
    return var_sync, float(var_bar)
