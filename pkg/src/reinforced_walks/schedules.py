"""Deterministic step-size sequences r_n.

All schedules expose ``values(start, stop)`` returning ``r_n`` for
``start <= n < stop`` as a float64 array, plus a ``start`` attribute giving
the first index at which they are defined (2 for graph-derived schedules,
whose time index is the number of graph vertices).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special

from .errors import InvalidParameters, ScheduleExhausted

GUARD_EPS = 1e-9


class StepSchedule:
    start: int = 0

    @property
    def horizon(self) -> int | None:
        """Exclusive upper bound of defined indices, ``None`` if unbounded."""
        return None

    def values(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, n: int) -> float:
        return step_size(self, n)

    def sum_sq_diverges(self) -> bool | None:
        """Whether sum r_n^2 diverges, when decidable from the parametrisation."""
        return None

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def _check_range(self, start: int, stop: int) -> None:
        if start < self.start or (self.horizon is not None and stop > self.horizon):
            raise ScheduleExhausted(
                f"{type(self).__name__} defines r_n for {self.start} <= n < {self.horizon}, "
                f"requested [{start}, {stop})"
            )


@dataclass(frozen=True)
class PowerLaw(StepSchedule):
    """r_n = c / (n + offset)**gamma, clamped to 1 - GUARD_EPS when ``clamp`` is set."""

    c: float
    gamma: float
    offset: int = 1
    clamp: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidParameters(f"power-law c must be positive, got {self.c}")
        if not 0 < self.gamma <= 1:
            raise InvalidParameters(f"power-law gamma must lie in (0, 1], got {self.gamma}")
        if int(self.offset) != self.offset or self.offset < 1:
            raise InvalidParameters(f"power-law offset must be a positive integer, got {self.offset}")
        if self.c / self.offset**self.gamma >= 1 and not self.clamp:
            raise InvalidParameters(
                f"r_0 = c/offset^gamma = {self.c / self.offset ** self.gamma:.6g} >= 1; "
                "increase offset or enable clamp"
            )

    def values(self, start: int, stop: int) -> np.ndarray:
        self._check_range(start, stop)
        n = np.arange(start, stop, dtype=np.float64)
        return np.minimum(self.c / (n + self.offset) ** self.gamma, 1.0 - GUARD_EPS)

    def sum_sq_diverges(self) -> bool:
        return self.gamma <= 0.5

    def tail_sum_sq(self, n: int) -> float:
        """sum_{k >= n} r_k^2, exact for indices past any clamping."""
        if self.gamma <= 0.5:
            return float("inf")
        return float(self.c**2 * special.zeta(2 * self.gamma, n + self.offset))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "power", "c": self.c, "gamma": self.gamma, "offset": int(self.offset), "clamp": self.clamp}


@dataclass(frozen=True, eq=False)
class Explicit(StepSchedule):
    """A finite, precomputed sequence r_0, r_1, ..."""

    rates: np.ndarray

    def __post_init__(self):
        arr = np.array(self.rates, dtype=np.float64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= 1):
            raise InvalidParameters("explicit schedule values must satisfy 0 <= r_n < 1")
        arr.setflags(write=False)
        object.__setattr__(self, "rates", arr)

    @property
    def horizon(self) -> int:
        return self.start + len(self.rates)

    def values(self, start: int, stop: int) -> np.ndarray:
        self._check_range(start, stop)
        return self.rates[start - self.start : stop - self.start].copy()

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "explicit", "values": [float(v) for v in self.rates]}


@dataclass(frozen=True, eq=False)
class UrnDerived(Explicit):
    """Explicit schedule precomputed from a balanced urn; keeps the urn description."""

    spec: Any = None

    def to_dict(self) -> dict[str, Any]:
        d = {"kind": "urn", "horizon": len(self.rates)}
        if self.spec is not None:
            d.update(self.spec.to_dict())
        return d


@dataclass(frozen=True, eq=False)
class GraphDerived(StepSchedule):
    """r_n = lam * d_max(n) / (n + 1) for graph times n >= 2.

    ``max_degrees[k]`` is the maximal degree of the graph with ``k + 2`` vertices.
    """

    lam: float
    max_degrees: np.ndarray
    start: int = field(default=2, init=False)

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidParameters(f"lambda must lie in (0, 1), got {self.lam}")
        arr = np.array(self.max_degrees, dtype=np.int64).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "max_degrees", arr)

    @property
    def horizon(self) -> int:
        return 2 + len(self.max_degrees)

    def values(self, start: int, stop: int) -> np.ndarray:
        self._check_range(start, stop)
        n = np.arange(start, stop, dtype=np.float64)
        return self.lam * self.max_degrees[start - 2 : stop - 2] / (n + 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "graph_values", "lambda": self.lam, "max_degrees": [int(d) for d in self.max_degrees]}


def step_size(schedule: StepSchedule, n: int) -> float:
    """r_n for a single index."""
    if n < 0:
        raise ScheduleExhausted(f"step index must be nonnegative, got {n}")
    return float(schedule.values(n, n + 1)[0])


def schedule_from_dict(d: dict[str, Any]) -> StepSchedule:
    kind = d.get("kind", "power")
    if kind == "power":
        return PowerLaw(
            c=float(d["c"]), gamma=float(d["gamma"]), offset=int(d.get("offset", 1)), clamp=bool(d.get("clamp", False))
        )
    if kind == "explicit":
        return Explicit(np.asarray(d["values"], dtype=np.float64))
    if kind == "graph_values":
        return GraphDerived(float(d["lambda"]), np.asarray(d["max_degrees"], dtype=np.int64))
    if kind == "urn":
        from .applications import UrnSpec, urn_to_schedule

        sched, _, _ = urn_to_schedule(UrnSpec.from_dict(d), int(d["horizon"]))
        return sched
    if kind == "graph":
        from .applications import graph_to_schedule, pa_trajectory

        traj = pa_trajectory(float(d.get("delta", 0.0)), int(d["n_max"]), int(d.get("graph_seed", 0)))
        return graph_to_schedule(traj, float(d["lambda"]))
    raise InvalidParameters(f"unknown schedule kind {kind!r}")
