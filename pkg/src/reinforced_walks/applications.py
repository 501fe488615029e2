"""Balanced urns and preferential-attachment opinion dynamics as walk schedules."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ._backend import kernels
from .errors import InvalidParameters, InvalidUrn
from .model import KernelSpec, kernel_decompose
from .rng import GRAPH, RandomStream, stream_key
from .schedules import GraphDerived, UrnDerived

SCALE_KINDS = ("constant", "power", "exp_power")


@dataclass(frozen=True)
class UrnSpec:
    """Two-colour urn with reinforcement matrices A_n = c_n * A.

    ``scale_kind`` selects c_n: ``constant`` (c_n = param), ``power``
    (c_n = (n + 1)**param) or ``exp_power`` (c_n = exp(n**param), 0 < param < 1).
    ``initial_ones`` defaults to half of ``initial_total``.
    """

    base_matrix: tuple[tuple[int, int], tuple[int, int]]
    scale_kind: str = "constant"
    scale_param: float = 1.0
    initial_total: float = 2
    initial_ones: float | None = None

    def __post_init__(self):
        a = np.asarray(self.base_matrix)
        if a.shape != (2, 2):
            raise InvalidUrn(f"reinforcement matrix must be 2x2, got shape {a.shape}")
        if (a < 0).any() or not np.array_equal(a, np.round(a)):
            raise InvalidUrn("reinforcement matrix entries must be nonnegative integers")
        if a[0].sum() != a[1].sum():
            raise InvalidUrn(f"unbalanced urn: row sums {a[0].sum()} != {a[1].sum()}")
        if a[0].sum() == 0:
            raise InvalidUrn("reinforcement matrix adds no balls")
        object.__setattr__(self, "base_matrix", tuple(tuple(int(v) for v in row) for row in a))
        if self.scale_kind not in SCALE_KINDS:
            raise InvalidUrn(f"unknown scale rule {self.scale_kind!r}; expected one of {SCALE_KINDS}")
        if self.scale_kind == "constant" and not self.scale_param > 0:
            raise InvalidUrn("constant scale must be positive")
        if self.scale_kind == "exp_power" and not 0 < self.scale_param < 1:
            raise InvalidUrn("exp_power exponent beta must lie in (0, 1)")
        if not self.initial_total > 0:
            raise InvalidUrn("initial ball count must be positive")
        ones = self.initial_total / 2 if self.initial_ones is None else self.initial_ones
        if not 0 <= ones <= self.initial_total:
            raise InvalidUrn("initial_ones must lie in [0, initial_total]")
        object.__setattr__(self, "initial_ones", ones)

    @property
    def row_sum(self) -> int:
        return sum(self.base_matrix[0])

    def kernel(self) -> KernelSpec:
        a_bar = self.row_sum
        return KernelSpec(self.base_matrix[0][1] / a_bar, self.base_matrix[1][1] / a_bar)

    def log_scale(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        if self.scale_kind == "constant":
            return np.full(n.shape, np.log(self.scale_param))
        if self.scale_kind == "power":
            return self.scale_param * np.log(n + 1.0)
        return n**self.scale_param

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_matrix": [list(r) for r in self.base_matrix],
            "scale": self.scale_kind,
            "scale_param": self.scale_param,
            "initial_total": self.initial_total,
            "initial_ones": self.initial_ones,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UrnSpec":
        return cls(
            base_matrix=tuple(tuple(r) for r in d["base_matrix"]),
            scale_kind=d.get("scale", "constant"),
            scale_param=float(d.get("scale_param", 1.0)),
            initial_total=d.get("initial_total", 2),
            initial_ones=d.get("initial_ones"),
        )


def urn_to_schedule(spec: UrnSpec, horizon: int) -> tuple[UrnDerived, float, float | None]:
    """r_n = c_n A_bar / (N(0) + A_bar sum_{k<=n} c_k) for n < horizon, and (rho, q) of the urn kernel."""
    if horizon < 1:
        raise InvalidParameters(f"urn horizon must be >= 1, got {horizon}")
    rho, q = kernel_decompose(spec.kernel())
    n = np.arange(horizon)
    a_bar = spec.row_sum
    if spec.scale_kind == "exp_power":
        # c_n overflows quickly; accumulate N(n+1)/A_bar in log space
        log_c = spec.log_scale(n)
        log_total = np.logaddexp.accumulate(np.concatenate([[np.log(spec.initial_total / a_bar)], log_c]))[1:]
        rates = np.exp(log_c - log_total)
    else:
        c = np.exp(spec.log_scale(n)) if spec.scale_kind == "power" else np.full(horizon, float(spec.scale_param))
        rates = c * a_bar / (spec.initial_total + a_bar * np.cumsum(c))
    return UrnDerived(rates, spec=spec), rho, q


def simulate_urn(spec: UrnSpec, steps: Iterable[int], replications: int, seed: int) -> np.ndarray:
    """Direct ball-count simulation; returns the colour-1 fraction at each requested step.

    Independent of the walk machinery (numpy ``Generator`` draws, categorical
    choice by ball proportions), so it can serve as a cross-check.
    """
    steps = np.asarray(sorted(steps), dtype=np.int64)
    gen = np.random.default_rng(seed)
    a = np.asarray(spec.base_matrix, dtype=np.float64)
    ones = np.full(replications, float(spec.initial_ones))
    total = float(spec.initial_total)
    out = np.empty((replications, len(steps)))
    col = 0
    for n in range(int(steps[-1]) + 1):
        while col < len(steps) and steps[col] == n:
            out[:, col] = ones / total
            col += 1
        if col == len(steps):
            break
        c_n = float(np.exp(spec.log_scale(np.array([n]))[0]))
        drew_one = gen.random(replications) * total < ones
        ones = ones + c_n * np.where(drew_one, a[1, 1], a[0, 1])
        total += c_n * spec.row_sum
    return out


# ---------------------------------------------------------------------------
# preferential attachment


@dataclass(frozen=True, eq=False)
class PAGraph:
    """Degree sequence of a preferential-attachment tree (vertices 0-based here)."""

    n_vertices: int
    degrees: np.ndarray
    max_degree_vertex: int
    delta: float

    def __post_init__(self):
        if not self.delta > -1:
            raise InvalidParameters(f"delta must exceed -1, got {self.delta}")
        deg = np.array(self.degrees, dtype=np.int64)
        deg.setflags(write=False)
        object.__setattr__(self, "degrees", deg)

    @classmethod
    def initial(cls, delta: float = 0.0) -> "PAGraph":
        return cls(2, np.array([1, 1]), 0, delta)

    @property
    def max_degree(self) -> int:
        return int(self.degrees[self.max_degree_vertex])


def pa_grow(graph: PAGraph, rng: RandomStream) -> PAGraph:
    """Attach vertex n+1 to vertex i with probability (d_i + delta) / (2(n-1) + n delta).

    Draw order and arithmetic match the compiled trajectory generator, so
    repeated growth reproduces :func:`pa_trajectory` for the same key.
    """
    n = graph.n_vertices
    deg = graph.degrees
    u1, u2 = rng.uniform(2 * n), rng.uniform(2 * n + 1)
    w_deg = float(n - 2)
    if u1 * (w_deg + n * (1.0 + graph.delta)) < w_deg:
        i = int(np.searchsorted(np.cumsum(deg - 1), int(u2 * w_deg), side="right"))
    else:
        i = int(u2 * n)
    new = np.append(deg, 1)
    new[i] += 1
    j = graph.max_degree_vertex
    if new[i] > new[j] or (new[i] == new[j] and i < j):
        j = i
    return PAGraph(n + 1, new, j, graph.delta)


@dataclass(frozen=True, eq=False)
class PATrajectory:
    """Compact record of one graph realisation grown from 2 to ``n_max`` vertices."""

    delta: float
    max_degrees: np.ndarray  # entry k: maximal degree with k + 2 vertices
    degrees: np.ndarray  # final degree sequence
    seed: int

    @property
    def n_max(self) -> int:
        return len(self.degrees)

    def final_graph(self) -> PAGraph:
        j = int(np.argmax(self.degrees))
        return PAGraph(self.n_max, self.degrees, j, self.delta)


def pa_trajectory(delta: float, n_max: int, seed: int, realization: int = 0) -> PATrajectory:
    if not delta > -1:
        raise InvalidParameters(f"delta must exceed -1, got {delta}")
    if n_max < 2:
        raise InvalidParameters("a preferential-attachment graph needs at least 2 vertices")
    degrees = np.zeros(n_max, dtype=np.int64)
    maxdeg = np.zeros(n_max - 1, dtype=np.int64)
    kernels.pa_sequence(float(delta), int(n_max), stream_key(seed, realization, GRAPH), degrees, maxdeg)
    return PATrajectory(delta, maxdeg, degrees, seed)


def graph_to_schedule(graph_trajectory, lam: float) -> GraphDerived:
    """r_n = lam * d_{j_n}(n) / (n + 1) along a graph realisation.

    Accepts a :class:`PATrajectory` or a sequence of consecutive
    :class:`PAGraph` snapshots starting at 2 vertices.
    """
    if isinstance(graph_trajectory, PATrajectory):
        maxdeg = graph_trajectory.max_degrees
    else:
        graphs = list(graph_trajectory)
        sizes = [g.n_vertices for g in graphs]
        if sizes != list(range(2, 2 + len(graphs))):
            raise InvalidParameters("graph snapshots must be consecutive, starting from 2 vertices")
        maxdeg = [g.max_degree for g in graphs]
    return GraphDerived(lam, maxdeg)


def write_degree_csv(graph: PAGraph | PATrajectory, path: str | Path) -> None:
    """Columns ``vertex,degree`` with vertices numbered from 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "degree"])
        for v, d in enumerate(graph.degrees, start=1):
            w.writerow([v, int(d)])
