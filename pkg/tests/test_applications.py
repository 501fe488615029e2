from __future__ import annotations

import numpy as np
import pytest

from conftest import within_se
from reinforced_walks.applications import (
    PAGraph,
    UrnSpec,
    graph_to_schedule,
    pa_grow,
    pa_trajectory,
    simulate_urn,
    urn_to_schedule,
    write_degree_csv,
)
from reinforced_walks.ensemble import ExplicitSteps, run_ensemble
from reinforced_walks.errors import InvalidParameters, InvalidUrn
from reinforced_walks.model import Deterministic, ModelParams
from reinforced_walks.rng import GRAPH, RandomStream, stream_key

POLYA = UrnSpec(((1, 0), (0, 1)), initial_total=2)
FRIEDMAN = UrnSpec(((3, 1), (1, 3)), initial_total=4)


def test_polya_schedule():
    sched, rho, q = urn_to_schedule(POLYA, 50)
    n = np.arange(50)
    assert np.allclose(sched.values(0, 50), 1 / (n + 3))
    assert rho == 1.0 and q is None


def test_friedman_schedule():
    sched, rho, q = urn_to_schedule(FRIEDMAN, 50)
    n = np.arange(50)
    assert np.allclose(sched.values(0, 50), 1 / (n + 2))
    assert rho == pytest.approx(0.5) and q == pytest.approx(0.5)


def test_exp_power_rate_slope():
    spec = UrnSpec(((1, 0), (0, 1)), scale_kind="exp_power", scale_param=0.5)
    sched, _, _ = urn_to_schedule(spec, 20001)
    n = np.arange(5000, 20001)
    slope = np.polyfit(np.log(n), np.log(sched.values(5000, 20001)), 1)[0]
    assert abs(slope - (0.5 - 1)) < 0.05


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(base_matrix=((2, 0), (0, 1))),
        dict(base_matrix=((1, -1), (0, 0))),
        dict(base_matrix=((0, 0), (0, 0))),
        dict(base_matrix=((1, 0), (0, 1)), scale_kind="exp_power", scale_param=1.5),
        dict(base_matrix=((1, 0), (0, 1)), scale_kind="weird"),
    ],
)
def test_invalid_urns(kwargs):
    with pytest.raises(InvalidUrn):
        UrnSpec(**kwargs)


def test_urn_round_trip():
    spec = UrnSpec(((3, 1), (1, 3)), scale_kind="power", scale_param=0.3, initial_total=4, initial_ones=1)
    assert UrnSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("spec", [POLYA, FRIEDMAN], ids=["polya", "friedman"])
def test_urn_matches_walk_in_law(spec):
    m = 100000
    steps = (10, 50)
    direct = simulate_urn(spec, steps, m, 12345)
    sched, rho, q = urn_to_schedule(spec, 60)
    z0 = spec.initial_ones / spec.initial_total
    p = ModelParams(1, rho, 0.0, 0.5 if q is None else q, sched, Deterministic((z0,)))
    walk = run_ensemble(p, ExplicitSteps(steps), m, 12345).zbar()
    for g in range(len(steps)):
        a, b = direct[:, g], walk[:, g]
        se_mean = np.sqrt(a.var() / m + b.var() / m)
        assert within_se(a.mean(), b.mean(), se_mean)
        da = (a - a.mean()) ** 2
        db = (b - b.mean()) ** 2
        se_var = np.sqrt(da.var() / m + db.var() / m)
        assert within_se(a.var(), b.var(), se_var)


def test_pa_first_step_is_fair():
    for delta in (0.0, 1.0):
        hits = np.zeros(2)
        for k in range(4000):
            g = pa_grow(PAGraph.initial(delta), RandomStream(stream_key(3, k, GRAPH)))
            hits[int(np.argmax(g.degrees[:2]))] += 1
        assert abs(hits[0] / 4000 - 0.5) < 4 * 0.5 / np.sqrt(4000)


def test_pa_grow_probabilities_match_rule():
    # from degrees (3, 1, 1, 1) with delta = 0.5: (d + delta) / (2(n-1) + n delta)
    g = PAGraph(4, np.array([3, 1, 1, 1]), 0, 0.5)
    target = (np.array([3, 1, 1, 1]) + 0.5) / (2 * 3 + 4 * 0.5)
    m = 40000
    counts = np.zeros(4)
    for k in range(m):
        new = pa_grow(g, RandomStream(stream_key(9, k, GRAPH)))
        counts[int(np.flatnonzero(new.degrees[:4] - g.degrees)[0])] += 1
    freq = counts / m
    assert np.all(np.abs(freq - target) < 4 * np.sqrt(target * (1 - target) / m))


def test_pa_invariants_and_tie_break():
    g = PAGraph.initial(0.0)
    rng = RandomStream(stream_key(1, 0, GRAPH))
    for _ in range(300):
        g = pa_grow(g, rng)
        assert g.degrees.sum() == 2 * (g.n_vertices - 1)
        assert g.max_degree == g.degrees.max()
        assert g.max_degree_vertex == int(np.flatnonzero(g.degrees == g.degrees.max())[0])


def test_pa_grow_reproduces_trajectory():
    traj = pa_trajectory(0.5, 400, 21, realization=2)
    g = PAGraph.initial(0.5)
    rng = RandomStream(stream_key(21, 2, GRAPH))
    maxdeg = [g.max_degree]
    while g.n_vertices < 400:
        g = pa_grow(g, rng)
        maxdeg.append(g.max_degree)
    assert np.array_equal(g.degrees, traj.degrees)
    assert np.array_equal(maxdeg, traj.max_degrees)


def test_pa_invalid_delta():
    with pytest.raises(InvalidParameters):
        pa_trajectory(-1.0, 10, 0)


def test_graph_schedule_examples():
    sched = graph_to_schedule([PAGraph.initial(0.0)], 0.5)
    assert sched(2) == pytest.approx(0.5 / 3)
    # star graphs: hub degree n - 1
    stars = [PAGraph(n, np.array([n - 1] + [1] * (n - 1)), 0, 0.0) for n in range(2, 12)]
    sched = graph_to_schedule(stars, 0.5)
    for n in range(2, 12):
        assert sched(n) == pytest.approx(0.5 * (n - 1) / (n + 1))


def test_graph_schedule_below_one():
    traj = pa_trajectory(0.0, 5000, 4)
    r = graph_to_schedule(traj, 0.99).values(2, 5000)
    assert (r < 1).all() and (r > 0).all()


def test_degree_csv(tmp_path):
    traj = pa_trajectory(0.0, 50, 4)
    path = tmp_path / "deg.csv"
    write_degree_csv(traj, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "vertex,degree" and len(rows) == 51
    assert sum(int(r.split(",")[1]) for r in rows[1:]) == 2 * 49


def test_max_degree_ratio_stabilises():
    # median over realisations of d_max(n) / n^(1/2), read across the last decade
    n = np.geomspace(10000, 100000, 40).astype(int)
    ratios = np.array([pa_trajectory(0.0, 100000, 77, k).max_degrees[n - 2] / np.sqrt(n) for k in range(20)])
    med = np.median(ratios, axis=0)
    assert med.min() > 0
    assert med.max() / med.min() < 1.2
