from __future__ import annotations

import numpy as np

from reinforced_walks.rng import GOLDEN, GRAPH, INITIAL, MASK64, WALK, RandomStream, mix64, mix64_array, stream_key, stream_keys, uniforms


def ref_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def test_mix64_matches_reference():
    for z in (0, 1, 12345, 2**63, MASK64, 0x9E3779B97F4A7C15):
        assert mix64(z) == ref_mix(z)
    arr = np.array([0, 1, 12345, 2**63, MASK64], dtype=np.uint64)
    assert [int(v) for v in mix64_array(arr)] == [ref_mix(int(v)) for v in arr]


def test_uniform_matches_scalar_definition():
    key = stream_key(99, 3)
    for ctr in (0, 1, 17, 10**9):
        bits = ref_mix((key + (ctr + 1) * GOLDEN) & MASK64) >> 11
        assert RandomStream(key).uniform(ctr) == bits * 2.0**-53


def test_uniforms_in_unit_interval_and_roughly_uniform():
    u = RandomStream(stream_key(1, 0)).uniforms(0, 200000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / len(u))


def test_streams_are_keyed_by_seed_replication_and_domain():
    keys = {stream_key(s, r, d) for s in (0, 1) for r in range(50) for d in (WALK, INITIAL, GRAPH)}
    assert len(keys) == 300
    assert np.array_equal(stream_keys(5, np.arange(10)), [stream_key(5, r) for r in range(10)])


def test_vector_and_scalar_draws_agree():
    keys = stream_keys(3, np.arange(4))
    ctr = np.arange(6, dtype=np.uint64)
    grid = uniforms(keys[:, None], ctr[None, :])
    for i, k in enumerate(keys):
        assert np.array_equal(grid[i], RandomStream(int(k)).uniforms(0, 6))
