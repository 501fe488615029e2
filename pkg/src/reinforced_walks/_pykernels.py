"""Pure-Python/numpy implementations of the hot loops.

Same signatures and the same floating-point operation order as the compiled
``_kernels`` module, so both produce bit-identical output.  Vectorised over
replications rather than looping over them.
"""
from __future__ import annotations

import numpy as np

from .rng import uniforms


def _seq_sum(z):
    s = z[:, 0].copy()
    for i in range(1, z.shape[1]):
        s += z[:, i]
    return s


def _record(out, g, z, n_walkers, reduced):
    if not reduced:
        out[:, g, :] = z
        return
    zbar = _seq_sum(z) / n_walkers
    dev = z - zbar[:, None]
    out[:, g, 0] = zbar
    out[:, g, 1] = dev[:, 0]
    out[:, g, 2] = _seq_sum(dev * dev) / n_walkers


def simulate(z0, rates, rho, alpha, q, keys, start, grid, out, reduced, fix_run_start=None, fix_last=None, draws=None):
    """Evolve ``len(keys)`` replications from ``z0`` and record at ``grid`` steps.

    ``rates[k]`` is r_{start + k}.  Walker i at step n consumes counter
    ``n * N + i`` of its replication's stream.  For ``N == 1`` the start of
    the final constant run of draws (1-based) and its value are written to
    ``fix_run_start``/``fix_last`` when given; ``draws`` receives every draw.
    """
    z = np.array(z0, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.uint64)
    n_walkers = z.shape[1]
    t0 = (1.0 - rho) * q
    t1 = rho + t0
    omal = 1.0 - alpha
    walker = np.arange(n_walkers, dtype=np.uint64)
    track = fix_run_start is not None and n_walkers == 1
    if track:
        fix_run_start[:] = 1
        fix_last[:] = 0
    last = None
    g, n_grid = 0, len(grid)
    n = start
    while True:
        while g < n_grid and grid[g] == n:
            _record(out, g, z, n_walkers, reduced)
            g += 1
        if g == n_grid:
            break
        r = rates[n - start]
        zbar = _seq_sum(z) / n_walkers
        p = omal * z + alpha * zbar[:, None]
        u = uniforms(keys[:, None], np.uint64(n * n_walkers) + walker[None, :])
        hit = u < p
        z = (1.0 - r) * z + r * np.where(hit, t1, t0)
        k = n - start + 1
        if track:
            cur = hit[:, 0]
            if k > 1:
                fix_run_start[cur != last] = k
            last = cur
        if draws is not None:
            draws[:, k - 1] = hit[:, 0]
        n += 1
    if track and last is not None:
        fix_last[:] = last


def pa_sequence(delta, n_max, key, degrees_out, maxdeg_out):
    """Grow a preferential-attachment tree from 2 to ``n_max`` vertices.

    Attachment weight d_i + delta is split as (d_i - 1) + (1 + delta): with
    probability (n - 2) / (n - 2 + n (1 + delta)) the target is drawn with
    weight d_i - 1 (Fenwick search), otherwise uniformly.  Graph step n uses
    counters 2n and 2n + 1.  ``maxdeg_out[n - 2]`` is the maximal degree of the
    n-vertex graph.
    """
    size = n_max
    tree = [0] * (size + 1)
    deg = [0] * size
    deg[0] = deg[1] = 1
    top = 1
    while top * 2 <= size:
        top *= 2
    j = 0
    if n_max > 2:
        u = uniforms(np.uint64(key), np.arange(4, 2 * n_max, dtype=np.uint64)).tolist()
    for n in range(2, n_max):
        maxdeg_out[n - 2] = deg[j]
        u1, u2 = u[2 * n - 4], u[2 * n - 3]
        w_deg = float(n - 2)
        if u1 * (w_deg + n * (1.0 + delta)) < w_deg:
            rem = int(u2 * w_deg)
            pos, bit = 0, top
            while bit:
                nxt = pos + bit
                if nxt <= size and tree[nxt] <= rem:
                    pos = nxt
                    rem -= tree[nxt]
                bit >>= 1
            i = pos
        else:
            i = int(u2 * n)
        deg[i] += 1
        idx = i + 1
        while idx <= size:
            tree[idx] += 1
            idx += idx & -idx
        deg[n] = 1
        if deg[i] > deg[j] or (deg[i] == deg[j] and i < j):
            j = i
    maxdeg_out[n_max - 2] = deg[j]
    degrees_out[:] = deg
