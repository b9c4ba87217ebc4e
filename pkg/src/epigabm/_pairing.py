"""Degree-capped symmetric contact sampling.

Grid agents are visited in a seeded random order. Each draws partners uniformly
without replacement from the agents that still have residual capacity, skipping
itself and existing partners; every edge is recorded on both endpoints.

Two implementations consume the generator identically (one ``random()`` call
per shuffle swap and per candidate draw) and therefore produce the same graph:
a numba kernel for speed and a plain Python reference.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


def _pair_python(m: int, cap: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    partners = np.full((m, max(cap, 1)), -1, dtype=np.int64)
    deg = np.zeros(m, dtype=np.int64)
    if m < 2 or cap <= 0:
        return partners[:, :cap], deg
    order = list(range(m))
    for i in range(m - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        order[i], order[j] = order[j], order[i]
    pool = list(order)
    pos = [0] * m
    for i, a in enumerate(pool):
        pos[a] = i
    n_pool = m

    def remove(x):
        nonlocal n_pool
        i = pos[x]
        last = pool[n_pool - 1]
        pool[i] = last
        pos[last] = i
        pos[x] = -1
        n_pool -= 1

    for a in order:
        if pos[a] < 0:
            continue
        while deg[a] < cap:
            if n_pool <= cap + 1:
                cands = [pool[k] for k in range(n_pool)
                         if pool[k] != a and pool[k] not in partners[a, :deg[a]]]
                if not cands:
                    break
                b = cands[int(rng.random() * len(cands))]
            else:
                b = pool[int(rng.random() * n_pool)]
                if b == a or b in partners[a, :deg[a]]:
                    continue
            partners[a, deg[a]] = b
            deg[a] += 1
            partners[b, deg[b]] = a
            deg[b] += 1
            if deg[b] >= cap:
                remove(b)
        remove(a)
    return partners[:, :cap], deg


if njit is not None:

    @njit(cache=True)
    def _pair_kernel(m, cap, rng):  # pragma: no cover - compiled
        partners = np.full((m, max(cap, 1)), -1, dtype=np.int64)
        deg = np.zeros(m, dtype=np.int64)
        if m < 2 or cap <= 0:
            return partners, deg
        order = np.arange(m)
        for i in range(m - 1, 0, -1):
            j = int(rng.random() * (i + 1))
            t = order[i]
            order[i] = order[j]
            order[j] = t
        pool = order.copy()
        pos = np.empty(m, dtype=np.int64)
        for i in range(m):
            pos[pool[i]] = i
        n_pool = m
        cands = np.empty(m, dtype=np.int64)
        for idx in range(m):
            a = order[idx]
            if pos[a] < 0:
                continue
            while deg[a] < cap:
                if n_pool <= cap + 1:
                    nc = 0
                    for k in range(n_pool):
                        c = pool[k]
                        if c == a:
                            continue
                        dup = False
                        for q in range(deg[a]):
                            if partners[a, q] == c:
                                dup = True
                                break
                        if not dup:
                            cands[nc] = c
                            nc += 1
                    if nc == 0:
                        break
                    b = cands[int(rng.random() * nc)]
                else:
                    b = pool[int(rng.random() * n_pool)]
                    if b == a:
                        continue
                    dup = False
                    for q in range(deg[a]):
                        if partners[a, q] == b:
                            dup = True
                            break
                    if dup:
                        continue
                partners[a, deg[a]] = b
                deg[a] += 1
                partners[b, deg[b]] = a
                deg[b] += 1
                if deg[b] >= cap:
                    i = pos[b]
                    last = pool[n_pool - 1]
                    pool[i] = last
                    pos[last] = i
                    pos[b] = -1
                    n_pool -= 1
            i = pos[a]
            last = pool[n_pool - 1]
            pool[i] = last
            pos[last] = i
            pos[a] = -1
            n_pool -= 1
        return partners, deg


def pair_contacts(m: int, cap: int, rng: np.random.Generator, *, use_kernel: bool = True):
    """Sample contacts among ``m`` grid slots; returns (partners[m, cap] padded with -1, degree[m])."""
    if use_kernel and njit is not None:
        partners, deg = _pair_kernel(m, cap, rng)
        return partners[:, :cap], deg
    return _pair_python(m, cap, rng)
