"""Independent reference implementations used only by the tests."""

import numpy as np


def set_partitions(n):
    """Every partition of range(n) as a restricted-growth membership list."""
    def rec(prefix, k):
        if len(prefix) == n:
            yield list(prefix)
            return
        for c in range(k + 1):
            yield from rec(prefix + [c], max(k, c + 1))
    if n == 0:
        yield []
        return
    yield from rec([0], 1)


def modularity_edges(w, member, resolution=1.0):
    """Modularity straight from the pairwise definition, no vectorization."""
    n = len(member)
    two_m = sum(w[i][j] for i in range(n) for j in range(n))
    if two_m == 0:
        return 0.0
    deg = [sum(w[i]) for i in range(n)]
    q = 0.0
    for i in range(n):
        for j in range(n):
            if member[i] == member[j]:
                q += w[i][j] - resolution * deg[i] * deg[j] / two_m
    return q / two_m


def best_modularity(w, resolution=1.0):
    w = np.asarray(w, dtype=float)
    best, arg = -np.inf, None
    for part in set_partitions(len(w)):
        q = modularity_edges(w.tolist(), part, resolution)
        if q > best:
            best, arg = q, part
    return best, arg
