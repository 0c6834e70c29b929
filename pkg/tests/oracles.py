"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np


def set_partitions(n):
    """Every partition of range(n) as a label vector (restricted growth strings)."""
    def rec(prefix, top):
        if len(prefix) == n:
            yield np.array(prefix)
            return
        for c in range(top + 2):
            yield from rec(prefix + [c], max(top, c))
    yield from rec([0], 0) if n else iter(())


def modularity_pairwise(A, labels):
    """Q = 1/(2m) * sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j], by explicit double loop."""
    A = np.asarray(A, dtype=float)
    n = len(A)
    two_m = A.sum()
    if two_m == 0:
        return 0.0
    k = A.sum(axis=1)
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += A[i, j] - k[i] * k[j] / two_m
    return q / two_m


def random_weighted_graph(n, rng, density=0.6):
    A = np.triu(rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < density), 1)
    return A + A.T


def central_diff(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        old = x[i]
        x[i] = old + eps
        up = f(x)
        x[i] = old - eps
        dn = f(x)
        x[i] = old
        g[i] = (up - dn) / (2 * eps)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a) + np.abs(b))))
