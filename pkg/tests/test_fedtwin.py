import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dntml.errors import InvalidParameterError, OrderingError
from dntml.fedtwin import (AsyncState, BSAttributes, ClusterPartition, FedTwinConfig,
                           ModelUpdate, aggregate_sync, apply_async, build_affinity,
                           circle_overlap, cluster_fixed_k, cluster_modularity, from_edges,
                           modularity, planted_partition_graph, rand_index, reform_clusters,
                           run_centralized, run_fedtwin, single_client, staleness_alpha)
from dntml.fedtwin.affinity import planted_attributes
from oracles import modularity_pairwise, random_weighted_graph, set_partitions

TWO_TRIANGLES = from_edges(6, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)])


# ----------------------------------------------------------------- affinity

def attrs(pos, cap, rad, hist):
    return BSAttributes(np.array(pos, float), np.array(cap, float), np.array(rad, float),
                        np.array(hist, float))


def test_colocated_identical_nodes_get_full_weight():
    a = attrs([[0, 0], [0, 0]], [2, 2], [1, 1], [[1, 2], [1, 2]])
    g = build_affinity(a, mixing=(0.1, 0.2, 0.3, 0.4))
    assert g.weights[0, 1] == pytest.approx(1.0)


def test_distant_disjoint_orthogonal_nodes_are_pruned():
    a = attrs([[0, 0], [1e6, 0]], [1, 0], [1, 1], [[1, 0], [0, 1]])
    g = build_affinity(a)
    assert g.weights[0, 1] == 0.0 and g.edges() == []


def test_three_node_hand_computation():
    a = attrs([[0, 0], [3, 4], [0, 1]], [1, 2, 4], [1, 1, 1], [[1, 0], [1, 1], [0, 0]])
    g = build_affinity(a, mixing=(0.25,) * 4, d0=5.0)
    d01, d02, d12 = 5.0, 1.0, math.hypot(3, 3)
    lens = lambda d, r=1.0: (2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)) / (math.pi * r * r)
    w01 = 0.25 * (math.exp(-d01 / 5) + 1 / 4 + 0.0 + 1 / math.sqrt(2))
    w02 = 0.25 * (math.exp(-d02 / 5) + 1 / 4 + lens(1.0) + 0.0)       # zero histogram -> 0
    w12 = 0.25 * (math.exp(-d12 / 5) + 2 / 4 + 0.0 + 0.0)
    np.testing.assert_allclose([g.weights[0, 1], g.weights[0, 2], g.weights[1, 2]], [w01, w02, w12], rtol=1e-12)


def test_graph_invariants_and_errors():
    a, _ = planted_attributes(3, 4, np.random.default_rng(0))
    g = build_affinity(a)
    assert np.all(g.weights >= 0) and np.all(np.diag(g.weights) == 0)
    np.testing.assert_array_equal(g.weights, g.weights.T)
    with pytest.raises(InvalidParameterError):
        build_affinity(attrs([[0, 0]], [1], [1], [[1]]))
    with pytest.raises(InvalidParameterError):
        from_edges(2, [(0, 0, 1.0)])


def test_circle_overlap_limits():
    assert circle_overlap(0.0, 1.0, 2.0) == 1.0
    assert circle_overlap(5.0, 1.0, 1.0) == 0.0
    assert 0 < circle_overlap(1.0, 1.0, 1.0) < 1


# --------------------------------------------------------------- modularity

def test_modularity_matches_enumeration_on_small_graphs():
    rng = np.random.default_rng(0)
    for n in range(1, 7):
        for _ in range(4):
            A = random_weighted_graph(n, rng)
            for labels in set_partitions(n):
                assert modularity(A, labels) == pytest.approx(modularity_pairwise(A, labels), abs=1e-12)


def test_modularity_matches_networkx():
    rng = np.random.default_rng(1)
    A = random_weighted_graph(6, rng, density=0.8)
    G = nx.from_numpy_array(A)
    for labels in list(set_partitions(6))[::7]:
        comms = [set(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels)]
        assert modularity(A, labels) == pytest.approx(nx.community.modularity(G, comms), abs=1e-12)


def test_modularity_examples():
    assert modularity(TWO_TRIANGLES, [0, 0, 0, 1, 1, 1]) == 0.5
    A = random_weighted_graph(5, np.random.default_rng(3), density=1.0)
    k, two_m = A.sum(1), A.sum()
    assert modularity(A, np.arange(5)) == pytest.approx(-np.sum((k / two_m) ** 2), abs=1e-12)
    assert modularity(A, np.zeros(5)) == pytest.approx(0.0, abs=1e-12)
    assert modularity(np.zeros((3, 3)), [0, 1, 2]) == 0.0
    with pytest.raises(InvalidParameterError):
        modularity(A, [0, 1])


def test_louvain_two_triangles_and_k4():
    p = cluster_modularity(TWO_TRIANGLES)
    assert p.n_clusters == 2 and p.modularity == 0.5
    k4 = from_edges(4, [(i, j, 1.0) for i in range(4) for j in range(i + 1, 4)])
    best = max(set_partitions(4), key=lambda l: modularity(k4.weights, l))
    assert len(np.unique(best)) == 1
    assert cluster_modularity(k4).n_clusters == 1


def test_louvain_edgeless():
    p = cluster_modularity(from_edges(4, []))
    assert p.n_clusters == 4 and p.modularity == 0.0


@given(st.integers(0, 10_000), st.integers(3, 12))
def test_louvain_sweeps_never_decrease_q(seed, n):
    A = random_weighted_graph(n, np.random.default_rng(seed))
    g = from_edges(n, [])
    g = type(g)(A)
    trace = []
    p = cluster_modularity(g, trace)
    assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]) if True) or len(trace) < 2
    assert p.modularity >= modularity(A, np.arange(n)) - 1e-12
    assert -0.5 <= p.modularity <= 1.0


def test_louvain_never_beats_exhaustive_optimum():
    rng = np.random.default_rng(4)
    for _ in range(10):
        A = random_weighted_graph(6, rng)
        best = max(modularity_pairwise(A, l) for l in set_partitions(6))
        g = type(TWO_TRIANGLES)(A)
        assert cluster_modularity(g).modularity <= best + 1e-12


def test_planted_blocks_recovered():
    ri = []
    for seed in range(5):
        g, labels = planted_partition_graph([10, 10, 10], 0.8, 0.05, np.random.default_rng(seed))
        ri.append(rand_index(cluster_modularity(g).labels, labels))
    assert min(ri) >= 0.9


# ---------------------------------------------------------------- fixed k

def test_fixed_k_path_example():
    g = from_edges(4, [(0, 1, 5.0), (1, 2, 1.0), (2, 3, 5.0)])
    p = cluster_fixed_k(g, 2)
    assert p.labels.tolist() == [0, 0, 1, 1] and p.removed == [(1, 2, 1.0)]


def test_fixed_k_extremes_and_errors():
    g, _ = planted_partition_graph([4, 4], 1.0, 0.5, np.random.default_rng(0))
    assert cluster_fixed_k(g, g.n).n_clusters == g.n
    one = cluster_fixed_k(g, 1)
    assert one.n_clusters == 1 and one.removed == []
    with pytest.raises(InvalidParameterError):
        cluster_fixed_k(g, g.n + 1)


@given(st.integers(0, 10_000), st.integers(2, 10), st.data())
def test_fixed_k_exact_and_removals_non_decreasing(seed, n, data):
    rng = np.random.default_rng(seed)
    A = random_weighted_graph(n, rng, density=1.0)
    k = data.draw(st.integers(1, n))
    p = cluster_fixed_k(type(TWO_TRIANGLES)(A), k)
    assert p.n_clusters == k
    w = [e[2] for e in p.removed]
    assert w == sorted(w)


# ------------------------------------------------------------- reformation

def test_reform_clusters_rules():
    a, _ = planted_attributes(3, 3, np.random.default_rng(0))
    g = build_affinity(a)
    old = cluster_modularity(g)
    assert reform_clusters(old, build_affinity(a), 0.1) is old
    halved = build_affinity(a.replace_node(0, backhaul=a.backhaul[0] * 0.2))
    assert reform_clusters(old, halved, 0.01) is not old
    assert reform_clusters(old, g, 0.0) is not old
    small = build_affinity(planted_attributes(2, 2, np.random.default_rng(0))[0])
    with pytest.raises(InvalidParameterError):
        reform_clusters(old, small, 0.1)


def test_partition_json_roundtrip(tmp_path):
    p = cluster_modularity(TWO_TRIANGLES)
    text = p.to_json(tmp_path / "p.json")
    np.testing.assert_array_equal(ClusterPartition.labels_from_json(text), p.labels)


# --------------------------------------------------------------- aggregation

def U(params, cid=0, rnd=0, count=1):
    return ModelUpdate(np.asarray(params, dtype=np.float32), cid, rnd, count)


def test_aggregate_examples():
    np.testing.assert_array_equal(aggregate_sync([U([1, 1], 0), U([3, 3], 1)]), [2, 2])
    np.testing.assert_array_equal(aggregate_sync([U([0], 0, count=1), U([4], 1, count=3)]), [3.0])
    with pytest.raises(InvalidParameterError):
        aggregate_sync([])
    with pytest.raises(InvalidParameterError):
        U([np.nan])


@given(st.lists(st.floats(-100, 100, width=32), min_size=1, max_size=6), st.integers(1, 8))
def test_aggregate_idempotent_on_identical(vals, n):
    ups = [U(vals, i) for i in range(n)]
    np.testing.assert_array_equal(aggregate_sync(ups), np.asarray(vals, np.float32))


@given(st.lists(st.tuples(st.floats(-10, 10, width=32), st.integers(1, 5)), min_size=1, max_size=6),
       st.randoms())
def test_aggregate_permutation_invariant(items, rnd):
    ups = [U([v, -v], i, count=c) for i, (v, c) in enumerate(items)]
    shuffled = list(ups)
    rnd.shuffle(shuffled)
    np.testing.assert_array_equal(aggregate_sync(ups), aggregate_sync(shuffled))


def test_partial_participation_is_seeded():
    ups = [U([i], i) for i in range(10)]
    a = aggregate_sync(ups, 0.3, np.random.default_rng(0))
    b = aggregate_sync(ups, 0.3, np.random.default_rng(0))
    np.testing.assert_array_equal(a, b)


def test_staleness_alpha_examples():
    assert staleness_alpha(0, 0.6) == 0.6
    assert staleness_alpha(2, 0.6) == pytest.approx(0.2)
    assert staleness_alpha(2, 0.6, aware=False) == 0.6
    alphas = [staleness_alpha(t, 0.6) for t in range(10)]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_async_ema_closed_form():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=(8, 3))
    g0 = np.zeros(3)
    state = AsyncState(g0, 0, 0.5)
    for v, x in enumerate(xs):
        state, tau, alpha = apply_async(state, ModelUpdate(x, 0, v))
        assert tau == 0 and alpha == 0.5
    n = len(xs)
    closed = 0.5 ** n * g0 + sum(0.5 * 0.5 ** (n - 1 - i) * xs[i] for i in range(n))
    np.testing.assert_allclose(state.params, closed, rtol=1e-12)
    assert state.version == n


def test_async_rejects_future_and_versions_increase():
    state = AsyncState(np.zeros(2), 3)
    with pytest.raises(OrderingError):
        apply_async(state, U([1, 1], 0, rnd=4))
    s2, tau, alpha = apply_async(state, U([1, 1], 0, rnd=1))
    assert s2.version == 4 and tau == 2 and alpha == pytest.approx(0.2)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_async_bounded_updates_stay_finite(vals):
    state = AsyncState(np.zeros(1), 0, 0.6)
    for i, v in enumerate(vals):
        state, *_ = apply_async(state, ModelUpdate(np.array([v]), 0, max(0, state.version - i % 3)))
    assert np.all(np.isfinite(state.params)) and abs(state.params[0]) <= 1e3


# ---------------------------------------------------------------- pipeline

SMALL = FedTwinConfig(n_groups=2, per_group=2, requests_per_bs=150, heldout_per_bs=60,
                      rounds=4, hidden=8, embed=4, catalog=15)


def test_single_client_equals_centralized():
    fl = run_fedtwin(single_client(SMALL))
    cen = run_centralized(SMALL)
    np.testing.assert_array_equal(fl.params, cen.params)
    np.testing.assert_array_equal(fl.losses, cen.losses)


def test_pipeline_modes_and_csv(tmp_path):
    rep = run_fedtwin(SMALL)
    assert [r.mode for r in rep.rounds] == ["sync", "sync", "async", "async"]
    assert all(np.isfinite(rep.losses))
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "round,mode,global_loss,participants,max_staleness"
    again = run_fedtwin(SMALL)
    np.testing.assert_array_equal(rep.losses, again.losses)
