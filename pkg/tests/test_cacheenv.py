import numpy as np
import pytest
from hypothesis import given, strategies as st

from dntml import cacheenv as ce
from dntml.errors import InvalidActionError, InvalidParameterError
from dntml.netmodel import NetConfig, Request, RequestTrace, generate_trace
from dntml.seeding import rng_for

NET = NetConfig(num_bs=2, num_clients=4, catalog_size=12, cache_capacity=4,
                service_capacity=2.0, load_window=5, requests_per_tick=2, ticks=20)
CFG = ce.CacheEnvConfig(NET, ce.RewardSpec(), candidates=2)


def small_trace(seed=0, ticks=20):
    return generate_trace(NET, rng_for(seed, "trace"), ticks=ticks)


def test_reset_empty_caches_and_sentinel():
    cfg = ce.CacheEnvConfig()
    tr = generate_trace(cfg.net, rng_for(0), ticks=1)
    state, obs = ce.reset(cfg, tr)
    assert state.slots.shape == (5, 150) and np.all(state.slots == -1)
    assert np.all(state.freq == 0)
    n = cfg.net.num_bs
    assert obs[n + 3] == 1.0          # requested item never cached
    _, obs2 = ce.reset(cfg, tr)
    np.testing.assert_array_equal(obs, obs2)
    with pytest.raises(InvalidParameterError):
        ce.reset(cfg, RequestTrace.empty())


def test_hit_reward_and_miss_reject():
    s = ce.empty_state(CFG)
    rq = Request(0, 3, 0, 0)
    s, r, info = ce.step(s, ce.CacheAction(True, 1), rq, CFG)
    assert r == -1.0 and not info.hit and s.slots[0, 1] == 3
    s, r, info = ce.step(s, ce.REJECT, Request(1, 3, 0, 0), CFG)
    assert r == 1.0 and info.hit
    before = s.slots.copy()
    s, r, info = ce.step(s, ce.REJECT, Request(2, 5, 0, 0), CFG)
    assert r == -1.0 and not info.hit
    np.testing.assert_array_equal(s.slots, before)


def test_accept_evicts_and_stamps_tick():
    s = ce.empty_state(CFG)
    for t, item in enumerate([1, 2, 3, 4]):
        ce.apply_step(s, ce.CacheAction(True, t), Request(t, item, 0, 0), CFG)
    ce.apply_step(s, ce.CacheAction(True, 2), Request(9, 7, 0, 0), CFG)
    assert s.slot_of[0, 3] == -1 and 3 not in s.slots[0]
    assert s.slots[0, 2] == 7 and s.last_cached[0, 7] == 9


def test_accept_without_slot_on_full_cache():
    s = ce.empty_state(CFG)
    for t in range(4):
        ce.apply_step(s, ce.CacheAction(True), Request(t, t, 0, 0), CFG)
    with pytest.raises(InvalidActionError):
        ce.apply_step(s, ce.CacheAction(True), Request(5, 9, 0, 0), CFG)
    with pytest.raises(InvalidActionError):
        ce.action_from_index(s, Request(5, 9, 0, 0), 7, CFG)


def test_overload_penalty():
    net = NetConfig(num_bs=1, num_clients=1, catalog_size=4, cache_capacity=2,
                    service_capacity=1.0, load_window=2)
    cfg = ce.CacheEnvConfig(net, ce.RewardSpec(overload_threshold=0.5), candidates=1)
    s = ce.empty_state(cfg)
    _, i1 = ce.apply_step(s, ce.REJECT, Request(0, 0, 0, 0), cfg)       # not served
    r, info = ce.apply_step(s, ce.CacheAction(True, 0), Request(0, 1, 0, 0), cfg)
    assert not info.overload and r == -1.0                             # load 0.5
    r, info = ce.apply_step(s, ce.REJECT, Request(1, 1, 0, 0), cfg)
    assert info.hit and info.overload and r == 1.0 - 2.0               # load 1.0


def test_observe_recency_and_determinism():
    s = ce.empty_state(CFG)
    ce.apply_step(s, ce.CacheAction(True, 0), Request(90, 4, 1, 0), CFG)
    obs = ce.observe(s, Request(100, 4, 1, 0), CFG)
    n = NET.num_bs
    assert obs[n + 3] == pytest.approx(10 / CFG.sentinel)
    assert obs[n + 1] == 1.0
    np.testing.assert_array_equal(obs, ce.observe(s.copy(), Request(100, 4, 1, 0), CFG))
    assert np.all(np.isfinite(obs)) and obs.shape == (CFG.obs_dim,)


def test_candidates_empty_first_then_least_frequent():
    s = ce.empty_state(CFG)
    ce.apply_step(s, ce.CacheAction(True, 0), Request(0, 1, 0, 0), CFG)
    assert sorted(ce.candidate_slots(s, 0, 2).tolist()) == [1, 2]
    for t, item in enumerate([2, 3, 4], start=1):
        ce.apply_step(s, ce.CacheAction(True, t), Request(t, item, 0, 0), CFG)
    for _ in range(3):
        ce.apply_step(s, ce.REJECT, Request(5, 1, 0, 0), CFG)
    ce.apply_step(s, ce.REJECT, Request(5, 3, 0, 0), CFG)
    # item 1 and 3 are hot; 2 and 4 cold, 2 is older
    assert ce.candidate_slots(s, 0, 2).tolist() == [1, 3]


def reference_step(cache, freq, served, action_slot, rq, spec, cap, window, service):
    """Independent dict-based oracle for one transition at one BS."""
    cache = dict(cache)
    freq = dict(freq)
    hit = rq.content_id in cache.values()
    served = [t for t in served if t > rq.time - window]
    if not hit and action_slot is not None:
        cache[action_slot] = rq.content_id
    if hit or action_slot is not None:
        served.append(rq.time)
    freq[rq.content_id] = freq.get(rq.content_id, 0) + 1
    load = min(1.0, len(served) / (window * service))
    reward = (spec.r_hit if hit else spec.r_miss) - (spec.c_overload if load > spec.overload_threshold else 0)
    return cache, freq, served, reward, hit


@given(st.lists(st.tuples(st.integers(0, 11), st.integers(-1, 3)), min_size=1, max_size=60))
def test_step_matches_reference_simulator(ops):
    net = NetConfig(num_bs=1, num_clients=1, catalog_size=12, cache_capacity=4,
                    service_capacity=0.5, load_window=3)
    cfg = ce.CacheEnvConfig(net, ce.RewardSpec(), candidates=2)
    s = ce.empty_state(cfg)
    cache, freq, served = {}, {}, []
    for t, (item, slot) in enumerate(ops):
        rq = Request(t // 2, item, 0, 0)
        act = ce.REJECT if slot < 0 else ce.CacheAction(True, slot)
        r, info = ce.apply_step(s, act, rq, cfg)
        cache, freq, served, r_ref, hit_ref = reference_step(
            cache, freq, served, None if slot < 0 else slot, rq, cfg.reward, 4, 3, 0.5)
        assert info.hit == hit_ref and r == r_ref
        assert {i: int(c) for i, c in enumerate(s.slots[0]) if c >= 0} == cache


def run_admit_if_room(cfg, trace):
    s = ce.empty_state(cfg)
    hits = misses = overloads = 0
    total = 0.0
    occ_prev = np.zeros(cfg.net.num_bs)
    for rq in trace:
        empty = np.flatnonzero(s.slots[rq.bs_id] < 0)
        act = ce.CacheAction(True, int(empty[0])) if len(empty) else ce.REJECT
        r, info = ce.apply_step(s, act, rq, cfg)
        total += r
        hits += info.hit
        misses += not info.hit
        overloads += info.overload
        occ = s.occupancy()
        assert np.all(occ <= cfg.net.cache_capacity) and np.all(occ >= occ_prev)
        for b in range(cfg.net.num_bs):
            row = s.slots[b][s.slots[b] >= 0]
            assert len(row) == len(set(row.tolist()))
        occ_prev = occ
    return hits, misses, overloads, total


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_conservation_decomposition_and_capacity_monotonicity(seed, extra):
    tr = small_trace(seed, ticks=30)
    h, m, o, total = run_admit_if_room(CFG, tr)
    spec = CFG.reward
    assert total == pytest.approx(spec.r_hit * h + spec.r_miss * m - spec.c_overload * o, abs=1e-9)
    from dataclasses import replace
    bigger = replace(CFG, net=replace(NET, cache_capacity=NET.cache_capacity + extra))
    h2, *_ = run_admit_if_room(bigger, tr)
    assert h2 >= h


def test_step_is_pure():
    s = ce.empty_state(CFG)
    rq = Request(0, 2, 0, 1)
    a = ce.step(s, ce.CacheAction(True, 0), rq, CFG)
    b = ce.step(s, ce.CacheAction(True, 0), rq, CFG)
    assert np.all(s.slots == -1)
    np.testing.assert_array_equal(a[0].slots, b[0].slots)
    assert a[1:] == b[1:]


def test_metrics_examples():
    log = ce.EpisodeLog()
    for i in range(100):
        log.append(i, 0, i < 82, 0.0, False, [0.53, 0.2, 0.3, 0.1, 0.08])
    m = ce.metrics(log)
    assert m["hit_rate"] == 0.82
    assert m["max_bs_load"] == pytest.approx(0.53) and m["min_bs_load"] == pytest.approx(0.08)
    full = ce.EpisodeLog()
    full.append(0, 0, True, 1.0, False, [0.1])
    assert ce.metrics(full)["hit_rate"] == 1.0
    with pytest.raises(InvalidParameterError):
        ce.metrics(ce.EpisodeLog())


def test_episode_log_csv_roundtrip(tmp_path):
    log = ce.EpisodeLog()
    log.append(3, 1, True, -0.5, True, [0.25, 0.5])
    log.to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "tick,bs,hit,reward,intervened,max_load,min_load"
    back = ce.EpisodeLog.from_csv(tmp_path / "e.csv")
    assert back.hit == [True] and back.reward == [-0.5] and back.max_load == [0.5]


def test_reward_spec_validation():
    with pytest.raises(InvalidParameterError):
        ce.RewardSpec(r_hit=-1, r_miss=1)
    with pytest.raises(InvalidParameterError):
        ce.RewardSpec(overload_threshold=0)


def test_prefill_loads():
    s = ce.empty_state(CFG)
    ce.prefill_loads(s, [0.5, 1.0])
    np.testing.assert_allclose(s.loads(), [0.5, 1.0])
    with pytest.raises(InvalidParameterError):
        ce.prefill_loads(s, [1.5, 0.0])
