"""Edge-caching CMDP: admission/eviction decisions at independent base stations.

Each step presents one request.  A request whose content is cached at its
base station is a hit and is served from the cache whatever the action.  On
a miss the action decides admission: reject (the request is served by the
origin and does not load the BS) or accept into one of ``K`` candidate
slots, evicting the occupant.  Candidates are the empty slots first, then
the least frequently requested occupants (oldest first on ties).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import InvalidActionError, InvalidParameterError
from .netmodel import BaseStation, NetConfig, Request, RequestTrace, bs_load

LOG_HEADER = ("tick", "bs", "hit", "reward", "intervened", "max_load", "min_load")


@dataclass(frozen=True)
class RewardSpec:
    r_hit: float = 1.0
    r_miss: float = -1.0
    c_overload: float = 2.0
    overload_threshold: float = 0.8

    def __post_init__(self):
        if not self.r_hit > self.r_miss:
            raise InvalidParameterError("r_hit must exceed r_miss")
        if self.c_overload < 0:
            raise InvalidParameterError("c_overload must be >= 0")
        if not 0 < self.overload_threshold <= 1:
            raise InvalidParameterError("overload_threshold must be in (0, 1]")


@dataclass(frozen=True)
class CacheEnvConfig:
    net: NetConfig = NetConfig()
    reward: RewardSpec = RewardSpec()
    candidates: int = 4

    @property
    def sentinel(self) -> int:
        # recency reported for content never cached
        return self.net.load_window * 10

    @property
    def n_actions(self) -> int:
        return self.candidates + 1

    @property
    def obs_dim(self) -> int:
        return self.net.num_bs + 6 + 3 * self.candidates


class CacheAction(NamedTuple):
    accept: bool
    slot: int | None = None


REJECT = CacheAction(False, None)


@dataclass
class CacheState:
    slots: np.ndarray            # (num_bs, capacity) content id or -1
    slot_of: np.ndarray          # (num_bs, catalog) slot index or -1
    last_cached: np.ndarray      # (num_bs, catalog) tick or -1
    freq: np.ndarray             # (num_bs, catalog) request counts
    requests: np.ndarray         # (num_bs,) requests seen
    stations: list = field(default_factory=list)
    tick: int = 0

    def copy(self) -> "CacheState":
        stations = [replace(b, served_window=b.served_window.copy()) for b in self.stations]
        return CacheState(self.slots.copy(), self.slot_of.copy(), self.last_cached.copy(),
                          self.freq.copy(), self.requests.copy(), stations, self.tick)

    def occupancy(self) -> np.ndarray:
        return (self.slots >= 0).sum(axis=1)

    def loads(self) -> np.ndarray:
        return np.array([bs_load(b) for b in self.stations])


def empty_state(config: CacheEnvConfig) -> CacheState:
    n = config.net
    if n.cache_capacity < config.candidates:
        raise InvalidParameterError("cache capacity must be >= number of candidate slots")
    stations = [BaseStation(i, n.cache_capacity, n.service_capacity, n.load_window)
                for i in range(n.num_bs)]
    return CacheState(
        slots=np.full((n.num_bs, n.cache_capacity), -1, dtype=np.int64),
        slot_of=np.full((n.num_bs, n.catalog_size), -1, dtype=np.int64),
        last_cached=np.full((n.num_bs, n.catalog_size), -1, dtype=np.int64),
        freq=np.zeros((n.num_bs, n.catalog_size), dtype=np.int64),
        requests=np.zeros(n.num_bs, dtype=np.int64),
        stations=stations,
    )


def candidate_slots(state: CacheState, bs: int, k: int) -> np.ndarray:
    """Empty slots first, then least-requested occupants, ties to the oldest."""
    slots = state.slots[bs]
    occ = slots >= 0
    items = np.where(occ, slots, 0)
    freq = np.where(occ, state.freq[bs, items], -1)
    age = np.where(occ, state.last_cached[bs, items], -1)
    # lexicographic (freq, cached tick, slot index) packed into one key
    key = (freq + 1) * (1 << 40) + (age + 1) * (1 << 16) + np.arange(len(slots))
    if k >= len(slots):
        return np.argsort(key, kind="stable")
    part = np.argpartition(key, k)[:k]
    return part[np.argsort(key[part], kind="stable")]


def _popularity(count, total, catalog):
    # scaled empirical rate: 1.0 means "as popular as the average item"
    rate = count * catalog / max(int(total), 1)
    return np.log1p(rate) / np.log1p(catalog)


def observe(state: CacheState, request: Request, config: CacheEnvConfig,
            cand: np.ndarray | None = None) -> np.ndarray:
    """Feature vector for deciding on ``request`` in ``state``.

    Layout: BS one-hot, client id, is-cached flag, requested item popularity
    and recency, BS cache occupancy, then (empty flag, popularity, recency)
    for each candidate slot.
    """
    n = config.net
    b, c = request.bs_id, request.content_id
    if not (0 <= b < n.num_bs and 0 <= c < n.catalog_size):
        raise InvalidParameterError(f"request {request} outside the network")
    sentinel = config.sentinel
    tick = request.time
    total = state.requests[b]
    obs = np.zeros(config.obs_dim, dtype=np.float32)
    obs[b] = 1.0
    i = n.num_bs
    obs[i] = request.client_id / max(n.num_clients, 1)
    obs[i + 1] = float(state.slot_of[b, c] >= 0)
    obs[i + 2] = _popularity(state.freq[b, c], total, n.catalog_size)
    lc = state.last_cached[b, c]
    obs[i + 3] = 1.0 if lc < 0 else min(tick - lc, sentinel) / sentinel
    obs[i + 4] = (state.slots[b] >= 0).mean()
    i += 5
    if cand is None:
        cand = candidate_slots(state, b, config.candidates)
    for s in cand:
        item = state.slots[b, s]
        if item < 0:
            obs[i:i + 3] = (1.0, 0.0, 1.0)
        else:
            obs[i] = 0.0
            obs[i + 1] = _popularity(state.freq[b, item], total, n.catalog_size)
            obs[i + 2] = min(tick - state.last_cached[b, item], sentinel) / sentinel
        i += 3
    return obs


def action_from_index(state: CacheState, request: Request, index: int,
                      config: CacheEnvConfig) -> CacheAction:
    """Map a discrete agent action (0 = reject, k = k-th candidate) to a CacheAction."""
    if not 0 <= index < config.n_actions:
        raise InvalidActionError(f"action index {index} outside [0, {config.n_actions})")
    if index == 0:
        return REJECT
    cand = candidate_slots(state, request.bs_id, config.candidates)
    return CacheAction(True, int(cand[index - 1]))


class StepInfo(NamedTuple):
    hit: bool
    overload: bool
    served: bool
    admitted: bool


def prefill_loads(state: CacheState, loads) -> None:
    """Seed each BS's served window so that its load starts at ``loads[b]``.

    The seeded traffic sits in the window slots of past ticks and ages out as
    time advances, like real traffic would.
    """
    loads = np.asarray(loads, dtype=float)
    if loads.shape != (len(state.stations),) or np.any((loads < 0) | (loads > 1)):
        raise InvalidParameterError("loads must give one value in [0, 1] per base station")
    for bs, ld in zip(state.stations, loads):
        total = int(round(ld * bs.window * bs.service_capacity))
        base, extra = divmod(total, bs.window)
        bs.served_window[:] = base
        bs.served_window[:extra] += 1


def _advance(state: CacheState, tick: int) -> None:
    if tick < state.tick:
        raise InvalidParameterError(f"request tick {tick} precedes state tick {state.tick}")
    for bs in state.stations:
        bs.advance_to(tick)
    state.tick = tick


def apply_step(state: CacheState, action: CacheAction, request: Request,
               config: CacheEnvConfig) -> tuple[float, StepInfo]:
    """In-place transition; ``step`` is the copying wrapper."""
    n = config.net
    b, c, tick = request.bs_id, request.content_id, request.time
    if not (0 <= b < n.num_bs and 0 <= c < n.catalog_size):
        raise InvalidParameterError(f"request {request} outside the network")
    _advance(state, tick)
    hit = bool(state.slot_of[b, c] >= 0)
    admitted = False
    if hit:
        served = True
    elif action.accept:
        slot = action.slot
        if slot is None:
            empty = np.flatnonzero(state.slots[b] < 0)
            if len(empty) == 0:
                raise InvalidActionError("accept without a slot on a full cache")
            slot = int(empty[0])
        if not 0 <= slot < n.cache_capacity:
            raise InvalidActionError(f"slot {slot} outside cache of {n.cache_capacity}")
        old = state.slots[b, slot]
        if old >= 0:
            state.slot_of[b, old] = -1
        state.slots[b, slot] = c
        state.slot_of[b, c] = slot
        state.last_cached[b, c] = tick
        served = admitted = True
    else:
        served = False
    state.freq[b, c] += 1
    state.requests[b] += 1
    if served:
        state.stations[b].record_served(tick)
    r = config.reward
    reward = r.r_hit if hit else r.r_miss
    overload = bs_load(state.stations[b]) > r.overload_threshold
    if overload:
        reward -= r.c_overload
    return float(reward), StepInfo(hit, bool(overload), served, admitted)


def step(state: CacheState, action: CacheAction, request: Request, config: CacheEnvConfig):
    """Pure transition: returns ``(next_state, reward, info)`` and leaves ``state`` untouched."""
    nxt = state.copy()
    reward, info = apply_step(nxt, action, request, config)
    return nxt, reward, info


def reset(config: CacheEnvConfig, trace: RequestTrace):
    if len(trace) == 0:
        raise InvalidParameterError("cannot reset on an empty trace")
    state = empty_state(config)
    return state, observe(state, trace[0], config)


@dataclass
class EpisodeLog:
    tick: list = field(default_factory=list)
    bs: list = field(default_factory=list)
    hit: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    intervened: list = field(default_factory=list)
    max_load: list = field(default_factory=list)
    min_load: list = field(default_factory=list)

    def append(self, tick, bs, hit, reward, intervened, loads) -> None:
        self.tick.append(int(tick))
        self.bs.append(int(bs))
        self.hit.append(bool(hit))
        self.reward.append(float(reward))
        self.intervened.append(bool(intervened))
        self.max_load.append(float(np.max(loads)))
        self.min_load.append(float(np.min(loads)))

    def __len__(self) -> int:
        return len(self.tick)

    def tail(self, start: int) -> "EpisodeLog":
        return EpisodeLog(*(getattr(self, f)[start:] for f in LOG_HEADER))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for row in zip(self.tick, self.bs, self.hit, self.reward, self.intervened,
                           self.max_load, self.min_load):
                t, b, h, r, iv, mx, mn = row
                w.writerow((t, b, int(h), repr(r), int(iv), f"{mx:.6f}", f"{mn:.6f}"))

    @classmethod
    def from_csv(cls, path) -> "EpisodeLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if tuple(next(reader)) != LOG_HEADER:
                raise InvalidParameterError(f"{path}: unexpected header")
            for t, b, h, r, iv, mx, mn in reader:
                log.tick.append(int(t)); log.bs.append(int(b)); log.hit.append(bool(int(h)))
                log.reward.append(float(r)); log.intervened.append(bool(int(iv)))
                log.max_load.append(float(mx)); log.min_load.append(float(mn))
        return log


def metrics(log: EpisodeLog) -> dict:
    """Hit rate plus the time-averaged largest and smallest BS load over the log."""
    if len(log) == 0:
        raise InvalidParameterError("empty episode log")
    return {
        "hit_rate": float(np.mean(log.hit)),
        "max_bs_load": float(np.mean(log.max_load)),
        "min_bs_load": float(np.mean(log.min_load)),
        "intervention_rate": float(np.mean(log.intervened)),
        "mean_reward": float(np.mean(log.reward)),
    }
