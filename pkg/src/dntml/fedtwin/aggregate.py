"""Synchronous weighted averaging and staleness-aware asynchronous updates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError, OrderingError


@dataclass(frozen=True)
class ModelUpdate:
    params: np.ndarray
    client_id: int
    round_produced: int
    sample_count: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidParameterError("sample_count must be >= 1")
        if not np.all(np.isfinite(self.params)):
            raise InvalidParameterError("update parameters must be finite")
        if self.round_produced < 0:
            raise InvalidParameterError("round_produced must be >= 0")


def weighted_average(updates) -> np.ndarray:
    """Sample-count weighted mean, accumulated in float64 in client order."""
    ups = sorted(updates, key=lambda u: (u.client_id, u.round_produced))
    total = float(sum(u.sample_count for u in ups))
    acc = np.zeros(np.shape(ups[0].params), dtype=np.float64)
    for u in ups:
        acc += u.sample_count * np.asarray(u.params, dtype=np.float64)
    # dividing once keeps identical updates (and a single update) exact
    return (acc / total).astype(np.asarray(ups[0].params).dtype)


def sample_participants(updates, participation: float = 1.0,
                        rng: np.random.Generator | None = None) -> list:
    """Uniformly choose ``ceil(participation * n)`` updates (all of them when the fraction is 1)."""
    updates = list(updates)
    if not updates:
        raise InvalidParameterError("no updates to aggregate")
    if not 0 < participation <= 1:
        raise InvalidParameterError("participation must be in (0, 1]")
    ups = sorted(updates, key=lambda u: (u.client_id, u.round_produced))
    k = math.ceil(participation * len(ups))
    if k < len(ups):
        if rng is None:
            raise InvalidParameterError("partial participation needs an rng")
        idx = np.sort(rng.choice(len(ups), size=k, replace=False))
        ups = [ups[i] for i in idx]
    return ups


def aggregate_sync(updates, participation: float = 1.0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Sample-count weighted average over a sampled subset of ``updates``."""
    return weighted_average(sample_participants(updates, participation, rng))


def staleness_alpha(tau: int, alpha0: float, aware: bool = True) -> float:
    return alpha0 / (1 + tau) if aware else alpha0


@dataclass(frozen=True)
class AsyncState:
    params: np.ndarray
    version: int = 0
    alpha0: float = 0.6
    aware: bool = True

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise InvalidParameterError("alpha0 must be in (0, 1]")


def apply_async(state: AsyncState, update: ModelUpdate) -> tuple[AsyncState, int, float]:
    """Blend one update into the global model; returns ``(new_state, staleness, alpha)``."""
    if update.round_produced > state.version:
        raise OrderingError(
            f"update built on version {update.round_produced} but global is at {state.version}")
    tau = state.version - update.round_produced
    alpha = staleness_alpha(tau, state.alpha0, state.aware)
    g = np.asarray(state.params)
    new = ((1 - alpha) * g.astype(np.float64) + alpha * np.asarray(update.params, dtype=np.float64))
    return AsyncState(new.astype(g.dtype), state.version + 1, state.alpha0, state.aware), tau, alpha
