"""Digital network twin: mirrored state, next-request forecaster, scenarios, risk checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError, OrderingError
from .learncore.gru import GRUNet, softmax
from .learncore.optim import Adam
from .learncore.params import ParamVector, load_params, save_params
from .netmodel import NetConfig, RequestTrace, client_weights


# ---------------------------------------------------------------- mirroring

@dataclass(frozen=True)
class PhysicalSnapshot:
    tick: int
    loads: np.ndarray
    occupancy: np.ndarray
    freq: np.ndarray
    recent: np.ndarray | None = None   # (num_bs, W) latest content ids, -1 padded


def snapshot_of(state, recent=None) -> PhysicalSnapshot:
    """Read-only copy of a ``CacheState`` as the twin sees it."""
    return PhysicalSnapshot(
        tick=int(state.tick),
        loads=state.loads(),
        occupancy=state.occupancy(),
        freq=state.freq.copy(),
        recent=None if recent is None else np.array(recent, copy=True),
    )


@dataclass(frozen=True)
class TwinState:
    loads: np.ndarray
    occupancy: np.ndarray
    freq: np.ndarray
    recent: np.ndarray | None = None
    last_sync_tick: int = -1
    sync_deadline: int = 5

    def is_stale(self, now: int) -> bool:
        return self.last_sync_tick < 0 or now - self.last_sync_tick > self.sync_deadline

    @classmethod
    def blank(cls, num_bs: int, catalog: int, sync_deadline: int = 5) -> "TwinState":
        return cls(np.zeros(num_bs), np.zeros(num_bs, dtype=np.int64),
                   np.zeros((num_bs, catalog), dtype=np.int64), None, -1, sync_deadline)


def sync(twin: TwinState, snapshot: PhysicalSnapshot, tick: int | None = None) -> TwinState:
    """Mirror ``snapshot`` into a new twin state stamped with ``tick``."""
    tick = snapshot.tick if tick is None else int(tick)
    if tick < twin.last_sync_tick:
        raise OrderingError(f"snapshot tick {tick} is older than last sync {twin.last_sync_tick}")
    return TwinState(
        loads=np.array(snapshot.loads, dtype=float, copy=True),
        occupancy=np.array(snapshot.occupancy, copy=True),
        freq=np.array(snapshot.freq, copy=True),
        recent=None if snapshot.recent is None else np.array(snapshot.recent, copy=True),
        last_sync_tick=tick,
        sync_deadline=twin.sync_deadline,
    )


class Verdict(NamedTuple):
    safe: bool
    reason: str | None = None
    degraded: bool = False


def risk_verdict(twin: TwinState, bs_id: int, accept: bool, threshold: float,
                 increment: float, now: int | None = None) -> Verdict:
    """One-step load projection: an admission adds ``increment`` to the BS load.

    Rejections add nothing and are always safe.  A stale twin still answers
    but marks the verdict as degraded.
    """
    if not 0 <= bs_id < len(twin.loads):
        raise InvalidParameterError(f"unknown base station {bs_id}")
    degraded = twin.is_stale(twin.last_sync_tick if now is None else now)
    if not accept:
        return Verdict(True, None, degraded)
    if twin.loads[bs_id] + increment > threshold:
        return Verdict(False, "overload", degraded)
    return Verdict(True, None, degraded)


# -------------------------------------------------------------- forecasting

@dataclass
class Forecaster:
    net: GRUNet
    params: np.ndarray
    window: int
    seed_window: np.ndarray = field(default=None)
    loss_history: list = field(default_factory=list)

    @property
    def catalog(self) -> int:
        return self.net.vocab

    def to_param_vector(self) -> ParamVector:
        return ParamVector(self.params, {**self.net.manifest, "W": self.window})

    def save(self, path) -> None:
        save_params(path, self.to_param_vector(), embed=self.net.embed, hidden=self.net.hidden)

    @classmethod
    def load(cls, path) -> "Forecaster":
        pv = load_params(path)
        vocab, embed, hidden = pv.manifest["dims"]
        return cls(GRUNet(vocab, embed, hidden), pv.values, int(pv.manifest["W"]))


def new_forecaster(catalog: int, window: int = 16, hidden: int = 32, embed: int = 16,
                   rng: np.random.Generator | None = None) -> Forecaster:
    net = GRUNet(catalog, embed, hidden)
    rng = np.random.default_rng(0) if rng is None else rng
    return Forecaster(net, net.init(rng), window)


def forecast_next(forecaster: Forecaster, window, temperature: float = 1.0) -> np.ndarray:
    """Distribution over the catalog for the request following ``window``.

    ``window`` may be one sequence of length W or a batch of shape (B, W).
    """
    w = np.asarray(window, dtype=np.int64)
    if w.shape[-1] != forecaster.window:
        raise InvalidParameterError(
            f"window length {w.shape[-1]} != forecaster window {forecaster.window}")
    probs = forecaster.net.predict(forecaster.params, np.atleast_2d(w), temperature)
    return probs[0] if w.ndim == 1 else probs


def make_windows(ids: np.ndarray, W: int):
    ids = np.asarray(ids, dtype=np.int64)
    n = len(ids) - W
    idx = np.arange(W)[None, :] + np.arange(n)[:, None]
    return ids[idx], ids[W:]


def dataset_loss(forecaster: Forecaster, X, y, batch: int = 2048) -> float:
    total = 0.0
    for i in range(0, len(X), batch):
        p = forecaster.net.predict(forecaster.params, X[i:i + batch])
        total += float(-np.log(np.maximum(p[np.arange(len(p)), y[i:i + batch]], 1e-30)).sum())
    return total / len(X)


def fit_forecaster(forecaster: Forecaster, X, y, epochs: int, lr: float,
                   rng: np.random.Generator, batch_size: int = 64, optimizer=None) -> Forecaster:
    """Minibatch training in place; appends the full-data loss after each epoch."""
    opt = Adam(lr) if optimizer is None else optimizer
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            sel = order[i:i + batch_size]
            _, g = forecaster.net.loss_and_grad(forecaster.params, X[sel], y[sel])
            forecaster.params = opt.step(forecaster.params, g)
        forecaster.loss_history.append(dataset_loss(forecaster, X, y))
    return forecaster


def train_forecaster(history, W: int, epochs: int, lr: float, rng: np.random.Generator,
                     catalog: int | None = None, hidden: int = 32, embed: int = 16,
                     batch_size: int = 64, max_windows: int | None = None) -> Forecaster:
    """Train a next-request model on a content-id sequence (or a RequestTrace)."""
    ids = np.asarray(history.content_id if isinstance(history, RequestTrace) else history,
                     dtype=np.int64)
    if len(ids) <= W:
        raise InvalidParameterError(f"history of {len(ids)} requests is too short for W={W}")
    catalog = int(ids.max()) + 1 if catalog is None else catalog
    X, y = make_windows(ids, W)
    if max_windows is not None and len(X) > max_windows:
        X, y = X[-max_windows:], y[-max_windows:]
    fc = new_forecaster(catalog, W, hidden, embed, rng)
    fc.seed_window = ids[-W:].copy()
    fc.loss_history.append(dataset_loss(fc, X, y))
    return fit_forecaster(fc, X, y, epochs, lr, rng, batch_size)


# ---------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    label: str
    trace: RequestTrace
    initial_loads: np.ndarray


def generate_scenarios(forecaster: Forecaster, n: int, rarity_mix: float,
                       rng: np.random.Generator, net: NetConfig | None = None,
                       length: int = 2000, rare_temperature: float = 3.0) -> list[Scenario]:
    """Sample ``n`` request segments autoregressively from the forecaster.

    Each scenario is labelled rare with probability ``rarity_mix``; rare ones
    sample at ``rare_temperature`` (flattened, tail-heavy) and start with one
    base station near overload.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if not 0.0 <= rarity_mix <= 1.0:
        raise InvalidParameterError("rarity_mix must be in [0, 1]")
    net = NetConfig(catalog_size=forecaster.catalog) if net is None else net
    rare = rng.random(n) < rarity_mix
    temps = np.where(rare, rare_temperature, 1.0)[:, None]
    W = forecaster.window
    seed = forecaster.seed_window
    if seed is None:
        seed = rng.integers(forecaster.catalog, size=W)
    windows = np.tile(np.asarray(seed, dtype=np.int64), (n, 1))
    content = np.empty((n, length), dtype=np.int64)
    for t in range(length):
        logits = forecaster.net.logits(forecaster.params, windows)
        probs = softmax(logits / temps)
        u = rng.random((n, 1))
        pick = np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), forecaster.catalog - 1)
        content[:, t] = pick
        windows = np.concatenate([windows[:, 1:], pick[:, None]], axis=1)
    cw = np.cumsum(client_weights(net))
    nominal = np.minimum(1.0, _nominal_loads(net))
    out = []
    for i in range(n):
        client = np.minimum(np.searchsorted(cw, rng.random(length), side="right"), net.num_clients - 1)
        tick = np.arange(length, dtype=np.int64) // net.requests_per_tick
        loads = nominal * rng.uniform(0.7, 1.0, net.num_bs)
        if rare[i]:
            loads[rng.integers(net.num_bs)] = rng.uniform(0.8, 1.0)
        trace = RequestTrace(tick, content[i].copy(), client.astype(np.int64), client % net.num_bs)
        out.append(Scenario("rare" if rare[i] else "common", trace, np.clip(loads, 0.0, 1.0)))
    return out


def _nominal_loads(net: NetConfig) -> np.ndarray:
    from .netmodel import bs_traffic_share
    return bs_traffic_share(net) * net.requests_per_tick / net.service_capacity


def export_scenarios(scenarios: list[Scenario], directory) -> Path:
    """Write each scenario trace as CSV plus a JSON manifest describing the set."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sc in enumerate(scenarios):
        name = f"scenario_{i:04d}.csv"
        sc.trace.to_csv(directory / name)
        entries.append({"file": name, "label": sc.label,
                        "initial_loads": [round(float(x), 6) for x in sc.initial_loads],
                        "requests": len(sc.trace)})
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"schema_version": 1, "scenarios": entries}, indent=2))
    return manifest


# --------------------------------------------------------------- live twin

class DigitalTwin:
    """Owner object for the live twin: mirror, forecasts and per-BS request windows.

    Forecasts are refreshed once per tick (batched over base stations) when a
    sync crosses into a new tick.
    """

    def __init__(self, num_bs: int, catalog: int, forecaster: Forecaster | None = None,
                 sync_deadline: int = 5, window: int = 16):
        self.state = TwinState.blank(num_bs, catalog, sync_deadline)
        self.forecaster = forecaster
        W = forecaster.window if forecaster is not None else window
        self.recent = np.full((num_bs, W), -1, dtype=np.int64)
        self.forecasts = np.full((num_bs, catalog), 1.0 / catalog)
        self._forecast_tick = -1

    def record_request(self, bs_id: int, content_id: int) -> None:
        r = self.recent[bs_id]
        r[:-1] = r[1:]
        r[-1] = content_id

    def sync(self, cache_state) -> TwinState:
        snap = snapshot_of(cache_state, self.recent)
        self.state = sync(self.state, snap)
        if self.forecaster is not None and snap.tick != self._forecast_tick:
            self._refresh_forecasts()
            self._forecast_tick = snap.tick
        return self.state

    def swap_forecaster(self, forecaster: Forecaster) -> None:
        # single assignment: readers see either the old or the new model
        self.forecaster = forecaster
        self._forecast_tick = -1

    def _refresh_forecasts(self) -> None:
        fc = self.forecaster
        ready = (self.recent >= 0).all(axis=1)
        if ready.any():
            self.forecasts[ready] = forecast_next(fc, self.recent[ready])

    def forecast_features(self, bs_id: int, content_id: int) -> np.ndarray:
        """Forecast probability of ``content_id`` (log-scaled) and whether it is the top-1 pick."""
        f = self.forecasts[bs_id]
        n = len(f)
        p = np.log1p(f[content_id] * n) / np.log1p(n)
        return np.array([p, float(np.argmax(f) == content_id)], dtype=np.float32)

    def verdict(self, bs_id: int, accept: bool, threshold: float, increment: float, now: int) -> Verdict:
        return risk_verdict(self.state, bs_id, accept, threshold, increment, now)
