"""Physical network model: catalog, base stations, clients and Zipf workloads."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError

TRACE_HEADER = ("tick", "content_id", "client_id", "bs_id")


@dataclass(frozen=True)
class ContentCatalog:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise InvalidParameterError("catalog size must be >= 1")

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.size)


@dataclass(frozen=True)
class ZipfParams:
    exponent: float = 0.8
    catalog_size: int = 200


class Request(NamedTuple):
    time: int
    content_id: int
    client_id: int
    bs_id: int


@dataclass(frozen=True)
class NetConfig:
    """Topology and workload knobs for one simulated network.

    ``client_skew`` is the Zipf exponent of per-client activity.  Clients are
    pinned round-robin to base stations, so a positive skew makes some base
    stations busier than others.
    """

    num_bs: int = 5
    num_clients: int = 20
    catalog_size: int = 200
    zipf_exponent: float = 0.8
    client_skew: float = 1.0
    requests_per_tick: int = 10
    ticks: int = 5000
    cache_capacity: int = 150
    service_capacity: float = 4.0
    load_window: int = 50

    def zipf(self) -> ZipfParams:
        return ZipfParams(self.zipf_exponent, self.catalog_size)

    def home_bs(self, client_id: int) -> int:
        return client_id % self.num_bs


def zipf_pmf(params: ZipfParams) -> np.ndarray:
    """Zipf popularity over ``catalog_size`` ranks; rank 0 is the most popular.

    ``p = 0`` is accepted as the uniform limit.

    >>> zipf_pmf(ZipfParams(0.0, 4)).tolist()
    [0.25, 0.25, 0.25, 0.25]
    """
    if params.catalog_size < 1:
        raise InvalidParameterError("empty catalog")
    if params.exponent < 0 or not np.isfinite(params.exponent):
        raise InvalidParameterError(f"Zipf exponent must be >= 0, got {params.exponent}")
    ranks = np.arange(1, params.catalog_size + 1, dtype=np.float64)
    w = ranks ** (-float(params.exponent))
    return w / w.sum()


def client_weights(config: NetConfig) -> np.ndarray:
    return zipf_pmf(ZipfParams(config.client_skew, config.num_clients))


def bs_traffic_share(config: NetConfig) -> np.ndarray:
    """Expected fraction of requests arriving at each base station."""
    w = client_weights(config)
    share = np.zeros(config.num_bs)
    np.add.at(share, np.arange(config.num_clients) % config.num_bs, w)
    return share


def _inverse_cdf(cdf: np.ndarray, u):
    # cdf[-1] may be 1 - 1e-16; clip so u close to 1 never indexes past the end
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def _validate(params: ZipfParams):
    zipf_pmf(params)


def sample_request(
    params: ZipfParams,
    clients: int,
    bs_count: int,
    tick: int,
    rng: np.random.Generator,
    client_p: np.ndarray | None = None,
) -> Request:
    """Draw one request: content from the Zipf pmf, client by activity, BS by pinning.

    Two uniforms are consumed per request (content, then client), the same
    layout ``generate_trace`` uses, so a trace equals repeated calls to this
    function on the same generator.
    """
    _validate(params)
    content_cdf = np.cumsum(zipf_pmf(params))
    if client_p is None:
        client_p = np.full(clients, 1.0 / clients)
    u = rng.random(2)
    content = int(_inverse_cdf(content_cdf, u[0]))
    client = int(_inverse_cdf(np.cumsum(client_p), u[1]))
    return Request(int(tick), content, client, client % bs_count)


@dataclass
class RequestTrace:
    tick: np.ndarray
    content_id: np.ndarray
    client_id: np.ndarray
    bs_id: np.ndarray

    def __len__(self) -> int:
        return len(self.tick)

    def __getitem__(self, i) -> Request:
        if isinstance(i, slice):
            return RequestTrace(self.tick[i], self.content_id[i], self.client_id[i], self.bs_id[i])
        return Request(int(self.tick[i]), int(self.content_id[i]), int(self.client_id[i]), int(self.bs_id[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def empty(cls) -> "RequestTrace":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy())

    def equals(self, other: "RequestTrace") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("tick", "content_id", "client_id", "bs_id")
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            w.writerows(zip(self.tick.tolist(), self.content_id.tolist(),
                            self.client_id.tolist(), self.bs_id.tolist()))

    @classmethod
    def from_csv(cls, path) -> "RequestTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != TRACE_HEADER:
                raise InvalidParameterError(f"{path}: expected header {','.join(TRACE_HEADER)}")
            rows = [tuple(int(v) for v in row) for row in reader if row]
        if not rows:
            return cls.empty()
        arr = np.asarray(rows, dtype=np.int64)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy())


def generate_trace(config: NetConfig, rng: np.random.Generator, ticks: int | None = None) -> RequestTrace:
    """Chronological trace of ``ticks * requests_per_tick`` requests."""
    ticks = config.ticks if ticks is None else ticks
    if ticks < 0:
        raise InvalidParameterError("ticks must be >= 0")
    params = config.zipf()
    _validate(params)
    n = ticks * config.requests_per_tick
    if n == 0:
        return RequestTrace.empty()
    u = rng.random((n, 2))
    content = _inverse_cdf(np.cumsum(zipf_pmf(params)), u[:, 0]).astype(np.int64)
    client = _inverse_cdf(np.cumsum(client_weights(config)), u[:, 1]).astype(np.int64)
    tick = np.arange(n, dtype=np.int64) // config.requests_per_tick
    return RequestTrace(tick, content, client, client % config.num_bs)


@dataclass
class BaseStation:
    """Cache-equipped base station with a sliding window of served counts."""

    id: int
    cache_capacity: int = 150
    service_capacity: float = 4.0
    window: int = 50
    served_window: np.ndarray = field(default=None, repr=False)
    _tick: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.cache_capacity < 1:
            raise InvalidParameterError("cache_capacity must be >= 1")
        if self.window < 1:
            raise InvalidParameterError("window must be >= 1")
        if self.served_window is None:
            self.served_window = np.zeros(self.window, dtype=np.int64)

    def advance_to(self, tick: int) -> None:
        if tick <= self._tick:
            return
        if tick - self._tick >= self.window:
            self.served_window[:] = 0
        else:
            for t in range(self._tick + 1, tick + 1):
                self.served_window[t % self.window] = 0
        self._tick = tick

    def record_served(self, tick: int, count: int = 1) -> None:
        self.advance_to(tick)
        self.served_window[tick % self.window] += count


def bs_load(bs: BaseStation, window: int | None = None) -> float:
    """Served requests in the last ``window`` ticks over the window's service budget.

    >>> bs = BaseStation(0, service_capacity=10, window=10)
    >>> bs.served_window[:] = [5, 5, 5, 5, 5, 5, 5, 5, 5, 8]
    >>> bs_load(bs)
    0.53
    """
    window = bs.window if window is None else window
    if window < 1:
        raise InvalidParameterError("window must be >= 1")
    if window >= bs.window:
        window = bs.window
        served = int(bs.served_window.sum())
    else:
        idx = (bs._tick - np.arange(window)) % bs.window
        served = int(bs.served_window[idx].sum())
    return min(1.0, max(0.0, served / (window * bs.service_capacity)))
