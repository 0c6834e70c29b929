"""Clustered federated training of the next-request forecaster.

Base stations are grouped into cluster twins by affinity.  Each cluster twin
trains the shared forecaster on its members' request windows.  The server
runs synchronous weighted averaging for the first rounds, then switches to
asynchronous blending: all cluster twins start from the same global model,
their updates are applied in arrival order (so later arrivals are stale by
the number of versions applied before them), and one straggling cluster
submits updates built on a global version several versions old.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidParameterError
from ..learncore.gru import GRUNet
from ..learncore.optim import Adam
from ..netmodel import ZipfParams, zipf_pmf
from ..seeding import rng_for
from .affinity import BSAttributes, build_affinity, planted_attributes
from .aggregate import AsyncState, ModelUpdate, aggregate_sync, apply_async
from .cluster import ClusterPartition, cluster_fixed_k, cluster_modularity, reform_clusters

ROUND_HEADER = ("round", "mode", "global_loss", "participants", "max_staleness")


@dataclass(frozen=True)
class FedTwinConfig:
    seed: int = 0
    n_groups: int = 3
    per_group: int = 4
    iid: bool = False
    catalog: int = 30
    zipf_exponent: float = 0.8
    follow_prob: float = 0.6            # chance the next request is the previous item's successor
    requests_per_bs: int = 600
    heldout_per_bs: int = 200
    window: int = 8
    hidden: int = 16
    embed: int = 8
    clustering: str = "modularity"      # or "fixed_k"
    k: int = 3
    rounds: int = 20
    switch_round: int | None = None     # default rounds // 2
    participation: float = 1.0
    local_epochs: int = 1
    lr: float = 5e-3
    batch_size: int = 32
    alpha0: float = 0.6
    staleness_aware: bool = True
    straggler_staleness: int = 5
    reform_every: int = 20
    drift_threshold: float = 0.1

    def __post_init__(self):
        if self.clustering not in ("modularity", "fixed_k"):
            raise InvalidParameterError("clustering must be 'modularity' or 'fixed_k'")
        if self.rounds < 1:
            raise InvalidParameterError("rounds must be >= 1")
        if self.straggler_staleness < 0:
            raise InvalidParameterError("straggler_staleness must be >= 0")

    @property
    def n_bs(self) -> int:
        return self.n_groups * self.per_group

    @property
    def switch(self) -> int:
        return self.rounds // 2 if self.switch_round is None else self.switch_round


@dataclass
class RoundMetrics:
    round: int
    mode: str
    global_loss: float
    participants: int
    max_staleness: int


@dataclass
class FedTwinReport:
    rounds: list
    partition: ClusterPartition
    params: np.ndarray = field(repr=False)
    reclusterings: int = 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.global_loss for r in self.rounds])

    @property
    def final_loss(self) -> float:
        return float(self.rounds[-1].global_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROUND_HEADER)
            for r in self.rounds:
                w.writerow((r.round, r.mode, repr(r.global_loss), r.participants, r.max_staleness))


@dataclass
class TrafficTask:
    """Per-BS request sequences plus the windows the forecaster learns from."""
    attributes: BSAttributes
    groups: np.ndarray
    train: list               # per-BS (X, y)
    heldout: tuple            # pooled (X, y)

    def pooled(self, members) -> tuple:
        X = np.concatenate([self.train[b][0] for b in members])
        y = np.concatenate([self.train[b][1] for b in members])
        return X, y


def _windows(ids, W):
    idx = np.arange(W)[None, :] + np.arange(len(ids) - W)[:, None]
    return ids[idx], ids[W:]


def session_stream(n: int, pmf, ranking, successor, follow_prob: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Requests that either follow the previous item's successor or are fresh Zipf draws."""
    fresh = ranking[rng.choice(len(pmf), size=n, p=pmf)]
    follow = rng.random(n) < follow_prob
    ids = np.empty(n, dtype=np.int64)
    ids[0] = fresh[0]
    for t in range(1, n):
        ids[t] = successor[ids[t - 1]] if follow[t] else fresh[t]
    return ids


def make_task(config: FedTwinConfig) -> TrafficTask:
    """Session-structured request streams per BS.

    Groups differ in item ranking and successor map unless ``iid``.
    """
    rng = rng_for(config.seed, "fedtwin", "layout")
    attrs, groups = planted_attributes(config.n_groups, config.per_group, rng, config.catalog)
    pmf = zipf_pmf(ZipfParams(config.zipf_exponent, config.catalog))
    n_kinds = 1 if config.iid else config.n_groups
    rankings = [rng.permutation(config.catalog) for _ in range(n_kinds)]
    successors = [rng.permutation(config.catalog) for _ in range(n_kinds)]
    train, hx, hy, hists = [], [], [], []
    for b in range(config.n_bs):
        g = 0 if config.iid else groups[b]
        n = config.requests_per_bs + config.heldout_per_bs
        ids = session_stream(n, pmf, rankings[g], successors[g], config.follow_prob,
                             rng_for(config.seed, "fedtwin", "bs", b))
        cut = config.requests_per_bs
        train.append(_windows(ids[:cut], config.window))
        X, y = _windows(ids[cut:], config.window)
        hx.append(X); hy.append(y)
        hists.append(np.bincount(ids[:cut], minlength=config.catalog))
    attrs = BSAttributes(attrs.position, attrs.backhaul, attrs.radius, np.array(hists, dtype=float))
    return TrafficTask(attrs, groups, train, (np.concatenate(hx), np.concatenate(hy)))


def local_train(net: GRUNet, params, X, y, epochs: int, lr: float, batch_size: int,
                rng: np.random.Generator) -> np.ndarray:
    """Minibatch Adam on one client's windows, starting from ``params``."""
    opt = Adam(lr)
    p = np.array(params, copy=True)
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            sel = order[i:i + batch_size]
            _, g = net.loss_and_grad(p, X[sel], y[sel])
            p = opt.step(p, g)
    return p


def heldout_loss(net: GRUNet, params, X, y) -> float:
    probs = net.predict(params, X)
    return float(-np.log(np.maximum(probs[np.arange(len(y)), y], 1e-30)).mean())


def _cluster(graph, config: FedTwinConfig) -> ClusterPartition:
    if config.clustering == "fixed_k":
        return cluster_fixed_k(graph, config.k)
    return cluster_modularity(graph)


def _drift_attributes(attrs: BSAttributes, rng: np.random.Generator) -> BSAttributes:
    # slow random change in backhaul capacity and a little movement
    return BSAttributes(attrs.position + rng.normal(0, 0.05, attrs.position.shape),
                        attrs.backhaul * rng.uniform(0.7, 1.3, attrs.n),
                        attrs.radius, attrs.histogram)


def initial_params(config: FedTwinConfig) -> tuple[GRUNet, np.ndarray]:
    net = GRUNet(config.catalog, config.embed, config.hidden)
    return net, net.init(rng_for(config.seed, "fedtwin", "init"))


def run_fedtwin(config: FedTwinConfig, task: TrafficTask | None = None) -> FedTwinReport:
    task = make_task(config) if task is None else task
    net, params = initial_params(config)
    graph = build_affinity(task.attributes)
    partition = _cluster(graph, config)
    drift_rng = rng_for(config.seed, "fedtwin", "drift")
    part_rng = rng_for(config.seed, "fedtwin", "participation")
    client_rngs: dict[int, np.random.Generator] = {}

    def rng_of(cid):
        if cid not in client_rngs:
            client_rngs[cid] = rng_for(config.seed, "fedtwin", "client", cid)
        return client_rngs[cid]

    history = {0: params}
    version = 0
    reclusterings = 0
    rows = []
    attrs = task.attributes
    for r in range(config.rounds):
        if config.reform_every and r > 0 and r % config.reform_every == 0:
            attrs = _drift_attributes(attrs, drift_rng)
            new = reform_clusters(partition, build_affinity(attrs), config.drift_threshold)
            reclusterings += new is not partition
            partition = new
        members = partition.members()
        data = [task.pooled(m) for m in members]
        if r < config.switch:
            updates = []
            for cid, (X, y) in enumerate(data):
                p = local_train(net, params, X, y, config.local_epochs, config.lr,
                                config.batch_size, rng_of(cid))
                updates.append(ModelUpdate(p, cid, version, len(X)))
            params = aggregate_sync(updates, config.participation, part_rng)
            chosen = int(np.ceil(config.participation * len(updates)))
            version += 1
            history = {version: params}
            rows.append(RoundMetrics(r, "sync", heldout_loss(net, params, *task.heldout), chosen, 0))
            continue
        state = AsyncState(params, version, config.alpha0, config.staleness_aware)
        max_tau = 0
        straggler = len(data) - 1 if config.straggler_staleness > 0 and len(data) > 1 else -1
        start = state.version
        # clients train concurrently from the round-start model and land one
        # after another; the straggler's update is always behind by its staleness
        for cid, (X, y) in enumerate(data):
            base = start
            if cid == straggler:
                base = max(min(history), state.version - config.straggler_staleness)
            p = local_train(net, history[base], X, y, config.local_epochs, config.lr,
                            config.batch_size, rng_of(cid))
            state, tau, _ = apply_async(state, ModelUpdate(p, cid, base, len(X)))
            history[state.version] = state.params
            max_tau = max(max_tau, tau)
        keep = config.straggler_staleness
        history = {v: h for v, h in history.items() if v >= state.version - keep}
        params, version = state.params, state.version
        rows.append(RoundMetrics(r, "async", heldout_loss(net, params, *task.heldout),
                                 len(data), max_tau))
    return FedTwinReport(rows, partition, params, reclusterings)


def run_centralized(config: FedTwinConfig, task: TrafficTask | None = None) -> FedTwinReport:
    """Reference: the same local training applied to all BS data pooled, once per round."""
    task = make_task(config) if task is None else task
    net, params = initial_params(config)
    X, y = task.pooled(range(config.n_bs))
    rng = rng_for(config.seed, "fedtwin", "client", 0)
    rows = []
    for r in range(config.rounds):
        params = local_train(net, params, X, y, config.local_epochs, config.lr,
                             config.batch_size, rng)
        rows.append(RoundMetrics(r, "central", heldout_loss(net, params, *task.heldout), 1, 0))
    labels = np.zeros(config.n_bs, dtype=np.int64)
    return FedTwinReport(rows, ClusterPartition(labels, 0.0, "fixed_k", 1), params)


def single_client(config: FedTwinConfig) -> FedTwinConfig:
    """Degenerate federation: one cluster holding every BS, synchronous only."""
    return replace(config, clustering="fixed_k", k=1, switch_round=config.rounds,
                   participation=1.0, reform_every=0)
