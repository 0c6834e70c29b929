"""Federated DQN driving agents under model-poisoning attacks, with robust aggregation.

Every round each agent loads the global policy, trains locally on its own
stream of driving scenarios, and submits its parameters.  Adversarial agents
corrupt their submission first.  The server combines submissions with one of
several aggregation rules; the twin-validated rule additionally replays the
candidate policy on a probe set of twin-generated corner cases and keeps the
previous global model if the candidate collides more often.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import driveenv as de
from .errors import InvalidParameterError
from .fedtwin.aggregate import ModelUpdate
from .learncore.dqn import DQNAgent, DQNConfig
from .learncore.nn import MLP, greedy
from .seeding import rng_for

ATTACKS = ("none", "sign_flip", "gaussian_noise", "scaled_update", "zero_update")
RULES = ("mean", "coordinate_median", "trimmed_mean", "distance_filter", "filtered_twin_validated")
HEATMAP_HEADER = ("attack", "rule", "agents", "no_collision_rate")
SERIES_HEADER = ("round", "no_collision_rate", "fallback", "kept")
MAD_SCALE = 1.4826      # MAD -> standard deviation for normal data


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    sigma: float = 0.0
    factor: float = 10.0

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise InvalidParameterError(f"unknown attack {self.kind!r}")
        if not (math.isfinite(self.sigma) and math.isfinite(self.factor)):
            raise InvalidParameterError("attack parameters must be finite")
        if self.sigma < 0:
            raise InvalidParameterError("sigma must be >= 0")

    @property
    def label(self) -> str:
        if self.kind == "gaussian_noise":
            return f"gaussian_noise({self.sigma:g})"
        if self.kind == "scaled_update":
            return f"scaled_update({self.factor:g})"
        return self.kind


@dataclass(frozen=True)
class RobustRule:
    kind: str = "mean"
    beta: float = 0.2
    k: float = 3.0

    def __post_init__(self):
        if self.kind not in RULES:
            raise InvalidParameterError(f"unknown aggregation rule {self.kind!r}")
        if not 0 <= self.beta < 0.5:
            raise InvalidParameterError("beta must be in [0, 0.5)")
        if self.k < 0:
            raise InvalidParameterError("k must be >= 0")

    @property
    def label(self) -> str:
        if self.kind == "trimmed_mean":
            return f"trimmed_mean({self.beta:g})"
        if self.kind == "distance_filter":
            return f"distance_filter({self.k:g})"
        return self.kind


# ------------------------------------------------------------------ attacks

def apply_attack(update: ModelUpdate, spec: AttackSpec,
                 rng: np.random.Generator | None = None) -> ModelUpdate:
    p = np.asarray(update.params)
    if spec.kind == "none":
        new = p.copy()
    elif spec.kind == "sign_flip":
        new = -p
    elif spec.kind == "gaussian_noise":
        if spec.sigma == 0:
            new = p.copy()
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            new = (p + rng.normal(0.0, spec.sigma, p.shape)).astype(p.dtype)
    elif spec.kind == "scaled_update":
        new = (p * spec.factor).astype(p.dtype)
    else:
        new = np.zeros_like(p)
    return ModelUpdate(new, update.client_id, update.round_produced, update.sample_count)


# -------------------------------------------------------------- aggregation

def _stack(updates):
    ups = sorted(updates, key=lambda u: u.client_id)
    P = np.stack([np.asarray(u.params, dtype=np.float64) for u in ups])
    c = np.array([u.sample_count for u in ups], dtype=np.float64)
    return ups, P, c


def _masked_mean(P, c, mask, dtype):
    # sample-count weighted; rows are summed in client order so that an
    # all-true mask reproduces the plain mean bit for bit
    w = c[:, None] * mask
    return ((w * P).sum(axis=0) / w.sum(axis=0)).astype(dtype)


def coordinate_median(P) -> np.ndarray:
    return np.median(P, axis=0)


def distance_survivors(P, k: float) -> np.ndarray:
    """Keep rows whose distance to the coordinate median is within ``med + k * MAD``."""
    d = np.linalg.norm(P - coordinate_median(P), axis=1)
    med = np.median(d)
    mad = MAD_SCALE * np.median(np.abs(d - med))
    return d <= med + k * mad


@dataclass
class AggregateResult:
    params: np.ndarray
    fallback: bool = False
    kept: int = 0


def robust_aggregate(updates, rule: RobustRule, previous=None, validator=None) -> AggregateResult:
    """Combine updates with ``rule``.

    ``validator(candidate, previous) -> bool`` is consulted by the
    twin-validated rule; ``previous`` is the fallback global model.
    """
    updates = list(updates)
    if not updates:
        raise InvalidParameterError("no updates to aggregate")
    ups, P, c = _stack(updates)
    dtype = np.asarray(ups[0].params).dtype
    n = len(ups)
    ones = np.ones_like(P)
    if rule.kind == "mean":
        return AggregateResult(_masked_mean(P, c, ones, dtype), kept=n)
    if rule.kind == "coordinate_median":
        return AggregateResult(coordinate_median(P).astype(dtype), kept=n)
    if rule.kind == "trimmed_mean":
        t = math.ceil(rule.beta * n)
        if n <= 2 * t:
            raise InvalidParameterError(f"trimmed mean needs n > 2*ceil(beta*n) ({n} <= {2 * t})")
        rank = np.argsort(np.argsort(P, axis=0, kind="stable"), axis=0, kind="stable")
        mask = ((rank >= t) & (rank < n - t)).astype(np.float64)
        return AggregateResult(_masked_mean(P, c, mask, dtype), kept=n - 2 * t)
    keep = distance_survivors(P, rule.k)
    if not keep.any():
        if previous is None:
            raise InvalidParameterError("every update was filtered and there is no fallback")
        return AggregateResult(np.array(previous, copy=True), True, 0)
    cand = _masked_mean(P, c, np.broadcast_to(keep[:, None], P.shape).astype(np.float64), dtype)
    if rule.kind == "filtered_twin_validated" and previous is not None and validator is not None:
        if not validator(cand, previous):
            return AggregateResult(np.array(previous, copy=True), True, int(keep.sum()))
    return AggregateResult(cand, kept=int(keep.sum()))


# --------------------------------------------------------------- evaluation

PROBE_MIX = {"cruise": 0.1, "stop_and_go": 0.3, "hard_brake": 0.6}


def twin_probe_set(size: int, seed: int = 0, mix: dict | None = None,
                   horizon: int = 150) -> list:
    """Fixed probe scenarios, weighted toward hard braking, for validating aggregates."""
    if size < 1:
        raise InvalidParameterError("probe set size must be >= 1")
    return de.generate_drive_scenarios(size, PROBE_MIX if mix is None else mix,
                                       rng_for(seed, "twin-probe"), horizon)


def greedy_policy(net: MLP, params):
    return lambda obs: greedy(net.forward(params, obs))


def evaluate(net: MLP, params, scenarios) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return de.no_collision_rate(de.run_policy(greedy_policy(net, params), scenarios))


# ------------------------------------------------------------ local training

@dataclass(frozen=True)
class LocalHyper:
    episodes: int = 200
    parallel: int = 20
    horizon: int = 150
    dqn: DQNConfig = DQNConfig(hidden=(64, 64), gamma=0.95, lr=1e-3, batch_size=64,
                               buffer_size=50_000, target_sync_every=200, eps_start=1.0,
                               eps_end=0.05, eps_decay_steps=20_000, train_every=20,
                               learn_start=1_000)


@dataclass
class AgentSlot:
    agent_id: int
    mix: dict
    rng: np.random.Generator
    agent: DQNAgent
    attack: AttackSpec = AttackSpec()

    @property
    def adversarial(self) -> bool:
        return self.attack.kind != "none"


def local_train(slot: AgentSlot, global_params, episodes: int, hyper: LocalHyper,
                round_index: int = 0) -> ModelUpdate:
    """Load the global policy, run ``episodes`` training episodes, return the new parameters."""
    agent = slot.agent
    agent.load(global_params)
    with np.errstate(over="ignore", invalid="ignore"):
        _train_episodes(agent, slot, episodes, hyper)
    params = agent.online
    if not np.all(np.isfinite(params)):
        # training blew up (a poisoned global can do this); report no progress
        params = global_params
    return ModelUpdate(np.array(params, dtype=np.float32, copy=True), slot.agent_id,
                       round_index, max(episodes, 1))


def _train_episodes(agent: DQNAgent, slot: AgentSlot, episodes: int, hyper: LocalHyper) -> None:
    done_eps = 0
    while done_eps < episodes:
        b = min(hyper.parallel, episodes - done_eps)
        scen = de.generate_drive_scenarios(b, slot.mix, slot.rng, hyper.horizon)
        env = de.DriveBatch(scen)
        obs = env.reset()
        while not env.done.all():
            live = ~env.done
            act = agent.act_batch(obs)
            nxt, r, done_now, _ = env.step(act)
            idx = np.flatnonzero(live)
            # a horizon cut-off is not terminal; only collisions are
            agent.observe_batch(obs[idx], act[idx], r[idx], nxt[idx], env.collided[idx])
            obs = nxt
        done_eps += b


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class FRLConfig:
    seed: int = 0
    agents: int = 10
    adversary_fraction: float = 0.2
    attack: AttackSpec = AttackSpec("sign_flip")
    rule: RobustRule = RobustRule("mean")
    rounds: int = 30
    hyper: LocalHyper = LocalHyper()
    heldout: int = 500
    probe: int = 100
    mix_concentration: float = 1.0

    def __post_init__(self):
        m = self.adversary_fraction * self.agents
        if abs(m - round(m)) > 1e-9:
            raise InvalidParameterError("adversary_fraction * agents must be an integer")
        if not 0 <= self.adversary_fraction < 0.5:
            raise InvalidParameterError("adversary fraction must be in [0, 0.5)")
        if self.rounds < 1 or self.agents < 1:
            raise InvalidParameterError("rounds and agents must be >= 1")

    @property
    def n_adversaries(self) -> int:
        return int(round(self.adversary_fraction * self.agents))


@dataclass
class FRLReport:
    config: FRLConfig
    series: list = field(default_factory=list)       # no-collision rate per round
    fallbacks: list = field(default_factory=list)
    kept: list = field(default_factory=list)
    params: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_rate(self) -> float:
        return float(self.series[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SERIES_HEADER)
            for i, (r, f, k) in enumerate(zip(self.series, self.fallbacks, self.kept)):
                w.writerow((i, repr(float(r)), int(f), k))


def agent_mixes(n: int, rng: np.random.Generator, concentration: float = 1.0) -> list:
    """Distinct leader-profile mixes, one per agent (every profile keeps some weight)."""
    out = []
    for _ in range(n):
        w = 0.1 + rng.dirichlet(np.full(len(de.PROFILES), concentration))
        w = w / w.sum()
        out.append(dict(zip(de.PROFILES, w.tolist())))
    return out


def make_slots(config: FRLConfig) -> list:
    mixes = agent_mixes(config.agents, rng_for(config.seed, "frl-mix"), config.mix_concentration)
    init = rng_for(config.seed, "frl-init")
    net = MLP((de.OBS_DIM, *config.hyper.dqn.hidden, len(de.ACCELS)))
    params = net.init(init)
    slots = []
    n_adv = config.n_adversaries
    for i in range(config.agents):
        attack = config.attack if i >= config.agents - n_adv else AttackSpec()
        agent = DQNAgent(de.OBS_DIM, len(de.ACCELS), config.hyper.dqn,
                         rng_for(config.seed, "frl-agent", i), params=params)
        slots.append(AgentSlot(i, mixes[i], rng_for(config.seed, "frl-scenarios", i), agent, attack))
    return slots


def run_frl(config: FRLConfig, heldout=None, probe=None) -> FRLReport:
    slots = make_slots(config)
    net = slots[0].agent.net
    global_params = np.array(slots[0].agent.online, copy=True)
    if heldout is None:
        heldout = de.generate_drive_scenarios(config.heldout, de.DEFAULT_MIX,
                                              rng_for(config.seed, "frl-heldout"),
                                              config.hyper.horizon, start_id=0)
    validator = None
    if config.rule.kind == "filtered_twin_validated":
        probe = twin_probe_set(config.probe, config.seed, horizon=config.hyper.horizon) \
            if probe is None else probe
        cache = {}

        def validator(cand, prev):
            key = prev.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = evaluate(net, prev, probe)
            return evaluate(net, cand, probe) >= cache[key]
    report = FRLReport(config)
    for r in range(config.rounds):
        updates = []
        for slot in slots:
            u = local_train(slot, global_params, config.hyper.episodes, config.hyper, r)
            if slot.adversarial:
                u = apply_attack(u, slot.attack, rng_for(config.seed, "attack", slot.agent_id, r))
            updates.append(u)
        agg = robust_aggregate(updates, config.rule, global_params, validator)
        global_params = agg.params
        report.series.append(evaluate(net, global_params, heldout))
        report.fallbacks.append(agg.fallback)
        report.kept.append(agg.kept)
    report.params = global_params
    return report


def write_heatmap(rows, path) -> None:
    """``rows`` of (attack, rule, agents, no_collision_rate)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_HEADER)
        for a, rule, n, rate in rows:
            w.writerow((a, rule, n, f"{rate:.4f}"))
