"""Safe-RL edge caching loop: DQN agent, digital twin, intervention modules.

Four ablations are expressed with two switches:

* ``use_dnt`` -- the twin trains a next-request forecaster on historical
  traffic and adds its forecast to the agent's state.  Optionally
  (``pretrain.scenarios > 0``) the agent also trains on twin-generated
  scenarios before it touches the physical trace;
* ``interventions`` -- which of the state/action/reward modules are active.
  Action checks always consult the twin's mirrored loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cacheenv as ce
from .learncore.dqn import DQNAgent, DQNConfig
from .netmodel import NetConfig, RequestTrace, generate_trace
from .safety import (InterventionConfig, InterventionLog, intervene_action,
                     intervene_reward, intervene_state, state_dim)
from .seeding import rng_for
from .twin import DigitalTwin, Forecaster, Scenario, generate_scenarios, train_forecaster


@dataclass(frozen=True)
class ForecasterConfig:
    window: int = 16
    hidden: int = 32
    embed: int = 16
    epochs: int = 2
    lr: float = 3e-3
    history_ticks: int = 1500


@dataclass(frozen=True)
class PretrainConfig:
    scenarios: int = 0
    length: int = 2500
    rarity_mix: float = 0.3


@dataclass(frozen=True)
class CachingConfig:
    seed: int = 0
    net: NetConfig = NetConfig()
    reward: ce.RewardSpec = ce.RewardSpec()
    candidates: int = 4
    use_dnt: bool = True
    interventions: InterventionConfig = InterventionConfig()
    dqn: DQNConfig = DQNConfig()
    forecaster: ForecasterConfig = ForecasterConfig()
    pretrain: PretrainConfig = PretrainConfig()
    sync_deadline: int = 5

    @property
    def env(self) -> ce.CacheEnvConfig:
        return ce.CacheEnvConfig(self.net, self.reward, self.candidates)


ABLATIONS = {
    "baseline": dict(use_dnt=False, interventions=InterventionConfig.disabled()),
    "dnt": dict(use_dnt=True, interventions=InterventionConfig.disabled()),
    "interventions": dict(use_dnt=False, interventions=InterventionConfig()),
    "full": dict(use_dnt=True, interventions=InterventionConfig()),
}


def obs_dim(config: CachingConfig) -> int:
    base = config.env.obs_dim + (2 if config.use_dnt else 0)
    return state_dim(base, config.net.num_bs, config.interventions)


@dataclass
class CachingResult:
    log: ce.EpisodeLog
    interventions: InterventionLog
    metrics: dict
    agent: DQNAgent = field(repr=False)
    forecaster: Forecaster | None = field(default=None, repr=False)
    twin_load_mismatches: int = 0


class CachingLoop:
    """Runs one agent over a request trace with the configured twin and modules."""

    def __init__(self, config: CachingConfig, agent: DQNAgent, forecaster: Forecaster | None = None):
        self.config = config
        self.env_config = config.env
        self.agent = agent
        self.forecaster = forecaster
        self.use_twin = config.use_dnt or config.interventions.action_enabled \
            or config.interventions.state_enabled or config.interventions.reward_enabled
        net = config.net
        self.increment = 1.0 / (net.load_window * net.service_capacity)

    def _obs(self, state, twin, rq, cand):
        obs = ce.observe(state, rq, self.env_config, cand)
        if self.config.use_dnt:
            obs = np.concatenate([obs, twin.forecast_features(rq.bs_id, rq.content_id)])
        if twin is not None:
            obs = intervene_state(obs, twin.state, self.config.interventions,
                                  self.config.reward.overload_threshold)
        return obs

    def run(self, trace: RequestTrace, initial_loads=None, learn: bool = True,
            explore: bool = True, check_mirror: bool = False):
        cfg, env = self.config, self.env_config
        state = ce.empty_state(env)
        if initial_loads is not None:
            ce.prefill_loads(state, initial_loads)
        twin = None
        if self.use_twin:
            twin = DigitalTwin(cfg.net.num_bs, cfg.net.catalog_size,
                               self.forecaster if cfg.use_dnt else None, cfg.sync_deadline,
                               cfg.forecaster.window)
            twin.sync(state)
        log = ce.EpisodeLog()
        ilog = InterventionLog()
        mismatches = 0
        n = len(trace)
        rq = trace[0]
        cand = ce.candidate_slots(state, rq.bs_id, env.candidates)
        obs = self._obs(state, twin, rq, cand)
        thr = cfg.reward.overload_threshold
        lam = cfg.interventions.imbalance_lambda if cfg.interventions.reward_enabled else 0.0
        for i in range(n):
            a_idx = self.agent.act(obs, explore=explore)
            proposed = ce.REJECT if a_idx == 0 else ce.CacheAction(True, int(cand[a_idx - 1]))
            final, intervened, reason = proposed, False, None
            miss = state.slot_of[rq.bs_id, rq.content_id] < 0
            if twin is not None and miss and proposed.accept:
                verdict = twin.verdict(rq.bs_id, True, thr, self.increment, rq.time)
                final, intervened = intervene_action(proposed, verdict, state, rq.bs_id,
                                                     cfg.interventions, env.candidates)
                reason = verdict.reason if intervened else None
            if final is proposed:
                a_exec = a_idx
            elif not final.accept:
                a_exec = 0
            else:
                hits = np.flatnonzero(cand == final.slot)
                a_exec = int(hits[0]) + 1 if len(hits) else a_idx
            reward, info = ce.apply_step(state, final, rq, env)
            if twin is not None:
                twin.record_request(rq.bs_id, rq.content_id)
                twin.sync(state)
                loads = twin.state.loads
                if check_mirror and not np.array_equal(loads, state.loads()):
                    mismatches += 1
            else:
                loads = state.loads()
            shaped = intervene_reward(reward, loads, lam)
            done = i == n - 1
            if not done:
                rq_next = trace[i + 1]
                cand = ce.candidate_slots(state, rq_next.bs_id, env.candidates)
                obs_next = self._obs(state, twin, rq_next, cand)
            else:
                obs_next = obs
            if learn:
                self.agent.observe(obs, a_exec, shaped, obs_next, done)
            log.append(rq.time, rq.bs_id, info.hit, shaped, intervened, loads)
            ilog.record(intervened, reason)
            if not done:
                obs, rq = obs_next, rq_next
        return log, ilog, mismatches


def build_agent(config: CachingConfig) -> DQNAgent:
    return DQNAgent(obs_dim(config), config.env.n_actions, config.dqn,
                    rng_for(config.seed, "agent-init"))


def prepare_forecaster(config: CachingConfig) -> Forecaster:
    net = config.net
    fc = config.forecaster
    history = generate_trace(net, rng_for(config.seed, "history"), ticks=fc.history_ticks)
    return train_forecaster(history, fc.window, fc.epochs, fc.lr, rng_for(config.seed, "forecaster"),
                            catalog=net.catalog_size, hidden=fc.hidden, embed=fc.embed)


def twin_scenarios(config: CachingConfig, forecaster: Forecaster) -> list[Scenario]:
    p = config.pretrain
    return generate_scenarios(forecaster, p.scenarios, p.rarity_mix, rng_for(config.seed, "scenarios"),
                              config.net, p.length)


def run_caching(config: CachingConfig, trace: RequestTrace | None = None,
                check_mirror: bool = False) -> CachingResult:
    """Full experiment: optional twin pre-training, then online learning on the trace."""
    if trace is None:
        trace = generate_trace(config.net, rng_for(config.seed, "trace"))
    agent = build_agent(config)
    forecaster = None
    if config.use_dnt:
        forecaster = prepare_forecaster(config)
        loop = CachingLoop(config, agent, forecaster)
        for sc in twin_scenarios(config, forecaster) if config.pretrain.scenarios else ():
            loop.run(sc.trace, initial_loads=sc.initial_loads)
    loop = CachingLoop(config, agent, forecaster)
    log, ilog, mismatches = loop.run(trace, check_mirror=check_mirror)
    return CachingResult(log, ilog, ce.metrics(log), agent, forecaster, mismatches)


def ablation_config(base: CachingConfig, name: str) -> CachingConfig:
    from dataclasses import replace
    return replace(base, **ABLATIONS[name])
