"""State, action and reward intervention modules around the caching agent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cacheenv import REJECT, CacheAction, CacheState, candidate_slots
from .errors import InvalidParameterError
from .twin import TwinState, Verdict

BACKUP_POLICIES = ("reject", "admit-lru")


@dataclass(frozen=True)
class InterventionConfig:
    state_enabled: bool = True
    action_enabled: bool = True
    reward_enabled: bool = True
    imbalance_lambda: float = 2.0
    backup_policy: str = "reject"

    def __post_init__(self):
        if self.imbalance_lambda < 0:
            raise InvalidParameterError("imbalance_lambda must be >= 0")
        if self.backup_policy not in BACKUP_POLICIES:
            raise InvalidParameterError(f"backup_policy must be one of {BACKUP_POLICIES}")

    @classmethod
    def disabled(cls) -> "InterventionConfig":
        return cls(False, False, False)


@dataclass
class InterventionLog:
    intervened: list = field(default_factory=list)
    reasons: list = field(default_factory=list)

    def record(self, intervened: bool, reason: str | None = None) -> None:
        self.intervened.append(bool(intervened))
        self.reasons.append(reason)

    @property
    def steps(self) -> int:
        return len(self.intervened)

    @property
    def interventions(self) -> int:
        return int(sum(self.intervened))

    @property
    def intervention_rate(self) -> float:
        return self.interventions / self.steps if self.steps else 0.0


def intervene_state(base, twin: TwinState, config: InterventionConfig,
                    threshold: float = 0.8) -> np.ndarray:
    """Append every BS load and a per-BS ``load > threshold`` flag to ``base``."""
    if not config.state_enabled:
        return base
    loads = np.asarray(twin.loads, dtype=np.float32)
    risky = (loads > threshold).astype(np.float32)
    return np.concatenate([np.asarray(base, dtype=np.float32), loads, risky])


def state_dim(base_dim: int, num_bs: int, config: InterventionConfig) -> int:
    return base_dim + (2 * num_bs if config.state_enabled else 0)


def backup_action(state: CacheState, bs_id: int, config: InterventionConfig,
                  candidates: int = 4) -> CacheAction:
    """Fallback action used when the twin vetoes a proposal.

    ``reject`` adds no load, except during cold start: while the BS cache
    still has free slots the request is admitted into one (no eviction).
    ``admit-lru`` instead admits into the oldest candidate slot.
    """
    empty = np.flatnonzero(state.slots[bs_id] < 0)
    if len(empty):
        return CacheAction(True, int(empty[0]))
    if config.backup_policy == "reject":
        return REJECT
    cand = candidate_slots(state, bs_id, candidates)
    items = state.slots[bs_id, cand]
    oldest = cand[int(np.argmin(state.last_cached[bs_id, items]))]
    return CacheAction(True, int(oldest))


def intervene_action(proposed: CacheAction, verdict: Verdict, state: CacheState, bs_id: int,
                     config: InterventionConfig, candidates: int = 4):
    """Return ``(final_action, intervened)``; unsafe proposals are replaced by the backup."""
    if not config.action_enabled or verdict.safe:
        return proposed, False
    return backup_action(state, bs_id, config, candidates), True


def intervene_reward(base_reward: float, loads, lam: float) -> float:
    """Penalise load spread: ``base - lam * (max(loads) - min(loads))``."""
    loads = np.asarray(loads, dtype=float)
    if lam == 0 or loads.size == 0:
        return float(base_reward)
    return float(base_reward - lam * (loads.max() - loads.min()))
