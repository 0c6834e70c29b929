"""Three-vehicle longitudinal car following: leader, controlled ego, IDM follower.

The leader replays a scripted acceleration profile, the ego is driven by an
agent through five discrete accelerations, and the follower reacts to the
ego with an intelligent-driver-model rule.  All dynamics are vectorized over
a batch of scenarios; the single-scenario ``reset``/``step`` wrap the batch
code with a batch of one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidActionError, InvalidParameterError
from .seeding import rng_for

PROFILES = ("cruise", "stop_and_go", "hard_brake")
RESULT_HEADER = ("scenario_id", "profile", "collided", "steps", "reward")
ACCELS = np.array([-4.0, -2.0, 0.0, 1.0, 2.0])
OBS_DIM = 5


@dataclass(frozen=True)
class DriveParams:
    dt: float = 0.1
    v_max: float = 35.0
    length: float = 5.0
    # follower IDM
    idm_headway: float = 2.0
    idm_accel: float = 1.5
    idm_decel: float = 2.0
    idm_min_gap: float = 2.0
    idm_speed: float = 30.0
    follower_max_brake: float = 3.0
    # reward
    collision_reward: float = -100.0
    alive_reward: float = 1.0
    headway_bonus: float = 0.5
    headway_target: float = 2.0       # seconds
    headway_scale: float = 10.0       # metres


DEFAULT = DriveParams()


@dataclass(frozen=True)
class DriveScenario:
    scenario_id: int
    seed: int
    profile: str
    speed: float              # initial speed of all three vehicles
    front_gap: float          # leader.x - ego.x at reset
    rear_gap: float           # ego.x - follower.x at reset
    horizon: int = 150
    event_time: float = 0.0   # seconds until the leader's manoeuvre starts
    decel: float = 0.0        # leader deceleration magnitude during the manoeuvre
    low_speed: float = 0.0    # stop-and-go: speed the leader slows to

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise InvalidParameterError(f"unknown leader profile {self.profile!r}")
        if self.front_gap <= 0 or self.rear_gap <= 0:
            raise InvalidParameterError("initial gaps must be positive")
        if self.horizon < 1:
            raise InvalidParameterError("horizon must be >= 1")


class VehicleState(NamedTuple):
    position: float
    velocity: float
    length: float


@dataclass
class PlatoonState:
    """Positions and speeds ``(..., 3)`` ordered leader, ego, follower."""
    x: np.ndarray
    v: np.ndarray
    tick: int = 0
    length: float = DEFAULT.length
    dt: float = DEFAULT.dt

    def vehicle(self, i: int) -> VehicleState:
        return VehicleState(float(self.x[..., i].squeeze()), float(self.v[..., i].squeeze()), self.length)

    @property
    def leader(self) -> VehicleState:
        return self.vehicle(0)

    @property
    def ego(self) -> VehicleState:
        return self.vehicle(1)

    @property
    def follower(self) -> VehicleState:
        return self.vehicle(2)

    @property
    def elapsed(self) -> float:
        return self.tick * self.dt

    def copy(self) -> "PlatoonState":
        return PlatoonState(self.x.copy(), self.v.copy(), self.tick, self.length, self.dt)


def front_gap(state: PlatoonState) -> np.ndarray:
    return state.x[..., 0] - state.x[..., 1] - state.length


def rear_gap(state: PlatoonState) -> np.ndarray:
    return state.x[..., 1] - state.x[..., 2] - state.length


# ------------------------------------------------------------ leader profiles

def leader_schedule(sc: DriveScenario, dt: float = DEFAULT.dt) -> np.ndarray:
    """Commanded leader acceleration for each of the scenario's steps."""
    t = np.arange(sc.horizon) * dt
    a = np.zeros(sc.horizon)
    if sc.profile == "cruise":
        # gentle speed wobble
        a = 0.5 * np.sin(2 * np.pi * t / 8.0 + sc.seed % 7)
    elif sc.profile == "hard_brake":
        a[t >= sc.event_time] = -sc.decel
    else:
        slow = (sc.speed - sc.low_speed) / sc.decel
        hold = 2.0
        t1 = sc.event_time + slow
        t2 = t1 + hold
        a[(t >= sc.event_time) & (t < t1)] = -sc.decel
        a[(t >= t2) & (t < t2 + (sc.speed - sc.low_speed) / 1.0)] = 1.0
    return a


def has_brake_event(sc: DriveScenario, dt: float = DEFAULT.dt) -> bool:
    return bool((leader_schedule(sc, dt) <= -2.0).any())


# ------------------------------------------------------------------ dynamics

def idm_accel(v, gap, dv, p: DriveParams = DEFAULT) -> np.ndarray:
    """IDM acceleration for a vehicle at speed ``v``, ``gap`` metres behind, closing at ``dv``."""
    s_star = p.idm_min_gap + np.maximum(0.0, v * p.idm_headway + v * dv / (2 * np.sqrt(p.idm_accel * p.idm_decel)))
    a = p.idm_accel * (1 - (v / p.idm_speed) ** 4 - (s_star / np.maximum(gap, 0.1)) ** 2)
    return np.clip(a, -p.follower_max_brake, p.idm_accel)


def kinematic_step(x, v, a, dt, v_max):
    """Semi-implicit Euler: speed first, then position with the new speed."""
    v_new = np.clip(v + a * dt, 0.0, v_max)
    return x + v_new * dt, v_new


def reward_of(state: PlatoonState, collided, p: DriveParams = DEFAULT) -> np.ndarray:
    gap = front_gap(state)
    target = p.headway_target * state.v[..., 1]
    r = p.alive_reward + p.headway_bonus * np.exp(-np.abs(gap - target) / p.headway_scale)
    return np.where(collided, p.collision_reward, r)


def observe(state: PlatoonState, p: DriveParams = DEFAULT) -> np.ndarray:
    """Normalised [ego speed, front gap, front closing speed, rear gap, rear closing speed]."""
    v = state.v
    obs = np.stack([v[..., 1] / p.v_max, front_gap(state) / 100.0, (v[..., 1] - v[..., 0]) / 10.0,
                    rear_gap(state) / 100.0, (v[..., 2] - v[..., 1]) / 10.0], axis=-1)
    return obs.astype(np.float32)


class DriveBatch:
    """A batch of independent episodes stepped together."""

    def __init__(self, scenarios, params: DriveParams = DEFAULT):
        if not scenarios:
            raise InvalidParameterError("no scenarios")
        self.scenarios = list(scenarios)
        self.p = params
        self.horizon = np.array([s.horizon for s in self.scenarios])
        H = int(self.horizon.max())
        self.schedule = np.zeros((len(self.scenarios), H))
        for i, s in enumerate(self.scenarios):
            self.schedule[i, :s.horizon] = leader_schedule(s, params.dt)
        self.reset()

    def reset(self) -> np.ndarray:
        sc = self.scenarios
        sp = np.array([s.speed for s in sc])
        fg = np.array([s.front_gap for s in sc])
        rg = np.array([s.rear_gap for s in sc])
        x = np.stack([fg + rg, rg, np.zeros_like(rg)], axis=1)
        v = np.repeat(sp[:, None], 3, axis=1)
        self.state = PlatoonState(x, v, 0, self.p.length, self.p.dt)
        n = len(sc)
        self.done = np.zeros(n, dtype=bool)
        self.collided = np.zeros(n, dtype=bool)
        self.steps = np.zeros(n, dtype=np.int64)
        self.total = np.zeros(n)
        return observe(self.state, self.p)

    def step(self, actions):
        """Advance live episodes; finished ones are frozen and get reward 0."""
        actions = np.asarray(actions)
        if np.any((actions < 0) | (actions >= len(ACCELS))):
            raise InvalidActionError(f"action indices must be in [0, {len(ACCELS)})")
        p, st = self.p, self.state
        live = ~self.done
        t = st.tick
        a = np.zeros_like(st.v)
        a[:, 0] = self.schedule[:, min(t, self.schedule.shape[1] - 1)]
        a[:, 1] = ACCELS[actions]
        a[:, 2] = idm_accel(st.v[:, 2], rear_gap(st), st.v[:, 2] - st.v[:, 1], p)
        x, v = kinematic_step(st.x, st.v, a, p.dt, p.v_max)
        st.x = np.where(live[:, None], x, st.x)
        st.v = np.where(live[:, None], v, st.v)
        st.tick = t + 1
        hit = live & ((front_gap(st) <= 0) | (rear_gap(st) <= 0))
        r = np.where(live, reward_of(st, hit, p), 0.0)
        self.steps += live
        self.total += r
        self.collided |= hit
        done_now = live & (hit | (self.steps >= self.horizon))
        self.done |= done_now
        return observe(st, p), r, done_now, hit


# ------------------------------------------------------- single-episode API

def reset(scenario: DriveScenario, params: DriveParams = DEFAULT) -> PlatoonState:
    b = DriveBatch([scenario], params)
    st = b.state
    return PlatoonState(st.x[0].copy(), st.v[0].copy(), 0, params.length, params.dt)


def step(state: PlatoonState, action: int, scenario: DriveScenario,
         params: DriveParams = DEFAULT):
    """Pure single-scenario transition: ``(next_state, reward, done, collided)``."""
    if not 0 <= int(action) < len(ACCELS):
        raise InvalidActionError(f"action index {action} outside [0, {len(ACCELS)})")
    sched = leader_schedule(scenario, params.dt)
    a = np.array([sched[min(state.tick, len(sched) - 1)], ACCELS[int(action)],
                  float(idm_accel(state.v[2], rear_gap(state), state.v[2] - state.v[1], params))])
    x, v = kinematic_step(state.x, state.v, a, params.dt, params.v_max)
    nxt = PlatoonState(x, v, state.tick + 1, state.length, state.dt)
    collided = bool(front_gap(nxt) <= 0 or rear_gap(nxt) <= 0)
    r = float(reward_of(nxt, collided, params))
    return nxt, r, collided or nxt.tick >= scenario.horizon, collided


# ---------------------------------------------------------------- scenarios

def apportion(n: int, mix: dict) -> dict:
    """Largest-remainder split of ``n`` by ``mix`` (counts within 1 of ``mix * n``)."""
    keys = [k for k in PROFILES if k in mix]
    w = np.array([mix[k] for k in keys], dtype=float)
    if set(mix) - set(PROFILES):
        raise InvalidParameterError(f"unknown profiles {set(mix) - set(PROFILES)}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidParameterError("profile mix must be non-negative and sum to 1")
    raw = w * n
    base = np.floor(raw).astype(int)
    rem = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rem]] += 1
    return dict(zip(keys, base.tolist()))


DEFAULT_MIX = {"cruise": 0.4, "stop_and_go": 0.3, "hard_brake": 0.3}


@dataclass(frozen=True)
class ScenarioRanges:
    """Uniform sampling ranges for scenario fields."""
    speed: tuple = (20.0, 30.0)
    front_gap: tuple = (30.0, 50.0)
    rear_gap: tuple = (15.0, 35.0)          # a tailgating follower
    brake_time: tuple = (1.0, 6.0)
    brake_decel: tuple = (2.0, 3.0)
    sag_time: tuple = (1.0, 4.0)
    sag_decel: tuple = (1.5, 2.5)
    sag_low_speed: tuple = (3.0, 10.0)


RANGES = ScenarioRanges()


def make_scenario(scenario_id: int, seed: int, profile: str, horizon: int = 150,
                  ranges: ScenarioRanges = RANGES) -> DriveScenario:
    r = rng_for(seed, "drive-scenario")
    kw = dict(speed=float(r.uniform(*ranges.speed)), front_gap=float(r.uniform(*ranges.front_gap)),
              rear_gap=float(r.uniform(*ranges.rear_gap)), horizon=horizon)
    if profile == "hard_brake":
        kw.update(event_time=float(r.uniform(*ranges.brake_time)),
                  decel=float(r.uniform(*ranges.brake_decel)))
    elif profile == "stop_and_go":
        kw.update(event_time=float(r.uniform(*ranges.sag_time)), decel=float(r.uniform(*ranges.sag_decel)),
                  low_speed=float(r.uniform(*ranges.sag_low_speed)))
    return DriveScenario(scenario_id, int(seed), profile, **kw)


def generate_drive_scenarios(n: int, mix: dict | None = None, rng: np.random.Generator | None = None,
                             horizon: int = 150, start_id: int = 0,
                             ranges: ScenarioRanges = RANGES) -> list[DriveScenario]:
    """``n`` seeded scenarios whose profile counts follow ``mix`` to within one."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    mix = DEFAULT_MIX if mix is None else mix
    rng = np.random.default_rng(0) if rng is None else rng
    counts = apportion(n, mix)
    profiles = np.array([k for k, c in counts.items() for _ in range(c)])
    profiles = profiles[rng.permutation(n)]
    seeds = rng.integers(0, 2**31 - 1, size=n)
    return [make_scenario(start_id + i, int(s), str(p), horizon, ranges)
            for i, (s, p) in enumerate(zip(seeds, profiles))]


def save_manifest(scenarios, path) -> None:
    with open(path, "w") as fh:
        json.dump({"schema_version": 1, "scenarios": [asdict(s) for s in scenarios]}, fh, indent=1)


def load_manifest(path) -> list[DriveScenario]:
    with open(path) as fh:
        data = json.load(fh)
    return [DriveScenario(**d) for d in data["scenarios"]]


# -------------------------------------------------------------- evaluation

@dataclass
class EpisodeResult:
    scenario_id: int
    profile: str
    collided: bool
    steps: int
    reward: float


def run_policy(policy, scenarios, params: DriveParams = DEFAULT) -> list[EpisodeResult]:
    """Roll out ``policy(obs_batch) -> action indices`` on every scenario."""
    env = DriveBatch(scenarios, params)
    obs = env.reset()
    while not env.done.all():
        obs, *_ = env.step(policy(obs))
    return [EpisodeResult(s.scenario_id, s.profile, bool(c), int(n), float(r))
            for s, c, n, r in zip(env.scenarios, env.collided, env.steps, env.total)]


def no_collision_rate(results) -> float:
    results = list(results)
    if not results:
        raise InvalidParameterError("no results")
    return float(np.mean([not r.collided for r in results]))


def save_results(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in results:
            w.writerow((r.scenario_id, r.profile, int(r.collided), r.steps, repr(r.reward)))


def braking_policy(obs, params: DriveParams = DEFAULT, reaction: float = 0.6,
                   margin: float = 4.0) -> np.ndarray:
    """Scripted reference: brake when the front gap is short of a stopping-distance bound.

    The bound is the gap needed to stop behind a leader braking at 4 m/s^2,
    given the current closing speed and a short reaction time.  Braking is
    graded (-2 before -4) so the follower is not provoked needlessly.
    """
    obs = np.atleast_2d(obs)
    v = obs[:, 0] * params.v_max
    gap = obs[:, 1] * 100.0
    closing = obs[:, 2] * 10.0
    v_lead = np.maximum(v - closing, 0.0)
    need = margin + v * reaction + np.maximum(v**2 - v_lead**2, 0.0) / (2 * 4.0)
    soft = margin + v * (reaction + 0.8) + np.maximum(v**2 - v_lead**2, 0.0) / (2 * 2.0)
    act = np.full(len(obs), 2)                        # hold speed
    act[(closing < -0.5) & (gap > 2 * v)] = 3         # gently close a large gap
    act[gap < soft] = 1
    act[gap < need] = 0
    return act
