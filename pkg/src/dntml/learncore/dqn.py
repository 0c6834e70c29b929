"""Replay buffer, epsilon schedule and the DQN update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import InvalidParameterError
from .nn import MLP, greedy
from .optim import SGD, make_optimizer


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.05
    decay_steps: int = 20_000

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise InvalidParameterError("need 0 <= eps_end <= eps_start <= 1")


def epsilon_at(schedule: EpsilonSchedule, step: int) -> float:
    """Linear decay from ``eps_start`` to ``eps_end``, flat afterwards."""
    if schedule.decay_steps <= 0 or step >= schedule.decay_steps:
        return schedule.eps_end
    frac = min(max(step, 0) / schedule.decay_steps, 1.0)
    return schedule.eps_start + frac * (schedule.eps_end - schedule.eps_start)


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s2: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer stored as parallel arrays."""

    def __init__(self, capacity: int, obs_dim: int, dtype=np.float32):
        if capacity < 1:
            raise InvalidParameterError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.s = np.zeros((capacity, obs_dim), dtype=dtype)
        self.s2 = np.zeros((capacity, obs_dim), dtype=dtype)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=dtype)
        self.done = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r, s2, done) -> None:
        if len(s) != self.obs_dim or len(s2) != self.obs_dim:
            raise InvalidParameterError("transition dims do not match the buffer")
        i = self.cursor
        self.s[i] = s
        self.s2[i] = s2
        self.a[i] = a
        self.r[i] = r
        self.done[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_batch(self, s, a, r, s2, done) -> None:
        for row in zip(s, a, r, s2, done):
            self.add(*row)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < batch_size:
            raise InvalidParameterError(
                f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


def bellman_targets(r, q_next_max, done, gamma: float):
    """``r + gamma * max_a' Q_target(s', a')``, or just ``r`` on terminal steps."""
    return r + gamma * q_next_max * (1.0 - np.asarray(done, dtype=np.float64))


def dqn_train_step(net: MLP, online, target, buffer: ReplayBuffer, gamma: float,
                   optimizer, batch_size: int, rng: np.random.Generator):
    """One gradient step on the squared TD error of a replay minibatch.

    ``optimizer`` may be a learning rate (plain SGD) or any object with a
    ``step(params, grad)`` method.  ``target`` is never modified.
    """
    if not hasattr(optimizer, "step"):
        optimizer = SGD(float(optimizer))
    s, a, r, s2, done = buffer.sample(batch_size, rng)
    q_next = net.forward(target, s2).max(axis=1)
    y = bellman_targets(r, q_next, done, gamma).astype(net.dtype)
    q, acts = net.forward(online, s, keep=True)
    rows = np.arange(batch_size)
    td = q[rows, a] - y
    loss = float(np.mean(td.astype(np.float64) ** 2))
    g = np.zeros_like(q)
    g[rows, a] = (2.0 / batch_size) * td
    grad = net.backward(online, acts, g)
    return optimizer.step(online, grad), loss


def sync_target(online, target=None):
    """Hard copy of the online parameters into a fresh target vector."""
    online = np.asarray(online)
    if target is not None and np.shape(target) != online.shape:
        raise InvalidParameterError("online/target parameter layouts differ")
    return online.copy()


@dataclass
class DQNConfig:
    hidden: tuple = (64, 64)
    gamma: float = 0.95
    lr: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 64
    buffer_size: int = 50_000
    target_sync_every: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000
    train_every: int = 1
    learn_start: int = 1_000


class DQNAgent:
    """Epsilon-greedy DQN with a replay buffer and a hard-synced target net."""

    def __init__(self, obs_dim: int, n_actions: int, config: DQNConfig,
                 rng: np.random.Generator, params=None):
        self.config = config
        self.net = MLP((obs_dim, *config.hidden, n_actions))
        self.n_actions = n_actions
        self.rng = rng
        self.online = self.net.init(rng) if params is None else np.array(params, dtype=np.float32)
        self.target = sync_target(self.online)
        self.opt = make_optimizer(config.optimizer, config.lr)
        self.buffer = ReplayBuffer(config.buffer_size, obs_dim)
        self.schedule = EpsilonSchedule(config.eps_start, config.eps_end, config.eps_decay_steps)
        self.steps = 0
        self.updates = 0
        self.last_loss = float("nan")

    def load(self, params) -> None:
        """Replace the online (and target) parameters, e.g. after aggregation."""
        self.online = np.array(params, dtype=np.float32)
        self.target = sync_target(self.online)
        self.opt.reset()

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.schedule, self.steps)

    def q_values(self, obs):
        return self.net.forward(self.online, obs)

    def act(self, obs, explore: bool = True) -> int:
        if explore and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return int(greedy(self.q_values(obs)))

    def act_batch(self, obs, explore: bool = True) -> np.ndarray:
        acts = greedy(self.q_values(obs))
        if explore:
            n = len(acts)
            coin = self.rng.random(n) < self.epsilon
            acts = np.where(coin, self.rng.integers(self.n_actions, size=n), acts)
        return acts

    def observe(self, s, a, r, s2, done) -> None:
        self.buffer.add(s, a, r, s2, done)
        self.steps += 1
        self._maybe_train()

    def observe_batch(self, s, a, r, s2, done) -> None:
        for row in zip(s, a, r, s2, done):
            self.buffer.add(*row)
            self.steps += 1
            self._maybe_train()

    def _maybe_train(self):
        c = self.config
        if len(self.buffer) < max(c.batch_size, c.learn_start):
            return
        if self.steps % c.train_every:
            return
        self.online, self.last_loss = dqn_train_step(
            self.net, self.online, self.target, self.buffer, c.gamma, self.opt, c.batch_size, self.rng)
        self.updates += 1
        if self.updates % c.target_sync_every == 0:
            self.target = sync_target(self.online, self.target)
