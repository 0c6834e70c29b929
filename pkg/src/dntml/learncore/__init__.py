"""Small numpy neural-network and DQN toolkit shared by the pipelines."""

from .dqn import (
    DQNAgent,
    DQNConfig,
    EpsilonSchedule,
    ReplayBuffer,
    Transition,
    bellman_targets,
    dqn_train_step,
    epsilon_at,
    sync_target,
)
from .gru import GRUNet, softmax
from .nn import MLP, backward, forward_mlp, greedy, mse_loss_grad
from .optim import SGD, Adam, make_optimizer
from .params import ParamVector, load_params, save_params

__all__ = [
    "Adam", "DQNAgent", "DQNConfig", "EpsilonSchedule", "GRUNet", "MLP", "ParamVector",
    "ReplayBuffer", "SGD", "Transition", "backward", "bellman_targets", "dqn_train_step",
    "epsilon_at", "forward_mlp", "greedy", "load_params", "make_optimizer", "mse_loss_grad",
    "save_params", "softmax", "sync_target",
]
