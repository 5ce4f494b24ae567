"""Actor-critic with experience replay and autocorrelated exploration noise."""

__version__ = "0.1.0"

from .ar_process import ArNoise, simulate
from .kron_gauss import (
    CovKernel,
    KroneckerGaussian,
    build_conditional,
    build_stationary,
    conditional_mean_operator,
    diagonal_kernel,
)
from .nets import AdamState, Mlp, adam_step, load_params, save_params
from .policy import PolicyOutput, SequencePolicy, SequenceWindow
from .replay import BufferNotReady, ReplayBuffer, ReplayRecord
from .trainer import (
    AlgoConfig,
    Trainer,
    UpdateDiagnostics,
    actor_direction,
    critic_direction,
    density_ratio,
    soft_truncate,
    temporal_difference,
)

__all__ = [
    "AdamState", "AlgoConfig", "ArNoise", "BufferNotReady", "CovKernel",
    "KroneckerGaussian", "Mlp", "PolicyOutput", "ReplayBuffer", "ReplayRecord",
    "SequencePolicy", "SequenceWindow", "Trainer", "UpdateDiagnostics",
    "actor_direction", "adam_step", "build_conditional", "build_stationary",
    "conditional_mean_operator", "critic_direction", "density_ratio",
    "diagonal_kernel", "load_params", "save_params", "simulate",
    "soft_truncate", "temporal_difference",
]
