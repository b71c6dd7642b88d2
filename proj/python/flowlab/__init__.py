"""GFlowNet training and verification on enumerable DAG environments."""

from ._core import (
    BudgetExceeded,
    ConfigError,
    count_through,
    count_trajectories,
    maxent_flow_ratio,
    target,
    theory,
    train,
)

__all__ = [
    "BudgetExceeded",
    "ConfigError",
    "count_through",
    "count_trajectories",
    "maxent_flow_ratio",
    "target",
    "theory",
    "train",
]
