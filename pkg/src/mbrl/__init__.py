"""Maximum-likelihood model-based RL over tabular MDPs with finite model classes."""
from mbrl.errors import ConfigError, DimensionError, InvariantError
from mbrl.mdp import (
    OccupancyMeasure,
    Policy,
    TabularMdp,
    Trajectory,
    TransitionModel,
    ValueTables,
    max_trajectory_reward,
    occupancy,
    optimal_planning,
    policy_evaluation,
    return_variance,
    sample_trajectory,
)
from mbrl.estimation import (
    IMPOSSIBLE,
    ModelClass,
    TransitionDataset,
    VersionSpace,
    beta_threshold,
    build_version_space,
    log_likelihood,
    mle,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DimensionError", "InvariantError",
    "OccupancyMeasure", "Policy", "TabularMdp", "Trajectory", "TransitionModel", "ValueTables",
    "max_trajectory_reward", "occupancy", "optimal_planning", "policy_evaluation", "return_variance",
    "sample_trajectory",
    "IMPOSSIBLE", "ModelClass", "TransitionDataset", "VersionSpace", "beta_threshold",
    "build_version_space", "log_likelihood", "mle",
]
