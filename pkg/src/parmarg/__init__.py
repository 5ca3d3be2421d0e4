"""Parallel marginalization Monte Carlo for conditioned paths of scalar SDEs."""
from .density import (
    DriftModel,
    ObservationModel,
    ProblemKind,
    ProblemSpec,
    brownian,
    double_well,
    lie_step,
    log_level_density,
    ornstein_uhlenbeck,
    double_well_bridge,
    double_well_smoothing,
    v_potential,
)
from .hierarchy import HierarchyState, LevelPath, init_hierarchy, merge_level, split_level
from .rng import Role, StreamBank

__version__ = "0.1.0"
