"""Expressive inverse kinematics for serial revolute chains.

The solver orients the tip of an arbitrary chain of 1-DoF revolute joints
toward a target orientation while disturbing a given expressive posture as
little as possible, always respecting joint limits.  The package also
ships the CCD/BWCD sub-solvers, a Jacobian baseline family, a per-joint
motion filter and a brute-force evaluation harness.
"""

from .catalog import CATALOG, SKELETON_NAMES, build_skeleton, skeleton_c_dh_chain
from .ccd import CcdConfig, bw_twist, bwcd_posture, bwcd_solution, ccd, ccd_test
from .errors import ErrorWeights, combined_error, orientation_error, posture_error
from .motion_filter import FilterParams, FilterState, filter_chain_step, filter_step
from .skeleton import (
    Lalut,
    Link,
    Posture,
    Skeleton,
    Solution,
    apply_fk,
    avoid_joint_edges,
    build_lalut,
    empty_solution,
    latitude,
    local_swing,
    pose_from_thetas,
    query_lalut,
    safe_angle,
    safe_twist,
    solution_from_thetas,
)
from .solver import (
    ErikHyperparams,
    ErikParams,
    ErikResult,
    calculate_erik,
    solve,
)

__all__ = [
    "CATALOG",
    "SKELETON_NAMES",
    "CcdConfig",
    "ErikHyperparams",
    "ErikParams",
    "ErikResult",
    "ErrorWeights",
    "FilterParams",
    "FilterState",
    "Lalut",
    "Link",
    "Posture",
    "Skeleton",
    "Solution",
    "apply_fk",
    "avoid_joint_edges",
    "build_lalut",
    "build_skeleton",
    "bw_twist",
    "bwcd_posture",
    "bwcd_solution",
    "calculate_erik",
    "ccd",
    "ccd_test",
    "combined_error",
    "empty_solution",
    "filter_chain_step",
    "filter_step",
    "latitude",
    "local_swing",
    "orientation_error",
    "pose_from_thetas",
    "posture_error",
    "query_lalut",
    "safe_angle",
    "safe_twist",
    "skeleton_c_dh_chain",
    "solution_from_thetas",
    "solve",
]

__version__ = "0.1.0"
