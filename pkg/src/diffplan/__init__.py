"""Desk-scale diffusion trajectory planner with batch representation decorrelation.

The package trains a small conditional denoising network on synthetic driving
episodes, samples multi-mode candidate trajectories, filters and scores them
with closed-loop style driving metrics, and quantifies how diverse the
candidate set is.
"""

from .trajspace import ActionSequence, Trajectory, Waypoint, to_actions, to_trajectory

__version__ = "0.1.0"

__all__ = [
    "ActionSequence",
    "Trajectory",
    "Waypoint",
    "to_actions",
    "to_trajectory",
]
