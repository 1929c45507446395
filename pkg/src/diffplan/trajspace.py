"""Waypoint and action-space views of a planned trajectory.

A trajectory is 8 future waypoints sampled every 0.5 s (a 4 s horizon),
expressed in the ego frame at t=0.  Its action view stores per-step
displacements: the first action equals the first waypoint, every later
action is the difference to the previous waypoint.  The mapping is
reversible, so models can operate on whichever view is better conditioned.

The module also derives simple finite-difference kinematics (speeds,
accelerations, jerks, yaw rates) that both the scene generator and the
metric suite use to judge dynamic feasibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

HORIZON = 8
DT = 0.5
COORD_BOUND = 200.0

# below this segment speed the travel heading is treated as undefined
SPEED_EPS = 0.3


class Waypoint(NamedTuple):
    x: float
    y: float


def _validated_points(values, length: int, bound: float | None = None) -> np.ndarray:
    pts = np.array(values, dtype=np.float64)
    if pts.shape != (length, 2):
        raise ValueError(f"expected shape ({length}, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("coordinates must be finite")
    if bound is not None and np.any(np.abs(pts) > bound):
        raise ValueError(f"coordinates exceed |{bound}| m sanity bound")
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True, eq=False)
class Trajectory:
    """8 future waypoints, ego frame, ``dt`` seconds apart (4 s total)."""

    points: np.ndarray
    dt: float = DT

    def __post_init__(self):
        object.__setattr__(self, "points", _validated_points(self.points, HORIZON, COORD_BOUND))
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def waypoint(self, i: int) -> Waypoint:
        return Waypoint(float(self.points[i, 0]), float(self.points[i, 1]))

    def with_origin(self) -> np.ndarray:
        """Waypoints prepended with the ego position at t=0 (the origin)."""
        return np.vstack([np.zeros((1, 2)), self.points])


@dataclass(frozen=True, eq=False)
class ActionSequence:
    """8 per-step displacement vectors (meters per 0.5 s step)."""

    deltas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "deltas", _validated_points(self.deltas, HORIZON))


def to_actions(traj: Trajectory) -> ActionSequence:
    """Project waypoints to the displacement (action) view.

    The first action is the first waypoint itself; later actions are first
    differences of consecutive waypoints.
    """
    pts = traj.points
    deltas = np.empty_like(pts)
    deltas[0] = pts[0]
    deltas[1:] = np.diff(pts, axis=0)
    return ActionSequence(deltas)


def to_trajectory(actions: ActionSequence, dt: float = DT) -> Trajectory:
    """Accumulate displacements back into waypoints; inverse of to_actions."""
    return Trajectory(np.cumsum(actions.deltas, axis=0), dt)


@dataclass(frozen=True)
class MotionProfile:
    """Finite-difference kinematics of a trajectory, origin included.

    ``velocities`` are the 8 per-segment velocity vectors; ``accelerations``
    (8 rows) difference those against an initial velocity of
    ``initial_speed`` along +x; ``jerks`` (7 rows) difference the
    accelerations; ``yaw_rates`` (8 values) difference segment headings,
    gated to zero wherever either segment is slower than SPEED_EPS.
    """

    velocities: np.ndarray
    speeds: np.ndarray
    accelerations: np.ndarray
    jerks: np.ndarray
    yaw_rates: np.ndarray


def segment_headings(points: np.ndarray, fallback: float = 0.0) -> np.ndarray:
    """Heading of each polyline segment; slow segments inherit the previous one."""
    diffs = np.diff(points, axis=0)
    norms = np.hypot(diffs[:, 0], diffs[:, 1])
    headings = np.empty(len(diffs))
    prev = fallback
    for i, (d, n) in enumerate(zip(diffs, norms)):
        if n > 1e-9:
            prev = float(np.arctan2(d[1], d[0]))
        headings[i] = prev
    return headings


def wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def motion_profile(traj: Trajectory, initial_speed: float = 0.0) -> MotionProfile:
    pts = traj.with_origin()
    dt = traj.dt
    vel = np.diff(pts, axis=0) / dt
    speeds = np.hypot(vel[:, 0], vel[:, 1])

    vel_chain = np.vstack([[max(0.0, initial_speed), 0.0], vel])
    acc = np.diff(vel_chain, axis=0) / dt
    jerk = np.diff(acc, axis=0) / dt

    headings = segment_headings(pts)
    head_chain = np.concatenate([[0.0], headings])
    speed_chain = np.concatenate([[max(0.0, initial_speed)], speeds])
    dpsi = wrap_angle(np.diff(head_chain)) / dt
    moving = (speed_chain[:-1] > SPEED_EPS) & (speed_chain[1:] > SPEED_EPS)
    yaw_rates = np.where(moving, dpsi, 0.0)

    return MotionProfile(vel, speeds, acc, jerk, yaw_rates)


def menger_curvature(points: np.ndarray, min_segment: float = 0.05) -> np.ndarray:
    """Discrete curvature at interior points via the circumscribed circle.

    Triplets containing a segment shorter than ``min_segment`` give 0: the
    heading there is ill-defined and near-stationary wiggle should not
    register as extreme curvature.
    """
    a, b, c = points[:-2], points[1:-1], points[2:]
    ab, bc, ca = b - a, c - b, a - c
    lab = np.hypot(ab[:, 0], ab[:, 1])
    lbc = np.hypot(bc[:, 0], bc[:, 1])
    lca = np.hypot(ca[:, 0], ca[:, 1])
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    denom = lab * lbc * lca
    ok = (lab > min_segment) & (lbc > min_segment) & (denom > 1e-12)
    return np.where(ok, 2.0 * np.abs(cross) / np.maximum(denom, 1e-12), 0.0)


def polyline_arclength(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length along a polyline, starting at 0."""
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])
