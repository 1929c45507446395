"""Candidate filtering, closed-loop style scoring, and mode diversity.

Scoring follows the predictive-driver-model recipe: hard safety gates for
collision (NC), drivable-area compliance (DAC) and time-to-collision (TTC),
multiplied by a weighted average of driving-direction compliance (fixed 1,
exempted), comfort, and ego progress:

    score = NC * DAC * TTC * (5*DDC + 2*Comfort + 5*EP) / 12

Diversity D of a candidate set is one minus the mean IoU between each
candidate's swept-footprint raster and the union of all rasters.  Since
each raster is a subset of the union, the IoU of candidate i reduces to
|R_i| / |union|.

The sweep raster is 0.2 m cells over a 64 m x 64 m window shifted forward
(x in [-4, 60], y in [-32, 32]) so that full-speed trajectories stay
inside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenesim import (
    EGO_HALF,
    EgoStatus,
    SceneSpec,
    expert_trajectory,
    points_in_drivable,
    project_to_polyline,
    rects_overlap_many,
)
from .trajspace import HORIZON, Trajectory, menger_curvature, motion_profile, polyline_arclength, segment_headings

ACCEL_MAX = 3.0  # m/s^2, comfort
JERK_MAX = 5.0  # m/s^3, comfort
YAW_RATE_MAX = 0.6  # rad/s, comfort
TTC_THRESHOLD = 0.95  # s
TTC_RESOLUTION = 0.1  # s

FILTER_STEP_MAX = 12.0  # m per 0.5 s step
FILTER_ACCEL_MAX = 8.0  # m/s^2
FILTER_CURVATURE_MAX = 0.3  # 1/m

MIN_EXPERT_PROGRESS = 0.5  # m; below this EP is not meaningfully defined


@dataclass(frozen=True)
class RasterConfig:
    resolution: float = 0.2
    x_min: float = -4.0
    y_min: float = -32.0
    size: float = 64.0

    @property
    def cells(self) -> int:
        return int(round(self.size / self.resolution))


@dataclass(frozen=True)
class SubScores:
    nc: int
    dac: int
    ep: float
    ttc: int
    comfort: int
    ddc: int = 1  # exempted, always full credit


def pdm_score(s: SubScores) -> float:
    """Composite score in [0, 1]."""
    return s.nc * s.dac * s.ttc * (5.0 * s.ddc + 2.0 * s.comfort + 5.0 * s.ep) / 12.0


# -- swept-footprint raster ------------------------------------------------


def _poses_along(traj: Trajectory, spacing: float = 0.15):
    """Interpolated (position, heading) samples dense enough for the sweep."""
    pts = traj.with_origin()
    headings = segment_headings(pts)
    poses_p = [pts[0]]
    poses_h = [headings[0]]
    for k in range(HORIZON):
        a, b = pts[k], pts[k + 1]
        seg = float(np.hypot(*(b - a)))
        n_sub = max(1, int(np.ceil(seg / spacing)))
        for j in range(1, n_sub + 1):
            poses_p.append(a + (b - a) * (j / n_sub))
            poses_h.append(headings[k])
    return np.array(poses_p), np.array(poses_h)


def swept_cells(traj: Trajectory, rc: RasterConfig = RasterConfig()) -> set:
    """Grid cells whose centers lie inside the swept ego footprint.

    Cells outside the raster window are dropped; the origin cell is always
    present because the sweep starts at the ego pose.  Vectorized over all
    interpolated poses at once: each pose tests a fixed local grid around
    its center.
    """
    res = rc.cells
    positions, headings = _poses_along(traj)
    half_diag = float(np.hypot(*EGO_HALF)) + rc.resolution
    span = int(np.ceil(2.0 * half_diag / rc.resolution)) + 1
    offsets = np.arange(span)

    ix0 = np.floor((positions[:, 0] - half_diag - rc.x_min) / rc.resolution).astype(int)
    iy0 = np.floor((positions[:, 1] - half_diag - rc.y_min) / rc.resolution).astype(int)
    ix = ix0[:, None] + offsets[None, :]  # (P, span)
    iy = iy0[:, None] + offsets[None, :]
    cx = rc.x_min + (ix + 0.5) * rc.resolution
    cy = rc.y_min + (iy + 0.5) * rc.resolution

    dx = cx[:, :, None] - positions[:, 0][:, None, None]
    dy = cy[:, None, :] - positions[:, 1][:, None, None]
    c = np.cos(headings)[:, None, None]
    s = np.sin(headings)[:, None, None]
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    inside = (np.abs(lx) <= EGO_HALF[0]) & (np.abs(ly) <= EGO_HALF[1])

    gx = np.broadcast_to(ix[:, :, None], inside.shape)[inside]
    gy = np.broadcast_to(iy[:, None, :], inside.shape)[inside]
    ok = (gx >= 0) & (gx < res) & (gy >= 0) & (gy < res)
    code = np.unique(gx[ok] * res + gy[ok])
    return set(zip((code // res).tolist(), (code % res).tolist()))


def cell_centers(cells, rc: RasterConfig = RasterConfig()) -> np.ndarray:
    arr = np.array(sorted(cells), dtype=np.float64)
    if len(arr) == 0:
        return arr.reshape(0, 2)
    return np.stack(
        [rc.x_min + (arr[:, 0] + 0.5) * rc.resolution, rc.y_min + (arr[:, 1] + 0.5) * rc.resolution], axis=1
    )


# -- sub-metrics -------------------------------------------------------------


def progress_along(traj: Trajectory, scene: SceneSpec) -> float:
    """Largest arc-length station reached by any waypoint projection."""
    stations = polyline_arclength(scene.centerline)
    best = 0.0
    for p in traj.points:
        s, _ = project_to_polyline(scene.centerline, stations, p)
        best = max(best, s)
    return best


def _interp_pose_chain(traj: Trajectory):
    """Poses, per-pose velocity vectors and times on the TTC grid."""
    pts = traj.with_origin()
    vel = np.diff(pts, axis=0) / traj.dt
    headings = segment_headings(pts)
    times = np.arange(0.0, HORIZON * traj.dt + 1e-9, TTC_RESOLUTION)
    seg = np.minimum((times / traj.dt).astype(int), HORIZON - 1)
    frac = times / traj.dt - seg
    pos = pts[seg] * (1 - frac)[:, None] + pts[seg + 1] * frac[:, None]
    return pos, vel[seg], headings[seg], times


def _ttc_ok(traj: Trajectory, scene: SceneSpec) -> bool:
    """Minimum forecast time-to-overlap must stay at or above the threshold.

    At each trajectory time the ego is projected straight ahead at its
    current velocity; obstacles follow their constant-velocity forecasts.
    Checked on a 0.1 s grid for look-aheads below the threshold.
    """
    if not scene.obstacles:
        return True
    pos, vel, headings, times = _interp_pose_chain(traj)
    deltas = np.arange(TTC_RESOLUTION, TTC_THRESHOLD, TTC_RESOLUTION)
    obs_centers = np.array([o.center for o in scene.obstacles])
    obs_vel = np.array([o.velocity for o in scene.obstacles])
    obs_head = np.array([o.heading for o in scene.obstacles])
    obs_ext = np.array([o.half_extent for o in scene.obstacles])

    # flatten every (trajectory time, look-ahead, obstacle) combination into
    # one vectorized overlap query
    k, d, o = len(times), len(deltas), len(scene.obstacles)
    ego_c = pos[:, None, :] + deltas[None, :, None] * vel[:, None, :]  # (k, d, 2)
    ego_c = np.broadcast_to(ego_c[:, :, None, :], (k, d, o, 2)).reshape(-1, 2)
    ego_h = np.broadcast_to(headings[:, None, None], (k, d, o)).reshape(-1)
    t_abs = (times[:, None] + deltas[None, :])[:, :, None]  # (k, d, 1)
    oc = obs_centers[None, None] + obs_vel[None, None] * t_abs[..., None]
    oc = oc.reshape(-1, 2)
    oh = np.broadcast_to(obs_head[None, None], (k, d, o)).reshape(-1)
    oe = np.broadcast_to(obs_ext[None, None], (k, d, o, 2)).reshape(-1, 2)
    ee = np.broadcast_to(EGO_HALF, (k * d * o, 2))
    return not rects_overlap_many(ego_c, ego_h, ee, oc, oh, oe).any()


def _nc_ok(traj: Trajectory, scene: SceneSpec) -> bool:
    from .scenesim import collision_at

    pts = traj.with_origin()
    headings = segment_headings(pts)
    for k in range(1, HORIZON + 1):
        pose = (pts[k, 0], pts[k, 1], headings[k - 1])
        if collision_at(scene, pose, k * traj.dt):
            return False
    return True


def _comfort_ok(traj: Trajectory, ego: EgoStatus) -> bool:
    prof = motion_profile(traj, ego.velocity)
    if np.hypot(*prof.accelerations.T).max() > ACCEL_MAX:
        return False
    if len(prof.jerks) and np.hypot(*prof.jerks.T).max() > JERK_MAX:
        return False
    if np.abs(prof.yaw_rates).max() > YAW_RATE_MAX:
        return False
    return True


def sub_scores(traj: Trajectory, scene: SceneSpec, ego: EgoStatus,
               expert_progress: float | None = None, cells: set | None = None,
               rc: RasterConfig = RasterConfig()) -> SubScores:
    """All sub-metrics of one trajectory on one scene.

    ``expert_progress`` is the progress of the episode's expert label; when
    omitted the expert is recomputed from the scene.  ``cells`` may carry a
    precomputed swept raster to avoid sweeping twice.
    """
    nc = int(_nc_ok(traj, scene))
    if cells is None:
        cells = swept_cells(traj, rc)
    centers = cell_centers(cells, rc)
    dac = int(bool(points_in_drivable(scene, centers).all())) if len(centers) else 0
    ttc = int(_ttc_ok(traj, scene))
    comfort = int(_comfort_ok(traj, ego))
    if expert_progress is None:
        expert_progress = progress_along(expert_trajectory(scene, ego), scene)
    if expert_progress <= MIN_EXPERT_PROGRESS:
        ep = 1.0
    else:
        ep = float(np.clip(progress_along(traj, scene) / expert_progress, 0.0, 1.0))
    return SubScores(nc, dac, ep, ttc, comfort)


# -- rejection filtering and selection ---------------------------------------


def _violation(traj: Trajectory, ego: EgoStatus, rc: RasterConfig) -> float:
    """Total normalized excess over the kinematic feasibility bounds; 0 = feasible."""
    pts = traj.with_origin()
    steps = np.hypot(*np.diff(pts, axis=0).T)
    v = float(np.maximum(steps - FILTER_STEP_MAX, 0.0).sum() / FILTER_STEP_MAX)
    prof = motion_profile(traj, ego.velocity)
    acc = np.hypot(*prof.accelerations.T)
    v += float(np.maximum(acc - FILTER_ACCEL_MAX, 0.0).sum() / FILTER_ACCEL_MAX)
    curv = menger_curvature(pts)
    v += float(np.maximum(curv - FILTER_CURVATURE_MAX, 0.0).sum() / FILTER_CURVATURE_MAX)
    x_hi = rc.x_min + rc.size
    y_hi = rc.y_min + rc.size
    outside = (
        np.maximum(rc.x_min - pts[:, 0], 0.0)
        + np.maximum(pts[:, 0] - x_hi, 0.0)
        + np.maximum(rc.y_min - pts[:, 1], 0.0)
        + np.maximum(pts[:, 1] - y_hi, 0.0)
    )
    v += float(outside.sum() / 10.0)
    return v


def rejection_filter(cands, scene: SceneSpec, ego: EgoStatus, rc: RasterConfig = RasterConfig()):
    """Drop dynamically infeasible candidates; never returns an empty list.

    If every candidate violates the bounds, the single least-violating one
    survives.
    """
    if not cands:
        raise ValueError("need at least one candidate")
    violations = [_violation(t, ego, rc) for t in cands]
    survivors = [t for t, v in zip(cands, violations) if v == 0.0]
    if survivors:
        return survivors
    return [cands[int(np.argmin(violations))]]


def select_top1(survivors, scene: SceneSpec, ego: EgoStatus,
                expert_progress: float | None = None, scores=None,
                rc: RasterConfig = RasterConfig()) -> Trajectory:
    """Highest-scoring survivor; ties break on EP, then on candidate order."""
    if not survivors:
        raise ValueError("need at least one survivor")
    if scores is None:
        scores = [sub_scores(t, scene, ego, expert_progress, rc=rc) for t in survivors]
    best = max(range(len(survivors)), key=lambda i: (pdm_score(scores[i]), scores[i].ep, -i))
    return survivors[best]


# -- diversity ----------------------------------------------------------------


def diversity_from_cells(cell_sets) -> float:
    """1 - mean(|R_i| / |union of all R_j|) over the candidate rasters."""
    cell_sets = list(cell_sets)
    if not cell_sets:
        raise ValueError("need at least one raster")
    union: set = set()
    for s in cell_sets:
        union |= s
    if not union:
        return 0.0
    return 1.0 - float(np.mean([len(s) / len(union) for s in cell_sets]))


def diversity(cands, rc: RasterConfig = RasterConfig()) -> float:
    """Mode-diversity score of a candidate set, in [0, 1)."""
    return diversity_from_cells([swept_cells(t, rc) for t in cands])


# -- per-sample orchestration --------------------------------------------------


def evaluate_candidates(rec, cands, rc: RasterConfig = RasterConfig(), post_filter_diversity: bool = False) -> dict:
    """Filter, score and select among candidates for one episode.

    Diversity is computed over all candidates by default (pre-filter); the
    post-filter variant restricts it to the survivors.
    """
    scene, ego = rec.scene, rec.ego
    expert_progress = progress_along(rec.expert, scene)
    all_cells = [swept_cells(t, rc) for t in cands]

    violations = [_violation(t, ego, rc) for t in cands]
    idx = [i for i, v in enumerate(violations) if v == 0.0]
    if not idx:
        idx = [int(np.argmin(violations))]
    scores = [sub_scores(cands[i], scene, ego, expert_progress, cells=all_cells[i], rc=rc) for i in idx]
    best_pos = max(range(len(idx)), key=lambda j: (pdm_score(scores[j]), scores[j].ep, -j))
    best = scores[best_pos]

    d_cells = [all_cells[i] for i in idx] if post_filter_diversity else all_cells
    return {
        "nc": best.nc,
        "dac": best.dac,
        "ep": best.ep,
        "ttc": best.ttc,
        "comfort": best.comfort,
        "pdms": pdm_score(best),
        "diversity": diversity_from_cells(d_cells),
        "n_surviving": len(idx),
        "selected": idx[best_pos],
    }
