"""Deterministic synthetic driving scenes at desk scale.

Each episode is a drivable corridor around a centerline polyline, a handful
of forecast obstacles, the current ego status, a short driving history, and
an expert future trajectory produced by a pure-pursuit tracker with a
comfort-limited speed profile.  Scenes come in four kinds: straight, curve,
lane change, and intersection.

Everything is a pure function of (seed, kind): regenerating with the same
arguments yields byte-identical episodes.  Expert labels are validated at
generation time so that downstream metrics score them perfectly.

Dataset files are JSON Lines: one self-describing record per line with the
fields of :class:`EpisodeRecord` (documented in the README).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .trajspace import DT, HORIZON, Trajectory, Waypoint, motion_profile

KINDS = ("straight", "curve", "lane_change", "intersection")
COMMANDS = ("follow", "left", "right")

EGO_LENGTH = 4.0
EGO_WIDTH = 1.8
EGO_HALF = np.array([EGO_LENGTH / 2.0, EGO_WIDTH / 2.0])

HISTORY_LEN = 4

# expert comfort envelope, kept inside the scoring bounds (3.0 / 5.0 / 0.6)
_A_LON = 2.1
_A_LAT = 2.1
_JERK = 3.5
_YAW_RATE = 0.48
_STOP_BACK = EGO_LENGTH / 2.0 + 1.2


class InfeasibleScene(RuntimeError):
    """No collision-free expert trajectory exists for this scene."""


@dataclass(frozen=True, eq=False)
class Obstacle:
    """Oriented box with a constant-velocity forecast."""

    center: np.ndarray
    heading: float
    half_extent: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extent", np.asarray(self.half_extent, dtype=np.float64))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64))
        if not np.all(self.half_extent > 0):
            raise ValueError("obstacle extents must be positive")
        if np.hypot(*self.velocity) > 20.0:
            raise ValueError("obstacle speed exceeds 20 m/s")

    def center_at(self, t: float) -> np.ndarray:
        return self.center + self.velocity * t


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Drivable corridor with obstacles plus the resident driving style.

    ``style_offset`` (lateral meters) and ``style_speed`` (target-speed
    fraction) parameterize which line and pace the expert adopts; they
    default to the centered full-speed style so hand-built scenes behave
    classically.  Generated scenes draw them from the seed, and they are
    deliberately invisible to the perception raster, which makes the
    conditional expert distribution multi-modal.
    """

    seed: int
    kind: str
    centerline: np.ndarray
    corridor_half_width: float
    speed_limit: float
    obstacles: tuple
    style_offset: float = 0.0
    style_speed: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=np.float64)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if pts.ndim != 2 or pts.shape[0] < 16 or pts.shape[1] != 2:
            raise ValueError("centerline must be a polyline of at least 16 points")
        if np.hypot(*pts[0]) > 1e-9:
            raise ValueError("centerline must start at the origin")
        first = pts[1] - pts[0]
        if first[0] <= 0 or abs(np.arctan2(first[1], first[0])) > 0.05:
            raise ValueError("initial tangent must point along +x")
        if not 2.0 <= self.corridor_half_width <= 6.0:
            raise ValueError("corridor half width outside [2, 6] m")
        if self.corridor_half_width < EGO_WIDTH / 2.0 + 0.2:
            raise ValueError("corridor narrower than the ego footprint")
        if not 5.0 <= self.speed_limit <= 15.0:
            raise ValueError("speed limit outside [5, 15] m/s")
        if len(self.obstacles) > 8:
            raise ValueError("at most 8 obstacles per scene")
        if abs(self.style_offset) > max(0.0, self.corridor_half_width - 1.9):
            raise ValueError("style offset leaves too little corridor clearance")
        if not 0.5 <= self.style_speed <= 1.0:
            raise ValueError("style speed outside [0.5, 1]")


@dataclass(frozen=True, eq=False)
class EgoStatus:
    velocity: float
    acceleration: float
    command: str

    def __post_init__(self):
        if not 0.0 <= self.velocity <= 20.0:
            raise ValueError("ego velocity outside [0, 20] m/s")
        if abs(self.acceleration) > 5.0:
            raise ValueError("|ego acceleration| exceeds 5 m/s^2")
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    scene: SceneSpec
    ego: EgoStatus
    history: np.ndarray
    expert: Trajectory

    def __post_init__(self):
        hist = np.asarray(self.history, dtype=np.float64)
        if hist.shape != (HISTORY_LEN, 2):
            raise ValueError(f"history must be {HISTORY_LEN} waypoints")
        object.__setattr__(self, "history", hist)


# -- oriented-rectangle geometry ----------------------------------------


def rect_corners(center, heading, half_extent) -> np.ndarray:
    c, s = np.cos(heading), np.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    ex, ey = half_extent
    local = np.array([[ex, ey], [ex, -ey], [-ex, -ey], [-ex, ey]])
    return np.asarray(center) + local @ rot.T


def rects_overlap(c1, h1, e1, c2, h2, e2) -> bool:
    """Separating-axis test for two oriented rectangles (touching counts)."""
    corners1 = rect_corners(c1, h1, e1)
    corners2 = rect_corners(c2, h2, e2)
    for h in (h1, h2):
        c, s = np.cos(h), np.sin(h)
        for axis in ((c, s), (-s, c)):
            p1 = corners1 @ axis
            p2 = corners2 @ axis
            if p1.max() < p2.min() or p2.max() < p1.min():
                return False
    return True


def rects_overlap_many(c1, h1, e1, c2, h2, e2) -> np.ndarray:
    """Vectorized SAT over M rectangle pairs; arrays shaped (M,2)/(M,)/(M,2)."""
    c1, c2 = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    h1 = np.broadcast_to(np.asarray(h1, dtype=float), c1.shape[:1])
    h2 = np.broadcast_to(np.asarray(h2, dtype=float), c2.shape[:1])
    e1 = np.broadcast_to(np.asarray(e1, dtype=float), c1.shape)
    e2 = np.broadcast_to(np.asarray(e2, dtype=float), c2.shape)

    def corners(c, h, e):
        cos, sin = np.cos(h), np.sin(h)
        ux = np.stack([cos, sin], axis=-1)
        uy = np.stack([-sin, cos], axis=-1)
        ex = e[:, :1] * ux
        ey = e[:, 1:] * uy
        return np.stack([c + ex + ey, c + ex - ey, c - ex - ey, c - ex + ey], axis=1)

    k1 = corners(c1, h1, e1)
    k2 = corners(c2, h2, e2)
    overlap = np.ones(len(c1), dtype=bool)
    for h in (h1, h2):
        cos, sin = np.cos(h), np.sin(h)
        for ax, ay in ((cos, sin), (-sin, cos)):
            axis = np.stack([ax, ay], axis=-1)[:, None, :]
            p1 = (k1 * axis).sum(-1)
            p2 = (k2 * axis).sum(-1)
            sep = (p1.max(1) < p2.min(1)) | (p2.max(1) < p1.min(1))
            overlap &= ~sep
    return overlap


def points_in_rect(points, center, heading, half_extent) -> np.ndarray:
    d = np.asarray(points, dtype=float) - np.asarray(center)
    c, s = np.cos(heading), np.sin(heading)
    lx = d[..., 0] * c + d[..., 1] * s
    ly = -d[..., 0] * s + d[..., 1] * c
    return (np.abs(lx) <= half_extent[0]) & (np.abs(ly) <= half_extent[1])


# -- centerline geometry -------------------------------------------------


def distance_to_polyline(points, polyline) -> np.ndarray:
    """Distance from each query point to the nearest polyline segment."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = polyline[:-1]
    d = polyline[1:] - a
    seg_len2 = np.maximum((d * d).sum(axis=1), 1e-12)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel * d[None, :, :]).sum(-1) / seg_len2[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.hypot(*(pts[:, None, :] - proj).transpose(2, 0, 1))
    return dist.min(axis=1)


def project_to_polyline(polyline, stations, point):
    """(arc-length station, lateral distance) of the projection of a point."""
    p = np.asarray(point, dtype=float)
    a = polyline[:-1]
    d = polyline[1:] - a
    seg_len2 = np.maximum((d * d).sum(axis=1), 1e-12)
    rel = p[None, :] - a
    t = np.clip((rel * d).sum(-1) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * d
    dist = np.hypot(*(p[None, :] - proj).T)
    i = int(np.argmin(dist))
    station = stations[i] + t[i] * np.sqrt(seg_len2[i])
    return float(station), float(dist[i])


def point_in_drivable(scene: SceneSpec, p) -> bool:
    """True iff the point lies within the corridor (boundary included)."""
    if isinstance(p, Waypoint):
        p = (p.x, p.y)
    dist = distance_to_polyline(np.asarray(p, dtype=float)[None, :], scene.centerline)[0]
    return bool(dist <= scene.corridor_half_width)


def points_in_drivable(scene: SceneSpec, points) -> np.ndarray:
    dist = distance_to_polyline(points, scene.centerline)
    return dist <= scene.corridor_half_width


def collision_at(scene: SceneSpec, footprint_pose, t: float) -> bool:
    """True iff the ego rectangle at the pose hits any obstacle advanced to time t."""
    x, y, heading = footprint_pose
    for obs in scene.obstacles:
        if rects_overlap((x, y), heading, EGO_HALF, obs.center_at(t), obs.heading, obs.half_extent):
            return True
    return False


# -- scene generation -----------------------------------------------------


def _rng_for(*key_parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key_parts)))


def _centerline(kind: str, rng: np.random.Generator) -> np.ndarray:
    """Fine centerline polyline (0.5 m spacing, ~96 m long), origin start, +x tangent."""
    ds = 0.5
    total = 96.0
    n = int(total / ds)

    if kind == "straight":
        headings = np.zeros(n)
    elif kind == "curve":
        lead = rng.uniform(10.0, 22.0)
        kappa = rng.uniform(0.05, 0.14) * (1 if rng.random() < 0.5 else -1)
        s = np.arange(n) * ds
        headings = np.where(s < lead, 0.0, (s - lead) * kappa)
    elif kind == "lane_change":
        shift = 3.5 * (1 if rng.random() < 0.5 else -1)
        x0 = rng.uniform(12.0, 20.0)
        ramp = rng.uniform(28.0, 40.0)
        s = np.arange(n + 1) * ds
        u = np.clip((s - x0) / ramp, 0.0, 1.0)
        y = shift * (6 * u**5 - 15 * u**4 + 10 * u**3)
        pts = np.stack([s, y], axis=1)
        return pts
    else:  # intersection
        lead = rng.uniform(14.0, 24.0)
        radius = rng.uniform(7.0, 12.0)
        sign = 1 if rng.random() < 0.5 else -1
        arc = 0.5 * np.pi * radius
        s = np.arange(n) * ds
        turn = np.clip((s - lead) / radius, 0.0, 0.5 * np.pi)
        headings = sign * turn

    pts = np.zeros((n + 1, 2))
    step = np.stack([np.cos(headings), np.sin(headings)], axis=1) * ds
    pts[1:] = np.cumsum(step, axis=0)
    return pts


def _path_frame(centerline: np.ndarray):
    """Stations, unit tangents and normals of a fine polyline."""
    d = np.diff(centerline, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    stations = np.concatenate([[0.0], np.cumsum(seg)])
    tan = d / np.maximum(seg, 1e-12)[:, None]
    tan = np.vstack([tan, tan[-1]])
    nrm = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
    return stations, tan, nrm


def _curvature_profile(centerline: np.ndarray, stations: np.ndarray) -> np.ndarray:
    tan = np.diff(centerline, axis=0)
    headings = np.arctan2(tan[:, 1], tan[:, 0])
    dh = np.diff(headings)
    dh = (dh + np.pi) % (2 * np.pi) - np.pi
    ds = np.diff(stations)
    kappa = np.zeros(len(centerline))
    kappa[1:-1] = dh / np.maximum(0.5 * (ds[:-1] + ds[1:]), 1e-9)
    kappa[0], kappa[-1] = kappa[1], kappa[-2]
    return kappa


def _interp_at(stations, values, s):
    return np.interp(np.clip(s, stations[0], stations[-1]), stations, values)


def _point_at(centerline, stations, s):
    s = np.clip(s, stations[0], stations[-1])
    x = np.interp(s, stations, centerline[:, 0])
    y = np.interp(s, stations, centerline[:, 1])
    return np.array([x, y])


def _sample_obstacles(rng, centerline, stations, tangents, normals, half_width, speed_limit, style_delta=0.0):
    count = int(rng.integers(0, 7))
    obstacles = []
    for _ in range(count):
        if len(obstacles) >= 8:
            break
        kind_draw = rng.random()
        station = None
        if kind_draw < 0.45:  # parked off to the side, fully clear of the swept path
            station = rng.uniform(14.0, 80.0)
            side = 1 if rng.random() < 0.5 else -1
            half = np.array([rng.uniform(1.6, 2.4), rng.uniform(0.7, 1.0)])
            lateral = max(half_width, 2.0) + half[1] + 1.3 + rng.uniform(0.0, 1.2)
            base = _point_at(centerline, stations, station)
            n = normals[np.searchsorted(stations, station) % len(normals)]
            t = tangents[np.searchsorted(stations, station) % len(tangents)]
            center = base + side * lateral * n
            heading = np.arctan2(t[1], t[0]) + rng.uniform(-0.15, 0.15)
            obstacles.append(Obstacle(center, float(heading), half, np.zeros(2)))
        elif kind_draw < 0.70:  # lead vehicle ahead, never closing into the gap
            v_frac = rng.uniform(0.45, 0.8)
            v_lead = v_frac * speed_limit
            lo = max(30.0, (speed_limit - v_lead) * 4.5 + 14.0)
            if lo > 78.0:
                continue
            station = rng.uniform(lo, 80.0)
            base = _point_at(centerline, stations, station)
            idx = np.searchsorted(stations, station) % len(tangents)
            t = tangents[idx]
            base = base + style_delta * normals[idx]  # traffic flows in the styled lane
            heading = float(np.arctan2(t[1], t[0]))
            half = np.array([rng.uniform(1.8, 2.3), rng.uniform(0.8, 0.95)])
            obstacles.append(Obstacle(base, heading, half, v_lead * t))
        elif kind_draw < 0.80:  # static blocker across the corridor, forces a stop
            station = rng.uniform(22.0, 50.0)
            base = _point_at(centerline, stations, station)
            idx = np.searchsorted(stations, station) % len(tangents)
            t = tangents[idx]
            heading = float(np.arctan2(t[1], t[0]) + np.pi / 2.0)
            half = np.array([rng.uniform(1.5, min(3.0, half_width)), rng.uniform(0.4, 0.9)])
            obstacles.append(Obstacle(base, heading, half, np.zeros(2)))
        else:  # crosser moving away from the corridor
            station = rng.uniform(18.0, 70.0)
            side = 1 if rng.random() < 0.5 else -1
            base = _point_at(centerline, stations, station)
            idx = np.searchsorted(stations, station) % len(normals)
            n = normals[idx]
            center = base + side * (half_width + rng.uniform(1.0, 2.5)) * n
            vel = side * n * rng.uniform(2.0, 6.0)
            heading = float(np.arctan2(vel[1], vel[0]))
            half = np.array([rng.uniform(1.5, 2.2), rng.uniform(0.7, 0.95)])
            obstacles.append(Obstacle(center, heading, half, vel))
    return obstacles


def generate_scene(seed: int, kind: str) -> SceneSpec:
    """Deterministic scene for (seed, kind); obstacles never overlap the origin."""
    if kind not in KINDS:
        raise ValueError(f"unknown scene kind {kind!r}")
    rng = _rng_for(0x5CE4E, seed, KINDS.index(kind))
    half_width = float(rng.uniform(2.2, 4.5))
    speed_limit = float(rng.uniform(5.0, 15.0))
    offset_span = min(0.5 * max(0.0, half_width - 1.45), max(0.0, half_width - 1.9))
    style_offset = float(rng.uniform(-1.0, 1.0) * offset_span)
    style_speed = float(rng.uniform(0.7, 1.0))
    fine = _centerline(kind, rng)
    stations, tangents, normals = _path_frame(fine)
    obstacles = _sample_obstacles(rng, fine, stations, tangents, normals, half_width, speed_limit,
                                  style_offset)
    # store a coarser polyline; 2 m spacing keeps files small and projections accurate
    keep = np.arange(0, len(fine), 4)
    if keep[-1] != len(fine) - 1:
        keep = np.concatenate([keep, [len(fine) - 1]])
    return SceneSpec(seed, kind, fine[keep], half_width, speed_limit, tuple(obstacles),
                     style_offset, style_speed)


# -- expert controller ----------------------------------------------------


def _speed_caps(scene: SceneSpec, fine, stations, kappa):
    """Backward-smoothed speed cap per station: curvature comfort plus stops."""
    caps = np.full(len(stations), scene.speed_limit * scene.style_speed)
    k = np.abs(kappa)
    with np.errstate(divide="ignore"):
        caps = np.minimum(caps, np.sqrt(_A_LAT / np.maximum(k, 1e-9)))
        caps = np.minimum(caps, _YAW_RATE / np.maximum(k, 1e-9))
    clearance = EGO_WIDTH / 2.0 + 0.45
    for obs in scene.obstacles:
        if np.hypot(*obs.velocity) > 0.3:
            continue  # movers handled by the follow rule during integration
        grown = obs.half_extent + clearance
        near = points_in_rect(fine, obs.center, obs.heading, grown)
        if near.any():
            s_block = stations[int(np.argmax(near))]
            caps[stations >= max(0.0, s_block - _STOP_BACK)] = 0.0
    for i in range(len(caps) - 2, -1, -1):
        ds = stations[i + 1] - stations[i]
        caps[i] = min(caps[i], np.sqrt(caps[i + 1] ** 2 + 2.0 * _A_LON * ds))
    return caps


def _station_of(fine, stations, p):
    return project_to_polyline(fine, stations, p)[0]


def _follow_cap(scene, fine, stations, s_now, t_now, v_now):
    """Speed allowance behind any moving obstacle currently ahead in the corridor."""
    cap = np.inf
    for obs in scene.obstacles:
        speed = np.hypot(*obs.velocity)
        if speed <= 0.3:
            continue
        center = obs.center_at(t_now)
        station, lateral = project_to_polyline(fine, stations, center)
        if lateral > EGO_WIDTH / 2.0 + obs.half_extent[1] + 0.4:
            continue
        gap = station - s_now - obs.half_extent[0] - EGO_LENGTH / 2.0
        if gap < 0 or gap > 30.0:
            continue
        cap = min(cap, max(0.0, speed + 0.6 * (gap - 8.0)))
    return cap


def _tracking_line(scene: SceneSpec) -> np.ndarray:
    fine = _resample_fine(scene.centerline)
    if scene.style_offset == 0.0:
        return fine
    _, _, normals = _path_frame(fine)
    return fine + scene.style_offset * normals


def _integrate_expert(scene: SceneSpec, ego: EgoStatus, aggression: float):
    fine = _tracking_line(scene)
    stations, _, _ = _path_frame(fine)
    kappa = _curvature_profile(fine, stations)
    caps = _speed_caps(scene, fine, stations, kappa) * aggression

    dt = 0.05
    pos = np.zeros(2)
    heading = 0.0
    v = min(ego.velocity, float(caps[0]))
    a = float(np.clip(ego.acceleration, -_A_LON, _A_LON))
    waypoints = []
    record_every = int(round(DT / dt))

    for step in range(1, HORIZON * record_every + 1):
        t_now = (step - 1) * dt
        s_now = _station_of(fine, stations, pos)
        v_target = float(_interp_at(stations, caps, s_now))
        v_target = min(v_target, _follow_cap(scene, fine, stations, s_now, t_now, v))
        a_des = np.clip((v_target - v) / 0.4, -_A_LON, _A_LON)
        a += float(np.clip(a_des - a, -_JERK * dt, _JERK * dt))
        v = max(0.0, v + a * dt)
        if v > 1e-9:
            look = float(np.clip(1.2 + 0.7 * v, 1.5, 7.0))
            target = _point_at(fine, stations, s_now + look)
            alpha = np.arctan2(target[1] - pos[1], target[0] - pos[0]) - heading
            alpha = (alpha + np.pi) % (2 * np.pi) - np.pi
            kappa_cmd = float(np.clip(2.0 * np.sin(alpha) / look, -0.25, 0.25))
            kappa_cmd = float(np.clip(kappa_cmd, -_YAW_RATE / max(v, 0.5), _YAW_RATE / max(v, 0.5)))
            heading += v * kappa_cmd * dt
            pos = pos + v * dt * np.array([np.cos(heading), np.sin(heading)])
        if step % record_every == 0:
            waypoints.append(pos.copy())
    return Trajectory(np.array(waypoints))


def _resample_fine(centerline: np.ndarray, ds: float = 0.5) -> np.ndarray:
    stations = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(centerline, axis=0).T))])
    s = np.arange(0.0, stations[-1], ds)
    x = np.interp(s, stations, centerline[:, 0])
    y = np.interp(s, stations, centerline[:, 1])
    return np.stack([x, y], axis=1)


def _footprint_probe_points(pose_xy, heading):
    """Corners, edge midpoints and center of the ego footprint at a pose."""
    corners = rect_corners(pose_xy, heading, EGO_HALF)
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    return np.vstack([corners, mids, np.asarray(pose_xy)[None, :]])


def _expert_ok(scene: SceneSpec, ego: EgoStatus, traj: Trajectory) -> bool:
    pts = traj.with_origin()
    from .trajspace import segment_headings

    headings = segment_headings(pts)
    # fine time grid: interpolated poses must stay in-corridor and collision-free
    for k in np.arange(0.0, 4.0 + 1e-9, 0.1):
        seg = min(int(k / DT), HORIZON - 1)
        frac = k / DT - seg
        p = pts[seg] * (1 - frac) + pts[seg + 1] * frac
        h = headings[seg]
        probe = _footprint_probe_points(p, h)
        dist = distance_to_polyline(probe, scene.centerline)
        if np.any(dist > scene.corridor_half_width - 0.05):
            return False
        if collision_at(scene, (p[0], p[1], h), float(k)):
            return False
    prof = motion_profile(traj, ego.velocity)
    if np.hypot(*prof.accelerations.T).max() > 2.8:
        return False
    if len(prof.jerks) and np.hypot(*prof.jerks.T).max() > 4.6:
        return False
    if np.abs(prof.yaw_rates).max() > 0.55:
        return False
    return True


def expert_trajectory(scene: SceneSpec, ego: EgoStatus) -> Trajectory:
    """Comfort-limited centerline-tracking expert; slows behind blockers.

    Raises InfeasibleScene when no acceptable trajectory is found even after
    progressively less aggressive speed profiles.
    """
    for aggression in (1.0, 0.85, 0.7, 0.5):
        traj = _integrate_expert(scene, ego, aggression)
        if _expert_ok(scene, ego, traj):
            return traj
    raise InfeasibleScene(f"scene seed={scene.seed} kind={scene.kind} ego v={ego.velocity:.2f}")


# -- episode assembly -----------------------------------------------------


def _history_for(ego: EgoStatus) -> np.ndarray:
    """Past 2 s integrated backwards along -x under the current acceleration."""
    pts = []
    for k in range(HISTORY_LEN, 0, -1):
        tau = k * DT
        if ego.acceleration > 1e-9:
            tau_stop = ego.velocity / ego.acceleration
            tau_eff = min(tau, tau_stop)
        else:
            tau_eff = tau
        back = ego.velocity * tau_eff - 0.5 * ego.acceleration * tau_eff**2
        pts.append([-max(0.0, back), 0.0])
    return np.array(pts)


def _command_for(kind: str, centerline: np.ndarray) -> str:
    if kind in ("lane_change", "intersection"):
        return "left" if centerline[-1, 1] > 0 else "right"
    return "follow"


def _sample_ego(scene: SceneSpec, rng: np.random.Generator) -> EgoStatus:
    fine = _tracking_line(scene)
    stations, _, _ = _path_frame(fine)
    kappa = _curvature_profile(fine, stations)
    caps = _speed_caps(scene, fine, stations, kappa)
    v_max = float(min(caps[0], scene.speed_limit))
    v = float(rng.uniform(0.25, 0.95) * v_max) if v_max > 0.5 else 0.0
    a = float(rng.uniform(-1.2, 1.2))
    if v < 0.5:
        a = abs(a)
    return EgoStatus(v, a, _command_for(scene.kind, scene.centerline))


def _episode_is_clean(rec: EpisodeRecord) -> bool:
    # full-score validation with the metric suite; import deferred because
    # evalsuite depends on this module at import time
    from . import evalsuite

    own_progress = evalsuite.progress_along(rec.expert, rec.scene)
    scores = evalsuite.sub_scores(rec.expert, rec.scene, rec.ego, expert_progress=own_progress)
    return evalsuite.pdm_score(scores) == 1.0


def make_episode(scene_seed: int, kind: str, ego_rng: np.random.Generator) -> EpisodeRecord:
    scene = generate_scene(scene_seed, kind)
    ego = _sample_ego(scene, ego_rng)
    expert = expert_trajectory(scene, ego)
    return EpisodeRecord(scene, ego, _history_for(ego), expert)


def _mix_sequence(n: int, mix: dict | None) -> list:
    """Deterministic kind assignment tracking the mix proportions exactly."""
    weights = {k: 1.0 for k in KINDS} if mix is None else dict(mix)
    for k in weights:
        if k not in KINDS:
            raise ValueError(f"unknown kind {k!r} in mix")
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("mix weights must sum to a positive value")
    kinds = [k for k in KINDS if weights.get(k, 0.0) > 0]
    counts = {k: 0 for k in kinds}
    out = []
    for i in range(n):
        deficits = [((i + 1) * weights[k] / total - counts[k], k) for k in kinds]
        deficits.sort(key=lambda d: (-d[0], KINDS.index(d[1])))
        pick = deficits[0][1]
        counts[pick] += 1
        out.append(pick)
    return out


def make_dataset(n: int, seed: int, mix: dict | None = None) -> list:
    """Generate n validated episodes, deterministic in (n, seed, mix)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    kinds = _mix_sequence(n, mix)
    records = []
    for i, kind in enumerate(kinds):
        for attempt in range(64):
            scene_seed = (seed * 1_000_000 + i) * 64 + attempt
            ego_rng = _rng_for(0xE60, scene_seed)
            try:
                rec = make_episode(scene_seed, kind, ego_rng)
            except InfeasibleScene:
                continue
            if _episode_is_clean(rec):
                records.append(rec)
                break
        else:
            raise InfeasibleScene(f"no valid episode for record {i} ({kind}) after 64 attempts")
    return records


# -- JSON Lines serialization ----------------------------------------------


def episode_to_dict(rec: EpisodeRecord) -> dict:
    return {
        "scene": {
            "seed": rec.scene.seed,
            "kind": rec.scene.kind,
            "centerline": rec.scene.centerline.tolist(),
            "corridor_half_width": rec.scene.corridor_half_width,
            "speed_limit": rec.scene.speed_limit,
            "style_offset": rec.scene.style_offset,
            "style_speed": rec.scene.style_speed,
            "obstacles": [
                {
                    "center": o.center.tolist(),
                    "heading": o.heading,
                    "half_extent": o.half_extent.tolist(),
                    "velocity": o.velocity.tolist(),
                }
                for o in rec.scene.obstacles
            ],
        },
        "ego": {
            "velocity": rec.ego.velocity,
            "acceleration": rec.ego.acceleration,
            "command": rec.ego.command,
        },
        "history": rec.history.tolist(),
        "expert": rec.expert.points.tolist(),
    }


def episode_from_dict(d: dict) -> EpisodeRecord:
    s = d["scene"]
    scene = SceneSpec(
        int(s["seed"]),
        s["kind"],
        np.array(s["centerline"]),
        float(s["corridor_half_width"]),
        float(s["speed_limit"]),
        tuple(
            Obstacle(np.array(o["center"]), float(o["heading"]), np.array(o["half_extent"]), np.array(o["velocity"]))
            for o in s["obstacles"]
        ),
        float(s.get("style_offset", 0.0)),
        float(s.get("style_speed", 1.0)),
    )
    e = d["ego"]
    ego = EgoStatus(float(e["velocity"]), float(e["acceleration"]), e["command"])
    return EpisodeRecord(scene, ego, np.array(d["history"]), Trajectory(np.array(d["expert"])))


def save_dataset(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(episode_to_dict(rec)) + "\n")


def load_dataset(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(episode_from_dict(json.loads(line)))
    return records
