"""Synthetic deployments with known ground truth.

A ground vehicle follows a parametric path; three prisms and three GNSS
antennas ride on it at fixed body-frame positions. Each prism is tracked by
its own total station, each stream on its own jittered clock. GNSS fixes are
produced by inverting the ENU conversion about a geodetic origin, so the
world frame of the simulation is that origin's local ENU frame.

Random numbers come from NumPy's Philox counter-based generator seeded
through ``SeedSequence([seed, purpose])``; output is therefore identical
for a given seed on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Pose, RigidTransform, TargetId, TargetKind, check_rotations, rot_z
from .ingest import (
    FixQuality,
    GeodeticOrigin,
    GnssFix,
    RtsObservation,
    cartesian_to_polar,
    enu_to_geodetic_array,
)
from .pose import BodyCalibration

PATH_KINDS = ("line", "circle", "lawnmower", "waypoint_list")

# SeedSequence purpose keys, fixed so that streams stay stable across versions
_PURPOSE = {"prism": 1, "gnss_antenna": 2, "gcp": 3}


@dataclass(frozen=True)
class NoiseModel:
    rts_sigma_xyz: float = 0.003
    gnss_sigma_horizontal: float = 0.010
    gnss_sigma_vertical: float = 0.020
    timestamp_jitter: float = 0.02
    seed: int = 0
    gcp_sigma: float = 0.0
    # magnitude of a constant horizontal offset drawn per antenna and experiment
    gnss_bias: float = 0.0
    gnss_float_fraction: float = 0.0

    def __post_init__(self):
        for name in ("rts_sigma_xyz", "gnss_sigma_horizontal", "gnss_sigma_vertical",
                     "timestamp_jitter", "gcp_sigma", "gnss_bias"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.gnss_float_fraction <= 1:
            raise ValueError("gnss_float_fraction must lie in [0, 1]")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, seed)


@dataclass(frozen=True)
class PathSpec:
    kind: str = "circle"
    speed: float = 1.0
    duration: float = 120.0
    rate: float = 2.5
    radius: float = 10.0
    center: tuple[float, float] = (5.0, 0.0)
    start: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    waypoints: tuple[tuple[float, float], ...] = ()
    lane_length: float = 20.0
    lane_spacing: float = 4.0
    lanes: int = 4

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValueError(f"path kind must be one of {PATH_KINDS}, got {self.kind!r}")
        if not (self.speed > 0 and self.duration > 0 and self.rate > 0):
            raise ValueError("speed, duration and rate must be positive")
        if self.kind == "circle" and not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if self.kind == "waypoint_list" and not self.waypoints:
            raise ValueError("waypoint_list needs at least one waypoint")
        object.__setattr__(self, "center", tuple(map(float, self.center)))
        object.__setattr__(self, "start", tuple(map(float, self.start)))
        object.__setattr__(self, "waypoints", tuple(tuple(map(float, w)) for w in self.waypoints))

    def sample_times(self) -> np.ndarray:
        n = int(math.floor(self.duration * self.rate + 1e-9)) + 1
        return np.arange(n) / self.rate

    def polyline(self) -> np.ndarray:
        if self.kind == "waypoint_list":
            return np.array(self.waypoints, dtype=float).reshape(-1, 2)
        if self.kind == "lawnmower":
            pts = []
            for lane in range(self.lanes):
                y = self.start[1] + lane * self.lane_spacing
                xs = (0.0, self.lane_length) if lane % 2 == 0 else (self.lane_length, 0.0)
                pts += [(self.start[0] + xs[0], y), (self.start[0] + xs[1], y)]
            return np.array(pts)
        raise ValueError(f"{self.kind} path is not a polyline")


@dataclass(frozen=True)
class Station:
    """Leveled total station: its frame is the world frame yawed and shifted."""

    name: str
    position: tuple[float, float, float]
    yaw: float = 0.0

    @property
    def to_world(self) -> RigidTransform:
        return RigidTransform(rot_z(self.yaw), self.position, self.name, "world")


def default_stations() -> list[Station]:
    return [
        Station("station0", (-15.0, -12.0, 1.5), 0.2),
        Station("station1", (22.0, -14.0, 1.8), -0.6),
        Station("station2", (4.0, 24.0, 2.1), 2.1),
    ]


DEFAULT_PRISMS = ((0.45, 0.0, 0.55), (-0.35, 0.40, 0.85), (-0.35, -0.40, 1.15))
ANTENNA_OFFSET = (0.0, 0.0, 0.12)
DEFAULT_ORIGIN_DEG = (46.78, -71.27, 60.0)


def default_body_calibration(kind: TargetKind | str = TargetKind.PRISM) -> BodyCalibration:
    kind = TargetKind(kind)
    pts = np.array(DEFAULT_PRISMS)
    if kind is TargetKind.GNSS_ANTENNA:
        pts = pts + np.array(ANTENNA_OFFSET)
    return BodyCalibration(kind, pts)


def default_origin() -> GeodeticOrigin:
    return GeodeticOrigin.from_degrees(*DEFAULT_ORIGIN_DEG)


# ---------------------------------------------------------------- ground truth


def _polyline_state(poly: np.ndarray, s: np.ndarray):
    keep = np.ones(len(poly), dtype=bool)
    keep[1:] = np.any(np.diff(poly, axis=0) != 0, axis=1)
    poly = poly[keep]
    if len(poly) == 1:
        return np.repeat(poly, len(s), axis=0), np.zeros(len(s))
    seg = np.diff(poly, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.clip(s, 0.0, cum[-1])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[k]) / seg_len[k]
    xy = poly[k] + frac[:, None] * seg[k]
    heading = np.arctan2(seg[k, 1], seg[k, 0])
    return xy, heading


def path_state(path: PathSpec, t) -> tuple[np.ndarray, np.ndarray]:
    """Planar position (n, 2) and heading (n,) at times ``t``."""
    t = np.asarray(t, dtype=float).reshape(-1)
    if path.kind == "line":
        d = path.speed * t
        xy = np.stack([path.start[0] + d * math.cos(path.heading), path.start[1] + d * math.sin(path.heading)], axis=1)
        return xy, np.full(len(t), path.heading)
    if path.kind == "circle":
        theta = path.speed * t / path.radius
        xy = np.stack([path.center[0] + path.radius * np.cos(theta), path.center[1] + path.radius * np.sin(theta)], axis=1)
        return xy, theta + math.pi / 2
    return _polyline_state(path.polyline(), path.speed * t)


def pose_arrays(path: PathSpec, t) -> tuple[np.ndarray, np.ndarray]:
    """Body-to-world rotations (n, 3, 3) and translations (n, 3)."""
    xy, heading = path_state(path, t)
    c, s = np.cos(heading), np.sin(heading)
    R = np.zeros((len(heading), 3, 3))
    R[:, 0, 0], R[:, 0, 1], R[:, 1, 0], R[:, 1, 1], R[:, 2, 2] = c, -s, s, c, 1.0
    trans = np.column_stack([xy, np.zeros(len(heading))])
    return R, trans


def generate_ground_truth(path: PathSpec, times=None) -> list[Pose]:
    """Poses along ``path`` at its nominal rate (or at ``times``), heading tangent to the path."""
    t = path.sample_times() if times is None else np.asarray(times, dtype=float).reshape(-1)
    R, trans = pose_arrays(path, t)
    check_rotations(R)
    return [Pose(float(tk), RigidTransform._trusted(Rk, pk, "body", "world")) for tk, Rk, pk in zip(t, R, trans)]


# ---------------------------------------------------------------- observations


def _rng(seed: int, purpose: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, _PURPOSE[purpose]])))


def stream_times(path: PathSpec, jitter: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Three jittered clocks; stream 0 starts exactly at t = 0 (the experiment epoch)."""
    nominal = path.sample_times()
    out = []
    for k in range(3):
        if jitter > 0:
            bound = min(3 * jitter, 0.45 / path.rate)
            dt = np.clip(rng.normal(0.0, jitter, len(nominal)), -bound, bound)
            if k == 0:
                dt[0] = 0.0
            out.append(nominal + dt)
        else:
            out.append(nominal.copy())
    return out


@dataclass
class SampledStreams:
    """Per-target measurements of one system plus the truth on stream 0's clock."""

    kind: TargetKind
    streams: dict[int, list]
    truth: list[Pose]
    world_positions: dict[int, np.ndarray] = field(default_factory=dict)


def _world_targets(path: PathSpec, calib: BodyCalibration, t: np.ndarray, k: int) -> np.ndarray:
    R, trans = pose_arrays(path, t)
    return np.einsum("nij,j->ni", R, calib.points[k]) + trans


def sample_observations(
    path: PathSpec,
    calib: BodyCalibration,
    noise: NoiseModel,
    stations: list[Station] | None = None,
    origin: GeodeticOrigin | None = None,
) -> SampledStreams:
    """Noisy asynchronous measurements of the three targets of ``calib.kind``.

    Prism k is tracked by station k (polar observations in that station's
    frame); truth poses are expressed in station 0's frame. Antennas produce
    RTK fixes about ``origin``; their truth is in the origin's ENU frame.
    Occlusions are not modeled.
    """
    rng = _rng(noise.seed, calib.kind.value)
    times = stream_times(path, noise.timestamp_jitter, rng)
    streams: dict[int, list] = {}
    world: dict[int, np.ndarray] = {}

    if calib.kind is TargetKind.PRISM:
        stations = stations or default_stations()
        if len(stations) < 3:
            raise ValueError("need three stations, one per prism")
        for k in range(3):
            station = stations[k]
            pw = _world_targets(path, calib, times[k], k)
            world[k] = pw
            ps = station.to_world.inverse().apply(pw)
            ps = ps + rng.normal(0.0, 1.0, ps.shape) * noise.rts_sigma_xyz
            az, el, d = cartesian_to_polar(ps)
            target = TargetId(TargetKind.PRISM, k)
            streams[k] = [
                RtsObservation(float(t), float(a), float(e), float(r), station.name, target)
                for t, a, e, r in zip(times[k], az, el, d)
            ]
        to_common = stations[0].to_world.inverse()
    else:
        origin = origin or default_origin()
        for k in range(3):
            pw = _world_targets(path, calib, times[k], k)
            world[k] = pw
            n = len(pw)
            sig = np.array([noise.gnss_sigma_horizontal, noise.gnss_sigma_horizontal, noise.gnss_sigma_vertical])
            enu = pw + rng.normal(0.0, 1.0, (n, 3)) * sig
            angle = rng.uniform(0.0, 2 * math.pi)
            enu = enu + noise.gnss_bias * np.array([math.cos(angle), math.sin(angle), 0.0])
            floating = rng.uniform(0.0, 1.0, n) < noise.gnss_float_fraction
            lat, lon, h = enu_to_geodetic_array(enu, origin)
            target = TargetId(TargetKind.GNSS_ANTENNA, k)
            streams[k] = [
                GnssFix(float(t), float(la), float(lo), float(hh),
                        FixQuality.RTK_FLOAT if fl else FixQuality.RTK_FIXED, target)
                for t, la, lo, hh, fl in zip(times[k], lat, lon, h, floating)
            ]
        to_common = RigidTransform.identity("world", origin.frame)

    R, trans = pose_arrays(path, times[0])
    Rc = to_common.rotation @ R
    tc = trans @ to_common.rotation.T + to_common.translation
    check_rotations(Rc)
    truth = [
        Pose(float(t), RigidTransform._trusted(Rk, pk, calib.frame, to_common.to_frame))
        for t, Rk, pk in zip(times[0], Rc, tc)
    ]
    return SampledStreams(calib.kind, streams, truth, world)


def gcp_world_points(n: int = 10, radius: float = 20.0, center=(3.0, 0.0)) -> np.ndarray:
    """Control points on a circle around the site, heights varying between 0.2 and 0.8 m."""
    theta = 2 * math.pi * np.arange(n) / n
    return np.column_stack([
        center[0] + radius * np.cos(theta),
        center[1] + radius * np.sin(theta),
        0.5 + 0.3 * np.sin(3 * theta + 0.4),
    ])


def sample_gcps(stations: list[Station], gcps: np.ndarray, noise: NoiseModel) -> dict[str, np.ndarray]:
    """Polar sightings (azimuth, elevation, slant) of every control point from every station."""
    rng = _rng(noise.seed, "gcp")
    out = {}
    for st in stations:
        ps = st.to_world.inverse().apply(gcps)
        ps = ps + rng.normal(0.0, 1.0, ps.shape) * noise.gcp_sigma
        out[st.name] = np.column_stack(cartesian_to_polar(ps))
    return out


@dataclass
class Deployment:
    """Everything one synthetic experiment writes to disk."""

    experiment_id: str
    path: PathSpec
    noise: NoiseModel
    stations: list[Station]
    origin: GeodeticOrigin
    prism_calib: BodyCalibration
    gnss_calib: BodyCalibration
    rts: SampledStreams
    gnss: SampledStreams
    gcp_ids: list[str]
    gcp_polar: dict[str, np.ndarray]


def synthesize_deployment(
    experiment_id: str,
    path: PathSpec,
    noise: NoiseModel,
    stations: list[Station] | None = None,
    origin: GeodeticOrigin | None = None,
    n_gcp: int = 10,
) -> Deployment:
    stations = stations or default_stations()
    origin = origin or default_origin()
    prism = default_body_calibration(TargetKind.PRISM)
    gnss = default_body_calibration(TargetKind.GNSS_ANTENNA)
    gcps = gcp_world_points(n_gcp)
    return Deployment(
        experiment_id, path, noise, stations, origin, prism, gnss,
        sample_observations(path, prism, noise, stations),
        sample_observations(path, gnss, noise, origin=origin),
        [f"gcp{k:02d}" for k in range(n_gcp)],
        sample_gcps(stations, gcps, noise),
    )
