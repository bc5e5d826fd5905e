"""Per-timestamp 6-DOF pose from three tracked targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Pose, RigidTransform, TargetKind, check_rotations
from .rigid import DEGENERACY_RATIO, DegenerateGeometryError, kabsch_batch, residuals_batch
from .sync import SyncTriplet, TripletSet

DEFAULT_REJECT_THRESHOLD = 0.05
MIN_TRIANGLE_AREA = 1e-6

PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True, eq=False)
class BodyCalibration:
    """Lab-measured positions of the three targets in the robot body frame."""

    kind: TargetKind
    points: np.ndarray
    frame: str = "body"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("body calibration contains non-finite values")
        area = 0.5 * np.linalg.norm(np.cross(pts[1] - pts[0], pts[2] - pts[0]))
        if area <= MIN_TRIANGLE_AREA:
            raise ValueError(f"body targets are collinear (triangle area {area:.3g} m^2)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kind", TargetKind(self.kind))

    @property
    def pairwise_distances(self) -> np.ndarray:
        """(d01, d02, d12)."""
        return np.array([np.linalg.norm(self.points[i] - self.points[j]) for i, j in PAIRS])


@dataclass
class TrajectoryReconstruction:
    poses: list[Pose]
    failures: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.poses)


def _as_set(triplets) -> TripletSet:
    if isinstance(triplets, TripletSet):
        return triplets
    return TripletSet.from_triplets(triplets)


def _degenerate_mask(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centered = points - points.mean(axis=1, keepdims=True)
    s = np.linalg.svd(centered, compute_uv=False)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(s[:, 0] > 0, s[:, 1] / s[:, 0], 0.0)
    return ratio <= DEGENERACY_RATIO, ratio


def reconstruct_trajectory(
    triplets: TripletSet | list[SyncTriplet],
    calib: BodyCalibration,
    reject_threshold: float = DEFAULT_REJECT_THRESHOLD,
) -> TrajectoryReconstruction:
    """Align the body triangle onto every measured triplet.

    Degenerate triplets are reported in ``failures`` by index and skipped;
    poses whose residual RMSE exceeds ``reject_threshold`` are kept and
    flagged as outliers.
    """
    ts = _as_set(triplets)
    m = len(ts)
    if m == 0:
        return TrajectoryReconstruction([])
    degenerate, ratio = _degenerate_mask(ts.points)
    src = np.broadcast_to(calib.points, (m, 3, 3))
    R, t = kabsch_batch(src, ts.points)
    res = residuals_batch(src, ts.points, R, t)
    rmse = np.sqrt(np.mean(res**2, axis=1))
    check_rotations(R[~degenerate])

    poses: list[Pose] = []
    failures: list[tuple[int, str]] = []
    for k in range(m):
        if degenerate[k]:
            failures.append((k, f"degenerate triplet at t={ts.t[k]} (conditioning ratio {ratio[k]:.3g})"))
            continue
        T = RigidTransform._trusted(R[k], t[k], calib.frame, ts.frame)
        poses.append(Pose(float(ts.t[k]), T, float(rmse[k]), bool(rmse[k] > reject_threshold)))
    return TrajectoryReconstruction(poses, failures)


def reconstruct_pose(
    triplet: SyncTriplet, calib: BodyCalibration, reject_threshold: float = DEFAULT_REJECT_THRESHOLD
) -> Pose:
    out = reconstruct_trajectory([triplet], calib, reject_threshold)
    if out.failures:
        raise DegenerateGeometryError(out.failures[0][1])
    return out.poses[0]
