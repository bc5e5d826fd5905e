"""Least-squares rigid registration of corresponding 3-D point sets.

Closed-form SVD solution (Arun / Horn / Umeyama family) of

    argmin_{R in SO(3), t}  sum_i || R s_i + t - d_i ||^2

with scale fixed to 1, equal weights and the determinant correction that
keeps the result a proper rotation. Used for station-to-station GCP
calibration and per-timestamp pose reconstruction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import RigidTransform, TimedPoint, as_points

DEGENERACY_RATIO = 1e-9
GCP_RECOMMENDED_RANGE = (8, 12)


class DegenerateGeometryError(ValueError):
    def __init__(self, message: str, ratio: float | None = None):
        super().__init__(message)
        self.ratio = ratio


def conditioning_ratio(points: np.ndarray) -> float:
    """Second over first singular value of the centered point matrix.

    Zero for coincident or collinear sets. Planar sets are fine: three points
    always have a vanishing third singular value.
    """
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[1] / s[0])


@dataclass(frozen=True, eq=False)
class Correspondences:
    source: np.ndarray
    destination: np.ndarray

    def __post_init__(self):
        src = as_points(self.source)
        dst = as_points(self.destination)
        if len(src) != len(dst):
            raise ValueError(f"correspondence length mismatch: {len(src)} source vs {len(dst)} destination")
        if len(src) < 3:
            raise DegenerateGeometryError(f"need at least 3 correspondences, got {len(src)}")
        ratio = conditioning_ratio(src)
        if ratio <= DEGENERACY_RATIO:
            raise DegenerateGeometryError(
                f"source points are collinear or coincident (conditioning ratio {ratio:.3g})", ratio
            )
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "destination", dst)


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    transform: RigidTransform
    rmse: float
    per_point_residuals: np.ndarray


def kabsch_batch(source: np.ndarray, destination: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve many registrations at once.

    ``source`` and ``destination`` have shape (m, n, 3); returns rotations
    (m, 3, 3) and translations (m, 3). No degeneracy checks here.
    """
    cs = source.mean(axis=1, keepdims=True)
    cd = destination.mean(axis=1, keepdims=True)
    H = np.einsum("mni,mnj->mij", source - cs, destination - cd)
    U, _, Vt = np.linalg.svd(H)
    V = np.swapaxes(Vt, 1, 2)
    Ut = np.swapaxes(U, 1, 2)
    d = np.sign(np.linalg.det(V @ Ut))
    d[d == 0] = 1.0
    D = np.broadcast_to(np.eye(3), H.shape).copy()
    D[:, 2, 2] = d
    R = V @ D @ Ut
    t = cd[:, 0, :] - np.einsum("mij,mj->mi", R, cs[:, 0, :])
    return R, t


def residuals_batch(source, destination, R, t) -> np.ndarray:
    moved = np.einsum("mij,mnj->mni", R, source) + t[:, None, :]
    return np.linalg.norm(moved - destination, axis=2)


def estimate_rigid_transform(
    c: Correspondences, from_frame: str = "source", to_frame: str = "destination"
) -> AlignmentResult:
    R, t = kabsch_batch(c.source[None], c.destination[None])
    res = residuals_batch(c.source[None], c.destination[None], R, t)[0]
    rmse = float(np.sqrt(np.mean(res**2)))
    return AlignmentResult(RigidTransform(R[0], t[0], from_frame, to_frame), rmse, res)


def calibrate_station_pair(gcp_a: list[TimedPoint], gcp_b: list[TimedPoint]) -> AlignmentResult:
    """Transform mapping station-b coordinates into station-a's frame.

    Both lists enumerate the same physical control points in the same order.
    Outside 8..12 points a warning is issued; fewer than 3 is an error.
    """
    if len(gcp_a) != len(gcp_b):
        raise ValueError(f"GCP count mismatch: {len(gcp_a)} vs {len(gcp_b)}")
    lo, hi = GCP_RECOMMENDED_RANGE
    if not lo <= len(gcp_a) <= hi:
        warnings.warn(f"{len(gcp_a)} GCPs outside the recommended {lo}..{hi} range", stacklevel=2)
    frame_a = {g.frame for g in gcp_a}
    frame_b = {g.frame for g in gcp_b}
    if len(frame_a) > 1 or len(frame_b) > 1:
        raise ValueError("each GCP set must be expressed in a single station frame")
    c = Correspondences([g.p for g in gcp_b], [g.p for g in gcp_a])
    return estimate_rigid_transform(c, from_frame=frame_b.pop(), to_frame=frame_a.pop())
