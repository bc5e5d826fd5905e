"""Geometric and temporal primitives shared by every stage of the pipeline.

Conventions:
    - meters, seconds and radians internally
    - rotations are stored as 3x3 matrices; quaternions are (w, x, y, z) with w >= 0
    - a ``RigidTransform`` maps coordinates expressed in ``from_frame`` into ``to_frame``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

ORTHONORMAL_TOL = 1e-9
REORTHONORMALIZE_TOL = 1e-12


class FrameMismatchError(ValueError):
    """Two frames that must agree do not."""

    def __init__(self, expected: str, got: str, what: str = "frame"):
        super().__init__(f"{what} mismatch: expected {expected!r}, got {got!r}")
        self.expected = expected
        self.got = got


def as_point(p) -> np.ndarray:
    arr = np.array(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite components: {arr}")
    return arr


def as_points(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite components")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormal_error(R: np.ndarray) -> float:
    """Largest entry of |R^T R - I|."""
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project onto SO(3) (nearest rotation in Frobenius norm)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def check_rotations(R: np.ndarray) -> None:
    """Vectorised orthonormality and determinant check of an (m, 3, 3) stack."""
    if len(R) == 0:
        return
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation stack contains non-finite values")
    err = np.abs(np.swapaxes(R, 1, 2) @ R - np.eye(3)).max()
    det = np.abs(np.linalg.det(R) - 1.0).max()
    if err > ORTHONORMAL_TOL or det > ORTHONORMAL_TOL:
        raise ValueError(f"rotation stack fails SO(3) checks (orthonormality {err:.3g}, det {det:.3g})")


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, accurate near zero.

    Uses atan2 on the skew and trace parts; arccos of the trace alone loses
    about eight digits for small angles.
    """
    skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_part = 0.5 * float(np.linalg.norm(skew))
    cos_part = 0.5 * (float(np.trace(R)) - 1.0)
    return math.atan2(sin_part, cos_part)


def rotation_distance(R1: np.ndarray, R2: np.ndarray) -> float:
    return rotation_angle(R1.T @ R2)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``x -> rotation @ x + translation`` from one frame to another."""

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: str = "world"
    to_frame: str = "world"

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.all(np.isfinite(R)):
            raise ValueError("rotation must be a finite 3x3 matrix")
        if orthonormal_error(R) > ORTHONORMAL_TOL:
            raise ValueError(f"rotation not orthonormal (error {orthonormal_error(R):.3g})")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(f"rotation determinant {np.linalg.det(R):.12g} != +1")
        if not self.from_frame or not self.to_frame:
            raise ValueError("frame names must be non-empty")
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(as_point(self.translation)))

    @classmethod
    def _trusted(cls, R: np.ndarray, t: np.ndarray, from_frame: str, to_frame: str) -> "RigidTransform":
        """Skip per-object checks; callers validate whole batches with ``check_rotations``."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "rotation", _frozen(np.array(R, dtype=float)))
        object.__setattr__(obj, "translation", _frozen(np.array(t, dtype=float)))
        object.__setattr__(obj, "from_frame", from_frame)
        object.__setattr__(obj, "to_frame", to_frame)
        return obj

    @classmethod
    def identity(cls, from_frame: str = "world", to_frame: str | None = None) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), from_frame, to_frame or from_frame)

    @classmethod
    def from_quaternion(cls, q_wxyz: Sequence[float], translation, from_frame="world", to_frame="world"):
        w, x, y, z = q_wxyz
        R = Rotation.from_quat([x, y, z, w]).as_matrix()
        return cls(R, translation, from_frame, to_frame)

    def as_quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z), sign fixed so that w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat(canonical=True)
        return np.array([w, x, y, z])

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation, self.to_frame, self.from_frame)

    def apply(self, points) -> np.ndarray:
        """Transform a single (3,) point or an (n, 3) array of points."""
        p = np.asarray(points, dtype=float)
        if p.shape == (3,):
            return self.rotation @ as_point(p) + self.translation
        return as_points(p) @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self):
        return (
            f"RigidTransform({self.from_frame}->{self.to_frame}, "
            f"q={np.round(self.as_quaternion(), 9).tolist()}, t={self.translation.tolist()})"
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Apply ``b`` first, then ``a``: the result maps ``b.from_frame`` to ``a.to_frame``."""
    if a.from_frame != b.to_frame:
        raise FrameMismatchError(a.from_frame, b.to_frame, what="compose frame")
    R = a.rotation @ b.rotation
    if orthonormal_error(R) > REORTHONORMALIZE_TOL:
        R = orthonormalize(R)
    return RigidTransform(R, a.rotation @ b.translation + a.translation, b.from_frame, a.to_frame)


def apply(T: RigidTransform, p) -> np.ndarray:
    return T.apply(p)


class TargetKind(str, Enum):
    PRISM = "prism"
    GNSS_ANTENNA = "gnss_antenna"

    @property
    def label(self) -> str:
        return "prism" if self is TargetKind.PRISM else "gnss"


@dataclass(frozen=True)
class TargetId:
    kind: TargetKind
    index: int

    def __post_init__(self):
        if self.index not in (0, 1, 2):
            raise ValueError(f"target index must be 0, 1 or 2, got {self.index}")

    @property
    def label(self) -> str:
        return f"{self.kind.label}{self.index}"

    @classmethod
    def parse(cls, label: str) -> "TargetId":
        """Parse ``prism<k>`` or ``gnss<k>``."""
        label = label.strip()
        for kind in TargetKind:
            prefix = kind.label
            if label.startswith(prefix) and label[len(prefix):].isdigit():
                return cls(kind, int(label[len(prefix):]))
        raise ValueError(f"unrecognized target label {label!r}")

    def __str__(self):
        return self.label


@dataclass(frozen=True, eq=False)
class TimedPoint:
    t: float
    p: np.ndarray
    frame: str

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("timestamp must be finite")
        if not self.frame:
            raise ValueError("frame must be non-empty")
        object.__setattr__(self, "p", _frozen(as_point(self.p)))


@dataclass(frozen=True, eq=False)
class TargetTrajectory:
    """Time-ordered positions of one target, stored column-wise.

    ``t`` has shape (n,), ``positions`` shape (n, 3). Timestamps are strictly
    increasing and all samples live in ``frame``.
    """

    target: TargetId
    t: np.ndarray
    positions: np.ndarray
    frame: str

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        if len(t) != len(pos):
            raise ValueError(f"{len(t)} timestamps but {len(pos)} positions")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(pos))):
            raise ValueError("trajectory contains non-finite values")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"timestamps of {self.target} are not strictly increasing")
        if not self.frame:
            raise ValueError("frame must be non-empty")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "positions", _frozen(pos))

    @classmethod
    def from_points(cls, target: TargetId, samples: Iterable[TimedPoint]) -> "TargetTrajectory":
        samples = list(samples)
        frames = {s.frame for s in samples}
        if len(frames) > 1:
            raise ValueError(f"samples span several frames: {sorted(frames)}")
        frame = frames.pop() if frames else "world"
        return cls(
            target,
            [s.t for s in samples],
            np.array([s.p for s in samples]).reshape(-1, 3),
            frame,
        )

    @property
    def samples(self) -> list[TimedPoint]:
        return [TimedPoint(float(t), p.copy(), self.frame) for t, p in zip(self.t, self.positions)]

    def __len__(self):
        return len(self.t)

    def select(self, mask) -> "TargetTrajectory":
        return TargetTrajectory(self.target, self.t[mask], self.positions[mask], self.frame)

    def transformed(self, T: RigidTransform) -> "TargetTrajectory":
        if T.from_frame != self.frame:
            raise FrameMismatchError(T.from_frame, self.frame)
        return TargetTrajectory(self.target, self.t, T.apply(self.positions), T.to_frame)


@dataclass(frozen=True, eq=False)
class Pose:
    t: float
    transform: RigidTransform
    residual_rmse: float = 0.0
    outlier: bool = False

    def __post_init__(self):
        if not math.isfinite(self.residual_rmse) or self.residual_rmse < 0:
            raise ValueError("residual_rmse must be finite and non-negative")
