"""Time alignment of the three asynchronous target streams.

The reference clock (stream 0's own timestamps by default, or a regular grid)
defines the triplet times; the other streams are linearly interpolated onto
it. Timestamps that would need extrapolation, or whose bracketing samples are
further apart than ``max_gap``, are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FrameMismatchError, TargetTrajectory


class SyncError(ValueError):
    pass


class ExtrapolationError(SyncError):
    pass


class GapError(SyncError):
    pass


class InsufficientDataError(SyncError):
    pass


@dataclass(frozen=True)
class SyncPolicy:
    """Interpolation and filtering knobs.

    reference: ``"stream0"`` or ``"grid:<step>"`` (step in seconds).
    max_speed: consecutive samples implying a faster motion drop the later one; None disables.
    """

    max_gap: float = 1.0
    reference: str = "stream0"
    max_speed: float | None = 5.0

    def __post_init__(self):
        if not (self.max_gap > 0 and math.isfinite(self.max_gap)):
            raise ValueError(f"max_gap must be positive, got {self.max_gap}")
        if self.max_speed is not None and not self.max_speed > 0:
            raise ValueError(f"max_speed must be positive, got {self.max_speed}")
        self.grid_step  # validates the reference string

    @property
    def grid_step(self) -> float | None:
        if self.reference == "stream0":
            return None
        kind, _, step = self.reference.partition(":")
        try:
            value = float(step)
        except ValueError:
            value = float("nan")
        if kind != "grid" or not value > 0 or not math.isfinite(value):
            raise ValueError(f"reference must be 'stream0' or 'grid:<step>', got {self.reference!r}")
        return value

    def describe(self) -> dict:
        return {"max_gap": self.max_gap, "reference": self.reference, "max_speed": self.max_speed}


@dataclass(frozen=True)
class SyncTriplet:
    t: float
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    frame: str

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.p0, self.p1, self.p2])


@dataclass(frozen=True, eq=False)
class TripletSet:
    """Synchronous triplets stored as arrays: ``t`` (n,), ``points`` (n, 3, 3) indexed [k, target, xyz]."""

    t: np.ndarray
    points: np.ndarray
    frame: str

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3, 3)
        if len(t) != len(pts):
            raise ValueError("triplet times and points differ in length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("triplet times must strictly increase")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_triplets(cls, triplets) -> "TripletSet":
        triplets = list(triplets)
        frames = {tr.frame for tr in triplets}
        if len(frames) > 1:
            raise FrameMismatchError(*sorted(frames)[:2])
        return cls(
            [tr.t for tr in triplets],
            np.array([tr.points for tr in triplets]).reshape(-1, 3, 3),
            frames.pop() if frames else "world",
        )

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k) -> SyncTriplet:
        p = self.points[k]
        return SyncTriplet(float(self.t[k]), p[0], p[1], p[2], self.frame)

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def select(self, mask) -> "TripletSet":
        return TripletSet(self.t[mask], self.points[mask], self.frame)


def interpolate_many(traj: TargetTrajectory, query, max_gap: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised linear interpolation.

    Returns (points (m, 3), in_range mask, gap_ok mask). Query times equal to
    a sample time return that sample bit-exactly and never fail the gap test.
    """
    ts, ps = traj.t, traj.positions
    q = np.asarray(query, dtype=float).reshape(-1)
    n = len(ts)
    hi = np.searchsorted(ts, q, side="left")
    in_range = (q >= ts[0]) & (q <= ts[-1])
    hi_c = np.clip(hi, 0, n - 1)
    exact = in_range & (ts[hi_c] == q)
    hi_b = np.clip(hi, 1, n - 1)
    lo_b = hi_b - 1
    t0, t1 = ts[lo_b], ts[hi_b]
    w = (q - t0) / (t1 - t0)
    out = ps[lo_b] + w[:, None] * (ps[hi_b] - ps[lo_b])
    out[exact] = ps[hi_c[exact]]
    gap_ok = exact | ((t1 - t0) <= max_gap)
    return out, in_range, gap_ok


def interpolate_at(traj: TargetTrajectory, t: float, policy: SyncPolicy = SyncPolicy()) -> np.ndarray:
    if len(traj) < 2:
        raise InsufficientDataError(f"{traj.target} has {len(traj)} samples, need 2")
    p, in_range, gap_ok = interpolate_many(traj, [t], policy.max_gap)
    if not in_range[0]:
        raise ExtrapolationError(f"t={t} outside [{traj.t[0]}, {traj.t[-1]}] of {traj.target}")
    if not gap_ok[0]:
        raise GapError(f"samples bracketing t={t} of {traj.target} are more than {policy.max_gap} s apart")
    return p[0]


def speed_gate(traj: TargetTrajectory, max_speed: float) -> TargetTrajectory:
    """Drop samples implying a speed above ``max_speed`` relative to the last kept sample."""
    if len(traj) < 2:
        return traj
    step = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
    if np.all(step <= max_speed * np.diff(traj.t)):
        return traj
    keep = np.zeros(len(traj), dtype=bool)
    keep[0] = True
    last = 0
    for k in range(1, len(traj)):
        d = np.linalg.norm(traj.positions[k] - traj.positions[last])
        if d <= max_speed * (traj.t[k] - traj.t[last]):
            keep[k] = True
            last = k
    return traj.select(keep)


def reference_times(streams: list[TargetTrajectory], policy: SyncPolicy) -> np.ndarray:
    step = policy.grid_step
    if step is None:
        return streams[0].t
    start = max(s.t[0] for s in streams)
    stop = min(s.t[-1] for s in streams)
    if stop < start:
        return np.empty(0)
    count = int(math.floor((stop - start) / step)) + 1
    return start + step * np.arange(count)


def form_triplets(
    t0: TargetTrajectory, t1: TargetTrajectory, t2: TargetTrajectory, policy: SyncPolicy = SyncPolicy()
) -> TripletSet:
    streams = [t0, t1, t2]
    for k, s in enumerate(streams):
        if len(s) < 2:
            raise InsufficientDataError(f"stream {k} ({s.target}) has {len(s)} samples, need at least 2")
        if s.frame != t0.frame:
            raise FrameMismatchError(t0.frame, s.frame, what=f"stream {k} frame")
    if policy.max_speed is not None:
        streams = [speed_gate(s, policy.max_speed) for s in streams]
        for k, s in enumerate(streams):
            if len(s) < 2:
                raise InsufficientDataError(f"stream {k} has fewer than 2 samples after the speed gate")

    ref = reference_times(streams, policy)
    pts = np.empty((len(ref), 3, 3))
    valid = np.ones(len(ref), dtype=bool)
    for k, s in enumerate(streams):
        p, in_range, gap_ok = interpolate_many(s, ref, policy.max_gap)
        pts[:, k, :] = p
        valid &= in_range & gap_ok
    return TripletSet(ref[valid], pts[valid], t0.frame)
