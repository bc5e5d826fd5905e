"""Inter-distance precision and inter-experiment reproducibility metrics.

Inter-distance: for every synchronous triplet, each measured pairwise target
distance minus its lab-calibrated value (signed, meters).

Inter-experiment: triplets of experiment A are matched to their nearest
neighbour in experiment B (anchored on target 0 or on the triplet centroid)
within a radius; matched inter-distance errors are subtracted pair by pair.

Summaries are median / quartiles of absolute errors, quantiles by linear
interpolation between order statistics (Hyndman-Fan type 7).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pose import PAIRS, BodyCalibration
from .sync import TripletSet

DEFAULT_RADIUS = 2.0
QUANTILE_CONVENTION = "linear (type 7)"
MATCH_ANCHORS = ("target0", "centroid")


@dataclass(frozen=True)
class InterDistanceRecord:
    t: float
    e01: float
    e02: float
    e12: float


@dataclass(frozen=True, eq=False)
class InterDistanceErrors:
    """Signed errors, ``errors[k] = (e01, e02, e12)`` at time ``t[k]``."""

    t: np.ndarray
    errors: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k) -> InterDistanceRecord:
        e = self.errors[k]
        return InterDistanceRecord(float(self.t[k]), float(e[0]), float(e[1]), float(e[2]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def flat(self) -> np.ndarray:
        return self.errors.reshape(-1)


@dataclass(frozen=True)
class MatchPair:
    index_a: int
    index_b: int
    separation: float


@dataclass(frozen=True, eq=False)
class Matches:
    index_a: np.ndarray
    index_b: np.ndarray
    separation: np.ndarray

    def __len__(self):
        return len(self.index_a)

    def __getitem__(self, k) -> MatchPair:
        return MatchPair(int(self.index_a[k]), int(self.index_b[k]), float(self.separation[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def as_list(self) -> list[MatchPair]:
        return list(self)


@dataclass(frozen=True)
class MetricSummary:
    median: float
    iqr: float
    q1: float
    q3: float
    count: int

    def as_dict(self) -> dict:
        return {"count": self.count, "median": self.median, "q1": self.q1, "q3": self.q3, "iqr": self.iqr}


def inter_distance_errors(triplets: TripletSet, calib: BodyCalibration) -> InterDistanceErrors:
    pts = triplets.points
    measured = np.stack([np.linalg.norm(pts[:, i] - pts[:, j], axis=1) for i, j in PAIRS], axis=1)
    return InterDistanceErrors(triplets.t.copy(), (measured - calib.pairwise_distances).reshape(-1, 3))


def anchor_positions(triplets: TripletSet, anchor: str = "target0") -> np.ndarray:
    if anchor == "target0":
        return triplets.points[:, 0, :]
    if anchor == "centroid":
        return triplets.points.mean(axis=1)
    raise ValueError(f"match anchor must be one of {MATCH_ANCHORS}, got {anchor!r}")


def separations(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of broadcastable arrays, one fixed operation order."""
    d = p - q
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


def nn_match(positions_a, positions_b, radius: float = DEFAULT_RADIUS) -> Matches:
    """Nearest neighbour in B of every point in A, kept when within ``radius``.

    A k-d tree proposes candidates inside a slightly inflated ball; the final
    choice uses the same distance expression as an exhaustive search, ties
    going to the lowest index in B, so the output equals brute force exactly.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    a = np.asarray(positions_a, dtype=float).reshape(-1, 3)
    b = np.asarray(positions_b, dtype=float).reshape(-1, 3)
    empty = Matches(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0))
    if len(a) == 0 or len(b) == 0:
        return empty
    tree = cKDTree(b)
    candidates = tree.query_ball_point(a, radius * (1 + 1e-9) + 1e-12)
    ia, ib, sep = [], [], []
    for i, cand in enumerate(candidates):
        if not cand:
            continue
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d = separations(a[i], b[cand])
        j = int(np.argmin(d))  # first minimum -> lowest index in B
        if d[j] <= radius:
            ia.append(i)
            ib.append(int(cand[j]))
            sep.append(float(d[j]))
    if not ia:
        return empty
    return Matches(np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64), np.array(sep))


def inter_experiment_errors(
    records_a: InterDistanceErrors, records_b: InterDistanceErrors, matches: Matches
) -> np.ndarray:
    """Flattened disparities e_ij(A) - e_ij(B) over matches, in (e01, e02, e12) order per match."""
    if isinstance(matches, Matches):
        ia, ib = matches.index_a, matches.index_b
    else:
        ia = [m.index_a for m in matches]
        ib = [m.index_b for m in matches]
    ia = np.asarray(ia, dtype=np.int64)
    ib = np.asarray(ib, dtype=np.int64)
    for name, idx, n in (("index_a", ia, len(records_a)), ("index_b", ib, len(records_b))):
        if len(idx) and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"{name} out of range for {n} records")
    return (records_a.errors[ia] - records_b.errors[ib]).reshape(-1)


def summarize(errors) -> MetricSummary:
    """Median and quartiles of |errors|."""
    x = np.abs(np.asarray(errors, dtype=float).reshape(-1))
    if len(x) == 0:
        raise ValueError("cannot summarize an empty error list")
    if not np.all(np.isfinite(x)):
        raise ValueError("errors contain non-finite values")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return MetricSummary(float(med), float(q3 - q1), float(q1), float(q3), len(x))


def five_number(errors) -> dict:
    """Box-plot numbers of |errors| (count 0 gives nulls)."""
    x = np.abs(np.asarray(errors, dtype=float).reshape(-1))
    if len(x) == 0:
        return {"count": 0, "min": None, "q1": None, "median": None, "q3": None, "max": None, "iqr": None}
    s = summarize(x)
    return {"count": s.count, "min": float(x.min()), "q1": s.q1, "median": s.median,
            "q3": s.q3, "max": float(x.max()), "iqr": s.iqr}

