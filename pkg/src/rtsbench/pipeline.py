"""In-memory orchestration of the processing chain, shared by the CLI and the experiment scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RigidTransform, TargetTrajectory, TimedPoint
from .ingest import GeodeticOrigin, GnssFix, RtsObservation, gnss_trajectory, polar_to_cartesian, rts_trajectory
from .metrics import (
    InterDistanceErrors,
    Matches,
    anchor_positions,
    inter_distance_errors,
    inter_experiment_errors,
    nn_match,
)
from .pose import BodyCalibration, TrajectoryReconstruction, reconstruct_trajectory
from .rigid import AlignmentResult, calibrate_station_pair
from .sync import SyncPolicy, TripletSet, form_triplets
from .synth import Deployment


def calibrate_stations(gcps: dict[str, list[TimedPoint]], order: list[str]) -> dict[str, AlignmentResult]:
    """Chain every station to the first one in ``order`` (the common frame)."""
    common = order[0]
    out = {}
    for name in order:
        if name == common:
            n = len(gcps[name])
            out[name] = AlignmentResult(RigidTransform.identity(common), 0.0, np.zeros(n))
        else:
            out[name] = calibrate_station_pair(gcps[common], gcps[name])
    return out


def rts_common_trajectories(
    logs: list[list[RtsObservation]], to_common: dict[str, RigidTransform]
) -> list[TargetTrajectory]:
    trajs = []
    for obs in logs:
        traj = rts_trajectory(obs)
        trajs.append(traj.transformed(to_common[traj.frame]))
    return trajs


def gnss_enu_trajectories(
    logs: list[list[GnssFix]], origin: GeodeticOrigin, admit_float: bool = False
) -> list[TargetTrajectory]:
    return [gnss_trajectory(fixes, origin, admit_float) for fixes in logs]


def shift_epoch(trajs: list[TargetTrajectory], epoch: float) -> list[TargetTrajectory]:
    if epoch == 0.0:
        return trajs
    return [TargetTrajectory(t.target, t.t - epoch, t.positions, t.frame) for t in trajs]


@dataclass
class SystemRun:
    triplets: TripletSet
    reconstruction: TrajectoryReconstruction
    errors: InterDistanceErrors


def process_system(
    trajs: list[TargetTrajectory],
    calib: BodyCalibration,
    policy: SyncPolicy = SyncPolicy(),
    reject_threshold: float = 0.05,
) -> SystemRun:
    triplets = form_triplets(trajs[0], trajs[1], trajs[2], policy)
    recon = reconstruct_trajectory(triplets, calib, reject_threshold)
    return SystemRun(triplets, recon, inter_distance_errors(triplets, calib))


def compare_runs(
    triplets_a: TripletSet,
    errors_a: InterDistanceErrors,
    triplets_b: TripletSet,
    errors_b: InterDistanceErrors,
    radius: float = 2.0,
    anchor: str = "target0",
) -> tuple[Matches, np.ndarray]:
    matches = nn_match(anchor_positions(triplets_a, anchor), anchor_positions(triplets_b, anchor), radius)
    return matches, inter_experiment_errors(errors_a, errors_b, matches)


def deployment_trajectories(dep: Deployment, system: str, admit_float: bool = False) -> list[TargetTrajectory]:
    """Run a synthetic deployment through the same conversions as files on disk would go."""
    if system == "rts":
        gcps = {
            name: [TimedPoint(0.0, p, name) for p in polar_to_cartesian(pol[:, 0], pol[:, 1], pol[:, 2])]
            for name, pol in dep.gcp_polar.items()
        }
        order = [dep.rts.streams[k][0].station for k in range(3)]
        cal = calibrate_stations(gcps, order)
        return rts_common_trajectories([dep.rts.streams[k] for k in range(3)],
                                       {n: r.transform for n, r in cal.items()})
    if system == "gnss":
        return gnss_enu_trajectories([dep.gnss.streams[k] for k in range(3)], dep.origin, admit_float)
    raise ValueError(f"system must be 'rts' or 'gnss', got {system!r}")


def run_deployment(dep: Deployment, system: str, policy: SyncPolicy = SyncPolicy()) -> SystemRun:
    calib = dep.prism_calib if system == "rts" else dep.gnss_calib
    return process_system(deployment_trajectories(dep, system), calib, policy)
