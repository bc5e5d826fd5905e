"""Ground-truth trajectories from robotic total stations and RTK-GNSS, and their precision metrics."""

__version__ = "0.1.0"

from .core import Pose, RigidTransform, TargetId, TargetKind, TargetTrajectory, TimedPoint, apply, compose
from .metrics import inter_distance_errors, inter_experiment_errors, nn_match, summarize
from .pose import BodyCalibration, reconstruct_pose, reconstruct_trajectory
from .rigid import AlignmentResult, Correspondences, calibrate_station_pair, estimate_rigid_transform
from .sync import SyncPolicy, form_triplets, interpolate_at

__all__ = [
    "AlignmentResult", "BodyCalibration", "Correspondences", "Pose", "RigidTransform", "SyncPolicy",
    "TargetId", "TargetKind", "TargetTrajectory", "TimedPoint", "apply", "calibrate_station_pair",
    "compose", "estimate_rigid_transform", "form_triplets", "inter_distance_errors",
    "inter_experiment_errors", "interpolate_at", "nn_match", "reconstruct_pose",
    "reconstruct_trajectory", "summarize",
]
