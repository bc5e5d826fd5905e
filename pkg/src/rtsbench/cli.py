"""Command-line entry point.

    rtsbench synth SPEC.json --workspace WS [--seed N] [--id ID]
    rtsbench calibrate WS EXP
    rtsbench reconstruct WS EXP --system {rts,gnss}
    rtsbench evaluate WS EXP
    rtsbench compare WS EXP_A EXP_B [--radius 2.0]

Exit codes: 0 success, 2 input or configuration error, 3 not enough data,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .core import RigidTransform, TargetId, TargetKind
from .ingest import GeodeticOrigin, IngestError, parse_gcp_file, parse_gnss_log, parse_origin, parse_rts_log
from .metrics import five_number, inter_distance_errors
from .pipeline import calibrate_stations, compare_runs, gnss_enu_trajectories, rts_common_trajectories, shift_epoch
from .pose import reconstruct_trajectory
from .rigid import DegenerateGeometryError
from .sync import InsufficientDataError, form_triplets
from .synth import NoiseModel, PathSpec, Station, synthesize_deployment
from .workspace import (
    PAIR_NAMES,
    SCHEMA_VERSION,
    DataInsufficiencyError,
    Experiment,
    InputError,
    Workspace,
    WorkspaceConfig,
    box_csv,
    dump_json,
    format_pose_quality,
    format_poses,
    format_triplets,
    parse_body_calibration,
    read_header_metadata,
    read_json,
    read_pose_quality,
    read_triplets,
    report_metadata,
    require,
    write_deployment,
    write_text,
)

log = logging.getLogger("rtsbench")

EXIT_OK, EXIT_INPUT, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4

SYSTEM_KIND = {"rts": TargetKind.PRISM, "gnss": TargetKind.GNSS_ANTENNA}


def _matrix(T: RigidTransform) -> dict:
    return {"rotation": T.rotation.tolist(), "translation": T.translation.tolist()}


def _effective_config(ws: Workspace, args) -> WorkspaceConfig:
    cfg = ws.load_config()
    overrides = {
        "max_gap": getattr(args, "max_gap", None),
        "reference": getattr(args, "reference", None),
        "radius": getattr(args, "radius", None),
        "match_anchor": getattr(args, "match_anchor", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "admit_float", False):
        cfg.admit_float = True
    if getattr(args, "exclude_outliers", False):
        cfg.exclude_outliers = True
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- calibrate


def _rts_stations(exp: Experiment) -> list[str]:
    stations = []
    for k in range(3):
        meta = read_header_metadata(exp.raw("rts", k))
        if "station" not in meta:
            raise InputError(f"{exp.raw('rts', k)}: no '# station=' metadata")
        stations.append(meta["station"])
    if len(set(stations)) != 3:
        raise InputError(f"each prism must be tracked by its own station, got {stations}")
    return stations


def _first_timestamp(path: Path) -> float:
    for line in require(path).read_text(encoding="utf-8-sig").splitlines():
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("t,"):
            continue
        try:
            return float(s.split(",")[0])
        except ValueError:
            continue
    raise InputError(f"{path}: no data rows")


def cmd_calibrate(ws: Workspace, exp_id: str) -> dict:
    exp = ws.experiment(exp_id)
    systems = exp.systems()
    result: dict = {"schema_version": SCHEMA_VERSION, "experiment": exp.id}
    result["epoch"] = _first_timestamp(exp.raw(systems[0], 0)) if systems else 0.0

    if "rts" in systems:
        stations = _rts_stations(exp)
        gcps = {}
        ids = {}
        for name in stations:
            try:
                ids[name], gcps[name] = parse_gcp_file(require(exp.gcp(name)).read_bytes(), name)
            except IngestError as exc:
                raise InputError(f"{exp.gcp(name)}: {exc}") from None
        for name in stations[1:]:
            if ids[name] != ids[stations[0]]:
                raise InputError(f"GCP ids of {name} differ from {stations[0]}: {ids[name]} vs {ids[stations[0]]}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                cal = calibrate_stations(gcps, stations)
            except DegenerateGeometryError as exc:
                raise DegenerateGeometryError(f"GCP calibration failed: {exc}", exc.ratio) from None
        result["rts"] = {
            "common_frame": stations[0],
            "stations": [
                {
                    "station": name,
                    "tracks": f"prism{k}",
                    **_matrix(cal[name].transform),
                    "rmse": cal[name].rmse,
                    "n_gcp": len(gcps[name]),
                    "per_point_residuals": [float(r) for r in cal[name].per_point_residuals],
                }
                for k, name in enumerate(stations)
            ],
            "warnings": [str(w.message) for w in caught],
        }
    result["body"] = {}
    for system in systems:
        calib = parse_body_calibration(exp.body(system), SYSTEM_KIND[system])
        result["body"][system] = {
            "kind": calib.kind.value,
            "points": calib.points.tolist(),
            "pairwise_distances": dict(zip(PAIR_NAMES, calib.pairwise_distances.tolist())),
        }
    if "gnss" in systems:
        try:
            origin = parse_origin(require(exp.origin_path).read_bytes())
        except IngestError as exc:
            raise InputError(f"{exp.origin_path}: {exc}") from None
        result["gnss"] = {"origin_rad": [origin.latitude, origin.longitude, origin.ellipsoidal_height]}
    write_text(exp.calibration_path, dump_json(result))
    return result


# ---------------------------------------------------------------- reconstruct


def _load_calibration(exp: Experiment) -> dict:
    if not exp.calibration_path.is_file():
        raise InputError(f"{exp.calibration_path} missing; run 'rtsbench calibrate' first")
    return read_json(exp.calibration_path)


def _load_trajectories(exp: Experiment, system: str, cfg: WorkspaceConfig, calibration: dict):
    try:
        if system == "rts":
            if "rts" not in calibration:
                raise InputError("calibration has no RTS section; re-run calibrate")
            to_common = {
                s["station"]: RigidTransform(s["rotation"], s["translation"], s["station"],
                                             calibration["rts"]["common_frame"])
                for s in calibration["rts"]["stations"]
            }
            logs, skipped = [], {}
            for k, s in enumerate(calibration["rts"]["stations"]):
                path = require(exp.raw("rts", k))
                parsed = parse_rts_log(path.read_bytes(), station=s["station"], target=TargetId(TargetKind.PRISM, k))
                if len(parsed) < 2:
                    raise DataInsufficiencyError(f"{path}: {len(parsed)} valid rows, need at least 2")
                logs.append(parsed.records)
                skipped[path.name] = [list(x) for x in parsed.skipped]
            trajs = rts_common_trajectories(logs, to_common)
        else:
            if "gnss" not in calibration:
                raise InputError("calibration has no GNSS section; re-run calibrate")
            origin = GeodeticOrigin(*calibration["gnss"]["origin_rad"])
            logs, skipped = [], {}
            for k in range(3):
                path = require(exp.raw("gnss", k))
                parsed = parse_gnss_log(path.read_bytes(), target=TargetId(TargetKind.GNSS_ANTENNA, k))
                logs.append(parsed.records)
                skipped[path.name] = [list(x) for x in parsed.skipped]
            trajs = gnss_enu_trajectories(logs, origin, cfg.admit_float)
            for path_k, tr in enumerate(trajs):
                if len(tr) < 2:
                    raise DataInsufficiencyError(
                        f"{exp.raw('gnss', path_k)}: {len(tr)} usable fixes after quality gating, need at least 2"
                    )
    except IngestError as exc:
        raise InputError(str(exc)) from None
    return shift_epoch(trajs, calibration.get("epoch", 0.0)), skipped


def cmd_reconstruct(ws: Workspace, exp_id: str, system: str, cfg: WorkspaceConfig) -> dict:
    exp = ws.experiment(exp_id)
    if system not in exp.systems():
        raise InputError(f"experiment {exp_id} has no {system} data")
    calibration = _load_calibration(exp)
    calib = parse_body_calibration(exp.body(system), SYSTEM_KIND[system])
    trajs, skipped = _load_trajectories(exp, system, cfg, calibration)
    policy = cfg.sync_policy
    try:
        triplets = form_triplets(trajs[0], trajs[1], trajs[2], policy)
    except InsufficientDataError as exc:
        raise DataInsufficiencyError(str(exc)) from None
    if len(triplets) == 0:
        raise DataInsufficiencyError(f"{system}: no synchronous triplets (streams do not overlap within max_gap)")
    recon = reconstruct_trajectory(triplets, calib, cfg.reject_threshold)
    if not recon.poses:
        raise DegenerateGeometryError(f"{system}: every triplet is degenerate")

    out = exp.derived(system)
    write_text(out / "triplets.csv", format_triplets(triplets))
    write_text(out / "poses.csv", format_poses(recon.poses))
    write_text(out / "pose_quality.csv", format_pose_quality(recon.poses))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "experiment": exp.id,
        "system": system,
        "frame": triplets.frame,
        "epoch": calibration.get("epoch", 0.0),
        "sync_policy": policy.describe(),
        "admit_float": cfg.admit_float if system == "gnss" else None,
        "reject_threshold": cfg.reject_threshold,
        "samples_per_stream": [len(t) for t in trajs],
        "triplets": len(triplets),
        "poses": len(recon.poses),
        "outliers": sum(p.outlier for p in recon.poses),
        "degenerate": [[k, msg] for k, msg in recon.failures],
        "skipped_rows": skipped,
    }
    write_text(out / "meta.json", dump_json(meta))
    return meta


# ---------------------------------------------------------------- evaluate / compare


def _system_errors(exp: Experiment, system: str, exclude_outliers: bool):
    out = exp.derived(system)
    meta = read_json(out / "meta.json")
    triplets = read_triplets(out / "triplets.csv", meta["frame"])
    calib = parse_body_calibration(exp.body(system), SYSTEM_KIND[system])
    if exclude_outliers:
        quality = read_pose_quality(out / "pose_quality.csv")
        bad = set(quality[quality[:, 2] > 0, 0].tolist())
        triplets = triplets.select(np.array([t not in bad for t in triplets.t], dtype=bool))
    return meta, triplets, calib, inter_distance_errors(triplets, calib)


def _summary_block(values: np.ndarray) -> dict:
    return five_number(values)


def cmd_evaluate(ws: Workspace, exp_id: str, cfg: WorkspaceConfig) -> dict:
    exp = ws.experiment(exp_id)
    systems = [s for s in exp.systems() if (exp.derived(s) / "meta.json").is_file()]
    if not systems:
        raise InputError(f"no reconstructed system in {exp_id}; run 'rtsbench reconstruct' first")
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "inter_distance",
        "experiment": exp.id,
        "metadata": report_metadata(exclude_outliers=cfg.exclude_outliers),
        "systems": {},
    }
    box_rows = []
    for system in systems:
        meta, triplets, calib, errs = _system_errors(exp, system, cfg.exclude_outliers)
        report["systems"][system] = {
            "sync_policy": meta["sync_policy"],
            "admit_float": meta["admit_float"],
            "reject_threshold": meta["reject_threshold"],
            "calibrated_distances": dict(zip(PAIR_NAMES, calib.pairwise_distances.tolist())),
            "summary": _summary_block(errs.flat()),
            "per_pair": {name: _summary_block(errs.errors[:, k]) for k, name in enumerate(PAIR_NAMES)},
            "t": errs.t.tolist(),
            "errors": {name: errs.errors[:, k].tolist() for k, name in enumerate(PAIR_NAMES)},
        }
        box_rows.append((system, "all", errs.flat()))
        box_rows += [(system, name, errs.errors[:, k]) for k, name in enumerate(PAIR_NAMES)]
        raw = "t," + ",".join(PAIR_NAMES) + "\n" + "".join(
            ",".join(repr(float(v)) for v in (t, *e)) + "\n" for t, e in zip(errs.t, errs.errors)
        )
        write_text(exp.reports_dir / f"inter_distance_{system}.csv", raw)
    write_text(exp.reports_dir / "inter_distance_box.csv", box_csv(box_rows, ("system", "pair")))
    write_text(exp.reports_dir / "report.json", dump_json(report))
    return report


def cmd_compare(ws: Workspace, id_a: str, id_b: str, cfg: WorkspaceConfig) -> dict:
    exp_a, exp_b = ws.experiment(id_a), ws.experiment(id_b)
    systems = [
        s for s in SYSTEM_KIND
        if (exp_a.derived(s) / "meta.json").is_file() and (exp_b.derived(s) / "meta.json").is_file()
    ]
    if not systems:
        raise InputError(f"{id_a} and {id_b} share no reconstructed system; run 'rtsbench reconstruct' first")
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "inter_experiment",
        "experiments": [id_a, id_b],
        "metadata": report_metadata(
            radius=cfg.radius, match_anchor=cfg.match_anchor, nn_direction="A->B",
            exclude_outliers=cfg.exclude_outliers,
        ),
        "systems": {},
    }
    tag = f"{id_a}__{id_b}"
    box_rows = []
    for system in systems:
        meta_a, trip_a, _, err_a = _system_errors(exp_a, system, cfg.exclude_outliers)
        meta_b, trip_b, _, err_b = _system_errors(exp_b, system, cfg.exclude_outliers)
        matches, disparities = compare_runs(trip_a, err_a, trip_b, err_b, cfg.radius, cfg.match_anchor)
        per_pair = disparities.reshape(-1, 3)
        report["systems"][system] = {
            "sync_policy": {id_a: meta_a["sync_policy"], id_b: meta_b["sync_policy"]},
            "matches": len(matches),
            "summary": _summary_block(disparities),
            "per_pair": {name: _summary_block(per_pair[:, k]) for k, name in enumerate(PAIR_NAMES)},
            "index_a": matches.index_a.tolist(),
            "index_b": matches.index_b.tolist(),
            "separation": matches.separation.tolist(),
            "disparities": {name: per_pair[:, k].tolist() for k, name in enumerate(PAIR_NAMES)},
        }
        box_rows.append((system, "all", disparities))
        box_rows += [(system, name, per_pair[:, k]) for k, name in enumerate(PAIR_NAMES)]
        raw = "index_a,index_b,separation," + ",".join(PAIR_NAMES) + "\n" + "".join(
            f"{ia},{ib},{repr(float(sep))}," + ",".join(repr(float(v)) for v in d) + "\n"
            for ia, ib, sep, d in zip(matches.index_a, matches.index_b, matches.separation, per_pair)
        )
        write_text(ws.reports_dir / f"inter_experiment_{tag}_{system}.csv", raw)
    write_text(ws.reports_dir / f"inter_experiment_box_{tag}.csv", box_csv(box_rows, ("system", "pair")))
    write_text(ws.reports_dir / f"compare_{tag}.json", dump_json(report))
    return report


# ---------------------------------------------------------------- synth


def _synth_spec(spec: dict, seed: int | None, exp_id: str | None):
    if spec.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"synth spec schema_version must be {SCHEMA_VERSION}")
    try:
        path_kw = dict(spec.get("path", {}))
        if "waypoints" in path_kw:
            path_kw["waypoints"] = tuple(tuple(w) for w in path_kw["waypoints"])
        path = PathSpec(**path_kw)
        noise_kw = dict(spec.get("noise", {}))
        if seed is not None:
            noise_kw["seed"] = seed
        noise = NoiseModel(**noise_kw)
        stations = [Station(s["name"], tuple(s["position"]), s.get("yaw", 0.0)) for s in spec["stations"]] \
            if "stations" in spec else None
        origin = GeodeticOrigin.from_degrees(*spec["origin_deg"]) if "origin_deg" in spec else None
        n_gcp = int(spec.get("n_gcp", 10))
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"invalid synth spec: {exc}") from None
    eid = exp_id or spec.get("experiment_id")
    if not eid:
        raise InputError("synth spec needs an experiment_id (or pass --id)")
    return eid, path, noise, stations, origin, n_gcp


def cmd_synth(ws: Workspace, spec_path: Path, seed: int | None = None, exp_id: str | None = None) -> Path:
    spec = read_json(Path(spec_path))
    eid, path, noise, stations, origin, n_gcp = _synth_spec(spec, seed, exp_id)
    dep = synthesize_deployment(eid, path, noise, stations, origin, n_gcp)
    ws.ensure_config()
    effective = {**spec, "experiment_id": eid, "noise": dataclasses.asdict(noise)}
    write_deployment(dep, ws.root / eid, spec=effective)
    return ws.root / eid


# ---------------------------------------------------------------- argparse


def _add_tuning(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-gap", type=float, help="largest bracketing gap for interpolation (s)")
    p.add_argument("--reference", help="triplet clock: stream0 or grid:<step>")
    p.add_argument("--admit-float", action="store_true", help="also use RTK-float GNSS fixes")
    p.add_argument("--exclude-outliers", action="store_true", help="drop flagged poses from metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtsbench", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic experiment bundle")
    p.add_argument("spec", type=Path)
    p.add_argument("--workspace", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--id", dest="exp_id")

    p = sub.add_parser("calibrate", help="station GCP calibration and body calibration checks")
    p.add_argument("workspace", type=Path)
    p.add_argument("experiment")

    p = sub.add_parser("reconstruct", help="synchronise streams and reconstruct poses")
    p.add_argument("workspace", type=Path)
    p.add_argument("experiment")
    p.add_argument("--system", choices=("rts", "gnss"), required=True)
    _add_tuning(p)

    p = sub.add_parser("evaluate", help="inter-distance metric of one experiment")
    p.add_argument("workspace", type=Path)
    p.add_argument("experiment")
    p.add_argument("--exclude-outliers", action="store_true")

    p = sub.add_parser("compare", help="inter-experiment metric of two experiments")
    p.add_argument("workspace", type=Path)
    p.add_argument("experiment_a")
    p.add_argument("experiment_b")
    p.add_argument("--radius", type=float)
    p.add_argument("--match-anchor", choices=("target0", "centroid"))
    p.add_argument("--exclude-outliers", action="store_true")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            out = cmd_synth(Workspace(args.workspace), args.spec, args.seed, args.exp_id)
            print(f"wrote {out}")
            return EXIT_OK
        ws = Workspace(args.workspace)
        if args.command == "calibrate":
            res = cmd_calibrate(ws, args.experiment)
            for s in res.get("rts", {}).get("stations", []):
                print(f"{s['station']}: rmse {s['rmse']:.3e} m over {s['n_gcp']} GCPs")
            for w in res.get("rts", {}).get("warnings", []):
                print(f"warning: {w}", file=sys.stderr)
            return EXIT_OK
        cfg = _effective_config(ws, args)
        if args.command == "reconstruct":
            meta = cmd_reconstruct(ws, args.experiment, args.system, cfg)
            print(f"{args.system}: {meta['poses']} poses, {meta['outliers']} flagged, "
                  f"{len(meta['degenerate'])} degenerate")
        elif args.command == "evaluate":
            rep = cmd_evaluate(ws, args.experiment, cfg)
            for system, block in rep["systems"].items():
                s = block["summary"]
                print(f"{system}: inter-distance median {s['median']:.4g} m, IQR {s['iqr']:.4g} m (n={s['count']})")
        elif args.command == "compare":
            rep = cmd_compare(ws, args.experiment_a, args.experiment_b, cfg)
            for system, block in rep["systems"].items():
                s = block["summary"]
                med = "n/a" if s["median"] is None else f"{s['median']:.4g} m"
                print(f"{system}: {block['matches']} matches, disparity median {med}")
        return EXIT_OK
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DataInsufficiencyError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateGeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
