"""On-disk workspace: layout, configuration, loaders and report writers.

Layout::

    <workspace>/workspace.json            tunables (schema_version 1)
    <workspace>/reports/                  inter-experiment comparisons
    <workspace>/<experiment>/experiment.json
    <workspace>/<experiment>/raw/         rts_prism{0,1,2}.csv, gnss{0,1,2}.csv
    <workspace>/<experiment>/calib/       gcp_<station>.csv, body_prism.csv, body_gnss.csv, origin.csv
    <workspace>/<experiment>/derived/     calibration.json, <system>/{poses,triplets,pose_quality}.csv, meta.json
    <workspace>/<experiment>/reports/     report.json and plot CSVs

Every writer is deterministic: floats are written with ``repr`` and JSON keys
keep a fixed insertion order, so re-running a command on unchanged inputs
reproduces its files byte for byte.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import Pose, RigidTransform, TargetKind
from .ingest import format_gcp_file, format_gnss_log, format_origin, format_rts_log
from .metrics import QUANTILE_CONVENTION, five_number
from .pose import PAIRS, BodyCalibration
from .sync import SyncPolicy, TripletSet
from .synth import Deployment

SCHEMA_VERSION = 1
SYSTEMS = ("rts", "gnss")
PAIR_NAMES = tuple(f"e{i}{j}" for i, j in PAIRS)


class InputError(ValueError):
    """Missing or malformed input files and configuration (exit code 2)."""


class DataInsufficiencyError(RuntimeError):
    """Valid inputs that do not yield enough data to proceed (exit code 3)."""


# ---------------------------------------------------------------- configuration


@dataclass
class WorkspaceConfig:
    max_gap: float = 1.0
    reference: str = "stream0"
    max_speed: float | None = 5.0
    admit_float: bool = False
    reject_threshold: float = 0.05
    exclude_outliers: bool = False
    radius: float = 2.0
    match_anchor: str = "target0"

    @property
    def sync_policy(self) -> SyncPolicy:
        return SyncPolicy(self.max_gap, self.reference, self.max_speed)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "sync": {"max_gap": self.max_gap, "reference": self.reference, "max_speed": self.max_speed},
            "gnss": {"admit_float": self.admit_float},
            "pose": {"reject_threshold": self.reject_threshold, "exclude_outliers": self.exclude_outliers},
            "compare": {"radius": self.radius, "match_anchor": self.match_anchor},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkspaceConfig":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InputError(f"workspace config schema_version must be {SCHEMA_VERSION}, got {d.get('schema_version')!r}")
        allowed = {"sync": {"max_gap", "reference", "max_speed"}, "gnss": {"admit_float"},
                   "pose": {"reject_threshold", "exclude_outliers"}, "compare": {"radius", "match_anchor"}}
        values = {}
        for section, body in d.items():
            if section == "schema_version":
                continue
            if section not in allowed or not isinstance(body, dict):
                raise InputError(f"unknown workspace config section {section!r}")
            unknown = set(body) - allowed[section]
            if unknown:
                raise InputError(f"unknown keys in [{section}]: {sorted(unknown)}")
            values.update(body)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            self.sync_policy
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if not self.radius > 0:
            raise InputError(f"radius must be positive, got {self.radius}")
        if self.match_anchor not in ("target0", "centroid"):
            raise InputError(f"match anchor must be target0 or centroid, got {self.match_anchor!r}")
        if not self.reject_threshold > 0:
            raise InputError("reject_threshold must be positive")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_json(path: Path) -> dict:
    if not path.is_file():
        raise InputError(f"missing file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def config_path(self) -> Path:
        return self.root / "workspace.json"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def load_config(self) -> WorkspaceConfig:
        if not self.config_path.exists():
            return WorkspaceConfig()
        return WorkspaceConfig.from_dict(read_json(self.config_path))

    def ensure_config(self) -> None:
        if not self.config_path.exists():
            write_text(self.config_path, dump_json(WorkspaceConfig().to_dict()))

    def experiment(self, exp_id: str) -> "Experiment":
        exp = Experiment(self.root / exp_id)
        if not exp.manifest_path.is_file():
            raise InputError(f"experiment {exp_id!r} not found (missing {exp.manifest_path})")
        return exp


class Experiment:
    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def id(self) -> str:
        return self.root.name

    @property
    def manifest_path(self) -> Path:
        return self.root / "experiment.json"

    def manifest(self) -> dict:
        return read_json(self.manifest_path)

    def systems(self) -> list[str]:
        systems = self.manifest().get("systems", [])
        bad = set(systems) - set(SYSTEMS)
        if bad:
            raise InputError(f"{self.manifest_path}: unknown systems {sorted(bad)}")
        return [s for s in SYSTEMS if s in systems]

    def raw(self, system: str, k: int) -> Path:
        return self.root / "raw" / (f"rts_prism{k}.csv" if system == "rts" else f"gnss{k}.csv")

    def gcp(self, station: str) -> Path:
        return self.root / "calib" / f"gcp_{station}.csv"

    def body(self, system: str) -> Path:
        return self.root / "calib" / ("body_prism.csv" if system == "rts" else "body_gnss.csv")

    @property
    def origin_path(self) -> Path:
        return self.root / "calib" / "origin.csv"

    @property
    def calibration_path(self) -> Path:
        return self.root / "derived" / "calibration.json"

    def derived(self, system: str) -> Path:
        return self.root / "derived" / system

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"


def require(path: Path) -> Path:
    if not path.is_file():
        raise InputError(f"missing file: {path}")
    return path


def read_header_metadata(path: Path) -> dict[str, str]:
    """``# key=value`` comment lines before the first non-comment line."""
    meta = {}
    with open(require(path), encoding="utf-8-sig") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


# ---------------------------------------------------------------- body calibration files


BODY_HEADER = "target,x,y,z"


def format_body_calibration(calib: BodyCalibration) -> str:
    lines = [f"# kind={calib.kind.value}", BODY_HEADER]
    lines += [f"{k},{repr(float(p[0]))},{repr(float(p[1]))},{repr(float(p[2]))}" for k, p in enumerate(calib.points)]
    return "\n".join(lines) + "\n"


def parse_body_calibration(path: Path, kind: TargetKind) -> BodyCalibration:
    text = require(path).read_text(encoding="utf-8-sig")
    meta, rows, header_seen = {}, {}, False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line.replace(" ", "") != BODY_HEADER:
                raise InputError(f"{path}: line {lineno}: expected header {BODY_HEADER!r}")
            header_seen = True
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            if len(fields) != 4:
                raise ValueError("expected 4 fields")
            k = int(fields[0])
            if k not in (0, 1, 2) or k in rows:
                raise ValueError(f"bad or duplicate target index {fields[0]!r}")
            xyz = [float(f) for f in fields[1:]]
            if not all(math.isfinite(v) for v in xyz):
                raise ValueError("non-finite coordinate")
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from None
        rows[k] = xyz
    if set(rows) != {0, 1, 2}:
        raise InputError(f"{path}: need rows for targets 0, 1 and 2")
    if "kind" in meta and meta["kind"] != kind.value:
        raise InputError(f"{path}: declares kind {meta['kind']!r}, expected {kind.value!r}")
    try:
        return BodyCalibration(kind, [rows[0], rows[1], rows[2]])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- derived CSVs


POSES_HEADER = "t,x,y,z,qw,qx,qy,qz"
TRIPLETS_HEADER = "t," + ",".join(f"p{k}{a}" for k in range(3) for a in "xyz")
QUALITY_HEADER = "t,residual_rmse,outlier"


def _row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def format_poses(poses: list[Pose]) -> str:
    out = io.StringIO()
    out.write(POSES_HEADER + "\n")
    for p in poses:
        out.write(_row([p.t, *p.transform.translation, *p.transform.as_quaternion()]) + "\n")
    return out.getvalue()


def format_pose_quality(poses: list[Pose]) -> str:
    out = io.StringIO()
    out.write(QUALITY_HEADER + "\n")
    for p in poses:
        out.write(f"{repr(float(p.t))},{repr(float(p.residual_rmse))},{int(p.outlier)}\n")
    return out.getvalue()


def format_triplets(triplets: TripletSet) -> str:
    out = io.StringIO()
    out.write(TRIPLETS_HEADER + "\n")
    for t, pts in zip(triplets.t, triplets.points):
        out.write(_row([t, *pts.reshape(-1)]) + "\n")
    return out.getvalue()


def _read_numeric_csv(path: Path, header: str, width: int) -> np.ndarray:
    lines = require(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != header:
        raise InputError(f"{path}: expected header {header!r}")
    body = [ln for ln in lines[1:] if ln.strip()]
    try:
        arr = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    arr = arr.reshape(-1, width)
    return arr


def read_poses(path: Path, from_frame="body", to_frame="world") -> list[Pose]:
    arr = _read_numeric_csv(path, POSES_HEADER, 8)
    return [Pose(float(r[0]), RigidTransform.from_quaternion(r[4:8], r[1:4], from_frame, to_frame)) for r in arr]


def read_triplets(path: Path, frame: str) -> TripletSet:
    arr = _read_numeric_csv(path, TRIPLETS_HEADER, 10)
    return TripletSet(arr[:, 0], arr[:, 1:].reshape(-1, 3, 3), frame)


def read_pose_quality(path: Path) -> np.ndarray:
    return _read_numeric_csv(path, QUALITY_HEADER, 3)


# ---------------------------------------------------------------- reports


def report_metadata(**extra) -> dict:
    meta = {
        "tool": "rtsbench",
        "tool_version": __version__,
        "quantile_convention": QUANTILE_CONVENTION,
        "summary_of": "absolute errors",
        "error_sign": "signed errors are measured minus calibrated; disparities subtract signed errors (A - B)",
    }
    meta.update(extra)
    return meta


def box_csv(rows: list[tuple[str, str, np.ndarray]], leading: tuple[str, ...]) -> str:
    cols = ["count", "min", "q1", "median", "q3", "max", "iqr"]
    out = io.StringIO()
    out.write(",".join([*leading, *cols]) + "\n")
    for a, b, values in rows:
        s = five_number(values)
        cells = ["" if s[c] is None else repr(s[c]) if isinstance(s[c], float) else str(s[c]) for c in cols]
        out.write(",".join([a, b, *cells]) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------- synthetic bundles


def write_deployment(dep: Deployment, exp_dir: Path, spec: dict | None = None) -> None:
    exp = Experiment(exp_dir)
    for k in range(3):
        station = dep.rts.streams[k][0].station if dep.rts.streams[k] else dep.stations[k].name
        write_text(exp.raw("rts", k), format_rts_log(dep.rts.streams[k], station, dep.rts.streams[k][0].target))
        write_text(exp.raw("gnss", k), format_gnss_log(dep.gnss.streams[k], dep.gnss.streams[k][0].target))
    for name, polar in dep.gcp_polar.items():
        write_text(exp.gcp(name), format_gcp_file(dep.gcp_ids, polar, name))
    write_text(exp.body("rts"), format_body_calibration(dep.prism_calib))
    write_text(exp.body("gnss"), format_body_calibration(dep.gnss_calib))
    write_text(exp.origin_path, format_origin(dep.origin))
    write_text(exp.root / "truth.csv", format_poses(dep.rts.truth))
    write_text(exp.root / "truth_gnss.csv", format_poses(dep.gnss.truth))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "id": dep.experiment_id,
        "systems": list(SYSTEMS),
        "metadata": {
            "source": "synthetic",
            "path": _jsonable(dataclasses.asdict(dep.path)),
            "noise": dataclasses.asdict(dep.noise),
            "stations": [_jsonable(dataclasses.asdict(s)) for s in dep.stations],
            "truth_frames": {"truth.csv": dep.stations[0].name, "truth_gnss.csv": dep.origin.frame},
        },
    }
    if spec is not None:
        manifest["metadata"]["spec"] = spec
    write_text(exp.manifest_path, dump_json(manifest))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj
