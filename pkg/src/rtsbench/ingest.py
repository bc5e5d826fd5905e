"""Parsing of RTS and GNSS logs, and conversion of raw measurements to Cartesian points.

File formats (UTF-8, ``.`` decimal point, LF or CRLF line endings):

RTS log::

    # station=station1
    # target=prism1
    # angle_unit=deg          (deg or rad; rad when absent)
    t,azimuth,elevation,slant_distance
    12.500,45.0,10.0,25.000

GNSS log (angles in decimal degrees)::

    # target=gnss0
    t,lat,lon,height,quality
    0.0,46.78,-71.27,95.2,FIX

GCP file (one row per control point, same polar convention as RTS logs)::

    # station=station0
    # angle_unit=rad
    gcp,azimuth,elevation,slant_distance

Origin file: one ``lat,lon,height`` row in decimal degrees and meters, with an
optional header line.

A malformed header aborts. Malformed rows are skipped and reported with their
line number; if more than 10 % of data rows are skipped the whole file is
rejected, as that usually means the wrong file was supplied.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable

import numpy as np

from .core import TargetId, TargetKind, TargetTrajectory, TimedPoint

MAX_SKIP_FRACTION = 0.10

# WGS-84
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

RTS_HEADER = ("t", "azimuth", "elevation", "slant_distance")
GNSS_HEADER = ("t", "lat", "lon", "height", "quality")
GCP_HEADER = ("gcp", "azimuth", "elevation", "slant_distance")
ORIGIN_HEADER = ("lat", "lon", "height")

TWO_PI = 2.0 * math.pi


class IngestError(ValueError):
    """A file cannot be used at all (bad header, too many bad rows, bad metadata)."""


class FixQuality(str, Enum):
    RTK_FIXED = "rtk_fixed"
    RTK_FLOAT = "rtk_float"
    SINGLE = "single"


QUALITY_TOKENS = {"FIX": FixQuality.RTK_FIXED, "FLOAT": FixQuality.RTK_FLOAT, "SINGLE": FixQuality.SINGLE}
QUALITY_NAMES = {v: k for k, v in QUALITY_TOKENS.items()}


@dataclass(frozen=True)
class RtsObservation:
    t: float
    azimuth: float
    elevation: float
    slant_distance: float
    station: str
    target: TargetId

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.t, self.azimuth, self.elevation, self.slant_distance)):
            raise ValueError("non-finite observation")
        if self.slant_distance <= 0:
            raise ValueError(f"slant distance must be positive, got {self.slant_distance}")
        if abs(self.elevation) >= math.pi / 2:
            raise ValueError(f"elevation {self.elevation} rad outside (-pi/2, pi/2)")
        if not 0.0 <= self.azimuth < TWO_PI:
            object.__setattr__(self, "azimuth", _wrap_azimuth(self.azimuth))


@dataclass(frozen=True)
class GeodeticOrigin:
    latitude: float
    longitude: float
    ellipsoidal_height: float

    def __post_init__(self):
        _check_geodetic(self.latitude, self.longitude, self.ellipsoidal_height)
        object.__setattr__(self, "longitude", _wrap_longitude(self.longitude))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, height: float) -> "GeodeticOrigin":
        return cls(math.radians(lat_deg), math.radians(lon_deg), height)

    @property
    def frame(self) -> str:
        return "enu@origin"


@dataclass(frozen=True)
class GnssFix:
    t: float
    latitude: float
    longitude: float
    ellipsoidal_height: float
    fix_quality: FixQuality
    target: TargetId

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("non-finite timestamp")
        _check_geodetic(self.latitude, self.longitude, self.ellipsoidal_height)
        object.__setattr__(self, "longitude", _wrap_longitude(self.longitude))


@dataclass
class ParsedLog:
    """Records of one file plus what was dropped on the way."""

    records: list
    skipped: list[tuple[int, str]] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    station: str | None = None
    target: TargetId | None = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _wrap_azimuth(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    if a < 0:
        a += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2 pi
    return 0.0 if a >= TWO_PI else a


def _wrap_longitude(lon: float) -> float:
    return -math.pi if lon == math.pi else lon


def _check_geodetic(lat: float, lon: float, h: float) -> None:
    if not all(math.isfinite(v) for v in (lat, lon, h)):
        raise ValueError("non-finite geodetic coordinate")
    if abs(lat) > math.pi / 2:
        raise ValueError(f"latitude {math.degrees(lat):.9g} deg out of range")
    if not -math.pi <= lon <= math.pi:
        raise ValueError(f"longitude {math.degrees(lon):.9g} deg out of range")


# ---------------------------------------------------------------- table reading


def _read_text(stream: bytes | str | BinaryIO) -> str:
    if isinstance(stream, str):
        return stream
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"file is not valid UTF-8: {exc}") from None


def _split_table(text: str, header: tuple[str, ...]):
    """Return (metadata, data rows as (line number, fields)).

    Comment lines before the header carry ``key=value`` metadata; comment and
    blank lines after it are ignored.
    """
    metadata: dict[str, str] = {}
    rows: list[tuple[int, list[str]]] = []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if not seen_header and "=" in body:
                key, _, value = body.partition("=")
                metadata[key.strip()] = value.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if not seen_header:
            if tuple(fields) != header:
                raise IngestError(f"line {lineno}: expected header {','.join(header)!r}, got {line!r}")
            seen_header = True
            continue
        rows.append((lineno, fields))
    if not seen_header:
        raise IngestError(f"missing header {','.join(header)!r}")
    return metadata, rows


def _float(token: str) -> float:
    v = float(token)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {token!r}")
    return v


def _enforce_skip_policy(n_rows: int, skipped: list[tuple[int, str]], what: str) -> None:
    if n_rows and len(skipped) / n_rows > MAX_SKIP_FRACTION:
        first = "; ".join(f"line {n}: {why}" for n, why in skipped[:3])
        raise IngestError(
            f"{what}: {len(skipped)} of {n_rows} rows invalid (> {MAX_SKIP_FRACTION:.0%}), "
            f"probably the wrong file ({first})"
        )


def _angle_scale(metadata: dict[str, str]) -> float:
    unit = metadata.get("angle_unit", "rad").lower()
    if unit == "deg":
        return math.pi / 180.0
    if unit == "rad":
        return 1.0
    raise IngestError(f"unknown angle_unit {unit!r} (expected deg or rad)")


def _resolve_target(metadata: dict[str, str], target: TargetId | None, kind: TargetKind) -> TargetId:
    label = metadata.get("target")
    if label is not None:
        try:
            parsed = TargetId.parse(label)
        except ValueError as exc:
            raise IngestError(str(exc)) from None
        if parsed.kind is not kind:
            raise IngestError(f"target {label!r} is not a {kind.value}")
        if target is not None and target != parsed:
            raise IngestError(f"file declares target {parsed}, caller expected {target}")
        return parsed
    if target is None:
        raise IngestError("no '# target=' metadata and no target given")
    return target


# ---------------------------------------------------------------- RTS


def parse_rts_log(
    stream: bytes | str | BinaryIO, station: str | None = None, target: TargetId | None = None
) -> ParsedLog:
    """Parse an RTS tracking log into ``RtsObservation`` records (file order).

    Rows whose timestamp does not increase are skipped like other bad rows.
    """
    metadata, rows = _split_table(_read_text(stream), RTS_HEADER)
    declared = metadata.get("station")
    if declared is not None and station is not None and declared != station:
        raise IngestError(f"file declares station {declared!r}, caller expected {station!r}")
    station = station or declared
    if not station:
        raise IngestError("no '# station=' metadata and no station given")
    target = _resolve_target(metadata, target, TargetKind.PRISM)
    scale = _angle_scale(metadata)

    records: list[RtsObservation] = []
    skipped: list[tuple[int, str]] = []
    last_t = -math.inf
    for lineno, fields in rows:
        try:
            if len(fields) != len(RTS_HEADER):
                raise ValueError(f"expected {len(RTS_HEADER)} fields, got {len(fields)}")
            t, az, el, d = (_float(f) for f in fields)
            obs = RtsObservation(t, az * scale, el * scale, d, station, target)
            if t <= last_t:
                raise ValueError(f"timestamp {t} does not increase")
        except ValueError as exc:
            skipped.append((lineno, str(exc)))
            continue
        records.append(obs)
        last_t = t
    _enforce_skip_policy(len(rows), skipped, "RTS log")
    return ParsedLog(records, skipped, metadata, station=station, target=target)


def polar_to_cartesian(azimuth, elevation, slant_distance) -> np.ndarray:
    """Surveying polar to Cartesian; azimuth clockwise from +y, elevation above horizontal."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    d = np.asarray(slant_distance, dtype=float)
    horiz = d * np.cos(el)
    return np.stack([horiz * np.sin(az), horiz * np.cos(az), d * np.sin(el)], axis=-1)


def cartesian_to_polar(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of ``polar_to_cartesian``: (azimuth in [0, 2 pi), elevation, slant distance)."""
    p = np.asarray(points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    horiz = np.hypot(x, y)
    d = np.sqrt(horiz**2 + z**2)
    el = np.arctan2(z, horiz)
    az = np.mod(np.arctan2(x, y), TWO_PI)
    az = np.where(az >= TWO_PI, 0.0, az)
    return az, el, d


def rts_to_cartesian(obs: RtsObservation) -> TimedPoint:
    p = polar_to_cartesian(obs.azimuth, obs.elevation, obs.slant_distance)
    return TimedPoint(obs.t, p, obs.station)


def rts_trajectory(observations: Iterable[RtsObservation]) -> TargetTrajectory:
    """Station-frame trajectory of one prism from its observations."""
    obs = list(observations)
    if not obs:
        raise ValueError("no observations")
    stations = {o.station for o in obs}
    targets = {o.target for o in obs}
    if len(stations) != 1 or len(targets) != 1:
        raise ValueError("observations mix several stations or targets")
    arr = np.array([(o.t, o.azimuth, o.elevation, o.slant_distance) for o in obs])
    pts = polar_to_cartesian(arr[:, 1], arr[:, 2], arr[:, 3])
    return TargetTrajectory(targets.pop(), arr[:, 0], pts, stations.pop())


def parse_gcp_file(stream: bytes | str | BinaryIO, station: str | None = None) -> tuple[list[str], list[TimedPoint]]:
    """Static control-point sightings of one station, as (ids, station-frame points).

    Every row must be valid: a calibration silently missing a point would
    misalign the correspondences.
    """
    metadata, rows = _split_table(_read_text(stream), GCP_HEADER)
    declared = metadata.get("station")
    if declared is not None and station is not None and declared != station:
        raise IngestError(f"GCP file declares station {declared!r}, caller expected {station!r}")
    station = station or declared
    if not station:
        raise IngestError("GCP file has no '# station=' metadata and no station given")
    scale = _angle_scale(metadata)
    ids, points = [], []
    for lineno, fields in rows:
        try:
            if len(fields) != len(GCP_HEADER):
                raise ValueError(f"expected {len(GCP_HEADER)} fields, got {len(fields)}")
            az, el, d = (_float(f) for f in fields[1:])
            obs = RtsObservation(0.0, az * scale, el * scale, d, station, TargetId(TargetKind.PRISM, 0))
        except ValueError as exc:
            raise IngestError(f"GCP file line {lineno}: {exc}") from None
        if fields[0] in ids:
            raise IngestError(f"GCP file line {lineno}: duplicate control point {fields[0]!r}")
        ids.append(fields[0])
        points.append(rts_to_cartesian(obs))
    return ids, points


# ---------------------------------------------------------------- GNSS


def parse_gnss_log(stream: bytes | str | BinaryIO, target: TargetId | None = None) -> ParsedLog:
    metadata, rows = _split_table(_read_text(stream), GNSS_HEADER)
    target = _resolve_target(metadata, target, TargetKind.GNSS_ANTENNA)
    records: list[GnssFix] = []
    skipped: list[tuple[int, str]] = []
    last_t = -math.inf
    for lineno, fields in rows:
        try:
            if len(fields) != len(GNSS_HEADER):
                raise ValueError(f"expected {len(GNSS_HEADER)} fields, got {len(fields)}")
            t, lat, lon, h = (_float(f) for f in fields[:4])
            quality = QUALITY_TOKENS.get(fields[4].upper())
            if quality is None:
                raise ValueError(f"unknown quality token {fields[4]!r}")
            fix = GnssFix(t, math.radians(lat), math.radians(lon), h, quality, target)
            if t <= last_t:
                raise ValueError(f"timestamp {t} does not increase")
        except ValueError as exc:
            skipped.append((lineno, str(exc)))
            continue
        records.append(fix)
        last_t = t
    _enforce_skip_policy(len(rows), skipped, "GNSS log")
    return ParsedLog(records, skipped, metadata, target=target)


def parse_origin(stream: bytes | str | BinaryIO) -> GeodeticOrigin:
    lines = [ln.strip() for ln in _read_text(stream).splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if lines and tuple(f.strip() for f in lines[0].split(",")) == ORIGIN_HEADER:
        lines = lines[1:]
    if len(lines) != 1:
        raise IngestError(f"origin file must hold exactly one lat,lon,height row, found {len(lines)}")
    try:
        fields = [f.strip() for f in lines[0].split(",")]
        if len(fields) != 3:
            raise ValueError(f"expected 3 fields, got {len(fields)}")
        lat, lon, h = (_float(f) for f in fields)
        return GeodeticOrigin.from_degrees(lat, lon, h)
    except ValueError as exc:
        raise IngestError(f"origin file: {exc}") from None


def geodetic_to_ecef(lat, lon, h) -> np.ndarray:
    lat, lon, h = (np.asarray(v, dtype=float) for v in (lat, lon, h))
    s = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * s * s)
    return np.stack(
        [(n + h) * np.cos(lat) * np.cos(lon), (n + h) * np.cos(lat) * np.sin(lon), (n * (1.0 - WGS84_E2) + h) * s],
        axis=-1,
    )


def ecef_to_geodetic(xyz, iterations: int = 10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed-point latitude iteration; converges to double precision well within 10 steps near the surface."""
    p3 = np.asarray(xyz, dtype=float)
    x, y, z = p3[..., 0], p3[..., 1], p3[..., 2]
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(iterations):
        s = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * s * s)
        h = p * np.cos(lat) + z * s - WGS84_A * np.sqrt(1.0 - WGS84_E2 * s * s)
        lat = np.arctan2(z, p * (1.0 - WGS84_E2 * n / (n + h)))
    s = np.sin(lat)
    h = p * np.cos(lat) + z * s - WGS84_A * np.sqrt(1.0 - WGS84_E2 * s * s)
    return lat, lon, h


def enu_rotation(lat: float, lon: float) -> np.ndarray:
    """Rows are the east, north and up unit vectors expressed in ECEF."""
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([[-so, co, 0.0], [-sl * co, -sl * so, cl], [cl * co, cl * so, sl]])


def geodetic_to_enu_array(lat, lon, h, origin: GeodeticOrigin) -> np.ndarray:
    ref = geodetic_to_ecef(origin.latitude, origin.longitude, origin.ellipsoidal_height)
    d = geodetic_to_ecef(lat, lon, h) - ref
    return d @ enu_rotation(origin.latitude, origin.longitude).T


def enu_to_geodetic_array(enu, origin: GeodeticOrigin) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ref = geodetic_to_ecef(origin.latitude, origin.longitude, origin.ellipsoidal_height)
    ecef = np.asarray(enu, dtype=float) @ enu_rotation(origin.latitude, origin.longitude) + ref
    return ecef_to_geodetic(ecef)


def geodetic_to_enu(fix: GnssFix, origin: GeodeticOrigin) -> TimedPoint:
    p = geodetic_to_enu_array(fix.latitude, fix.longitude, fix.ellipsoidal_height, origin)
    return TimedPoint(fix.t, p, origin.frame)


def gnss_trajectory(fixes: Iterable[GnssFix], origin: GeodeticOrigin, admit_float: bool = False) -> TargetTrajectory:
    """Local ENU trajectory of one antenna; only RTK-fixed (and optionally float) fixes are kept."""
    allowed = {FixQuality.RTK_FIXED} | ({FixQuality.RTK_FLOAT} if admit_float else set())
    fixes = list(fixes)
    targets = {f.target for f in fixes}
    if len(targets) != 1:
        raise ValueError("fixes must come from exactly one antenna")
    kept = [f for f in fixes if f.fix_quality in allowed]
    arr = np.array([(f.t, f.latitude, f.longitude, f.ellipsoidal_height) for f in kept]).reshape(-1, 4)
    enu = geodetic_to_enu_array(arr[:, 1], arr[:, 2], arr[:, 3], origin)
    return TargetTrajectory(targets.pop(), arr[:, 0], enu.reshape(-1, 3), origin.frame)


# ---------------------------------------------------------------- writers


def _num(v: float) -> str:
    return repr(float(v))


def _meta_lines(meta: dict[str, str]) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items()]


def format_rts_log(observations: Iterable[RtsObservation], station: str, target: TargetId, extra_meta=None) -> str:
    """Serialize observations with angles in radians (exact round trip)."""
    meta = {"station": station, "target": target.label, "angle_unit": "rad", **(extra_meta or {})}
    out = io.StringIO()
    out.write("\n".join(_meta_lines(meta)) + "\n")
    out.write(",".join(RTS_HEADER) + "\n")
    for o in observations:
        out.write(f"{_num(o.t)},{_num(o.azimuth)},{_num(o.elevation)},{_num(o.slant_distance)}\n")
    return out.getvalue()


def format_gnss_log(fixes: Iterable[GnssFix], target: TargetId, extra_meta=None) -> str:
    meta = {"target": target.label, **(extra_meta or {})}
    out = io.StringIO()
    out.write("\n".join(_meta_lines(meta)) + "\n")
    out.write(",".join(GNSS_HEADER) + "\n")
    for f in fixes:
        out.write(
            f"{_num(f.t)},{_num(math.degrees(f.latitude))},{_num(math.degrees(f.longitude))},"
            f"{_num(f.ellipsoidal_height)},{QUALITY_NAMES[f.fix_quality]}\n"
        )
    return out.getvalue()


def format_gcp_file(ids: list[str], polar: np.ndarray, station: str) -> str:
    """``polar`` rows are (azimuth, elevation, slant distance) in radians and meters."""
    out = io.StringIO()
    out.write(f"# station={station}\n# angle_unit=rad\n")
    out.write(",".join(GCP_HEADER) + "\n")
    for gid, (az, el, d) in zip(ids, polar):
        out.write(f"{gid},{_num(az)},{_num(el)},{_num(d)}\n")
    return out.getvalue()


def format_origin(origin: GeodeticOrigin) -> str:
    return (
        ",".join(ORIGIN_HEADER)
        + "\n"
        + f"{_num(math.degrees(origin.latitude))},{_num(math.degrees(origin.longitude))},"
        f"{_num(origin.ellipsoidal_height)}\n"
    )
