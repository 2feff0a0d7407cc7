"""File formats and manifest plumbing for the pipeline commands.

Pose files follow the KITTI odometry layout.  Depth, flow, and feature
files are raw little-endian binaries with JSON sidecars or magic headers,
so every artifact round-trips bit-faithfully and two runs with the same
inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import DepthMap, FlowField
from .se3 import (
    Pose,
    Trajectory,
    compose,
    inverse,
    nearest_rotation,
    rotation_defect,
)

# Orthogonality slack accepted from pose files before a row is rejected.
KITTI_ROTATION_TOL = 1e-3

FEATURE_MAGIC = b"ZVFM"

# Record keys interpreted as file references when reading a manifest.
PATH_KEYS = ("image", "prev_image", "cur_image", "depth", "flow", "features")

_LUMA = (0.299, 0.587, 0.114)


class FormatError(ValueError):
    """Malformed or inconsistent data in an input file."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def dumps_json(obj) -> str:
    """Deterministic, human-readable JSON serialization."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


# ---------------------------------------------------------------------------
# Poses


def read_kitti_poses(path) -> Trajectory:
    """Global poses, one 3x4 row-major [R|t] of 12 reals per line.

    Near-orthonormal rotations are re-projected onto the closest proper
    rotation; anything worse than KITTI_ROTATION_TOL, or a reflection, is
    rejected with its line number.  Files whose first pose is not the
    identity are re-expressed in the first camera's frame so the result is
    always a valid anchored trajectory.
    """
    poses = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 12:
                raise FormatError(f"{path}: line {lineno}: expected 12 fields, got {len(fields)}")
            try:
                vals = np.array([float(x) for x in fields])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
            rot = vals.reshape(3, 4)[:, :3]
            trans = vals.reshape(3, 4)[:, 3]
            if rotation_defect(rot) > KITTI_ROTATION_TOL:
                raise FormatError(f"{path}: line {lineno}: rotation not orthonormal within {KITTI_ROTATION_TOL:g}")
            if np.linalg.det(rot) <= 0.0:
                raise FormatError(f"{path}: line {lineno}: rotation part is a reflection")
            poses.append(Pose(nearest_rotation(rot), trans))
    if not poses:
        raise FormatError(f"{path}: no poses")
    first = poses[0]
    if rotation_defect(first.rot) > 0 or np.abs(first.trans).max() > 0:
        undo = inverse(first)
        poses = [compose(undo, p) for p in poses]
    return Trajectory(tuple(poses))


def write_kitti_poses(path, traj) -> None:
    lines = []
    for pose in traj:
        m = np.hstack([pose.rot, pose.trans[:, None]])
        lines.append(" ".join(f"{x:.17g}" for x in m.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Depth


def _read_sidecar(path) -> dict:
    sidecar = Path(f"{path}.json")
    if not sidecar.exists():
        raise FormatError(f"{path}: missing sidecar {sidecar.name}")
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{sidecar}: invalid JSON: {e}") from None
    if "width" not in meta or "height" not in meta:
        raise FormatError(f"{sidecar}: sidecar must give width and height")
    return meta


def read_depth(path) -> DepthMap:
    """Metric depth: raw float32 plus sidecar, or 16-bit PNG in millimeters.

    Non-positive and non-finite readings become the invalid marker -1.
    """
    path = Path(path)
    if path.suffix.lower() == ".png":
        img = Image.open(path)
        if img.mode not in ("I", "I;16"):
            raise FormatError(f"{path}: depth PNG must be 16-bit grayscale, got mode {img.mode}")
        values = np.asarray(img, dtype=np.float64) / 1000.0
    else:
        meta = _read_sidecar(path)
        w, h = int(meta["width"]), int(meta["height"])
        units = meta.get("units", "meters")
        if units not in ("meters", "millimeters"):
            raise FormatError(f"{path}: unknown depth units {units!r}")
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
        if raw.size != w * h:
            raise FormatError(f"{path}: expected {w * h} floats, got {raw.size}")
        values = raw.astype(np.float64).reshape(h, w)
        if units == "millimeters":
            values = values / 1000.0
    values = np.where(np.isfinite(values) & (values > 0), values, -1.0)
    return DepthMap(values)


def write_depth(path, depth: DepthMap) -> None:
    """Mirror of read_depth; the format follows the file extension."""
    path = Path(path)
    values = depth.values
    if path.suffix.lower() == ".png":
        mm = np.where(depth.valid, np.clip(np.rint(values * 1000.0), 0, 65535), 0)
        Image.fromarray(mm.astype(np.uint16)).save(path)
        return
    ok = np.where(depth.valid, values, -1.0)
    path.write_bytes(ok.astype("<f4").tobytes())
    h, w = values.shape
    write_json(f"{path}.json", {"width": w, "height": h, "units": "meters"})


# ---------------------------------------------------------------------------
# Flow


def read_flow(path) -> FlowField:
    """Raw float32 pairs, row-major, u before v, with a width/height sidecar."""
    meta = _read_sidecar(path)
    w, h = int(meta["width"]), int(meta["height"])
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if raw.size != 2 * w * h:
        raise FormatError(f"{path}: expected {2 * w * h} floats, got {raw.size}")
    return FlowField(raw.astype(np.float64).reshape(h, w, 2))


def write_flow(path, flow: FlowField) -> None:
    Path(path).write_bytes(flow.values.astype("<f4").tobytes())
    h, w = flow.shape[:2]
    write_json(f"{path}.json", {"width": w, "height": h})


# ---------------------------------------------------------------------------
# Feature matrices


def read_features(path) -> np.ndarray:
    """k x d feature matrix: ZVFM binary, or CSV with one row per line."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] == FEATURE_MAGIC:
        if len(blob) < 12:
            raise FormatError(f"{path}: truncated feature header")
        k, d = struct.unpack("<II", blob[4:12])
        body = np.frombuffer(blob, dtype="<f4", offset=12)
        if body.size != k * d:
            raise FormatError(f"{path}: expected {k * d} floats, got {body.size}")
        return body.astype(np.float64).reshape(k, d)
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise FormatError(f"{path}: neither ZVFM binary nor CSV: {e}") from None


def write_features(path, z: np.ndarray) -> None:
    """Mirror of read_features; CSV when the extension is .csv."""
    path = Path(path)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    if path.suffix.lower() == ".csv":
        np.savetxt(path, z, delimiter=",", fmt="%.17g")
        return
    k, d = z.shape
    path.write_bytes(FEATURE_MAGIC + struct.pack("<II", k, d) + z.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Images


def read_image(path) -> np.ndarray:
    """Grayscale image in [0, 1]; RGB inputs are collapsed by luma weights."""
    img = Image.open(path)
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if img.mode == "RGB":
        rgb = np.asarray(img, dtype=np.float64) / 255.0
        return rgb @ np.array(_LUMA)
    raise FormatError(f"{path}: unsupported image mode {img.mode}")


def write_image(path, img: np.ndarray) -> None:
    """8-bit grayscale PNG of a [0, 1] intensity grid."""
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------------------
# Manifests


def resolve_manifest_path(manifest_path, ref: str) -> Path:
    """File reference from a manifest record, joined onto the manifest's
    directory.  Absolute references pass through unchanged."""
    return Path(manifest_path).parent / ref


def read_manifest(path) -> list[dict]:
    """JSON-lines records with file references checked but left verbatim.

    References are interpreted relative to the manifest's directory (see
    resolve_manifest_path); the strings themselves are preserved so an
    annotated copy of the manifest does not depend on where it was read.
    Records referencing files that do not exist get a "missing" key listing
    the offending fields.  Duplicate record ids are rejected.
    """
    path = Path(path)
    records = []
    seen = set()
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}: line {lineno}: invalid JSON: {e}") from None
            if not isinstance(rec, dict) or "id" not in rec:
                raise FormatError(f"{path}: line {lineno}: record must be an object with an id")
            if rec["id"] in seen:
                raise FormatError(f"{path}: line {lineno}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            missing = [
                key
                for key in PATH_KEYS
                if key in rec
                and isinstance(rec[key], str)
                and not resolve_manifest_path(path, rec[key]).exists()
            ]
            if missing:
                rec["missing"] = missing
            records.append(rec)
    return records


def write_manifest(path, records) -> None:
    """One compact, key-sorted JSON object per line."""
    lines = [
        json.dumps(_jsonable(rec), sort_keys=True, separators=(",", ":"))
        for rec in records
    ]
    Path(path).write_text("\n".join(lines) + "\n")
