"""On-disk formats: RFLD frame sequences, RFCK checkpoints, JSON configs and exports.

All binary payloads are little-endian. A reader either returns a complete,
validated object or raises; it never hands back partial data.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import BadMagic, ConfigError, CorruptHeader, InvalidFrame, IoError, VersionMismatch
from .fields import FieldConfig, FieldModel
from .geometry import is_rigid
from .radar import RadarConfig, RadarFrame
from .scene import SyntheticScene, Trajectory
from .training import TrainConfig

RFLD_MAGIC = b"RFLD"
RFLD_VERSION = 1
RFCK_MAGIC = b"RFCK"
RFCK_VERSION = 1

# magic, version u16, n_frames u32, n_azimuth u32, n_bins u32, json length u32
_RFLD_HEADER = struct.Struct("<4sHIIII")
# magic, version u16, json length u32
_RFCK_HEADER = struct.Struct("<4sHI")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def file_sha256(path) -> str:
    return hashlib.sha256(_read_bytes(path)).hexdigest()


# ---------------------------------------------------------------------------
# RFLD sequences
# ---------------------------------------------------------------------------

def _frame_nbytes(n_az: int, n_b: int) -> int:
    return 16 * 8 + n_az * 8 + n_az * n_b * 4


def encode_sequence(frames: Sequence[RadarFrame], cfg: RadarConfig | None = None, extra=None) -> bytes:
    frames = list(frames)
    if frames:
        n_az, n_b = frames[0].power.shape
    elif cfg is not None:
        n_az, n_b = cfg.n_azimuth, cfg.n_bins
    else:
        n_az = n_b = 0
    for i, f in enumerate(frames):
        if f.power.shape != (n_az, n_b):
            raise InvalidFrame(f"frame {i}: power shape {f.power.shape} != {(n_az, n_b)}")
        if not is_rigid(f.pose):
            raise InvalidFrame(f"frame {i}: pose is not a rigid transform")
        if not np.all(f.power >= 0):
            raise InvalidFrame(f"frame {i}: negative or NaN power")
    meta = {"radar": cfg.to_dict() if cfg is not None else None, "extra": extra or {}}
    meta_b = _json_bytes(meta)
    parts = [_RFLD_HEADER.pack(RFLD_MAGIC, RFLD_VERSION, len(frames), n_az, n_b, len(meta_b)), meta_b]
    for f in frames:
        parts.append(np.ascontiguousarray(f.pose, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(f.azimuths, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(f.power, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_sequence(data: bytes):
    """Returns (frames, radar config or None, extra dict)."""
    if len(data) < 4 or data[:4] != RFLD_MAGIC:
        raise BadMagic("not an RFLD file")
    if len(data) < _RFLD_HEADER.size:
        raise CorruptHeader("truncated header")
    _, version, n_frames, n_az, n_b, n_meta = _RFLD_HEADER.unpack_from(data, 0)
    if version != RFLD_VERSION:
        raise VersionMismatch(f"RFLD version {version}, expected {RFLD_VERSION}")
    off = _RFLD_HEADER.size
    expected = off + n_meta + n_frames * _frame_nbytes(n_az, n_b)
    if len(data) != expected:
        raise CorruptHeader(f"file has {len(data)} bytes, header implies {expected}")
    try:
        meta = json.loads(data[off:off + n_meta].decode("utf-8"))
        cfg = RadarConfig.from_dict(meta["radar"]) if meta.get("radar") is not None else None
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeader(f"bad config echo: {exc}") from exc
    if cfg is not None and (cfg.n_azimuth, cfg.n_bins) != (n_az, n_b):
        raise CorruptHeader("config echo disagrees with frame dimensions")
    off += n_meta
    frames = []
    for i in range(n_frames):
        pose = np.frombuffer(data, "<f8", 16, off).reshape(4, 4).astype(np.float64)
        off += 128
        az = np.frombuffer(data, "<f8", n_az, off).astype(np.float64)
        off += n_az * 8
        power = np.frombuffer(data, "<f4", n_az * n_b, off).reshape(n_az, n_b).astype(np.float32)
        off += n_az * n_b * 4
        if not is_rigid(pose) or not np.all(power >= 0):
            raise CorruptHeader(f"frame {i} violates pose/power invariants")
        frames.append(RadarFrame(pose, az, power))
    return frames, cfg, meta.get("extra", {})


def write_sequence(frames: Sequence[RadarFrame], path, cfg: RadarConfig | None = None, extra=None) -> None:
    _write_bytes(path, encode_sequence(frames, cfg, extra))


def read_sequence(path):
    """Returns (frames, radar config or None, extra dict)."""
    return decode_sequence(_read_bytes(path))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: FieldModel, path, extra: dict[str, Any] | None = None) -> None:
    params = model.parameters()
    meta = {
        "field": model.cfg.to_dict(),
        "params": [[k, list(v.shape)] for k, v in params.items()],
        "extra": extra or {},
    }
    meta_b = _json_bytes(meta)
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values())
    _write_bytes(path, _RFCK_HEADER.pack(RFCK_MAGIC, RFCK_VERSION, len(meta_b)) + meta_b + body)


def load_checkpoint(path):
    """Returns (model, extra dict)."""
    data = _read_bytes(path)
    if len(data) < 4 or data[:4] != RFCK_MAGIC:
        raise BadMagic("not an RFCK checkpoint")
    if len(data) < _RFCK_HEADER.size:
        raise CorruptHeader("truncated header")
    _, version, n_meta = _RFCK_HEADER.unpack_from(data, 0)
    if version != RFCK_VERSION:
        raise VersionMismatch(f"RFCK version {version}, expected {RFCK_VERSION}")
    off = _RFCK_HEADER.size
    try:
        meta = json.loads(data[off:off + n_meta].decode("utf-8"))
        fcfg = FieldConfig.from_dict(meta["field"])
        layout = [(k, tuple(s)) for k, s in meta["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeader(f"bad checkpoint header: {exc}") from exc
    off += n_meta
    model = FieldModel(fcfg, seed=0)
    live = model.parameters()
    if [(k, v.shape) for k, v in live.items()] != layout:
        raise CorruptHeader("parameter layout does not match the field config")
    total = sum(int(np.prod(s)) for _, s in layout) * 8
    if len(data) != off + total:
        raise CorruptHeader(f"checkpoint body has {len(data) - off} bytes, expected {total}")
    for k, shape in layout:
        n = int(np.prod(shape))
        live[k][...] = np.frombuffer(data, "<f8", n, off).reshape(shape)
        off += n * 8
    return model, meta.get("extra", {})


# ---------------------------------------------------------------------------
# JSON configs
# ---------------------------------------------------------------------------

def load_json(path) -> Any:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def write_json(obj, path) -> None:
    _write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _from_dict(cls, d, what):
    try:
        return cls.from_dict(d)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def radar_config_from(obj) -> RadarConfig:
    return _from_dict(RadarConfig, obj, "radar config")


def scene_from(obj) -> SyntheticScene:
    return _from_dict(SyntheticScene, obj, "scene")


def trajectory_from(obj) -> Trajectory:
    return _from_dict(Trajectory, obj, "trajectory")


def train_config_from(obj) -> TrainConfig:
    return _from_dict(TrainConfig, obj, "train config")


def field_config_from(obj) -> FieldConfig:
    return _from_dict(FieldConfig, obj, "field config")


def load_radar_config(path) -> RadarConfig:
    return radar_config_from(load_json(path))


def load_scene(path) -> SyntheticScene:
    return scene_from(load_json(path))


def load_trajectory(path) -> Trajectory:
    return trajectory_from(load_json(path))


def load_train_config(path) -> TrainConfig:
    return train_config_from(load_json(path))


# ---------------------------------------------------------------------------
# tabular / grid exports
# ---------------------------------------------------------------------------

HISTORY_COLUMNS = ("epoch", "L_W", "L_R", "L_P", "total")


def write_history_csv(history, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for row in history:
                w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_COLUMNS[1:]])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_history_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return [{"epoch": int(r["epoch"]), **{k: float(r[k]) for k in HISTORY_COLUMNS[1:]}} for r in rows]


def write_points_csv(points, path) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("x", "y"))
            w.writerows((repr(float(x)), repr(float(y))) for x, y in pts)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_points_csv(path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return np.array([[float(r["x"]), float(r["y"])] for r in rows], dtype=np.float64).reshape(-1, 2)


def write_voxels(grid, origin, resolution: float, path) -> Path:
    """Raw little-endian f32 block (C order) plus a ``<path>.json`` sidecar; returns the sidecar path."""
    g = np.ascontiguousarray(grid, dtype="<f4")
    _write_bytes(path, g.tobytes())
    side = Path(str(path) + ".json")
    write_json({"dims": list(g.shape), "origin": [float(v) for v in origin],
                "resolution": float(resolution), "dtype": "<f4", "order": "C"}, side)
    return side


def read_voxels(path):
    """Returns (grid, origin, resolution)."""
    side = load_json(str(path) + ".json")
    dims = tuple(int(d) for d in side["dims"])
    data = _read_bytes(path)
    if len(data) != int(np.prod(dims)) * 4:
        raise CorruptHeader("voxel block size does not match sidecar dims")
    grid = np.frombuffer(data, "<f4").reshape(dims).astype(np.float32)
    return grid, np.asarray(side["origin"], float), float(side["resolution"])
