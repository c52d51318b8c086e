"""On-disk formats for depth, masks, poses, features, and models.

* Depth: binary 16-bit PGM (P5, maxval 65535), big-endian, values in
  millimeters. Loaders return meters; writers round meters to the
  nearest millimeter and clip to the representable range.
* Masks: binary 8-bit PGM, 0 = outside, 255 = inside (any non-zero
  value reads as inside).
* Poses: JSON ``{"R": [9 reals, row-major], "t": [3 reals, meters]}``.
* Intrinsics: JSON with fx, fy, cx, cy, width, height.
* Feature grids: raw blob with magic ``ORYT``, three unsigned 32-bit
  little-endian dims H, W, D, then H*W*D float32 values, C order.
* Models: whitespace-separated XYZ text plus a JSON sidecar (same stem,
  ``.json``) holding the diameter and symmetry transforms.

JSON writers sort keys and end with a newline, so identical data always
produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, ObjectModel, Pose
from .matchgen import GtPair

FEATURE_MAGIC = b"ORYT"


# ---------------------------------------------------------------- JSON --


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, separators=(",", ": "), indent=1)
    Path(path).write_text(text + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# ----------------------------------------------------------------- PGM --


def _read_pgm_header(data: bytes) -> tuple[int, int, int, int]:
    """Parse a P5 header; returns (width, height, maxval, data offset)."""
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
    return fields[0], fields[1], fields[2], pos + 1  # one whitespace after maxval


def write_depth(path, depth_m) -> None:
    """Write a depth map in meters as a 16-bit millimeter PGM."""
    arr = np.asarray(depth_m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("depth must be 2D")
    mm = np.clip(np.round(arr * 1000.0), 0, 65535).astype(">u2")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(mm.tobytes())


def read_depth(path) -> np.ndarray:
    """Read a 16-bit millimeter PGM as a depth map in meters."""
    data = Path(path).read_bytes()
    w, h, maxval, offset = _read_pgm_header(data)
    if maxval != 65535:
        raise ValueError(f"depth PGM must have maxval 65535, got {maxval}")
    mm = np.frombuffer(data, dtype=">u2", count=h * w, offset=offset)
    return mm.reshape(h, w).astype(np.float64) * 0.001


def write_mask(path, mask) -> None:
    arr = np.asarray(mask).astype(bool)
    if arr.ndim != 2:
        raise ValueError("mask must be 2D")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write((arr.astype(np.uint8) * 255).tobytes())


def read_mask(path) -> np.ndarray:
    data = Path(path).read_bytes()
    w, h, maxval, offset = _read_pgm_header(data)
    if maxval != 255:
        raise ValueError(f"mask PGM must have maxval 255, got {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=offset)
    return raw.reshape(h, w) > 0


# ---------------------------------------------------------------- poses --


def pose_to_dict(pose: Pose) -> dict:
    return {
        "R": [float(v) for v in pose.rotation.ravel()],
        "t": [float(v) for v in pose.translation],
    }


def pose_from_dict(payload: dict) -> Pose:
    rot = np.asarray(payload["R"], dtype=np.float64).reshape(3, 3)
    t = np.asarray(payload["t"], dtype=np.float64)
    return Pose(rot, t)


def write_pose(path, pose: Pose) -> None:
    write_json(path, pose_to_dict(pose))


def read_pose(path) -> Pose:
    return pose_from_dict(read_json(path))


# ----------------------------------------------------------- intrinsics --


def write_intrinsics(path, intrinsics: CameraIntrinsics) -> None:
    write_json(
        path,
        {
            "fx": intrinsics.fx,
            "fy": intrinsics.fy,
            "cx": intrinsics.cx,
            "cy": intrinsics.cy,
            "width": intrinsics.width,
            "height": intrinsics.height,
        },
    )


def read_intrinsics(path) -> CameraIntrinsics:
    d = read_json(path)
    return CameraIntrinsics(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
    )


# ------------------------------------------------------------- features --


def write_features(path, features) -> None:
    arr = np.asarray(features)
    if arr.ndim != 3:
        raise ValueError("feature grid must be (H, W, D)")
    h, w, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", h, w, d))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != FEATURE_MAGIC:
        raise ValueError("bad feature file magic")
    h, w, d = struct.unpack("<III", data[4:16])
    expected = h * w * d
    values = np.frombuffer(data, dtype="<f4", count=expected, offset=16)
    if len(values) != expected:
        raise ValueError("feature file truncated")
    return values.reshape(h, w, d).astype(np.float64)


# --------------------------------------------------------------- models --


def write_model(path, model: ObjectModel) -> None:
    """Write XYZ text plus the metadata sidecar next to it."""
    path = Path(path)
    lines = [f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}" for p in model.points]
    path.write_text("\n".join(lines) + "\n")
    write_json(
        path.with_suffix(".json"),
        {
            "diameter": model.diameter_m,
            "symmetries": [pose_to_dict(s) for s in model.symmetries],
        },
    )


def read_model(path) -> ObjectModel:
    path = Path(path)
    points = np.loadtxt(path, dtype=np.float64, ndmin=2)
    meta = read_json(path.with_suffix(".json"))
    return ObjectModel(
        points=points,
        diameter_m=float(meta["diameter"]),
        symmetries=tuple(pose_from_dict(s) for s in meta["symmetries"]),
    )


# -------------------------------------------------------------- matches --


def write_matches(path, pair: GtPair) -> None:
    write_json(
        path,
        {
            "anchor": [[int(u), int(v)] for u, v in pair.anchor],
            "query": [[int(u), int(v)] for u, v in pair.query],
            "relative_pose": pose_to_dict(pair.relative),
            "count": len(pair),
        },
    )


def read_matches(path) -> GtPair:
    d = read_json(path)
    anchor = np.asarray(d["anchor"], dtype=np.int64).reshape(-1, 2)
    query = np.asarray(d["query"], dtype=np.int64).reshape(-1, 2)
    return GtPair(
        anchor=anchor, query=query, relative=pose_from_dict(d["relative_pose"])
    )
