"""On-disk formats: PFM depth, PPM images, poses, point sets, checkpoints.

Float maps use grayscale PFM ("Pf", negative scale = little-endian,
rows stored bottom-to-top, float32). Images are binary PPM (P6).
Checkpoints are a flat binary container: magic "PDAC", version, tensor
count, then per-tensor records of name, rank, extents, and float64
little-endian payload. Invalid depth pixels are stored as 0.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .camera import CameraModel
from .depthmap import DepthMap
from .errors import CheckpointError, InputError

CHECKPOINT_MAGIC = b"PDAC"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# PFM float maps


def write_pfm(path, depth) -> None:
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    if isinstance(depth, DepthMap):
        values = np.where(depth.mask, values, 0.0)
    if values.ndim != 2:
        raise InputError(f"PFM writer expects a 2-D map, got shape {values.shape}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        f.write(np.flipud(values).astype("<f4").tobytes())


def read_pfm(path) -> DepthMap:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise InputError(f"{path}: not a grayscale PFM (magic {magic!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise InputError(f"{path}: malformed PFM size line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        payload = f.read(w * h * 4)
    if len(payload) != w * h * 4:
        raise InputError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    values = np.flipud(values).astype(np.float64)
    return DepthMap(values, values > 0)


# ---------------------------------------------------------------------------
# PPM images


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"PPM writer expects (H, W, 3), got shape {image.shape}")
    quantized = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = quantized.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(quantized.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"P6":
            raise InputError(f"{path}: not a binary PPM")
        dims = f.readline().split()
        maxval = int(f.readline().strip())
        if len(dims) != 2 or maxval != 255:
            raise InputError(f"{path}: unsupported PPM header")
        w, h = int(dims[0]), int(dims[1])
        payload = f.read(w * h * 3)
    if len(payload) != w * h * 3:
        raise InputError(f"{path}: truncated PPM payload")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# poses, intrinsics, point sets


def write_poses(path, poses) -> None:
    rows = [np.asarray(p, dtype=np.float64).reshape(16) for p in poses]
    np.savetxt(path, np.stack(rows), fmt="%.17g")


def read_poses(path) -> list[np.ndarray]:
    flat = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if flat.shape[1] != 16:
        raise InputError(f"{path}: poses must have 16 values per line")
    return [row.reshape(4, 4) for row in flat]


def write_intrinsics(path, cam: CameraModel) -> None:
    Path(path).write_text(
        f"{cam.fx:.17g} {cam.fy:.17g} {cam.cx:.17g} {cam.cy:.17g} {cam.width} {cam.height}\n"
    )


def read_intrinsics(path) -> dict:
    parts = Path(path).read_text().split()
    if len(parts) != 6:
        raise InputError(f"{path}: intrinsics need 6 values (fx fy cx cy width height)")
    return {
        "fx": float(parts[0]),
        "fy": float(parts[1]),
        "cx": float(parts[2]),
        "cy": float(parts[3]),
        "width": int(parts[4]),
        "height": int(parts[5]),
    }


def write_points(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise InputError(f"point writer expects (N, 3), got shape {points.shape}")
    np.savetxt(path, points, fmt="%.17g")


def read_points(path) -> np.ndarray:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.size == 0:
        return np.empty((0, 3))
    if pts.shape[1] != 3:
        raise InputError(f"{path}: expected one 'x y z' triple per line")
    return pts


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors; records are sorted by name so equal
    contents produce byte-identical files."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(arrays)))
        for name in sorted(arrays):
            data = np.ascontiguousarray(arrays[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise CheckpointError(f"tensor name too long: {name[:40]}...")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", data.ndim))
            for extent in data.shape:
                f.write(struct.pack("<I", extent))
            f.write(data.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
            offset += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            arrays[name] = data.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint") from exc
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after last record")
    return arrays
