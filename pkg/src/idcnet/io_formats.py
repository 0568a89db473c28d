"""Raw tensor container, RGB-D sequence directories, trajectory JSON and checkpoints.

Tensor file layout (little-endian)::

    b"IDCT" | u32 version=1 | u32 rank | u32 dims[rank] | f32 payload (row-major)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError
from .geometry import Trajectory
from .scenes import RgbdSequence

MAGIC = b"IDCT"
VERSION = 1
CKPT_MAGIC = b"IDCK"


def _encode_tensor(tensor) -> bytes:
    arr = np.asarray(tensor)
    if not np.all(np.isfinite(arr)):
        raise FormatError("refusing to write non-finite tensor")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack(f"<II{arr.ndim}I", VERSION, arr.ndim, *arr.shape)
    return header + arr.tobytes()


def _decode_tensor(buf: bytes, offset: int = 0):
    """Parse one tensor starting at ``offset``; returns ``(array, end_offset)``."""
    if len(buf) - offset < 12:
        raise TruncationError("header truncated", len(buf))
    if buf[offset : offset + 4] != MAGIC:
        raise FormatError(f"bad magic {buf[offset:offset + 4]!r}")
    version, rank = struct.unpack_from("<II", buf, offset + 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    pos = offset + 12
    if len(buf) - pos < 4 * rank:
        raise TruncationError("dims truncated", len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    nbytes = 4 * int(np.prod(dims, dtype=np.int64))
    if len(buf) - pos < nbytes:
        raise TruncationError(
            f"payload truncated: expected {nbytes} bytes, got {len(buf) - pos}", len(buf)
        )
    arr = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise FormatError("payload contains non-finite values")
    return arr.astype(np.float32), pos + nbytes


def write_tensor(path, tensor) -> None:
    Path(path).write_bytes(_encode_tensor(tensor))


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = _decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after payload")
    return arr


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(json.dumps(traj.to_dict(), indent=1))


def read_trajectory(path) -> Trajectory:
    try:
        return Trajectory.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed trajectory JSON ({exc})") from exc


def write_sequence(directory, seq) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(len(seq)):
        write_tensor(d / f"rgb_{i:04d}.idct", seq.rgb[i])
        write_tensor(d / f"depth_{i:04d}.idct", seq.depth[i])
    write_trajectory(d / "trajectory.json", seq.trajectory)
    (d / "meta.json").write_text(json.dumps(seq.meta, indent=1))


def read_sequence(directory):
    d = Path(directory)
    traj_path = d / "trajectory.json"
    if not traj_path.exists():
        raise FileNotFoundError(f"{traj_path} missing")
    traj = read_trajectory(traj_path)
    rgb, depth = [], []
    for i in range(len(traj)):
        for kind, store in (("rgb", rgb), ("depth", depth)):
            p = d / f"{kind}_{i:04d}.idct"
            if not p.exists():
                raise FileNotFoundError(f"{kind} file for frame {i} missing: {p}")
            store.append(read_tensor(p))
    extra = sorted(d.glob("rgb_*.idct"))
    if len(extra) != len(traj):
        raise FormatError(f"{len(extra)} rgb frames on disk but trajectory has {len(traj)} poses")
    meta_path = d / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return RgbdSequence(np.stack(rgb), np.stack(depth), traj, meta)


def write_checkpoint(path, tensors: dict, config: dict) -> None:
    """Named tensors behind a JSON header: ``IDCK | u32 header_len | header | IDCT records``."""
    names = list(tensors)
    header = json.dumps({"config": config, "entries": names}).encode()
    blobs = [_encode_tensor(tensors[n]) for n in names]
    Path(path).write_bytes(CKPT_MAGIC + struct.pack("<I", len(header)) + header + b"".join(blobs))


def read_checkpoint(path):
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {buf[:4]!r}")
    if len(buf) < 8:
        raise TruncationError("checkpoint header truncated", len(buf))
    (hlen,) = struct.unpack_from("<I", buf, 4)
    if len(buf) < 8 + hlen:
        raise TruncationError("checkpoint header truncated", len(buf))
    header = json.loads(buf[8 : 8 + hlen])
    pos = 8 + hlen
    tensors = {}
    for name in header["entries"]:
        tensors[name], pos = _decode_tensor(buf, pos)
    if pos != len(buf):
        raise FormatError("trailing bytes after last checkpoint entry")
    return tensors, header["config"]
