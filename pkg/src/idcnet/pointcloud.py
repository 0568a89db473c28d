"""Direct point-cloud extraction from RGB-D sequences and ASCII PLY I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import unproject


@dataclass
class PointCloud:
    points: np.ndarray  # n x 3, scene units
    colors: np.ndarray  # n x 3, [0, 1]

    def __len__(self):
        return len(self.points)


def fuse(seq, frame_stride: int = 1, pixel_stride: int = 1, max_depth: float = np.inf) -> PointCloud:
    """Back-project every sampled pixel with depth in ``(0, max_depth]`` into the world frame.

    No deduplication or outlier filtering is applied.
    """
    if frame_stride < 1 or pixel_stride < 1:
        raise ValueError("strides must be >= 1")
    intr = seq.trajectory.intrinsics
    pts, cols = [], []
    for i in range(0, len(seq), frame_stride):
        depth = np.asarray(seq.depth[i], dtype=np.float64)[::pixel_stride, ::pixel_stride]
        rgb = np.asarray(seq.rgb[i], dtype=np.float64)[::pixel_stride, ::pixel_stride]
        vv, uu = np.meshgrid(
            np.arange(0, intr.height, pixel_stride, dtype=np.float64),
            np.arange(0, intr.width, pixel_stride, dtype=np.float64),
            indexing="ij",
        )
        ok = np.isfinite(depth) & (depth > 0) & (depth <= max_depth)
        pts.append(unproject(intr, seq.trajectory[i], uu[ok], vv[ok], depth[ok]))
        cols.append(rgb[ok])
    return PointCloud(np.concatenate(pts), np.concatenate(cols))


def export_ply(cloud: PointCloud, path) -> None:
    """ASCII PLY with float xyz at full precision and 8-bit colors."""
    if len(cloud) == 0:
        raise ValueError("cannot export an empty point cloud")
    rgb8 = np.clip(np.rint(np.asarray(cloud.colors) * 255), 0, 255).astype(np.uint8)
    header = "\n".join(
        [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(cloud)}",
            "property double x",
            "property double y",
            "property double z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "end_header",
        ]
    )
    rows = [
        f"{x!r} {y!r} {z!r} {r} {g} {b}"
        for (x, y, z), (r, g, b) in zip(np.asarray(cloud.points, dtype=np.float64).tolist(), rgb8.tolist())
    ]
    Path(path).write_text(header + "\n" + "\n".join(rows) + "\n")


def read_ply(path) -> PointCloud:
    """Parse the files written by :func:`export_ply`; colors come back in [0, 1]."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise FormatError("not a PLY file")
    try:
        end = lines.index("end_header")
    except ValueError:
        raise FormatError("PLY header has no end_header") from None
    n = None
    for line in lines[:end]:
        if line.startswith("element vertex"):
            n = int(line.split()[2])
    if n is None:
        raise FormatError("PLY header has no vertex element")
    body = lines[end + 1 : end + 1 + n]
    if len(body) != n:
        raise FormatError(f"header declares {n} vertices, file has {len(body)}")
    data = np.array([row.split() for row in body], dtype=np.float64).reshape(n, 6)
    return PointCloud(data[:, :3], data[:, 3:] / 255.0)
