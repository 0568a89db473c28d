"""Pinhole camera geometry: poses, back-projection, reprojection and Plücker rays.

Extrinsics are world-to-camera throughout: ``x_cam = R @ x_world + t``, so the
camera origin in world coordinates is ``-R.T @ t``. Pixel ``(u, v)`` is the
*center* of column ``u`` and row ``v``; there is no half-pixel offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    EmptyWarpError,
    InvalidDepthError,
    PixelBoundsError,
    ShapeError,
)

Z_EPS = 1e-6
ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float = 60.0) -> "Intrinsics":
        """Square pixels, principal point at the image center."""
        f = 0.5 * width / math.tan(math.radians(fov_x_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def downsample(self, factor: int) -> "Intrinsics":
        """Intrinsics of the grid obtained by folding ``factor``x``factor`` pixel blocks.

        Latent pixel ``i`` covers full-resolution centers ``factor*i .. factor*i+factor-1``,
        so its own center sits at ``factor*i + (factor-1)/2``.
        """
        if self.width % factor or self.height % factor:
            raise ShapeError(f"{self.width}x{self.height} not divisible by {factor}")
        off = (factor - 1) / 2
        return Intrinsics(
            self.fx / factor,
            self.fy / factor,
            (self.cx - off) / factor,
            (self.cy - off) / factor,
            self.width // factor,
            self.height // factor,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
            int(d["width"]), int(d["height"]),
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform. Rejects non-rotation ``R`` rather than repairing it."""

    R: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(R) - 1) > ORTHO_TOL:
            raise ValueError("R is not a proper rotation matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_center(cls, R, center) -> "Pose":
        """Build from a world-to-camera rotation and the camera center in world coordinates."""
        R = np.asarray(R, dtype=np.float64)
        return cls(R, -R @ np.asarray(center, dtype=np.float64))

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def __matmul__(self, other: "Pose") -> "Pose":
        # (self @ other)(x) = self(other(x))
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return np.allclose(self.R, other.R, atol=atol) and np.allclose(self.t, other.t, atol=atol)

    def to_dict(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["R"], dtype=np.float64).reshape(3, 3), d["t"])

    def __repr__(self):
        return f"Pose(R={self.R.tolist()}, t={self.t.tolist()})"


@dataclass
class Trajectory:
    poses: list
    intrinsics: Intrinsics

    def __post_init__(self):
        self.poses = list(self.poses)
        if not self.poses:
            raise ValueError("trajectory needs at least one pose")

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Trajectory(self.poses[i], self.intrinsics)
        return self.poses[i]

    def subsample(self, indices) -> "Trajectory":
        return Trajectory([self.poses[i] for i in indices], self.intrinsics)

    def relative_to_first(self) -> "Trajectory":
        """Re-express every pose with frame 0 as the world frame (frame 0 becomes identity)."""
        p0 = self.poses[0]
        return Trajectory([relative_pose(p0, p) for p in self.poses], self.intrinsics)

    def transformed(self, world: Pose) -> "Trajectory":
        """Apply a rigid change of world frame ``x_new = world(x_old)`` to the whole path."""
        winv = world.inverse()
        return Trajectory([p @ winv for p in self.poses], self.intrinsics)

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "poses": [p.to_dict() for p in self.poses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls([Pose.from_dict(p) for p in d["poses"]], Intrinsics.from_dict(d["intrinsics"]))


def rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle) -> np.ndarray:
    """Rodrigues' formula."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * Kx + (1 - math.cos(angle)) * (Kx @ Kx)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation from a random unit quaternion, re-orthonormalized to machine precision."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), rng.normal(scale=scale, size=3))


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Extrinsic of ``b`` when camera ``a`` is taken as the world frame."""
    return b @ a.inverse()


def rotation_geodesic(Ra, Rb) -> float:
    """Angle in radians of the rotation ``Ra.T @ Rb``, in ``[0, pi]``.

    Evaluated as ``atan2(sin, cos)`` from the skew and trace parts, which equals
    ``arccos((tr - 1) / 2)`` but stays accurate near 0 and pi.
    """
    M = np.asarray(Ra).T @ np.asarray(Rb)
    cos = (np.trace(M) - 1.0) / 2.0
    sin = 0.5 * math.sqrt(
        (M[2, 1] - M[1, 2]) ** 2 + (M[0, 2] - M[2, 0]) ** 2 + (M[1, 0] - M[0, 1]) ** 2
    )
    return float(min(max(math.atan2(sin, cos), 0.0), math.pi))


def _check_pixels(intr: Intrinsics, u, v):
    if np.any(u < 0) or np.any(u > intr.width - 1) or np.any(v < 0) or np.any(v > intr.height - 1):
        raise PixelBoundsError(
            f"pixel outside [0, {intr.width - 1}] x [0, {intr.height - 1}]"
        )


def unproject(intr: Intrinsics, pose: Pose, u, v, depth):
    # Straight from X = R^T (D * K^-1 [u v 1]^T - t); trailing axis holds xyz.
    x = (u - intr.cx) / intr.fx * depth
    y = (v - intr.cy) / intr.fy * depth
    cam = np.stack([x, y, depth], axis=-1)
    return (cam - pose.t) @ pose.R


def project(intr: Intrinsics, pose: Pose, X):
    cam = X @ pose.R.T + pose.t
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[..., 0] / z + intr.cx
        v = intr.fy * cam[..., 1] / z + intr.cy
    return u, v, z


def backproject_pixel(intr: Intrinsics, pose: Pose, u, v, depth) -> np.ndarray:
    """Lift pixel(s) with known depth to world point(s).

    Scalar or broadcastable array inputs; the result has a trailing axis of size 3.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise InvalidDepthError("depth must be finite and positive")
    _check_pixels(intr, u, v)
    u, v, depth = np.broadcast_arrays(u, v, depth)
    return unproject(intr, pose, u, v, depth)


def project_point(intr: Intrinsics, pose: Pose, X, z_eps: float = Z_EPS):
    """Project world point(s) into ``pose``; returns ``(u, v, z)`` with camera-frame depth ``z``."""
    X = np.asarray(X, dtype=np.float64)
    u, v, z = project(intr, pose, X)
    if np.any(z <= z_eps):
        raise BehindCameraError(f"point depth {np.min(z)} <= {z_eps}")
    if X.ndim == 1:
        return float(u), float(v), float(z)
    return u, v, z


def reproject_depth(
    intr: Intrinsics,
    src_pose: Pose,
    src_depth,
    dst_pose: Pose,
    src_rgb=None,
    z_eps: float = Z_EPS,
):
    """Forward-splat a depth map (and optional image) from ``src_pose`` into ``dst_pose``.

    Each valid source pixel lands on its nearest destination pixel; collisions keep
    the smallest destination depth. Returns ``(depth, rgb, mask)`` where unhit pixels
    carry depth 0 and ``mask`` False; ``rgb`` is None when no image was given.
    """
    src_depth = np.asarray(src_depth, dtype=np.float64)
    h, w = intr.height, intr.width
    if src_depth.shape != (h, w):
        raise ShapeError(f"depth shape {src_depth.shape} != ({h}, {w})")
    valid = np.isfinite(src_depth) & (src_depth > 0)
    if not valid.any():
        raise EmptyWarpError("source depth has no valid pixels")

    vs, us = np.nonzero(valid)
    X = unproject(intr, src_pose, us.astype(np.float64), vs.astype(np.float64), src_depth[vs, us])
    u2, v2, z2 = project(intr, dst_pose, X)
    ok = z2 > z_eps
    ui = np.rint(np.where(ok, u2, -1)).astype(np.int64)
    vi = np.rint(np.where(ok, v2, -1)).astype(np.int64)
    ok &= (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)

    flat = vi[ok] * w + ui[ok]
    zs = z2[ok]
    src_idx = np.nonzero(ok)[0]
    # Sort by destination pixel, then by depth; the first entry per pixel wins.
    order = np.lexsort((zs, flat))
    flat, zs, src_idx = flat[order], zs[order], src_idx[order]
    first = np.ones(flat.shape, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]

    out_depth = np.zeros(h * w)
    out_depth[flat[first]] = zs[first]
    mask = np.zeros(h * w, dtype=bool)
    mask[flat[first]] = True

    out_rgb = None
    if src_rgb is not None:
        src_rgb = np.asarray(src_rgb)
        if src_rgb.shape[:2] != (h, w):
            raise ShapeError(f"image shape {src_rgb.shape} does not match {h}x{w}")
        colors = src_rgb[vs, us]
        out_rgb = np.zeros((h * w,) + src_rgb.shape[2:], dtype=src_rgb.dtype)
        out_rgb[flat[first]] = colors[src_idx[first]]
        out_rgb = out_rgb.reshape((h, w) + src_rgb.shape[2:])

    return out_depth.reshape(h, w), out_rgb, mask.reshape(h, w)


def _plucker(intr: Intrinsics, pose: Pose, u, v):
    cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    d = cam @ pose.R  # rows of R^T @ cam
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(pose.center, d.shape)
    return np.concatenate([d, np.cross(o, d)], axis=-1)


def plucker_ray(intr: Intrinsics, pose: Pose, u, v) -> np.ndarray:
    """``[d; o x d]`` for the ray through pixel center ``(u, v)``: unit world direction and moment."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_pixels(intr, u, v)
    u, v = np.broadcast_arrays(u, v)
    return _plucker(intr, pose, u, v)


def plucker_field(intr: Intrinsics, pose: Pose, h: int | None = None, w: int | None = None) -> np.ndarray:
    """Dense ``6 x h x w`` Plücker field; element ``[:, v, u]`` is the ray at pixel ``(u, v)``."""
    h = intr.height if h is None else h
    w = intr.width if w is None else w
    if h < 1 or w < 1:
        raise ShapeError("field size must be at least 1x1")
    if h > intr.height or w > intr.width:
        raise PixelBoundsError(f"{h}x{w} field exceeds {intr.height}x{intr.width} image")
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return np.moveaxis(_plucker(intr, pose, uu, vv), -1, 0)
