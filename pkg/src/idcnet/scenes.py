"""Analytic ray-cast RGB-D rendering of plane/sphere scenes along camera paths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose, Trajectory, rot_y

HIT_EPS = 1e-9


@dataclass
class Plane:
    point: np.ndarray
    normal: np.ndarray
    albedo: np.ndarray = field(default_factory=lambda: np.ones(3))
    checker: float | None = None

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        n = np.linalg.norm(self.normal)
        if n == 0:
            raise ValueError("plane normal must be nonzero")
        self.normal = self.normal / n

    def intersect(self, o, d):
        """Ray parameter ``s`` of the hit ``o + s*d`` (inf on miss)."""
        denom = d @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ((self.point - o) @ self.normal) / denom
        return np.where((np.abs(denom) > 1e-15) & (s > HIT_EPS), s, np.inf)

    def normal_at(self, points):
        return np.broadcast_to(self.normal, points.shape)

    def distance(self, points):
        return np.abs((np.asarray(points) - self.point) @ self.normal)

    def to_dict(self):
        return {
            "kind": "plane", "point": self.point.tolist(), "normal": self.normal.tolist(),
            "albedo": self.albedo.tolist(), "checker": self.checker,
        }


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray = field(default_factory=lambda: np.ones(3))
    checker: float | None = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def intersect(self, o, d):
        oc = o - self.center
        a = np.einsum("...i,...i->...", d, d)
        b = 2 * (d @ oc)
        c = oc @ oc - self.radius**2
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        # Numerically stable root pair.
        q = -0.5 * (b + np.copysign(sq, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / a
            r2 = np.where(q != 0, c / q, np.inf)
        lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
        s = np.where(lo > HIT_EPS, lo, np.where(hi > HIT_EPS, hi, np.inf))
        return np.where(disc >= 0, s, np.inf)

    def normal_at(self, points):
        return (points - self.center) / self.radius

    def distance(self, points):
        return np.abs(np.linalg.norm(np.asarray(points) - self.center, axis=-1) - self.radius)

    def to_dict(self):
        return {
            "kind": "sphere", "center": self.center.tolist(), "radius": self.radius,
            "albedo": self.albedo.tolist(), "checker": self.checker,
        }


@dataclass
class SceneSpec:
    primitives: list

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("scene has no primitives")

    def to_dict(self):
        return {"primitives": [p.to_dict() for p in self.primitives]}

    def distance(self, points) -> np.ndarray:
        """Unsigned distance from each point to the nearest primitive surface.

        Planes count as infinite, which is exact for points inside a convex room.
        """
        points = np.asarray(points, dtype=np.float64)
        return np.min([p.distance(points) for p in self.primitives], axis=0)

    @classmethod
    def from_dict(cls, d):
        prims = []
        for p in d["primitives"]:
            kw = {"albedo": p.get("albedo", [1.0, 1.0, 1.0]), "checker": p.get("checker")}
            if p["kind"] == "plane":
                prims.append(Plane(p["point"], p["normal"], **kw))
            elif p["kind"] == "sphere":
                prims.append(Sphere(p["center"], float(p["radius"]), **kw))
            else:
                raise ValueError(f"unknown primitive kind {p['kind']!r}")
        return cls(prims)


@dataclass
class RgbdFrame:
    rgb: np.ndarray
    depth: np.ndarray


@dataclass
class RgbdSequence:
    """Stacked frames: ``rgb`` is ``n x h x w x 3`` in [0, 1], ``depth`` is ``n x h x w``."""

    rgb: np.ndarray
    depth: np.ndarray
    trajectory: Trajectory
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.rgb) == len(self.depth) == len(self.trajectory)):
            raise ValueError(
                f"{len(self.rgb)} rgb / {len(self.depth)} depth frames for "
                f"{len(self.trajectory)} poses"
            )

    def __len__(self):
        return len(self.rgb)

    def frame(self, i) -> RgbdFrame:
        return RgbdFrame(self.rgb[i], self.depth[i])

    def subsample(self, indices) -> "RgbdSequence":
        indices = list(indices)
        return RgbdSequence(
            self.rgb[indices], self.depth[indices], self.trajectory.subsample(indices), dict(self.meta)
        )


def camera_rays(intr: Intrinsics, pose: Pose, u, v):
    """World-space origin and unnormalized directions whose camera-frame z component is 1.

    With this scaling the hit parameter along the ray equals the camera-frame depth.
    """
    cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    return pose.center, cam @ pose.R


def raycast_depth(scene: SceneSpec, intr: Intrinsics, pose: Pose, u, v):
    """Camera-frame depth and primitive index of the nearest hit at (sub)pixel coordinates."""
    o, d = camera_rays(intr, pose, np.asarray(u, float), np.asarray(v, float))
    hits = np.stack([p.intersect(o, d) for p in scene.primitives])
    idx = np.argmin(hits, axis=0)
    s = np.take_along_axis(hits, idx[None], axis=0)[0]
    return s, idx, o, d


def _shade(prim, points, ray_dirs):
    color = np.broadcast_to(prim.albedo, points.shape).copy()
    if prim.checker:
        cell = np.floor(points / prim.checker + 1e-9).astype(np.int64).sum(axis=-1)
        color *= np.where(cell % 2 == 0, 1.0, 0.45)[..., None]
    n = prim.normal_at(points)
    dn = ray_dirs / np.linalg.norm(ray_dirs, axis=-1, keepdims=True)
    lambert = np.abs(np.einsum("...i,...i->...", n, dn))
    return color * (0.55 + 0.45 * lambert)[..., None]


def raycast_render(scene: SceneSpec, intr: Intrinsics, pose: Pose, h: int | None = None, w: int | None = None) -> RgbdFrame:
    h = intr.height if h is None else h
    w = intr.width if w is None else w
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    s, idx, o, d = raycast_depth(scene, intr, pose, uu, vv)
    hit = np.isfinite(s)
    depth = np.where(hit, s, 0.0)
    rgb = np.zeros((h, w, 3))
    points = o + np.where(hit, s, 0.0)[..., None] * d
    for k, prim in enumerate(scene.primitives):
        sel = hit & (idx == k)
        if sel.any():
            rgb[sel] = _shade(prim, points[sel], d[sel])
    return RgbdFrame(np.clip(rgb, 0.0, 1.0), depth)


def render_sequence(scene: SceneSpec, traj: Trajectory) -> RgbdSequence:
    frames = [raycast_render(scene, traj.intrinsics, p) for p in traj.poses]
    return RgbdSequence(
        np.stack([f.rgb for f in frames]), np.stack([f.depth for f in frames]), traj
    )


def make_trajectory(kind: str, n: int, step: float, intr: Intrinsics, pivot_distance: float = 4.0) -> Trajectory:
    """Canonical camera paths starting at the identity pose.

    ``forward`` moves the camera center along +z and ``strafe`` along +x by ``step``
    per frame. ``orbit`` yaws by ``step`` radians per frame around a point
    ``pivot_distance`` ahead of the first camera, always facing it.
    """
    if n < 1:
        raise ValueError("trajectory needs n >= 1")
    poses = []
    for i in range(n):
        if kind == "forward":
            poses.append(Pose.from_center(np.eye(3), [0.0, 0.0, i * step]))
        elif kind == "strafe":
            poses.append(Pose.from_center(np.eye(3), [i * step, 0.0, 0.0]))
        elif kind == "orbit":
            Rc = rot_y(i * step)
            pivot = np.array([0.0, 0.0, pivot_distance])
            center = pivot + Rc @ np.array([0.0, 0.0, -pivot_distance])
            poses.append(Pose.from_center(Rc.T, center))
        else:
            raise ValueError(f"unknown trajectory kind {kind!r}")
    return Trajectory(poses, intr)


def random_room(seed: int, half_width=2.5, half_height=1.6, back=6.0, n_spheres=2) -> SceneSpec:
    """A closed box room with checkered walls and a few spheres.

    The camera starts at the origin looking down +z; the room encloses every ray
    from inside it, so renders never contain background pixels.
    """
    rng = np.random.default_rng(seed)

    def albedo():
        return rng.uniform(0.35, 1.0, size=3)

    def period():
        return float(rng.choice([0.5, 0.75, 1.0]))

    prims = [
        Plane([0, 0, back], [0, 0, -1], albedo(), period()),
        Plane([0, 0, -back], [0, 0, 1], albedo(), period()),
        Plane([0, half_height, 0], [0, -1, 0], albedo(), period()),
        Plane([0, -half_height, 0], [0, 1, 0], albedo(), period()),
        Plane([half_width, 0, 0], [-1, 0, 0], albedo(), period()),
        Plane([-half_width, 0, 0], [1, 0, 0], albedo(), period()),
    ]
    for _ in range(n_spheres):
        r = rng.uniform(0.3, 0.6)
        c = [rng.uniform(-1.4, 1.4), rng.uniform(-0.6, 0.9), rng.uniform(3.2, back - 1.0)]
        prims.append(Sphere(c, r, albedo(), None))
    return SceneSpec(prims)


def fronto_parallel_scene(depth: float = 4.0, checker: float | None = 0.5) -> SceneSpec:
    return SceneSpec([Plane([0, 0, depth], [0, 0, -1], [0.9, 0.6, 0.3], checker)])


def default_intrinsics(height=32, width=48, fov_x_deg=60.0) -> Intrinsics:
    return Intrinsics.from_fov(width, height, fov_x_deg)

