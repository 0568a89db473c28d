"""Image fidelity, camera pose error and depth reprojection consistency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyWarpError, InsufficientFramesError, ShapeError
from .geometry import Trajectory, reproject_depth, rotation_geodesic

NORM_EPS = 1e-9
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for data on [0, 1]; identical inputs give ``inf``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable Gaussian filter keeping only fully-covered window positions."""
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r : img.shape[0] - r, r : img.shape[1] - r]


def _ssim_channel(x, y, g):
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Mean SSIM (11-tap Gaussian, sigma 1.5, unit dynamic range).

    Accepts ``h x w``, ``h x w x c`` or a leading frame axis ``n x h x w x c``;
    channels and frames are averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None, ..., None], b[None, ..., None]
    elif a.ndim == 3:
        a, b = a[None], b[None]
    if min(a.shape[1:3]) < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[1:3]} smaller than the {SSIM_WINDOW}px window")
    g = gaussian_window()
    scores = [
        _ssim_channel(a[i, ..., c], b[i, ..., c], g)
        for i in range(a.shape[0])
        for c in range(a.shape[3])
    ]
    return float(np.mean(scores))


@dataclass
class PoseErrorReport:
    r_err: float
    t_err: float
    per_frame_r: list = field(default_factory=list)
    per_frame_t: list = field(default_factory=list)


def _normalized_path(traj: Trajectory):
    rel = traj.relative_to_first()
    rots = [p.R for p in rel.poses]
    centers = np.stack([p.center for p in rel.poses])
    scale = np.max(np.linalg.norm(centers, axis=1))
    return rots, centers / max(scale, NORM_EPS)


def pose_error(pred: Trajectory, gt: Trajectory) -> PoseErrorReport:
    """Rotation/translation error after expressing both paths relative to their first frame.

    Camera centers are scale-normalized by each path's largest displacement from
    frame 0. Frame 0 is identical by construction and excluded from the means.
    """
    if len(pred) != len(gt):
        raise ShapeError(f"trajectory lengths differ: {len(pred)} vs {len(gt)}")
    if len(gt) < 2:
        raise InsufficientFramesError("pose error needs at least two frames")
    rp, cp = _normalized_path(pred)
    rg, cg = _normalized_path(gt)
    per_r = [rotation_geodesic(a, b) for a, b in zip(rp[1:], rg[1:])]
    per_t = np.linalg.norm(cp[1:] - cg[1:], axis=1).tolist()
    return PoseErrorReport(float(np.mean(per_r)), float(np.mean(per_t)), per_r, per_t)


@dataclass
class ConsistencyStats:
    mean_residual: float
    mean_rel_residual: float
    inlier_frac: float
    per_pair: list = field(default_factory=list)

    def to_dict(self):
        return {
            "mean_residual": self.mean_residual,
            "mean_rel_residual": self.mean_rel_residual,
            "inlier_frac": self.inlier_frac,
        }


def _pairs(n, mode):
    if mode == "consecutive":
        return [(i, i + 1) for i in range(n - 1)]
    if mode == "anchor":
        return [(0, j) for j in range(1, n)]
    raise ValueError(f"unknown pair mode {mode!r}")


def depth_consistency(seq, pairs: str = "consecutive", rel_threshold: float = 0.05, trajectory=None) -> ConsistencyStats:
    """Warp depth of frame i into frame j and compare with frame j's own depth.

    Residuals are taken on destination pixels hit by the warp where frame j has
    valid depth. ``pairs`` selects consecutive frames or frame 0 against every
    other frame. ``trajectory`` overrides the sequence's own poses, which lets a
    caller test how well a candidate camera path explains the depth.
    """
    traj = seq.trajectory if trajectory is None else trajectory
    n = len(seq)
    if n < 2:
        raise InsufficientFramesError("depth consistency needs at least two frames")
    if len(traj) != n:
        raise ShapeError(f"trajectory has {len(traj)} poses for {n} frames")
    intr = traj.intrinsics
    abs_all, rel_all, per_pair = [], [], []
    for i, j in _pairs(n, pairs):
        try:
            warped, _, mask = reproject_depth(intr, traj[i], seq.depth[i], traj[j])
        except EmptyWarpError:
            per_pair.append((i, j, math.nan, 0.0))
            continue
        target = np.asarray(seq.depth[j], dtype=np.float64)
        sel = mask & (target > 0)
        res = np.abs(warped[sel] - target[sel])
        rel = res / target[sel]
        abs_all.append(res)
        rel_all.append(rel)
        per_pair.append(
            (i, j, float(res.mean()) if res.size else math.nan,
             float((rel <= rel_threshold).mean()) if res.size else 0.0)
        )
    res = np.concatenate(abs_all) if abs_all else np.zeros(0)
    rel = np.concatenate(rel_all) if rel_all else np.zeros(0)
    if res.size == 0:
        return ConsistencyStats(math.nan, math.nan, 0.0, per_pair)
    return ConsistencyStats(
        float(res.mean()), float(rel.mean()), float((rel <= rel_threshold).mean()), per_pair
    )


def report_dict(pred_seq, gt_seq) -> dict:
    """Everything the ``evaluate`` command writes, as JSON-ready values."""
    p = psnr(pred_seq.rgb, gt_seq.rgb)
    pose = pose_error(pred_seq.trajectory, gt_seq.trajectory)
    return {
        "psnr": "inf" if math.isinf(p) else p,
        "ssim": ssim(pred_seq.rgb, gt_seq.rgb),
        "r_err": pose.r_err,
        "t_err": pose.t_err,
        "depth_consistency": depth_consistency(pred_seq).to_dict(),
    }
