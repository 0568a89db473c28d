"""Lossless space-to-depth video packing with the 3D-VAE's compression factors.

A ``f x h x w x k`` video becomes a ``c x f' x h' x w'`` latent with
``f' = 1 + (f - 1) / r_t``, ``h' = h / r_s``, ``w' = w / r_s`` and
``c = k * r_s**2 * r_t``. Frame 0 forms its own temporal group, filled by
replicating it ``r_t`` times; every later group holds ``r_t`` consecutive frames.
Channel index order inside a latent cell is ``(temporal slot, row, col, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class CodecConfig:
    r_t: int = 4
    r_s: int = 8

    def __post_init__(self):
        if self.r_t < 1 or self.r_s < 1:
            raise ShapeError("codec factors must be >= 1")

    def latent_frames(self, f: int) -> int:
        return 1 + (f - 1) // self.r_t

    def video_frames(self, f_lat: int) -> int:
        return 1 + (f_lat - 1) * self.r_t

    def latent_shape(self, f, h, w, k):
        return (k * self.r_s**2 * self.r_t, self.latent_frames(f), h // self.r_s, w // self.r_s)


def encode(video, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    video = np.asarray(video)
    if video.ndim == 3:
        video = video[..., None]
    if video.ndim != 4:
        raise ShapeError(f"expected f x h x w x k video, got shape {video.shape}")
    f, h, w, k = video.shape
    rt, rs = cfg.r_t, cfg.r_s
    if h % rs or w % rs:
        raise ShapeError(f"spatial size {h}x{w} not divisible by r_s={rs}")
    if (f - 1) % rt:
        raise ShapeError(f"frame count {f} is not 1 mod r_t={rt}")
    padded = np.concatenate([np.repeat(video[:1], rt, axis=0), video[1:]], axis=0)
    g = padded.shape[0] // rt
    x = padded.reshape(g, rt, h // rs, rs, w // rs, rs, k)
    # -> (rt, rs_row, rs_col, k, g, h', w')
    x = x.transpose(1, 3, 5, 6, 0, 2, 4)
    return np.ascontiguousarray(x.reshape(rt * rs * rs * k, g, h // rs, w // rs))


def decode(latent, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """Inverse of :func:`encode`; the replicated slots of group 0 are averaged."""
    latent = np.asarray(latent)
    if latent.ndim != 4:
        raise ShapeError(f"expected c x f x h x w latent, got shape {latent.shape}")
    c, g, hl, wl = latent.shape
    rt, rs = cfg.r_t, cfg.r_s
    if c % (rt * rs * rs):
        raise ShapeError(f"channel count {c} not divisible by r_s^2 * r_t = {rt * rs * rs}")
    k = c // (rt * rs * rs)
    x = latent.reshape(rt, rs, rs, k, g, hl, wl).transpose(4, 0, 5, 1, 6, 2, 3)
    x = x.reshape(g, rt, hl * rs, wl * rs, k)
    g0 = x[0]
    # Exact slot 0 wherever the slots agree, so encode->decode is bit-exact.
    first = np.where((g0 == g0[:1]).all(axis=0), g0[0], g0.mean(axis=0))[None]
    rest = x[1:].reshape((g - 1) * rt, hl * rs, wl * rs, k)
    return np.concatenate([first.astype(x.dtype), rest], axis=0)


def join_latents(v, d) -> np.ndarray:
    v, d = np.asarray(v), np.asarray(d)
    if v.shape[-3:] != d.shape[-3:] or v.ndim != d.ndim:
        raise ShapeError(f"latent grids differ: {v.shape} vs {d.shape}")
    return np.concatenate([v, d], axis=-4)


def split_latent(x):
    x = np.asarray(x)
    c = x.shape[-4]
    if c % 2:
        raise ShapeError(f"joint latent has odd channel count {c}")
    return x[..., : c // 2, :, :, :], x[..., c // 2 :, :, :, :]


def normalize_rgb(rgb):
    """[0, 1] colors to the [-1, 1] range the diffusion model works in."""
    return np.asarray(rgb) * 2.0 - 1.0


def denormalize_rgb(x):
    return np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)


def normalize_depth(depth, divisor: float):
    """Metric depth to a 3-channel image in [-1, 1] after dividing by ``divisor``."""
    d = np.asarray(depth) / divisor * 2.0 - 1.0
    return np.repeat(d[..., None], 3, axis=-1)


def denormalize_depth(x, divisor: float):
    d = (np.asarray(x).mean(axis=-1) + 1.0) / 2.0 * divisor
    return np.maximum(d, 0.0)


def encode_rgbd(rgb, depth, divisor: float, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """Joint latent ``[v; d]`` of an RGB-D clip (RGB-derived channels first)."""
    return join_latents(encode(normalize_rgb(rgb), cfg), encode(normalize_depth(depth, divisor), cfg))


def decode_rgbd(x, divisor: float, cfg: CodecConfig = CodecConfig()):
    v, d = split_latent(x)
    return denormalize_rgb(decode(v, cfg)), denormalize_depth(decode(d, cfg), divisor)
