"""RGB-D sequence generation from a first frame and a target camera trajectory."""

from __future__ import annotations

import numpy as np
import torch

from . import codec
from .codec import CodecConfig
from .diffusion import NoiseSchedule, sample, step_schedule
from .errors import ShapeError
from .geometry import Trajectory
from .model import GeoDenoiser
from .scenes import RgbdSequence
from .training import condition_latent, plucker_latent


@torch.no_grad()
def generate_latents(model: GeoDenoiser, cond, plucker, sched: NoiseSchedule, n_steps: int = 50, seeds=(0,)):
    """DDIM-sample one joint latent per seed; ``cond``/``plucker`` carry a leading batch axis."""
    dtype = next(model.parameters()).dtype
    cond = torch.as_tensor(cond, dtype=dtype)
    if plucker is not None:
        plucker = torch.as_tensor(plucker, dtype=dtype)
    noise = torch.stack(
        [torch.randn(cond.shape[1:], generator=torch.Generator().manual_seed(int(s)), dtype=torch.float64) for s in seeds]
    ).to(dtype)
    if len(noise) != len(cond):
        raise ShapeError(f"{len(seeds)} seeds for a batch of {len(cond)}")

    def denoiser(x, t, c):
        return model(x, torch.full((x.shape[0],), t), c, plucker)

    return sample(denoiser, noise, cond, step_schedule(sched.T, n_steps), sched).numpy()


def generate(
    model: GeoDenoiser,
    rgb0,
    depth0,
    traj: Trajectory,
    depth_divisor: float,
    sched: NoiseSchedule,
    codec_cfg: CodecConfig = CodecConfig(),
    n_steps: int = 50,
    seed: int = 0,
    use_camera: bool = True,
) -> RgbdSequence:
    return generate_many(
        model, [(rgb0, depth0, traj, seed)], depth_divisor, sched, codec_cfg, n_steps, use_camera
    )[0]


def generate_many(model, requests, depth_divisor, sched, codec_cfg=CodecConfig(), n_steps=50, use_camera=True):
    """Batched :func:`generate`; ``requests`` holds ``(rgb0, depth0, trajectory, seed)`` tuples."""
    conds, pls, seeds = [], [], []
    for rgb0, depth0, traj, seed in requests:
        f = len(traj)
        if (f - 1) % codec_cfg.r_t:
            raise ShapeError(f"trajectory length {f} is not 1 mod r_t={codec_cfg.r_t}")
        conds.append(condition_latent(rgb0, depth0, depth_divisor, codec_cfg.latent_frames(f), codec_cfg))
        pls.append(plucker_latent(traj, codec_cfg))
        seeds.append(seed)
    latents = generate_latents(
        model, np.stack(conds), np.stack(pls) if use_camera else None, sched, n_steps, seeds
    )
    out = []
    for z, (_, _, traj, seed) in zip(latents, requests):
        rgb, depth = codec.decode_rgbd(z.astype(np.float64), depth_divisor, codec_cfg)
        out.append(RgbdSequence(rgb, depth, traj, {"depth_divisor": depth_divisor, "seed": seed}))
    return out
