"""Noise schedule, closed-form forward noising, epsilon loss and deterministic DDIM updates.

All update rules use the cumulative signal level ``alpha_bar``. Functions accept
numpy arrays or torch tensors; integer steps may be scalars or per-sample arrays
(broadcast against the leading batch axis).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray  # beta[t-1] is beta_t, t = 1..T

    @property
    def T(self) -> int:
        return len(self.beta)

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @cached_property
    def alpha_bar(self) -> np.ndarray:
        """Length ``T + 1``; index 0 is the clean level 1."""
        ab = np.concatenate([[1.0], np.cumprod(1.0 - self.beta)])
        ab.flags.writeable = False
        return ab


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    beta.flags.writeable = False
    return NoiseSchedule(beta)


def _coef(values, t, like):
    """Gather schedule values at step(s) ``t`` shaped to broadcast over ``like``."""
    a = np.asarray(values)[np.asarray(t)]
    if np.ndim(a) > 0:
        a = a.reshape(a.shape + (1,) * (like.ndim - a.ndim))
    if _is_torch(like):
        import torch

        return torch.as_tensor(a, dtype=like.dtype, device=like.device)
    return a


def _is_torch(x):
    return type(x).__module__.startswith("torch")


def q_sample(z0, t, eps, sched: NoiseSchedule):
    """``sqrt(abar_t) z0 + sqrt(1 - abar_t) eps``; ``t = 0`` returns ``z0`` unchanged."""
    if tuple(z0.shape) != tuple(eps.shape):
        raise ShapeError(f"noise shape {tuple(eps.shape)} != latent shape {tuple(z0.shape)}")
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(t) > sched.T):
        raise ConfigError(f"step outside [0, {sched.T}]")
    ab = sched.alpha_bar
    return _coef(np.sqrt(ab), t, z0) * z0 + _coef(np.sqrt(1.0 - ab), t, z0) * eps


def training_loss(eps_hat, eps):
    """Mean squared error over every element."""
    if tuple(eps_hat.shape) != tuple(eps.shape):
        raise ShapeError(f"prediction shape {tuple(eps_hat.shape)} != noise shape {tuple(eps.shape)}")
    diff = eps - eps_hat
    return (diff * diff).mean()


def predict_x0(z_t, eps_hat, t, sched: NoiseSchedule):
    ab = sched.alpha_bar
    return (z_t - _coef(np.sqrt(1.0 - ab), t, z_t) * eps_hat) / _coef(np.sqrt(ab), t, z_t)


def ddim_step(z_t, eps_hat, t, t_prev, sched: NoiseSchedule):
    """One deterministic reverse update from step ``t`` to ``t_prev < t``."""
    if np.any(np.asarray(t_prev) >= np.asarray(t)) or np.any(np.asarray(t_prev) < 0):
        raise ConfigError(f"need 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
    ab = sched.alpha_bar
    x0 = predict_x0(z_t, eps_hat, t, sched)
    return _coef(np.sqrt(ab), t_prev, z_t) * x0 + _coef(np.sqrt(1.0 - ab), t_prev, z_t) * eps_hat


def step_schedule(T: int, n_steps: int) -> list:
    """Evenly spaced, strictly decreasing integer steps from ``T`` down to 0."""
    if n_steps < 1:
        raise ConfigError("need at least one sampling step")
    steps = np.unique(np.round(np.linspace(0, T, min(n_steps, T) + 1)).astype(int))[::-1]
    return [int(s) for s in steps]


def sample(denoiser, x_T, conditioning, steps, sched: NoiseSchedule):
    """Iterate :func:`ddim_step` along ``steps`` (strictly decreasing, ending at 0).

    ``denoiser(x_t, t, conditioning)`` must return the predicted noise.
    """
    steps = [int(s) for s in steps]
    if steps[-1] != 0 or any(a <= b for a, b in zip(steps[:-1], steps[1:])):
        raise ConfigError("steps must be strictly decreasing and end at 0")
    x = x_T
    for t, t_prev in zip(steps[:-1], steps[1:]):
        x = ddim_step(x, denoiser(x, t, conditioning), t, t_prev, sched)
    return x
