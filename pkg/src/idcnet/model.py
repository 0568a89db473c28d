"""Transformer denoiser over joint RGB-D latent tokens with camera-token cross-attention.

Each block sums ordinary self-attention with a cross-attention branch whose keys
and values come from embedded Plücker rays. The branch ends in an output
projection that can be zero-initialized, in which case the block computes
exactly what it would without camera tokens.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .diffusion import make_schedule
from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int  # joint [rgb; depth] latent channels
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    patch: int = 2
    t_embed_dim: int = 128
    camera_channels: int = 24  # 6 Plücker channels x r_t temporal slots
    camera_token_patch: int = 2
    mlp_ratio: int = 4
    max_frames: int = 16
    max_rows: int = 32
    max_cols: int = 32
    # "x0": the network output F plus the condition latent is read as a clean-latent
    # estimate x0_hat and turned into eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t).
    # "x0-raw": the same without adding the condition. "none": F is eps_hat directly.
    output_skip: str = "x0"
    # "alpha": x_t enters the network scaled by sqrt(abar_t), the posterior mean of a
    # unit-variance clean latent, so pure-noise inputs fade out at high t. "none": unscaled.
    input_scale: str = "alpha"
    t_scale: float = 1000.0  # steps are mapped to [0, t_scale] before the sinusoidal embedding
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2

    def __post_init__(self):
        if self.output_skip not in ("x0", "x0-raw", "none"):
            raise ShapeError(f"unknown output_skip {self.output_skip!r}")
        if self.input_scale not in ("alpha", "none"):
            raise ShapeError(f"unknown input_scale {self.input_scale!r}")
        if self.d_model % self.n_heads:
            raise ShapeError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if min(self.latent_channels, self.d_model, self.n_layers, self.patch, self.camera_token_patch) < 1:
            raise ShapeError("model dimensions must be positive")

    def to_dict(self):
        return asdict(self)


def patchify(x, p):
    """``B x C x F x H x W`` -> ``B x (F * H/p * W/p) x (C * p * p)``, tokens ordered (frame, row, col)."""
    B, C, F, H, W = x.shape
    if H % p or W % p:
        raise ShapeError(f"patch {p} does not divide latent grid {H}x{W}")
    x = x.reshape(B, C, F, H // p, p, W // p, p).permute(0, 2, 3, 5, 1, 4, 6)
    return x.reshape(B, F * (H // p) * (W // p), C * p * p)


def unpatchify(tokens, p, C, F, H, W):
    B = tokens.shape[0]
    x = tokens.reshape(B, F, H // p, W // p, C, p, p).permute(0, 4, 1, 2, 5, 3, 6)
    return x.reshape(B, C, F, H, W)


def attention(q, k, v, n_heads: int, return_weights: bool = False):
    """Multi-head scaled dot-product attention; ``q: B x Nq x d``, ``k, v: B x Nk x d``."""
    B, Nq, d = q.shape
    Nk = k.shape[1]
    if k.shape[-1] != d or v.shape[-1] != d or v.shape[1] != Nk:
        raise ShapeError(f"attention widths differ: q {tuple(q.shape)}, k {tuple(k.shape)}, v {tuple(v.shape)}")
    dh = d // n_heads
    qh = q.reshape(B, Nq, n_heads, dh).transpose(1, 2)
    kh = k.reshape(B, Nk, n_heads, dh).transpose(1, 2)
    vh = v.reshape(B, Nk, n_heads, dh).transpose(1, 2)
    logits = qh @ kh.transpose(-1, -2) / math.sqrt(dh)
    logits = logits - logits.amax(dim=-1, keepdim=True)
    w = logits.exp()
    w = w / w.sum(dim=-1, keepdim=True)
    out = (w @ vh).transpose(1, 2).reshape(B, Nq, d)
    return (out, w) if return_weights else out


def timestep_embedding(t, dim: int):
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class GeoBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.t_mod = nn.Linear(d, d)
        self.norm1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.attn_out = nn.Linear(d, d)
        self.cam_kv = nn.Linear(d, 2 * d)
        self.cam_out = nn.Linear(d, d)  # zero-init adapter
        self.norm2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(nn.Linear(d, cfg.mlp_ratio * d), nn.GELU(), nn.Linear(cfg.mlp_ratio * d, d))

    def cross_attention(self, q, cam):
        """Camera cross-attention before the output projection."""
        kc, vc = self.cam_kv(cam).chunk(2, dim=-1)
        return attention(q, kc, vc, self.n_heads)

    def forward(self, h, temb, cam=None):
        if h.shape[-1] != self.qkv.in_features:
            raise ShapeError(f"token width {h.shape[-1]} != d_model {self.qkv.in_features}")
        h = h + self.t_mod(temb)[:, None, :]
        a = self.norm1(h)
        q, k, v = self.qkv(a).chunk(3, dim=-1)
        mixed = self.attn_out(attention(q, k, v, self.n_heads))
        if cam is not None:
            if cam.shape[-1] != h.shape[-1]:
                raise ShapeError(f"camera token width {cam.shape[-1]} != d_model {h.shape[-1]}")
            mixed = mixed + self.cam_out(self.cross_attention(q, cam))
        h = h + mixed
        return h + self.mlp(self.norm2(h))


class GeoDenoiser(nn.Module):
    """Predicts the noise in a joint latent given the conditioning latent and camera tokens."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d, p = cfg.d_model, cfg.patch
        self.patch_embed = nn.Linear(2 * cfg.latent_channels * p * p, d)
        self.pos_frame = nn.Parameter(torch.zeros(cfg.max_frames, d))
        self.pos_row = nn.Parameter(torch.zeros(cfg.max_rows, d))
        self.pos_col = nn.Parameter(torch.zeros(cfg.max_cols, d))
        self.t_mlp = nn.Sequential(nn.Linear(cfg.t_embed_dim, d), nn.SiLU(), nn.Linear(d, d))
        self.camera_embed = nn.Linear(cfg.camera_channels * cfg.camera_token_patch**2, d)
        self.blocks = nn.ModuleList([GeoBlock(cfg) for _ in range(cfg.n_layers)])
        self.norm_out = nn.LayerNorm(d)
        self.unembed = nn.Linear(d, cfg.latent_channels * p * p)
        abar = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end).alpha_bar
        self.register_buffer("sqrt_ab", torch.as_tensor(np.sqrt(abar)), persistent=False)
        self.register_buffer("sqrt_1mab", torch.as_tensor(np.sqrt(1.0 - abar)), persistent=False)

    def camera_parameters(self):
        yield from self.camera_embed.parameters()
        for b in self.blocks:
            yield from b.cam_kv.parameters()
            yield from b.cam_out.parameters()

    def encode_camera_tokens(self, plucker):
        """``B x camera_channels x F x h x w`` grouped Plücker rays -> ``B x n_c x d`` tokens."""
        if plucker.shape[1] != self.cfg.camera_channels:
            raise ShapeError(f"expected {self.cfg.camera_channels} ray channels, got {plucker.shape[1]}")
        return self.camera_embed(patchify(plucker, self.cfg.camera_token_patch))

    def _positions(self, F, Hp, Wp):
        cfg = self.cfg
        if F > cfg.max_frames or Hp > cfg.max_rows or Wp > cfg.max_cols:
            raise ShapeError(f"token grid {F}x{Hp}x{Wp} exceeds positional tables")
        pos = (
            self.pos_frame[:F, None, None, :]
            + self.pos_row[None, :Hp, None, :]
            + self.pos_col[None, None, :Wp, :]
        )
        return pos.reshape(F * Hp * Wp, -1)

    def forward(self, x_t, t, cond, plucker=None):
        cfg = self.cfg
        if x_t.shape != cond.shape:
            raise ShapeError(f"condition shape {tuple(cond.shape)} != latent shape {tuple(x_t.shape)}")
        B, C, F, H, W = x_t.shape
        if C != cfg.latent_channels:
            raise ShapeError(f"latent has {C} channels, model expects {cfg.latent_channels}")
        p = cfg.patch
        t = torch.as_tensor(t).reshape(-1).expand(B)
        ti = t.long()
        a = self.sqrt_ab[ti].to(x_t.dtype).reshape(B, 1, 1, 1, 1)
        x_in = a * x_t if cfg.input_scale == "alpha" else x_t
        h = self.patch_embed(patchify(torch.cat([x_in, cond], dim=1), p))
        h = h + self._positions(F, H // p, W // p)
        temb = self.t_mlp(timestep_embedding(t * (cfg.t_scale / cfg.T), cfg.t_embed_dim).to(h.dtype))
        cam = None
        if plucker is not None:
            cam = self.encode_camera_tokens(plucker)
            n_vis = F * (H // p) * (W // p)
            if cam.shape[1] != n_vis:
                raise ShapeError(f"{cam.shape[1]} camera tokens for {n_vis} latent tokens")
        for block in self.blocks:
            h = block(h, temb, cam)
        out = unpatchify(self.unembed(self.norm_out(h)), p, C, F, H, W)
        if cfg.output_skip == "none":
            return out
        if cfg.output_skip == "x0":
            out = out + cond
        s = self.sqrt_1mab[ti].to(out.dtype).reshape(B, 1, 1, 1, 1)
        return (x_t - a * out) / s


def _init_linear(layer: nn.Linear, gen: torch.Generator, zero: bool = False):
    with torch.no_grad():
        if zero:
            layer.weight.zero_()
        else:
            std = 1.0 / math.sqrt(layer.in_features)
            layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen, dtype=torch.float64) * std)
        layer.bias.zero_()


def reset_camera_branch(model: GeoDenoiser, seed: int, zero_init: bool = True) -> GeoDenoiser:
    """Fresh camera encoder and per-layer key/value projections; output projections zeroed if asked."""
    gen = torch.Generator().manual_seed(int(seed) + 7919)
    _init_linear(model.camera_embed, gen)
    for b in model.blocks:
        _init_linear(b.cam_kv, gen)
        _init_linear(b.cam_out, gen, zero=zero_init)
    return model


def init_params(cfg: ModelConfig, seed: int = 0, zero_init_camera: bool = True, dtype=torch.float32) -> GeoDenoiser:
    """Deterministic initialization: N(0, 1/fan_in) weights, zero biases, unit norms.

    Positional tables use the ``1/sqrt(d_model)`` scale as well.
    """
    model = GeoDenoiser(cfg)
    gen = torch.Generator().manual_seed(int(seed))
    std = 1.0 / math.sqrt(cfg.d_model)
    with torch.no_grad():
        for table in (model.pos_frame, model.pos_row, model.pos_col):
            table.copy_(torch.randn(table.shape, generator=gen, dtype=torch.float64) * std)
    cam_layers = {id(model.camera_embed)} | {id(b.cam_kv) for b in model.blocks} | {id(b.cam_out) for b in model.blocks}
    for m in model.modules():
        if isinstance(m, nn.Linear) and id(m) not in cam_layers:
            _init_linear(m, gen)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    reset_camera_branch(model, seed, zero_init_camera)
    return model.to(dtype)


def denoise(model: GeoDenoiser, x_t, t, cond, plucker=None):
    """Forward pass with a finiteness check; accepts numpy or torch inputs, unbatched or batched."""
    dtype = next(model.parameters()).dtype
    as_np = isinstance(x_t, np.ndarray)
    x_t, cond = torch.as_tensor(x_t, dtype=dtype), torch.as_tensor(cond, dtype=dtype)
    unbatched = x_t.ndim == 4
    if plucker is not None:
        plucker = torch.as_tensor(plucker, dtype=dtype)
    if unbatched:
        x_t, cond = x_t[None], cond[None]
        plucker = None if plucker is None else plucker[None]
    out = model(x_t, t, cond, plucker)
    if not torch.isfinite(out).all():
        raise NumericError("denoiser produced non-finite values")
    if unbatched:
        out = out[0]
    return out.detach().numpy() if as_np else out


def state_arrays(model: GeoDenoiser) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def load_state_arrays(model: GeoDenoiser, arrays: dict) -> GeoDenoiser:
    dtype = next(model.parameters()).dtype
    model.load_state_dict({k: torch.as_tensor(np.asarray(v), dtype=dtype) for k, v in arrays.items()})
    return model
