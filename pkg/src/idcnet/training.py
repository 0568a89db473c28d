"""Two-stage training: RGB-to-RGB-D without camera tokens, then camera-conditioned finetuning."""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from . import codec
from .codec import CodecConfig
from .diffusion import make_schedule, q_sample, training_loss
from .errors import ConfigError, InsufficientFramesError, NumericError
from .geometry import Intrinsics, Trajectory, plucker_field
from .io_formats import read_checkpoint, write_checkpoint
from .model import GeoDenoiser, ModelConfig, init_params, load_state_arrays, reset_camera_branch, state_arrays
from .scenes import SceneSpec, make_trajectory, random_room, render_sequence

log = logging.getLogger(__name__)


def _from_dict(cls, d, where):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"bad {where} config: {exc}") from exc


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2

    def build(self):
        return make_schedule(self.T, self.beta_start, self.beta_end)


@dataclass
class DatasetConfig:
    """Procedural scenes rendered along canonical trajectories.

    ``scenes`` entries are either integer seeds for :func:`random_room` or scene dicts.
    Every scene is rendered along every trajectory in ``trajectories``.
    """

    height: int = 32
    width: int = 48
    fov_x_deg: float = 60.0
    frames: int = 13
    scenes: list = field(default_factory=lambda: [0])
    trajectories: list = field(default_factory=lambda: [{"kind": "forward", "step": 0.1}])
    depth_divisor: float | None = None

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.frames < 1:
            raise ConfigError("dataset sizes must be positive")
        if not self.scenes or not self.trajectories:
            raise ConfigError("dataset needs at least one scene and one trajectory")
        for tr in self.trajectories:
            if set(tr) - {"kind", "step"} or "kind" not in tr:
                raise ConfigError(f"trajectory entries need kind/step, got {tr}")

    def intrinsics(self) -> Intrinsics:
        return Intrinsics.from_fov(self.width, self.height, self.fov_x_deg)


@dataclass
class TrainConfig:
    stage: int = 1
    steps: int = 1000
    batch: int = 4
    lr: float = 1e-3
    seed: int = 0
    strides: list = field(default_factory=lambda: [1])
    frames: int = 13
    log_every: int = 100
    lr_schedule: str = "cosine"  # or "constant"
    grad_clip: float | None = 1.0  # global norm; None disables

    def __post_init__(self):
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive or null")
        if self.stage not in (1, 2):
            raise ConfigError("stage must be 1 or 2")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("steps must be >= 0 and batch >= 1")
        if not self.strides or min(self.strides) < 1:
            raise ConfigError("strides must be >= 1")


@dataclass
class RunConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: dict = field(default_factory=dict)  # ModelConfig overrides; channels are derived
    training: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        ds, c = self.dataset, self.codec
        if ds.height % c.r_s or ds.width % c.r_s:
            raise ConfigError(f"image size {ds.height}x{ds.width} not divisible by r_s={c.r_s}")
        if (self.training.frames - 1) % c.r_t:
            raise ConfigError(f"training frames {self.training.frames} not 1 mod r_t={c.r_t}")
        self.model_config()  # validates overrides

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - {"codec", "schedule", "model", "training", "dataset"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            codec_cfg = CodecConfig(**d.get("codec", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad codec config: {exc}") from exc
        return cls(
            codec=codec_cfg,
            schedule=_from_dict(ScheduleConfig, d.get("schedule"), "schedule"),
            model=dict(d.get("model", {})),
            training=_from_dict(TrainConfig, d.get("training"), "training"),
            dataset=_from_dict(DatasetConfig, d.get("dataset"), "dataset"),
        )

    def to_dict(self) -> dict:
        return {
            "codec": asdict(self.codec),
            "schedule": asdict(self.schedule),
            "model": dict(self.model),
            "training": asdict(self.training),
            "dataset": asdict(self.dataset),
        }

    def model_config(self) -> ModelConfig:
        c, ds = self.codec, self.dataset
        joint = 2 * 3 * c.r_s**2 * c.r_t
        over = dict(self.model)
        derived = {"latent_channels", "camera_channels", "T", "beta_start", "beta_end"} & set(over)
        if derived:
            raise ConfigError(f"model keys {sorted(derived)} are derived from the codec and schedule")
        valid = {f.name for f in fields(ModelConfig)}
        if set(over) - valid:
            raise ConfigError(f"unknown model keys: {sorted(set(over) - valid)}")
        over.setdefault("max_frames", max(16, c.latent_frames(self.training.frames)))
        over.setdefault("max_rows", max(32, ds.height // c.r_s))
        over.setdefault("max_cols", max(32, ds.width // c.r_s))
        try:
            return ModelConfig(
                latent_channels=joint, camera_channels=6 * c.r_t, T=self.schedule.T,
                beta_start=self.schedule.beta_start, beta_end=self.schedule.beta_end, **over,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc


@dataclass
class Dataset:
    clips: list  # RgbdSequence
    depth_divisor: float
    codec: CodecConfig
    _cache: dict = field(default_factory=dict, repr=False)

    def encoded(self, ci: int, stride: int, start: int, frames: int, with_camera: bool):
        """Memoized ``(x0, cond, plucker)`` for one subclip; pure function of its key."""
        key = (ci, stride, start, frames, with_camera)
        if key not in self._cache:
            ccfg = self.codec
            idx = list(range(start, start + (frames - 1) * stride + 1, stride))
            sub = self.clips[ci].subsample(idx)
            x0 = codec.encode_rgbd(sub.rgb, sub.depth, self.depth_divisor, ccfg)
            cond = condition_latent(
                sub.rgb[0], sub.depth[0], self.depth_divisor, ccfg.latent_frames(frames), ccfg
            )
            pl = plucker_latent(sub.trajectory, ccfg) if with_camera else None
            self._cache[key] = (x0.astype(np.float32), cond.astype(np.float32), pl)
        return self._cache[key]


def build_dataset(cfg: DatasetConfig, codec_cfg: CodecConfig = CodecConfig()) -> Dataset:
    intr = cfg.intrinsics()
    clips = []
    for s in cfg.scenes:
        scene = random_room(int(s)) if isinstance(s, (int, np.integer)) else SceneSpec.from_dict(s)
        for tr in cfg.trajectories:
            traj = make_trajectory(tr["kind"], cfg.frames, float(tr.get("step", 0.1)), intr)
            seq = render_sequence(scene, traj)
            seq.meta.update({"scene": s if isinstance(s, int) else "custom", "kind": tr["kind"]})
            clips.append(seq)
    divisor = cfg.depth_divisor
    if divisor is None:
        divisor = float(max(np.max(c.depth) for c in clips))
    for c in clips:
        c.meta["depth_divisor"] = divisor
    return Dataset(clips, divisor, codec_cfg)


def plucker_latent(traj: Trajectory, codec_cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """Plücker fields at latent resolution, relative to frame 0, grouped like the codec groups frames.

    Returns ``6*r_t x f' x h/r_s x w/r_s``.
    """
    rel = traj.relative_to_first()
    intr_lat = rel.intrinsics.downsample(codec_cfg.r_s)
    fields_ = np.stack([plucker_field(intr_lat, p) for p in rel.poses])  # f x 6 x h x w
    return codec.encode(np.moveaxis(fields_, 1, -1), CodecConfig(codec_cfg.r_t, 1))


def condition_latent(rgb0, depth0, divisor: float, f_lat: int, codec_cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """Joint latent of the first frame alone, broadcast over ``f_lat`` latent frames."""
    z = codec.encode_rgbd(np.asarray(rgb0)[None], np.asarray(depth0)[None], divisor, codec_cfg)
    return np.repeat(z, f_lat, axis=1)


@dataclass
class Batch:
    x0: torch.Tensor
    cond: torch.Tensor
    plucker: torch.Tensor | None
    picks: list  # (clip index, stride, start)


def sample_batch(dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator, with_camera: bool | None = None) -> Batch:
    with_camera = cfg.stage == 2 if with_camera is None else with_camera
    xs, conds, pls, picks = [], [], [], []
    for _ in range(cfg.batch):
        ci = int(rng.integers(len(dataset.clips)))
        stride = int(cfg.strides[int(rng.integers(len(cfg.strides)))])
        clip = dataset.clips[ci]
        span = (cfg.frames - 1) * stride + 1
        if span > len(clip):
            raise InsufficientFramesError(
                f"clip {ci} has {len(clip)} frames, stride {stride} needs {span}"
            )
        start = int(rng.integers(len(clip) - span + 1))
        x0, cond, pl = dataset.encoded(ci, stride, start, cfg.frames, with_camera)
        xs.append(x0)
        conds.append(cond)
        if with_camera:
            pls.append(pl)
        picks.append((ci, stride, start))
    tensor = lambda a: torch.as_tensor(np.stack(a), dtype=torch.float32)  # noqa: E731
    return Batch(tensor(xs), tensor(conds), tensor(pls) if with_camera else None, picks)


def batch_loss(model: GeoDenoiser, batch: Batch, t, eps, sched, with_camera: bool = True):
    z_t = q_sample(batch.x0, t, eps, sched)
    eps_hat = model(z_t, t, batch.cond, batch.plucker if with_camera else None)
    return training_loss(eps_hat, eps)


@dataclass
class TrainResult:
    model: GeoDenoiser
    losses: list

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"])
            for i, loss in enumerate(self.losses):
                w.writerow([i, repr(loss)])


def _train_loop(model: GeoDenoiser, dataset: Dataset, run: RunConfig, with_camera: bool) -> TrainResult:
    cfg = run.training
    sched = run.schedule.build()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, fused=True)
    lr_at = (
        (lambda k: 0.5 * (1 + math.cos(math.pi * k / cfg.steps)))
        if cfg.lr_schedule == "cosine" else (lambda k: 1.0)
    )
    sch = torch.optim.lr_scheduler.LambdaLR(opt, lr_at)
    model.train()
    losses = []
    for step in range(cfg.steps):
        batch = sample_batch(dataset, cfg, rng, with_camera=with_camera)
        t = torch.randint(1, sched.T + 1, (cfg.batch,), generator=gen)
        eps = torch.randn(batch.x0.shape, generator=gen)
        loss = batch_loss(model, batch, t, eps, sched, with_camera)
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite loss at step {step} (t={t.tolist()}, clips={batch.picks})")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        if cfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()
        sch.step()
        losses.append(loss.item())
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("stage %d step %d loss %.5f", cfg.stage, step, losses[-1])
    model.eval()
    return TrainResult(model, losses)


def train_stage1(run: RunConfig, dataset: Dataset | None = None) -> TrainResult:
    """Fit the denoiser without camera tokens."""
    dataset = dataset or build_dataset(run.dataset, run.codec)
    model = init_params(run.model_config(), seed=run.training.seed, zero_init_camera=True)
    return _train_loop(model, dataset, run, with_camera=False)


def stage2_init(stage1_model: GeoDenoiser, seed: int) -> GeoDenoiser:
    """Copy of the stage-1 model with a freshly initialized, zero-output camera branch."""
    return reset_camera_branch(copy.deepcopy(stage1_model), seed, zero_init=True)


def train_stage2(run: RunConfig, stage1_model: GeoDenoiser, dataset: Dataset | None = None) -> TrainResult:
    if stage1_model is None:
        raise ConfigError("stage 2 needs a stage-1 model")
    dataset = dataset or build_dataset(run.dataset, run.codec)
    model = stage2_init(stage1_model, run.training.seed)
    return _train_loop(model, dataset, run, with_camera=True)


def save_checkpoint(path, model: GeoDenoiser, run: RunConfig, depth_divisor: float, stage: int):
    config = {"run": run.to_dict(), "depth_divisor": depth_divisor, "stage": stage}
    write_checkpoint(path, state_arrays(model), config)


def load_checkpoint(path):
    """Returns ``(model, run_config, depth_divisor, stage)``."""
    tensors, config = read_checkpoint(path)
    run = RunConfig.from_dict(config["run"])
    model = load_state_arrays(GeoDenoiser(run.model_config()), tensors)
    model.eval()
    return model, run, float(config["depth_divisor"]), int(config["stage"])

