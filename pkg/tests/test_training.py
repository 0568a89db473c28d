import copy

import numpy as np
import pytest
import torch

from idcnet import codec
from idcnet.errors import ConfigError, InsufficientFramesError, NumericError
from idcnet.geometry import Pose, plucker_field
from idcnet.scenes import make_trajectory
from idcnet.training import (
    RunConfig,
    TrainConfig,
    _train_loop,
    batch_loss,
    build_dataset,
    load_checkpoint,
    plucker_latent,
    sample_batch,
    save_checkpoint,
    stage2_init,
    train_stage1,
    train_stage2,
)

SMALL = {
    "model": {"d_model": 16, "n_layers": 2, "n_heads": 2, "t_embed_dim": 8},
    "training": {"steps": 3, "batch": 2, "log_every": 0},
    "dataset": {"height": 16, "width": 16, "frames": 13, "scenes": [0, 1]},
}


@pytest.fixture(scope="module")
def small():
    run = RunConfig.from_dict(SMALL)
    return run, build_dataset(run.dataset, run.codec)


def test_stride_one_picks_all_frames(small):
    run, ds = small
    x0, cond, _ = ds.encoded(0, 1, 0, 13, False)
    clip = ds.clips[0]
    np.testing.assert_array_equal(x0, codec.encode_rgbd(clip.rgb, clip.depth, ds.depth_divisor).astype(np.float32))
    # the condition is frame 0 alone, repeated over the 4 latent frames
    assert cond.shape == x0.shape
    np.testing.assert_array_equal(cond[:, 0], x0[:, 0])
    np.testing.assert_array_equal(cond[:, 3], x0[:, 0])


def test_stride_two_subsamples():
    run = RunConfig.from_dict({**SMALL, "dataset": {**SMALL["dataset"], "frames": 25, "scenes": [0]}})
    ds = build_dataset(run.dataset, run.codec)
    x0, _, _ = ds.encoded(0, 2, 0, 13, False)
    sub = ds.clips[0].subsample(list(range(0, 25, 2)))
    np.testing.assert_array_equal(x0, codec.encode_rgbd(sub.rgb, sub.depth, ds.depth_divisor).astype(np.float32))
    cfg = TrainConfig(batch=8, strides=[2])
    batch = sample_batch(ds, cfg, np.random.default_rng(0))
    assert all(p == (0, 2, 0) for p in batch.picks)  # the only stride-2 window of 13 frames


def test_clip_too_short(small):
    run, ds = small
    with pytest.raises(InsufficientFramesError):
        sample_batch(ds, TrainConfig(batch=1, strides=[2]), np.random.default_rng(0))


def test_first_camera_block_is_identity(small):
    run, ds = small
    batch = sample_batch(ds, TrainConfig(batch=4, stage=2), np.random.default_rng(1))
    intr_lat = ds.clips[0].trajectory.intrinsics.downsample(8)
    ident = plucker_field(intr_lat, Pose.identity())  # 6 x 2 x 2
    for b in range(4):
        first = batch.plucker[b, :, 0].numpy()  # 24 channels: 4 slots x 6
        for slot in range(4):
            np.testing.assert_allclose(first[6 * slot: 6 * slot + 6], ident, atol=1e-6)


def test_plucker_latent_relative_to_first():
    intr = make_trajectory("forward", 5, 0.1, RunConfig().dataset.intrinsics()).intrinsics
    traj = make_trajectory("orbit", 5, 0.2, intr)
    moved = traj.transformed(Pose.from_center(np.eye(3), [3.0, -1.0, 2.0]))
    np.testing.assert_allclose(plucker_latent(traj), plucker_latent(moved), atol=1e-12)
    assert plucker_latent(traj).shape == (24, 2, 4, 6)


def test_training_deterministic(small):
    run, ds = small
    a = train_stage1(run, ds).losses
    b = train_stage1(run, ds).losses
    assert a == b and len(a) == 3 and all(x >= 0 for x in a)


def test_stage2_step0_equals_stage1(small):
    run, ds = small
    m1 = train_stage1(run, ds).model
    m2 = stage2_init(m1, seed=5)
    sched = run.schedule.build()
    batch = sample_batch(ds, TrainConfig(batch=3, stage=2), np.random.default_rng(2))
    g = torch.Generator().manual_seed(0)
    t = torch.randint(1, 1001, (3,), generator=g)
    eps = torch.randn(batch.x0.shape, generator=g)
    with torch.no_grad():
        l1 = batch_loss(m1, batch, t, eps, sched, with_camera=False)
        l2 = batch_loss(m2, batch, t, eps, sched, with_camera=True)
    assert l1.item() == l2.item()
    # stage-2 training starts from exactly the camera-free loss on the same first batch
    run2 = RunConfig.from_dict({**SMALL, "training": {**SMALL["training"], "stage": 2, "steps": 1}})
    cam_free = _train_loop(copy.deepcopy(m1), ds, run2, with_camera=False).losses[0]
    assert train_stage2(run2, m1, ds).losses[0] == cam_free


def test_stage2_requires_stage1(small):
    run, ds = small
    with pytest.raises(ConfigError):
        train_stage2(run, None, ds)


def test_non_finite_loss_aborts(small):
    run, ds = small
    key = (0, 1, 0, 13, False)
    x0, cond, pl = ds.encoded(*key)
    ds._cache[key] = (np.full_like(x0, np.nan), cond, pl)
    one = RunConfig.from_dict({**SMALL, "dataset": {**SMALL["dataset"], "scenes": [0]}})
    try:
        with pytest.raises(NumericError, match="step 0"):
            train_stage1(one, type(ds)(ds.clips[:1], ds.depth_divisor, ds.codec, {key: ds._cache[key]}))
    finally:
        ds._cache.pop(key)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"training": {"stepz": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"latent_channels": 3}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"training": {"frames": 12}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dataset": {"height": 30}})
    assert RunConfig.from_dict(RunConfig().to_dict()).to_dict() == RunConfig().to_dict()


def test_depth_divisor_is_dataset_max(small):
    run, ds = small
    assert ds.depth_divisor == max(float(c.depth.max()) for c in ds.clips)
    assert all(c.meta["depth_divisor"] == ds.depth_divisor for c in ds.clips)


def test_checkpoint_round_trip(small, tmp_path):
    run, ds = small
    model = train_stage1(run, ds).model
    save_checkpoint(tmp_path / "m.ckpt", model, run, ds.depth_divisor, stage=1)
    back, run2, div, stage = load_checkpoint(tmp_path / "m.ckpt")
    assert run2.to_dict() == run.to_dict() and div == ds.depth_divisor and stage == 1
    x0, cond, _ = ds.encoded(0, 1, 0, 13, False)
    x = torch.as_tensor(x0)[None]
    c = torch.as_tensor(cond)[None]
    with torch.no_grad():
        assert torch.equal(model(x, 7, c), back(x, 7, c))


def test_trace_csv(small, tmp_path):
    run, ds = small
    res = train_stage1(run, ds)
    res.write_trace(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,loss" and len(lines) == 4
    assert float(lines[1].split(",")[1]) == res.losses[0]
