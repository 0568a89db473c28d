import numpy as np
import pytest

from idcnet import codec
from idcnet.codec import CodecConfig
from idcnet.errors import ShapeError


def test_shape_law_production_size():
    cfg = CodecConfig(4, 8)
    assert cfg.latent_shape(49, 480, 720, 3) == (768, 13, 60, 90)
    assert cfg.latent_frames(49) == 13 and cfg.video_frames(13) == 49


def test_round_trip_bit_exact():
    rng = np.random.default_rng(0)
    for cfg, shape in [
        (CodecConfig(4, 8), (13, 32, 48, 3)),
        (CodecConfig(2, 4), (7, 8, 12, 3)),
        (CodecConfig(1, 1), (3, 5, 6, 1)),
        (CodecConfig(3, 2), (10, 4, 6, 2)),
    ]:
        x = rng.normal(size=shape).astype(np.float32)
        z = codec.encode(x, cfg)
        assert z.shape == cfg.latent_shape(*shape)
        y = codec.decode(z, cfg)
        assert y.dtype == x.dtype and y.tobytes() == x.tobytes()


def test_round_trip_production_size_single_channel():
    x = np.random.default_rng(1).uniform(size=(49, 480, 720)).astype(np.float32)
    z = codec.encode(x)
    assert z.shape == (256, 13, 60, 90)
    assert codec.decode(z)[..., 0].tobytes() == x.tobytes()


def test_channel_order():
    # f=5, 2x2 image, one channel; r_t=4, r_s=2 -> 16 channels, 2 latent frames, 1x1 grid
    cfg = CodecConfig(4, 2)
    x = np.arange(5 * 2 * 2, dtype=float).reshape(5, 2, 2)
    z = codec.encode(x, cfg)
    assert z.shape == (16, 2, 1, 1)
    # group 1 holds frames 1..4; channel = ((slot * 2 + row) * 2 + col)
    for slot in range(4):
        for r in range(2):
            for c in range(2):
                assert z[(slot * 2 + r) * 2 + c, 1, 0, 0] == x[1 + slot, r, c]
                assert z[(slot * 2 + r) * 2 + c, 0, 0, 0] == x[0, r, c]


def test_decode_averages_group_zero_slots():
    cfg = CodecConfig(2, 1)
    z = codec.encode(np.zeros((3, 1, 1)), cfg)
    z[0, 0] = 1.0
    z[1, 0] = 3.0
    np.testing.assert_array_equal(codec.decode(z, cfg)[0], [[[2.0]]])


def test_shape_errors():
    with pytest.raises(ShapeError):
        codec.encode(np.zeros((12, 32, 48, 3)))
    with pytest.raises(ShapeError):
        codec.encode(np.zeros((13, 30, 48, 3)))
    with pytest.raises(ShapeError):
        codec.decode(np.zeros((100, 2, 1, 1)))
    with pytest.raises(ShapeError):
        codec.join_latents(np.zeros((4, 2, 3, 3)), np.zeros((4, 2, 3, 4)))


def test_rgbd_round_trip():
    rng = np.random.default_rng(2)
    rgb = rng.uniform(size=(5, 8, 8, 3))
    depth = rng.uniform(0.5, 4, size=(5, 8, 8))
    cfg = CodecConfig(4, 4)
    z = codec.encode_rgbd(rgb, depth, 4.0, cfg)
    assert z.shape == (2 * 3 * 16 * 4, 2, 2, 2)
    assert z.min() >= -1 and z.max() <= 1
    rgb2, depth2 = codec.decode_rgbd(z, 4.0, cfg)
    np.testing.assert_allclose(rgb2, rgb, atol=1e-12)
    np.testing.assert_allclose(depth2, depth, atol=1e-12)
    v, d = codec.split_latent(z)
    assert v.shape == d.shape


def test_depth_normalization_bounds():
    x = codec.normalize_depth(np.array([0.0, 5.0, 10.0]), 10.0)
    np.testing.assert_array_equal(x[:, 0], [-1, 0, 1])
    assert x.shape == (3, 3)
    np.testing.assert_array_equal(codec.denormalize_depth(np.full((1, 3), -2.0), 10.0), [0.0])
