import numpy as np
import pytest
import sympy
import torch

from idcnet.diffusion import (
    ddim_step,
    make_schedule,
    predict_x0,
    q_sample,
    sample,
    step_schedule,
    training_loss,
)
from idcnet.errors import ConfigError, ShapeError

SCHED = make_schedule()


def test_alpha_bar_log_domain():
    ref = np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(-SCHED.beta))]))
    np.testing.assert_allclose(SCHED.alpha_bar, ref, rtol=1e-12)
    assert SCHED.alpha_bar[0] == 1.0 and len(SCHED.alpha_bar) == 1001
    assert np.all(np.diff(SCHED.alpha_bar) < 0)
    assert SCHED.beta[0] == 1e-4 and SCHED.beta[-1] == 2e-2


@pytest.mark.parametrize("T", [1, 2, 3, 5])
def test_alpha_bar_exact_rationals(T):
    b0, b1 = sympy.Rational(1, 10), sympy.Rational(3, 10)
    sched = make_schedule(T, 0.1, 0.3)
    acc = sympy.Integer(1)
    for s in range(1, T + 1):
        beta = b0 if T == 1 else b0 + (b1 - b0) * sympy.Rational(s - 1, T - 1)
        acc *= 1 - beta
        assert abs(float(acc) - sched.alpha_bar[s]) < 1e-15


def test_q_sample_endpoints():
    z0 = np.random.default_rng(0).normal(size=(3, 4))
    eps = np.random.default_rng(1).normal(size=(3, 4))
    np.testing.assert_array_equal(q_sample(z0, 0, eps, SCHED), z0)
    ab = SCHED.alpha_bar[500]
    np.testing.assert_allclose(q_sample(z0, 500, eps, SCHED), np.sqrt(ab) * z0 + np.sqrt(1 - ab) * eps, rtol=1e-15)


def test_q_sample_monte_carlo_moments():
    rng = np.random.default_rng(2)
    n = 100_000
    for t in (1, 250, 900):
        z0 = 0.7
        x = q_sample(np.full(n, z0), t, rng.standard_normal(n), SCHED)
        ab = SCHED.alpha_bar[t]
        var = 1 - ab
        assert abs(x.mean() - np.sqrt(ab) * z0) < 3 * np.sqrt(var / n)
        # the sample variance has standard error var * sqrt(2 / (n - 1))
        assert abs(x.var(ddof=1) - var) < 3 * var * np.sqrt(2 / (n - 1))


def test_q_sample_per_sample_steps():
    z0 = np.ones((3, 2, 2))
    eps = np.zeros((3, 2, 2))
    x = q_sample(z0, np.array([0, 10, 1000]), eps, SCHED)
    np.testing.assert_allclose(x[:, 0, 0], np.sqrt(SCHED.alpha_bar[[0, 10, 1000]]))


def test_q_sample_errors():
    with pytest.raises(ShapeError):
        q_sample(np.zeros(3), 1, np.zeros(4), SCHED)
    with pytest.raises(ConfigError):
        q_sample(np.zeros(3), 1001, np.zeros(3), SCHED)


def _oracle(z0):
    def denoiser(x, t, _):
        ab = SCHED.alpha_bar[t]
        return (x - np.sqrt(ab) * z0) / np.sqrt(1 - ab)

    return denoiser


@pytest.mark.parametrize("n_steps", [1, 2, 10, 50, 1000])
def test_ddim_perfect_oracle_recovers_z0(n_steps):
    rng = np.random.default_rng(3)
    z0 = rng.normal(size=(4, 5))
    x_T = q_sample(z0, 1000, rng.normal(size=(4, 5)), SCHED)
    out = sample(_oracle(z0), x_T, None, step_schedule(1000, n_steps), SCHED)
    assert np.max(np.abs(out - z0)) < 1e-10


def test_ddim_telescoping():
    rng = np.random.default_rng(4)
    z0, eps = rng.normal(size=6), rng.normal(size=6)
    x = q_sample(z0, 700, eps, SCHED)
    # with the exact noise every intermediate state stays on the same noise direction
    one = ddim_step(x, eps, 700, 100, SCHED)
    two = ddim_step(ddim_step(x, eps, 700, 400, SCHED), eps, 400, 100, SCHED)
    np.testing.assert_allclose(one, two, atol=1e-12)
    np.testing.assert_allclose(one, q_sample(z0, 100, eps, SCHED), atol=1e-12)


def test_predict_x0_inverts_q_sample():
    rng = np.random.default_rng(5)
    z0, eps = rng.normal(size=10), rng.normal(size=10)
    for t in (1, 420, 1000):
        np.testing.assert_allclose(predict_x0(q_sample(z0, t, eps, SCHED), eps, t, SCHED), z0, atol=1e-10)


def test_ddim_step_rejects_bad_order():
    with pytest.raises(ConfigError):
        ddim_step(np.zeros(2), np.zeros(2), 5, 5, SCHED)
    with pytest.raises(ConfigError):
        sample(_oracle(np.zeros(2)), np.zeros(2), None, [10, 5], SCHED)


def test_step_schedule():
    s = step_schedule(1000, 50)
    assert s[0] == 1000 and s[-1] == 0 and len(s) == 51
    assert all(a > b for a, b in zip(s, s[1:]))
    assert step_schedule(10, 100) == list(range(10, -1, -1))
    with pytest.raises(ConfigError):
        step_schedule(10, 0)


def test_torch_matches_numpy():
    rng = np.random.default_rng(6)
    z0, eps = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    t = np.array([3, 800])
    a = q_sample(z0, t, eps, SCHED)
    b = q_sample(torch.as_tensor(z0), t, torch.as_tensor(eps), SCHED)
    np.testing.assert_allclose(b.numpy(), a, rtol=1e-15)
    c = ddim_step(torch.as_tensor(a), torch.as_tensor(eps), 800, 10, SCHED)
    np.testing.assert_allclose(c.numpy(), ddim_step(a, eps, 800, 10, SCHED), rtol=1e-14)


def test_training_loss():
    assert training_loss(np.zeros(4), np.array([1.0, -1.0, 2.0, 0.0])) == 1.5
    with pytest.raises(ShapeError):
        training_loss(np.zeros(3), np.zeros(4))


def test_schedule_errors():
    with pytest.raises(ConfigError):
        make_schedule(0)
    with pytest.raises(ConfigError):
        make_schedule(10, 0.5, 0.1)
