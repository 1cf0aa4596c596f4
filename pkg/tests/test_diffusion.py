"""Noise schedule, corruption, denoiser loss, and the reverse process."""

import numpy as np
import pytest

from diffbalance.classify import SoftmaxClassifier
from diffbalance.diffusion import (GaussianDiffusion, GuidanceConfig,
                                   build_schedule, diffusion_loss,
                                   forward_corrupt, guided_reverse_step,
                                   reverse_step, sample, sample_corruption)
from diffbalance.errors import (ConfigError, DimensionError, DivergenceError,
                                NumericError, ScheduleError, StepError)
from diffbalance.nn import FeedForwardNet, seeded_rng


class StubDenoiser:
    """Fixed-output noise predictor for algebraic checks."""

    def __init__(self, value, data_dim=2):
        self.value = np.asarray(value, dtype=np.float64)
        self.data_dim = data_dim

    def predict_noise(self, x, t):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.value, x.shape).copy()


# -- schedule --------------------------------------------------------------

def test_single_step_schedule():
    sched = build_schedule(1, 0.3, 0.3)
    assert sched.beta[0] == 0.3
    assert sched.alpha_bar[0] == pytest.approx(0.7, abs=1e-15)


def test_two_step_schedule_hand_values():
    sched = build_schedule(2, 0.1, 0.2)
    np.testing.assert_allclose(sched.alpha, [0.9, 0.8], atol=1e-15)
    np.testing.assert_allclose(sched.alpha_bar, [0.9, 0.72], atol=1e-15)
    np.testing.assert_allclose(sched.sigma, np.sqrt([0.1, 0.2]), atol=1e-15)


def test_constant_schedule_power_law():
    b = 0.05
    sched = build_schedule(10, b, b)
    np.testing.assert_allclose(sched.alpha_bar,
                               (1 - b) ** np.arange(1, 11), rtol=1e-12)


def test_schedule_identities():
    sched = build_schedule(50, 1e-3, 0.2)
    np.testing.assert_array_equal(sched.alpha, 1.0 - sched.beta)
    np.testing.assert_allclose(sched.alpha_bar[1:],
                               sched.alpha_bar[:-1] * sched.alpha[1:], rtol=1e-15)
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_invalid_schedule_bounds():
    with pytest.raises(ScheduleError):
        build_schedule(0, 0.1, 0.2)
    with pytest.raises(ScheduleError):
        build_schedule(5, 0.0, 0.2)
    with pytest.raises(ScheduleError):
        build_schedule(5, 0.3, 0.1)


# -- forward corruption ----------------------------------------------------

def test_forward_corrupt_limits():
    sched = build_schedule(2, 0.1, 0.2)
    x0 = np.array([1.0, -2.0])
    assert np.allclose(forward_corrupt(x0, 2, np.zeros(2), sched),
                       np.sqrt(0.72) * x0)
    eps = np.array([0.3, 0.4])
    assert np.allclose(forward_corrupt(np.zeros(2), 2, eps, sched),
                       np.sqrt(0.28) * eps)


def test_forward_corrupt_frozen_value():
    sched = build_schedule(2, 0.1, 0.2)
    out = forward_corrupt(np.array([1.0]), 2, np.array([1.0]), sched)
    assert out[0] == pytest.approx(1.3776783996367752, abs=1e-15)


def test_forward_corrupt_step_range():
    sched = build_schedule(2, 0.1, 0.2)
    with pytest.raises(StepError):
        forward_corrupt(np.zeros(2), 3, np.zeros(2), sched)
    with pytest.raises(DimensionError):
        forward_corrupt(np.zeros(2), 1, np.zeros(3), sched)


# -- training loss ---------------------------------------------------------

def tiny_model(seed=0, dim=2, temb=4):
    from diffbalance.diffusion import DenoiserModel
    net = FeedForwardNet.random_init([dim + temb, 5, dim], seeded_rng(seed))
    return DenoiserModel(net, dim, temb)


def test_loss_zero_for_perfect_prediction():
    sched = build_schedule(10, 0.01, 0.2)
    x0 = seeded_rng(1).standard_normal((8, 2))
    ts, eps, xt = sample_corruption(x0, sched, seeded_rng(2))

    class Perfect:
        def predict_noise(self, x, t):
            return eps

    # same rng keys -> identical draws inside diffusion_loss
    loss = diffusion_loss(Perfect(), x0, sched, seeded_rng(2), with_grads=False)
    assert loss == 0.0


def test_loss_of_zero_model_is_dimension():
    sched = build_schedule(10, 0.01, 0.2)
    x0 = seeded_rng(3).standard_normal((10000, 3))
    loss = diffusion_loss(StubDenoiser([0.0, 0.0, 0.0], 3), x0, sched,
                          seeded_rng(4), with_grads=False)
    assert loss == pytest.approx(3.0, rel=0.05)


def test_loss_gradients_match_finite_differences():
    sched = build_schedule(5, 0.05, 0.2)
    model = tiny_model(seed=5)
    x0 = seeded_rng(6).standard_normal((4, 2))
    _, grads = diffusion_loss(model, x0, sched, seeded_rng(7))
    h = 1e-5
    for li in range(model.net.n_layers):
        for arr, grad in ((model.net.weights[li], grads[li][0]),
                          (model.net.biases[li], grads[li][1])):
            for i in range(0, arr.size, max(1, arr.size // 5)):
                old = arr.flat[i]
                arr.flat[i] = old + h
                fp = diffusion_loss(model, x0, sched, seeded_rng(7), with_grads=False)
                arr.flat[i] = old - h
                fm = diffusion_loss(model, x0, sched, seeded_rng(7), with_grads=False)
                arr.flat[i] = old
                num = (fp - fm) / (2 * h)
                assert grad.flat[i] == pytest.approx(num, rel=1e-4, abs=1e-6)


def test_empty_batch_rejected():
    sched = build_schedule(5, 0.05, 0.2)
    with pytest.raises(DimensionError):
        diffusion_loss(tiny_model(), np.zeros((0, 2)), sched, seeded_rng(0))


# -- reverse process -------------------------------------------------------

def test_reverse_step_recovers_x0_at_t1():
    sched = build_schedule(3, 0.1, 0.3)
    x0 = np.array([0.8, -1.2])
    eps = np.array([0.5, 0.7])
    x1 = forward_corrupt(x0, 1, eps, sched)
    out = reverse_step(x1, 1, StubDenoiser(eps), sched, np.zeros(2))
    np.testing.assert_allclose(out, x0, atol=1e-12)


def test_reverse_step_zero_model():
    sched = build_schedule(2, 0.1, 0.2)
    x = np.array([1.0, 2.0])
    out = reverse_step(x, 2, StubDenoiser([0.0, 0.0]), sched, np.zeros(2))
    np.testing.assert_allclose(out, x / np.sqrt(0.8), atol=1e-14)


def test_reverse_step_frozen_scalar_case():
    # alpha_2 = 0.8, abar_2 = 0.72, x = 1, eps_hat = 0.5, no noise term
    sched = build_schedule(2, 0.1, 0.2)
    out = reverse_step(np.array([1.0]), 2, StubDenoiser([0.5], 1), sched,
                       np.zeros(1))
    assert out[0] == pytest.approx(0.9067454250677657, abs=1e-15)


def _trained_pair(seed=0):
    rng = seeded_rng(50, seed)
    x = np.concatenate([rng.standard_normal((60, 2)) + [2.0, 0.0],
                        rng.standard_normal((60, 2)) - [2.0, 0.0]])
    y = np.array([0] * 60 + [1] * 60)
    clf = SoftmaxClassifier(n_classes=2, epochs=20, seed=seed).fit(x, y)
    return x, clf


def test_guidance_off_is_bit_identical():
    sched = build_schedule(10, 0.01, 0.2)
    model = tiny_model(seed=8)
    _, clf = _trained_pair()
    rng = seeded_rng(51)
    for _ in range(50):
        x = rng.standard_normal((3, 2))
        t = int(rng.integers(2, 11))
        z = rng.standard_normal((3, 2))
        plain = reverse_step(x, t, model, sched, z)
        guided = guided_reverse_step(x, t, 0, model, clf,
                                     GuidanceConfig(scale=0.0), sched, z)
        assert np.array_equal(plain, guided)


def test_uniform_classifier_gives_zero_gradient():
    sched = build_schedule(5, 0.05, 0.2)
    model = tiny_model(seed=9)
    clf = SoftmaxClassifier(n_classes=3)
    clf.init_net(2)
    for w in clf.net_.weights:
        w[:] = 0.0
    for b in clf.net_.biases:
        b[:] = 0.0
    x = seeded_rng(10).standard_normal((4, 2))
    z = seeded_rng(11).standard_normal((4, 2))
    plain = reverse_step(x, 3, model, sched, z)
    guided = guided_reverse_step(x, 3, 1, model, clf,
                                 GuidanceConfig(scale=2.0), sched, z)
    np.testing.assert_allclose(plain, guided, atol=1e-15)


def test_linear_softmax_guidance_closed_form():
    # single linear layer with log_softmax head: grad log p(y|x) = W_y - sum_k p_k W_k
    rng = seeded_rng(12)
    W = rng.standard_normal((2, 3))
    clf = SoftmaxClassifier(n_classes=3, hidden_dims=())
    clf.net_ = FeedForwardNet([2, 3], [W], [np.zeros(3)],
                              output_head="log_softmax")
    clf.dim_ = 2
    sched = build_schedule(4, 0.05, 0.2)
    model = tiny_model(seed=13)
    x = rng.standard_normal((1, 2))
    z = np.zeros((1, 2))
    s = 1.7
    y = 2
    p = np.exp(clf.predict_log_proba(x))[0]
    grad = W[:, y] - (W * p).sum(axis=1)
    eps_hat = model.predict_noise(x, 3)[0] - s * grad
    a, ab = sched.alpha[2], sched.alpha_bar[2]
    expected = (x[0] - (1 - a) / np.sqrt(1 - ab) * eps_hat) / np.sqrt(a)
    out = guided_reverse_step(x, 3, y, model, clf, GuidanceConfig(scale=s),
                              sched, z)
    np.testing.assert_allclose(out[0], expected, atol=1e-12)


def test_guided_step_rejects_bad_class():
    sched = build_schedule(3, 0.05, 0.2)
    _, clf = _trained_pair()
    with pytest.raises(ConfigError):
        guided_reverse_step(np.zeros((1, 2)), 2, 9, tiny_model(), clf,
                            GuidanceConfig(scale=1.0), sched, np.zeros((1, 2)))


# -- sampling --------------------------------------------------------------

def test_single_step_chain_with_zero_model():
    sched = build_schedule(1, 0.3, 0.3)
    model = StubDenoiser([0.0, 0.0])
    out = sample(model, sched, 5, seed=3)
    x_t = np.stack([seeded_rng(3, 23, j).standard_normal(2) for j in range(5)])
    np.testing.assert_allclose(out, x_t / np.sqrt(0.7), atol=1e-14)


def test_sampling_deterministic_and_worker_invariant():
    sched = build_schedule(8, 0.01, 0.2)
    model = tiny_model(seed=14)
    a = sample(model, sched, 130, seed=21, workers=1)
    b = sample(model, sched, 130, seed=21, workers=4)
    c = sample(model, sched, 130, seed=21, workers=1)
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)


# -- pretraining -----------------------------------------------------------

def test_zero_epochs_returns_initialized_model():
    x = seeded_rng(15).standard_normal((20, 2))
    dm = GaussianDiffusion(epochs=0, seed=7).fit(x)
    ref = dm._init_model(2)
    for w1, w2 in zip(dm.model_.net.weights, ref.net.weights):
        assert np.array_equal(w1, w2)


def test_training_reduces_heldout_loss():
    rng = seeded_rng(16)
    x = rng.standard_normal((400, 2)) + [1.5, -0.5]
    held = rng.standard_normal((200, 2)) + [1.5, -0.5]
    dm0 = GaussianDiffusion(epochs=0, seed=3).fit(x)
    dm = GaussianDiffusion(epochs=40, seed=3).fit(x)
    loss0 = diffusion_loss(dm0.model_, held, dm0.schedule_, seeded_rng(17),
                           with_grads=False)
    loss1 = diffusion_loss(dm.model_, held, dm.schedule_, seeded_rng(17),
                           with_grads=False)
    assert loss1 < loss0


def test_loss_trace_moving_average_non_increasing():
    x = seeded_rng(18).standard_normal((300, 2))
    dm = GaussianDiffusion(epochs=60, seed=4).fit(x)
    trace = np.array(dm.loss_trace_)
    window = 15
    avg = np.convolve(trace, np.ones(window) / window, mode="valid")
    assert np.all(np.diff(avg) <= 2e-2)  # trailing average does not climb


def test_point_mass_training_concentrates_samples():
    x = np.tile([[0.7, -0.3]], (200, 1))
    dm = GaussianDiffusion(epochs=120, seed=5).fit(x)
    samples = dm.sample(200, seed=6)
    assert np.linalg.norm(samples.mean(axis=0) - [0.7, -0.3]) < 0.2


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_raises():
    x = seeded_rng(19).standard_normal((100, 2)) * 100.0
    dm = GaussianDiffusion(epochs=30, learning_rate=5.0, seed=6)
    with pytest.raises((DivergenceError, NumericError)):
        dm.fit(x)


# -- checkpointing ---------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    x = seeded_rng(20).standard_normal((50, 2))
    dm = GaussianDiffusion(epochs=5, n_steps=12, seed=8).fit(x)
    path = tmp_path / "dm.ckpt"
    dm.save(path)
    loaded = GaussianDiffusion.load(path)
    for w1, w2 in zip(dm.model_.net.weights, loaded.model_.net.weights):
        assert np.array_equal(w1, w2)
    np.testing.assert_array_equal(dm.schedule_.beta, loaded.schedule_.beta)
    a = dm.sample(7, seed=9)
    b = loaded.sample(7, seed=9)
    assert np.array_equal(a, b)


def test_checkpoint_dimension_rejection(tmp_path):
    x = seeded_rng(21).standard_normal((50, 3))
    dm = GaussianDiffusion(epochs=1, seed=9).fit(x)
    path = tmp_path / "dm.ckpt"
    dm.save(path)
    with pytest.raises(ConfigError):
        GaussianDiffusion.load(path, expect_dim=2)
