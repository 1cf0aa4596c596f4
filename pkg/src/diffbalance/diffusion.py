"""Gaussian diffusion on feature vectors: noise schedule, denoiser training,
plain and classifier-guided ancestral sampling.

The reverse update is
    x_{t-1} = (x_t - (1-a_t)/sqrt(1-abar_t) * eps_hat) / sqrt(a_t) + sigma_t * z
with eps_hat the predicted noise, optionally biased by the gradient of a
classifier's log-probability of a target class (guidance). The stochastic
term is dropped at t=1 so the final output is noise-free.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (ConfigError, DimensionError, DivergenceError,
                     ScheduleError, StepError)
from .nn import FeedForwardNet, MomentumSGD, seeded_rng

# rng purpose tags
_STREAM_DM_INIT = 21
_STREAM_DM_TRAIN = 22
_STREAM_CHAIN = 23

# chains are always processed in fixed-size blocks so that BLAS accumulation
# order (and therefore the bits of the result) cannot depend on --workers
_CHAIN_BLOCK = 64


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and derived quantities; step t is index t-1."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    @property
    def n_steps(self):
        return len(self.beta)

    def check_step(self, t):
        if not 1 <= t <= self.n_steps:
            raise StepError(f"step {t} outside [1, {self.n_steps}]")


def build_schedule(n_steps, beta_start, beta_end):
    """Linear beta schedule; sigma_t = sqrt(beta_t)."""
    if n_steps < 1:
        raise ScheduleError("need at least one step")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ScheduleError("require 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, n_steps)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha,
                         alpha_bar=np.cumprod(alpha), sigma=np.sqrt(beta))


def default_beta_bounds(n_steps):
    """Rescale the canonical 1000-step (1e-4, 0.02) bounds to keep the total
    injected noise comparable on short chains. Capped below 1 so very short
    chains still yield a valid schedule."""
    scale = 1000.0 / n_steps
    end = min(0.02 * scale, 0.5)
    return min(1e-4 * scale, end), end


@dataclass
class GuidanceConfig:
    """Classifier-guidance settings: gradient scale s >= 0, and whether the
    gradient term is additionally scaled by sqrt(1 - abar_t)."""

    scale: float = 0.0
    scale_by_noise_level: bool = False

    def __post_init__(self):
        if self.scale < 0:
            raise ConfigError("guidance scale must be >= 0")


def time_embedding(t, dim):
    """Sinusoidal embedding of integer steps; t scalar or [n] array -> [n, dim]."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def forward_corrupt(x0, t, eps, sched):
    """Closed-form corruption: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps."""
    sched.check_step(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise DimensionError("eps must match x0's shape")
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def sample_corruption(x0, sched, rng):
    """Draw (t, eps) per sample and corrupt. Returns (ts, eps, x_t)."""
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    ts = rng.integers(1, sched.n_steps + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    ab = sched.alpha_bar[ts - 1][:, None]
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return ts, eps, xt


class DenoiserModel:
    """Noise predictor: feed-forward net on [x_t || time_embedding(t)]."""

    def __init__(self, net, data_dim, time_embed_dim):
        if net.layer_dims[0] != data_dim + time_embed_dim:
            raise DimensionError("net input dim must be data_dim + time_embed_dim")
        if net.layer_dims[-1] != data_dim:
            raise DimensionError("net output dim must equal data_dim")
        self.net = net
        self.data_dim = data_dim
        self.time_embed_dim = time_embed_dim

    def _inputs(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        emb = time_embedding(t, self.time_embed_dim)
        if emb.shape[0] == 1 and x.shape[0] > 1:
            emb = np.repeat(emb, x.shape[0], axis=0)
        return np.concatenate([x, emb], axis=1)

    def predict_noise(self, x, t):
        return self.net.forward(self._inputs(x, t))

    def predict_noise_trace(self, x, t):
        return self.net.forward_trace(self._inputs(x, t))


def diffusion_loss(model, batch_x0, sched, rng, with_grads=True):
    """Mean over the batch of ||eps - eps_hat||^2 with per-sample (t, eps) draws.

    Returns (loss, param_grads) when with_grads, else just the loss; the model
    only needs predict_noise in the latter case.
    """
    batch_x0 = np.asarray(batch_x0, dtype=np.float64)
    if batch_x0.shape[0] == 0:
        raise DimensionError("empty batch")
    ts, eps, xt = sample_corruption(batch_x0, sched, rng)
    if with_grads:
        out, tape = model.predict_noise_trace(xt, ts)
    else:
        out = model.predict_noise(xt, ts)
    diff = out - eps
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite diffusion loss")
    if not with_grads:
        return loss
    param_grads, _ = tape.backward(2.0 * diff / batch_x0.shape[0])
    return loss, param_grads


def _eps_hat(x, t, model, classifier, y, guidance, sched):
    eps = model.predict_noise(x, t)
    if guidance is None or guidance.scale == 0.0 or classifier is None:
        return eps
    grad = classifier.input_logprob_gradient(x, y)
    s = guidance.scale
    if guidance.scale_by_noise_level:
        s = s * np.sqrt(1.0 - sched.alpha_bar[t - 1])
    return eps - s * grad


def reverse_step(x_t, t, model, sched, z):
    """One unguided ancestral step from x_t to x_{t-1}."""
    return guided_reverse_step(x_t, t, None, model, None, None, sched, z)


def guided_reverse_step(x_t, t, y, model, classifier, guidance, sched, z):
    """One ancestral step with the predicted noise biased by s * grad log p(y|x_t)."""
    sched.check_step(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    if y is not None and classifier is not None:
        ys = np.atleast_1d(np.asarray(y))
        if ys.min() < 0 or ys.max() >= classifier.n_classes:
            raise ConfigError(f"class id outside [0, {classifier.n_classes})")
    eps_hat = _eps_hat(np.atleast_2d(x_t), t, model, classifier, y, guidance, sched)
    eps_hat = eps_hat.reshape(x_t.shape)
    a = sched.alpha[t - 1]
    ab = sched.alpha_bar[t - 1]
    mean = (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
    if t == 1:
        return mean
    return mean + sched.sigma[t - 1] * np.asarray(z, dtype=np.float64)


def _chain_noise(seed_keys, n_chains, n_steps, dim):
    """Pre-draw x_T and the per-step z for each chain from its private stream,
    so results do not depend on how chains are batched."""
    x_t = np.zeros((n_chains, dim))
    zs = np.zeros((n_chains, max(n_steps - 1, 0), dim))
    for j in range(n_chains):
        rng = seeded_rng(*seed_keys, j)
        x_t[j] = rng.standard_normal(dim)
        if n_steps > 1:
            zs[j] = rng.standard_normal((n_steps - 1, dim))
    return x_t, zs


def _run_block(x_t, zs, y, model, classifier, guidance, sched):
    n_steps = sched.n_steps
    for t in range(n_steps, 0, -1):
        z = zs[:, n_steps - t] if t > 1 else 0.0
        x_t = guided_reverse_step(x_t, t, y, model, classifier, guidance, sched, z)
    return x_t


def sample(model, sched, n, y=None, classifier=None, guidance=None,
           seed=0, stream_keys=(_STREAM_CHAIN,), workers=1):
    """Run n independent reverse chains; chain j's noise comes from the stream
    (seed, *stream_keys, j). Worker count never changes the output."""
    if n == 0:
        return np.zeros((0, model.data_dim))
    x_t, zs = _chain_noise((seed, *stream_keys), n, sched.n_steps, model.data_dim)
    blocks = [(lo, min(lo + _CHAIN_BLOCK, n)) for lo in range(0, n, _CHAIN_BLOCK)]

    def run(span):
        lo, hi = span
        y_blk = None
        if y is not None:
            y_blk = np.full(hi - lo, y) if np.isscalar(y) else np.asarray(y)[lo:hi]
        return _run_block(x_t[lo:hi], zs[lo:hi], y_blk, model,
                          classifier, guidance, sched)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(run, blocks))
    else:
        outs = [run(b) for b in blocks]
    return np.concatenate(outs, axis=0)


class GaussianDiffusion(BaseEstimator):
    """Unconditional diffusion model over feature vectors, sklearn-style.

    fit(X) trains the denoiser with SGD + momentum on the noise-prediction
    objective; sample() draws new vectors, optionally steered toward a class
    by a trained classifier.
    """

    def __init__(self, n_steps=100, beta_start=None, beta_end=None,
                 hidden_dims=(128, 128), time_embed_dim=32, epochs=150,
                 learning_rate=0.003, momentum=0.9, batch_size=128, seed=0):
        self.n_steps = n_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.hidden_dims = hidden_dims
        self.time_embed_dim = time_embed_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.seed = seed

    def _build_schedule(self):
        b0, b1 = self.beta_start, self.beta_end
        if b0 is None or b1 is None:
            d0, d1 = default_beta_bounds(self.n_steps)
            b0 = d0 if b0 is None else b0
            b1 = d1 if b1 is None else b1
        return build_schedule(self.n_steps, b0, b1)

    def _init_model(self, dim):
        dims = [dim + self.time_embed_dim, *self.hidden_dims, dim]
        net = FeedForwardNet.random_init(
            dims, seeded_rng(self.seed, _STREAM_DM_INIT),
            activation="relu", output_head="linear")
        return DenoiserModel(net, dim, self.time_embed_dim)

    def fit(self, X, y=None):
        """Label-free pretraining; records a per-epoch loss trace."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DimensionError("X must be a nonempty 2-D array")
        self.schedule_ = self._build_schedule()
        self.model_ = self._init_model(X.shape[1])
        opt = MomentumSGD(self.model_.net, self.learning_rate, self.momentum)
        self.loss_trace_ = []
        initial_loss = None
        bad_epochs = 0
        for epoch in range(self.epochs):
            rng = seeded_rng(self.seed, _STREAM_DM_TRAIN, epoch)
            order = rng.permutation(X.shape[0])
            losses = []
            for lo in range(0, len(order), self.batch_size):
                batch = X[order[lo:lo + self.batch_size]]
                loss, grads = diffusion_loss(self.model_, batch, self.schedule_, rng)
                opt.step(grads)
                losses.append(loss)
            epoch_loss = float(np.mean(losses))
            self.loss_trace_.append(epoch_loss)
            if initial_loss is None:
                initial_loss = epoch_loss
            bad_epochs = bad_epochs + 1 if epoch_loss > 10.0 * initial_loss else 0
            if bad_epochs >= 3:
                raise DivergenceError(
                    f"loss exceeded 10x initial for 3 epochs (epoch {epoch})")
        return self

    def sample(self, n, y=None, classifier=None, guidance=None, seed=0,
               stream_keys=(_STREAM_CHAIN,), workers=1):
        if y is not None and classifier is None:
            raise ConfigError("class-conditional sampling needs a classifier")
        return sample(self.model_, self.schedule_, n, y=y, classifier=classifier,
                      guidance=guidance, seed=seed, stream_keys=stream_keys,
                      workers=workers)

    def save(self, path):
        sched = self.schedule_
        header = {
            "data_dim": self.model_.data_dim,
            "time_embed_dim": self.model_.time_embed_dim,
            "n_steps": sched.n_steps,
            "beta_start": repr(float(sched.beta[0])),
            "beta_end": repr(float(sched.beta[-1])),
        }
        save_checkpoint(path, "denoiser", header, self.model_.net)

    @classmethod
    def load(cls, path, expect_dim=None):
        header, net = load_checkpoint(path, "denoiser")
        data_dim = int(header["data_dim"])
        if expect_dim is not None and data_dim != expect_dim:
            raise ConfigError(
                f"checkpoint data_dim {data_dim} != dataset dim {expect_dim}")
        est = cls(n_steps=int(header["n_steps"]),
                  beta_start=float(header["beta_start"]),
                  beta_end=float(header["beta_end"]),
                  time_embed_dim=int(header["time_embed_dim"]),
                  hidden_dims=tuple(net.layer_dims[1:-1]))
        est.schedule_ = est._build_schedule()
        est.model_ = DenoiserModel(net, data_dim, est.time_embed_dim)
        est.loss_trace_ = []
        return est
