"""Softmax classifier on a small feed-forward net.

Besides the usual fit/predict surface it exposes the two quantities the rest
of the pipeline feeds on: per-class training accuracy (drives the synthetic
budget split) and the input-space gradient of log p(y|x) (drives guided
sampling).
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DimensionError, NumericError
from .nn import FeedForwardNet, MomentumSGD, seeded_rng

_STREAM_CLF_INIT = 31
_STREAM_CLF_EPOCH = 32


def cross_entropy(log_probs, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the log-probs."""
    n = log_probs.shape[0]
    loss = -float(np.mean(log_probs[np.arange(n), labels]))
    grad = np.zeros_like(log_probs)
    grad[np.arange(n), labels] = -1.0 / n
    return loss, grad


class SoftmaxClassifier(BaseEstimator, ClassifierMixin):
    """MLP with a log-softmax head, trained with SGD + momentum and a step
    learning-rate decay (x0.1 at 30%/60%/90% of the planned epochs)."""

    def __init__(self, n_classes, hidden_dims=(64, 64), learning_rate=0.05,
                 momentum=0.9, batch_size=32, epochs=60, noise_std=0.0, seed=0):
        self.n_classes = n_classes
        self.hidden_dims = hidden_dims
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.noise_std = noise_std  # optional Gaussian input jitter during training
        self.seed = seed

    # -- setup -------------------------------------------------------------

    def init_net(self, dim):
        dims = [dim, *self.hidden_dims, self.n_classes]
        self.net_ = FeedForwardNet.random_init(
            dims, seeded_rng(self.seed, _STREAM_CLF_INIT),
            activation="relu", output_head="log_softmax")
        self.opt_ = MomentumSGD(self.net_, self.learning_rate, self.momentum)
        self.dim_ = dim
        return self

    def _check_ready(self, X):
        if not hasattr(self, "net_"):
            raise ConfigError("classifier not initialized; call init_net or fit")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim_:
            raise DimensionError(f"expected {self.dim_} features, got {X.shape[1]}")
        return X

    def epoch_lr(self, epoch_index):
        """Learning rate for a 0-based epoch under the step-decay schedule."""
        lr = self.learning_rate
        for frac in (0.3, 0.6, 0.9):
            if epoch_index >= int(frac * self.epochs):
                lr *= 0.1
        return lr

    # -- training ----------------------------------------------------------

    def train_epoch(self, X, y, epoch_index):
        """One shuffled pass; returns the mean cross-entropy over minibatches."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise DimensionError("empty training set")
        if y.max() >= self.n_classes or y.min() < 0:
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")
        if not hasattr(self, "net_"):
            self.init_net(X.shape[1])
        self.opt_.lr = self.epoch_lr(epoch_index)
        rng = seeded_rng(self.seed, _STREAM_CLF_EPOCH, epoch_index)
        order = rng.permutation(X.shape[0])
        losses = []
        for lo in range(0, len(order), self.batch_size):
            idx = order[lo:lo + self.batch_size]
            xb = X[idx]
            if self.noise_std > 0.0:
                xb = xb + self.noise_std * rng.standard_normal(xb.shape)
            logp, tape = self.net_.forward_trace(xb)
            loss, grad = cross_entropy(logp, y[idx])
            if not np.isfinite(loss):
                raise NumericError("non-finite cross-entropy loss")
            grads, _ = tape.backward(grad)
            self.opt_.step(grads)
            losses.append(loss)
        return float(np.mean(losses))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        self.init_net(X.shape[1])
        self.loss_trace_ = [self.train_epoch(X, y, e) for e in range(self.epochs)]
        return self

    # -- inference ---------------------------------------------------------

    def predict_log_proba(self, X):
        single = np.asarray(X).ndim == 1
        out = self.net_.forward(self._check_ready(X))
        return out[0] if single else out

    def predict(self, X):
        return np.argmax(self.predict_log_proba(X), axis=-1)

    def per_class_accuracy(self, X, y):
        """Fraction correct per class; a class absent from (X, y) scores 0."""
        y = np.asarray(y, dtype=np.int64)
        pred = self.predict(X)
        acc = np.zeros(self.n_classes)
        for cls in range(self.n_classes):
            mask = y == cls
            if mask.any():
                acc[cls] = float(np.mean(pred[mask] == cls))
        return acc

    def input_logprob_gradient(self, X, y):
        """Gradient of log p(y_i | x_i) w.r.t. each input row."""
        single = np.asarray(X).ndim == 1
        X = self._check_ready(X)
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if len(y) == 1 and X.shape[0] > 1:
            y = np.full(X.shape[0], y[0])
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ConfigError(f"class id outside [0, {self.n_classes})")
        logp, tape = self.net_.forward_trace(X)
        grad_out = np.zeros_like(logp)
        grad_out[np.arange(X.shape[0]), y] = 1.0
        _, input_grad = tape.backward(grad_out)
        return input_grad[0] if single else input_grad

    # -- persistence -------------------------------------------------------

    def snapshot(self):
        """Deep copy of the current parameters (for best-epoch retention)."""
        return self.net_.copy()

    def restore(self, net):
        self.net_ = net
        self.opt_ = MomentumSGD(self.net_, self.learning_rate, self.momentum)
        return self

    def save(self, path):
        header = {"n_classes": self.n_classes, "dim": self.dim_}
        save_checkpoint(path, "classifier", header, self.net_)

    @classmethod
    def load(cls, path, expect_dim=None):
        header, net = load_checkpoint(path, "classifier")
        dim = int(header["dim"])
        if expect_dim is not None and dim != expect_dim:
            raise ConfigError(f"checkpoint dim {dim} != dataset dim {expect_dim}")
        est = cls(n_classes=int(header["n_classes"]),
                  hidden_dims=tuple(net.layer_dims[1:-1]))
        est.net_ = net
        est.dim_ = dim
        est.opt_ = MomentumSGD(net, est.learning_rate, est.momentum)
        return est
