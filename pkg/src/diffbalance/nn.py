"""Small dense feed-forward networks with hand-rolled reverse-mode gradients.

Everything is float64. Forward evaluation is a pure function of (net, input);
training code mutates parameters only through `MomentumSGD.step`.
"""

import numpy as np

from .errors import DimensionError, NumericError

ACTIVATIONS = ("relu", "tanh")
OUTPUT_HEADS = ("linear", "log_softmax")


def seeded_rng(*keys):
    """Deterministic RNG stream addressed by a tuple of non-negative ints."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise DimensionError(f"expected 1-D or 2-D input, got shape {x.shape}")
    return x, False


def log_softmax(z):
    """Row-wise log-softmax with max subtraction."""
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class GradientTape:
    """Recorded forward pass of a FeedForwardNet, replayable backwards.

    Holds the input, the post-activation value of every layer and, for a
    log_softmax head, the final log-probabilities.
    """

    def __init__(self, net, x, hiddens, pre_head, output):
        self.net = net
        self.x = x
        self.hiddens = hiddens          # post-activation per hidden layer
        self.pre_head = pre_head        # logits entering the head
        self.output = output

    def backward(self, grad_output):
        """Gradients of sum(grad_output * output) w.r.t. params and input.

        Returns (param_grads, input_grad) where param_grads is a list of
        (dW, db) matching net.weights / net.biases.
        """
        net = self.net
        g = np.asarray(grad_output, dtype=np.float64)
        if g.shape != self.output.shape:
            raise DimensionError(
                f"grad_output shape {g.shape} != output shape {self.output.shape}")
        if net.output_head == "log_softmax":
            p = np.exp(self.output)
            g = g - p * g.sum(axis=-1, keepdims=True)
        param_grads = [None] * net.n_layers
        acts = [self.x] + self.hiddens
        for li in range(net.n_layers - 1, -1, -1):
            a_in = acts[li]
            dw = a_in.T @ g
            db = g.sum(axis=0)
            if not (np.isfinite(dw).all() and np.isfinite(db).all()):
                raise NumericError(f"non-finite gradient at layer {li}")
            param_grads[li] = (dw, db)
            g = g @ net.weights[li].T
            if li > 0:
                h = self.hiddens[li - 1]
                if net.activation == "relu":
                    g = g * (h > 0.0)
                else:  # tanh
                    g = g * (1.0 - h * h)
        return param_grads, g


class FeedForwardNet:
    """Fully-connected net: hidden layers share one activation, plus a head.

    layer_dims = [d_in, h1, ..., d_out]; weights[i] has shape
    (layer_dims[i], layer_dims[i+1]).
    """

    def __init__(self, layer_dims, weights, biases, activation="relu",
                 output_head="linear"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if output_head not in OUTPUT_HEADS:
            raise ValueError(f"unknown output head {output_head!r}")
        if len(layer_dims) < 2:
            raise DimensionError("need at least input and output dims")
        if len(weights) != len(layer_dims) - 1 or len(biases) != len(weights):
            raise DimensionError("weights/biases count does not match layer_dims")
        for i, (w, b) in enumerate(zip(weights, biases)):
            expect = (layer_dims[i], layer_dims[i + 1])
            if w.shape != expect or b.shape != (layer_dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: weight shape {w.shape} incompatible with dims {expect}")
        self.layer_dims = list(layer_dims)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation
        self.output_head = output_head

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def random_init(cls, layer_dims, rng, activation="relu", output_head="linear"):
        """Uniform fan-in scaled initialization, U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
        weights, biases = [], []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            biases.append(np.zeros(d_out))
        return cls(layer_dims, weights, biases, activation, output_head)

    @classmethod
    def zeros(cls, layer_dims, activation="relu", output_head="linear"):
        weights = [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])]
        biases = [np.zeros(b) for b in layer_dims[1:]]
        return cls(layer_dims, weights, biases, activation, output_head)

    def copy(self):
        return FeedForwardNet(self.layer_dims,
                              [w.copy() for w in self.weights],
                              [b.copy() for b in self.biases],
                              self.activation, self.output_head)

    def forward_trace(self, x):
        """Forward pass returning (output, GradientTape)."""
        xb, squeeze = _as_batch(x)
        if xb.shape[1] != self.layer_dims[0]:
            raise DimensionError(
                f"input dim {xb.shape[1]} != first layer dim {self.layer_dims[0]}")
        h = xb
        hiddens = []
        for li in range(self.n_layers - 1):
            z = h @ self.weights[li] + self.biases[li]
            h = np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)
            hiddens.append(h)
        pre_head = h @ self.weights[-1] + self.biases[-1]
        out = log_softmax(pre_head) if self.output_head == "log_softmax" else pre_head
        if not np.isfinite(out).all():
            raise NumericError("non-finite network output")
        tape = GradientTape(self, xb, hiddens, pre_head, out)
        return (out[0] if squeeze else out), tape

    def forward(self, x):
        out, _ = self.forward_trace(x)
        return out


def forward_eval(net, x):
    """Pure batched evaluation of `net` at `x`."""
    return net.forward(x)


def scalar_gradient(net, x, scalar_fn):
    """Gradients of a scalar reduction of the network output.

    scalar_fn(output) must return (value, d value / d output). Returns
    (value, param_grads, input_grad); input_grad matches the shape of x.
    """
    xb, squeeze = _as_batch(np.asarray(x, dtype=np.float64))
    out, tape = net.forward_trace(xb)
    value, grad_out = scalar_fn(out)
    param_grads, input_grad = tape.backward(grad_out)
    return value, param_grads, (input_grad[0] if squeeze else input_grad)


class MomentumSGD:
    """Classical momentum SGD over a FeedForwardNet's parameters."""

    def __init__(self, net, lr, momentum=0.9):
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self.vel = [(np.zeros_like(w), np.zeros_like(b))
                    for w, b in zip(net.weights, net.biases)]

    def step(self, param_grads):
        for li, (dw, db) in enumerate(param_grads):
            vw, vb = self.vel[li]
            vw *= self.momentum
            vw -= self.lr * dw
            vb *= self.momentum
            vb -= self.lr * db
            self.net.weights[li] += vw
            self.net.biases[li] += vb
