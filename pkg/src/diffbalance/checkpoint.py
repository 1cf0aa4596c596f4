"""Deterministic text checkpoints: header key=value lines + parameter dumps.

Text with repr() floats round-trips float64 exactly and makes re-running a
command byte-identical, which binary zip containers (timestamps) are not.
"""

import numpy as np

from .errors import ParseError
from .nn import FeedForwardNet

FORMAT_VERSION = "v1"


def write_net(fh, net):
    fh.write("layer_dims=" + ",".join(str(d) for d in net.layer_dims) + "\n")
    fh.write(f"activation={net.activation}\n")
    fh.write(f"output_head={net.output_head}\n")
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        fh.write(f"L{li}W " + " ".join(repr(float(v)) for v in w.ravel()) + "\n")
        fh.write(f"L{li}B " + " ".join(repr(float(v)) for v in b.ravel()) + "\n")


def save_checkpoint(path, kind, header, net):
    """kind tags the model type; header is an ordered dict of scalar fields."""
    with open(path, "w") as fh:
        fh.write(f"diffbalance-{kind} {FORMAT_VERSION}\n")
        for key, val in header.items():
            fh.write(f"{key}={val}\n")
        write_net(fh, net)


def load_checkpoint(path, kind):
    """Returns (header dict of strings, FeedForwardNet)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty checkpoint")
    expect = f"diffbalance-{kind} {FORMAT_VERSION}"
    if lines[0] != expect:
        raise ParseError(path, 1, f"expected {expect!r}, found {lines[0]!r}")
    header = {}
    i = 1
    while i < len(lines) and "=" in lines[i] and not lines[i].startswith("L"):
        key, _, val = lines[i].partition("=")
        header[key] = val
        i += 1
    for req in ("layer_dims", "activation", "output_head"):
        if req not in header:
            raise ParseError(path, i, f"missing {req} header")
    try:
        dims = [int(v) for v in header["layer_dims"].split(",")]
    except ValueError:
        raise ParseError(path, i, "bad layer_dims") from None
    weights, biases = [], []
    for li in range(len(dims) - 1):
        for tag, shape, dest in ((f"L{li}W", (dims[li], dims[li + 1]), weights),
                                 (f"L{li}B", (dims[li + 1],), biases)):
            if i >= len(lines) or not lines[i].startswith(tag + " "):
                raise ParseError(path, i + 1, f"expected parameter line {tag}")
            try:
                vals = np.array([float(v) for v in lines[i].split(" ")[1:]])
            except ValueError:
                raise ParseError(path, i + 1, f"non-numeric value in {tag}") from None
            if vals.size != int(np.prod(shape)):
                raise ParseError(path, i + 1,
                                 f"{tag}: expected {int(np.prod(shape))} values, got {vals.size}")
            dest.append(vals.reshape(shape))
            i += 1
    net = FeedForwardNet(dims, weights, biases,
                         header["activation"], header["output_head"])
    return header, net
