"""Dense feed-forward networks with a hand-written reverse pass.

A net maps ``input_dim`` data features (plus ``conditioning_dim`` extra
features appended on the right) through affine layers with ReLU or identity
activations. Inputs may be a single vector ``(d,)`` or a batch ``(B, d)``.
"""
from dataclasses import dataclass, field
from enum import IntEnum
import itertools
import struct

import numpy as np

from .rng import Rng, Stream, context_id

SCN_MAGIC = b"SCN1"


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class FormatError(ValueError):
    pass


class Activation(IntEnum):
    IDENTITY = 0
    RELU = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64, ndmin=1)
        self.activation = Activation(self.activation)
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight rows {self.weight.shape[0]}"
            )


_version_counter = itertools.count(1)


class FeedForwardNet:
    def __init__(self, layers, input_dim=None, conditioning_dim=0):
        if not layers:
            raise ShapeError("a net needs at least one layer")
        self.layers = list(layers)
        self.conditioning_dim = int(conditioning_dim)
        first_in = self.layers[0].weight.shape[1]
        if input_dim is None:
            input_dim = first_in - self.conditioning_dim
        self.input_dim = int(input_dim)
        if self.input_dim <= 0 or self.conditioning_dim < 0:
            raise ShapeError("input_dim must be positive and conditioning_dim nonnegative")
        if first_in != self.input_dim + self.conditioning_dim:
            raise ShapeError(
                f"first layer takes {first_in} features, expected "
                f"{self.input_dim} + {self.conditioning_dim}"
            )
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.weight.shape[0] != b.weight.shape[1]:
                raise ShapeError(f"layer {k} outputs {a.weight.shape[0]} but layer {k + 1} takes {b.weight.shape[1]}")
        self.version = next(_version_counter)

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    @classmethod
    def init(cls, sizes, seed, conditioning_dim=0, hidden_activation=Activation.RELU, tag=0):
        """Glorot-uniform weights, zero biases; ``sizes`` runs input to output.

        ``sizes[0]`` is the data dimension; conditioning features are added
        on top of it for the first layer.
        """
        sizes = [int(s) for s in sizes]
        layers = []
        fan_ins = [sizes[0] + conditioning_dim] + sizes[1:-1]
        for k, (fan_in, fan_out) in enumerate(zip(fan_ins, sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            u = Rng(seed, context_id(Stream.INIT, tag), index=k).uniform((fan_out, fan_in))
            act = hidden_activation if k < len(sizes) - 2 else Activation.IDENTITY
            layers.append(Layer((2.0 * u - 1.0) * limit, np.zeros(fan_out), act))
        return cls(layers, sizes[0], conditioning_dim)

    def parameters(self):
        """Flat ``[W0, b0, W1, b1, ...]`` list; the arrays are live."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def set_parameters(self, params):
        params = list(params)
        if len(params) != 2 * len(self.layers):
            raise ShapeError("parameter list length does not match the layer count")
        for k, layer in enumerate(self.layers):
            w, b = np.asarray(params[2 * k], dtype=np.float64), np.asarray(params[2 * k + 1], dtype=np.float64)
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError(f"parameter shapes for layer {k} do not match")
            layer.weight, layer.bias = w.copy(), b.copy()
        self.version = next(_version_counter)

    def copy(self):
        layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return FeedForwardNet(layers, self.input_dim, self.conditioning_dim)

    def __call__(self, x, conditioning=None):
        return net_forward(self, x, conditioning)[0]


@dataclass
class GradTape:
    net_id: int
    version: int
    batched: bool
    layer_inputs: list
    pre_activations: list
    output: np.ndarray
    used: bool = field(default=False)


def _prepare_input(net, x, conditioning):
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    xb = x if batched else x.reshape(1, -1)
    if xb.ndim != 2 or xb.shape[1] != net.input_dim:
        raise ShapeError(f"input has {x.shape[-1] if x.ndim else 0} features, net expects {net.input_dim}")
    if net.conditioning_dim:
        if conditioning is None:
            raise ShapeError(f"net expects {net.conditioning_dim} conditioning features")
        c = np.asarray(conditioning, dtype=np.float64)
        if c.ndim not in (1, 2) or c.shape[-1] != net.conditioning_dim:
            raise ShapeError(f"conditioning must have {net.conditioning_dim} features")
        try:
            c = np.broadcast_to(c.reshape(-1, net.conditioning_dim), (xb.shape[0], net.conditioning_dim))
        except ValueError:
            raise ShapeError("conditioning rows do not match the input batch") from None
        xb = np.concatenate([xb, c], axis=1)
    elif conditioning is not None and np.size(conditioning) != 0:
        raise ShapeError("net takes no conditioning features")
    return xb, batched


def net_forward(net, x, conditioning=None):
    """Evaluate ``net``; returns the output and a tape for :func:`net_backward`."""
    h, batched = _prepare_input(net, x, conditioning)
    inputs, pres = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pres.append(z)
        h = np.maximum(z, 0.0) if layer.activation == Activation.RELU else z
    out = h if batched else h[0]
    tape = GradTape(id(net), net.version, batched, inputs, pres, out)
    return out, tape


def net_backward(net, tape, output_cotangent, full_input=False):
    """Pull ``output_cotangent`` back through the taped forward pass.

    Returns ``(param_grads, input_grad)``. ``param_grads`` mirrors
    :meth:`FeedForwardNet.parameters` and is summed over the batch.
    ``input_grad`` covers the data features only unless ``full_input``.
    """
    if tape.net_id != id(net) or tape.version != net.version:
        raise TapeError("tape was recorded on a different net or before a parameter update")
    if tape.used:
        raise TapeError("tape already consumed by a backward pass")
    g = np.asarray(output_cotangent, dtype=np.float64)
    if g.shape != tape.output.shape:
        raise ShapeError(f"cotangent shape {g.shape} does not match output shape {tape.output.shape}")
    tape.used = True
    g = g if tape.batched else g.reshape(1, -1)
    grads = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == Activation.RELU:
            g = g * (tape.pre_activations[k] > 0.0)
        grads[2 * k] = g.T @ tape.layer_inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight
    if not full_input:
        g = g[:, : net.input_dim]
    return grads, (g if tape.batched else g[0])


def save_net(net, path):
    with open(path, "wb") as f:
        f.write(net_to_bytes(net))


def net_to_bytes(net):
    parts = [SCN_MAGIC, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        rows, cols = layer.weight.shape
        parts.append(struct.pack("<IIB", rows, cols, int(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def net_from_bytes(data, conditioning_dim=0):
    if data[:4] != SCN_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {SCN_MAGIC!r}")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        layers = []
        for _ in range(count):
            rows, cols, act = struct.unpack_from("<IIB", data, pos)
            pos += 9
            nw, nb = rows * cols * 8, rows * 8
            if pos + nw + nb > len(data):
                raise FormatError("truncated layer payload")
            w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
            b = np.frombuffer(data, dtype="<f8", count=rows, offset=pos + nw)
            pos += nw + nb
            layers.append(Layer(w.astype(np.float64), b.astype(np.float64), Activation(act)))
    except struct.error as exc:
        raise FormatError(f"truncated header: {exc}") from None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after the last layer")
    return FeedForwardNet(layers, conditioning_dim=conditioning_dim)


def load_net(path, conditioning_dim=0):
    with open(path, "rb") as f:
        return net_from_bytes(f.read(), conditioning_dim)
