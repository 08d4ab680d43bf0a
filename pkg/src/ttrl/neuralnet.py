"""Small feed-forward networks with hand-written backprop and Adam.

Parameters live in one flat float64 vector; per-layer weight and bias arrays
are views into it. That keeps the optimizer a handful of vector operations
and makes checkpoints a single blob.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")
_MAGIC = "ttrl-mlp"


class StaleTapeError(ValueError):
    pass


def _act(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(kind, z, y, gy):
    if kind == "tanh":
        return gy * (1.0 - y * y)
    if kind == "relu":
        return gy * (z > 0.0)
    return gy


@dataclass(eq=False)
class Tape:
    net_id: int
    version: int
    squeeze: bool
    inputs: list  # layer inputs, first entry is the network input
    pre: list  # pre-activations
    out: list  # post-activations


class MlpNet:
    """Affine layers, each followed by its own activation.

    ``sizes`` lists every width from input to output; ``activations`` has one
    entry per affine layer.
    """

    def __init__(self, sizes, activations, params=None):
        sizes = [int(s) for s in sizes]
        activations = [str(a).lower() for a in activations]
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        if any(a not in ACTIVATIONS for a in activations):
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.sizes = sizes
        self.activations = activations
        self.n_params = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.zeros(self.n_params)
        params = np.array(params, dtype=np.float64).reshape(-1)
        if params.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {params.size}")
        self.params = params
        self.version = 0
        self.weights, self.biases = self._views(self.params)

    def _views(self, flat):
        ws, bs, k = [], [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            ws.append(flat[k:k + i * o].reshape(i, o))
            k += i * o
            bs.append(flat[k:k + o])
            k += o
        return ws, bs

    def unflatten(self, flat):
        """Per-layer (weights, biases) views of a parameter-shaped vector."""
        return self._views(np.asarray(flat))

    @classmethod
    def xavier(cls, sizes, activations, rng: np.random.Generator) -> "MlpNet":
        """Xavier-uniform weights, zero biases."""
        net = cls(sizes, activations)
        for w in net.weights:
            fan_in, fan_out = w.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-bound, bound, w.shape)
        return net

    def copy(self) -> "MlpNet":
        return MlpNet(self.sizes, self.activations, self.params.copy())

    def touch(self):
        """Mark parameters as changed; tapes recorded earlier become stale."""
        self.version += 1

    # -- evaluation --------------------------------------------------------

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {a.shape[1]} != {self.sizes[0]}")
        inputs, pre, out = [], [], []
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            inputs.append(a)
            z = a @ w + b
            a = _act(kind, z)
            pre.append(z)
            out.append(a)
        tape = Tape(id(self), self.version, squeeze, inputs, pre, out)
        return (a[0] if squeeze else a), tape

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape: Tape, output_grad, param_grads=True, input_grad=True):
        """Reverse pass. Returns (input gradient, flat parameter gradient).

        Gradients are summed over the batch dimension. Either half can be
        switched off and comes back as None.
        """
        if tape.net_id != id(self) or tape.version != self.version:
            raise StaleTapeError("tape does not belong to this network state")
        g = np.asarray(output_grad, dtype=np.float64)
        g = g[None, :] if tape.squeeze else g
        if g.shape != tape.out[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} != {tape.out[-1].shape}")
        grads = gw = gb = None
        if param_grads:
            grads = np.empty(self.n_params)
            gw, gb = self._views(grads)
        for i in reversed(range(len(self.weights))):
            dz = _act_grad(self.activations[i], tape.pre[i], tape.out[i], g)
            if param_grads:
                np.matmul(tape.inputs[i].T, dz, out=gw[i])
                dz.sum(axis=0, out=gb[i])
            if i > 0 or input_grad:
                g = dz @ self.weights[i].T
        if not input_grad:
            return None, grads
        return (g[0] if tape.squeeze else g), grads

    # -- persistence -------------------------------------------------------

    def save(self, path):
        """JSON header line, then the parameters as little-endian float64."""
        header = {"format": _MAGIC, "version": 1, "sizes": self.sizes,
                  "activations": self.activations, "n_params": self.n_params, "dtype": "<f8"}
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpNet":
        raw = Path(path).read_bytes()
        line, _, blob = raw.partition(b"\n")
        header = json.loads(line)
        if header.get("format") != _MAGIC:
            raise ValueError(f"{path} is not a network checkpoint")
        params = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        return cls(header["sizes"], header["activations"], params)


@dataclass(eq=False)
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    @classmethod
    def for_net(cls, net: MlpNet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(lr, beta1, beta2, eps, 0, np.zeros(net.n_params), np.zeros(net.n_params))


def adam_step(net: MlpNet, grads, state: AdamState):
    """In-place Adam descent step on ``net.params``."""
    grads = np.asarray(grads)
    if grads.shape != net.params.shape or state.m.shape != net.params.shape:
        raise ValueError("gradient / optimizer state shape does not match the network")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * np.square(grads)
    # bias corrections folded into the step size and epsilon
    c1 = 1.0 - b1 ** state.step_count
    c2 = math.sqrt(1.0 - b2 ** state.step_count)
    denom = np.sqrt(v)
    denom += state.eps * c2
    net.params -= (state.lr * c2 / c1) * (m / denom)
    net.touch()


def _relu_pattern(net, tape):
    return [t > 0 for t, k in zip(tape.pre, net.activations) if k == "relu"]


def _same_pattern(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def gradient_check(net: MlpNet, x=None, probe=None, rng=None, h=1e-5):
    """Compare backprop against central differences for L(x) = probe . net(x).

    Returns ``(param_error, input_error)``: the largest absolute deviation
    divided by the largest gradient magnitude, over all coordinates.
    Coordinates whose perturbation flips a ReLU on or off are skipped, since
    the loss is not differentiable across that kink.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if x is None:
        x = rng.normal(size=(4, net.sizes[0]))
    x = np.asarray(x, float)
    out, tape = net.forward(x)
    if probe is None:
        probe = rng.normal(size=out.shape)
    gx, gp = net.backward(tape, probe)
    base = _relu_pattern(net, tape)

    def loss(xx):
        y, t = net.forward(xx)
        return float(np.sum(probe * y)), _relu_pattern(net, t)

    def fd(vec, f):
        num = np.zeros_like(vec)
        mask = np.ones(vec.size, bool)
        flat = vec.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, pp = f()
            flat[i] = old - h
            lm, pm = f()
            flat[i] = old
            if not (_same_pattern(pp, base) and _same_pattern(pm, base)):
                mask[i] = False
            num.reshape(-1)[i] = (lp - lm) / (2 * h)
        return num.reshape(-1), mask

    saved = net.params.copy()
    try:
        num_p, mask_p = fd(net.params, lambda: loss(x))
    finally:
        net.params[...] = saved
    xx = x.copy()
    num_x, mask_x = fd(xx, lambda: loss(xx))
    return _rel_err(gp, num_p, mask_p), _rel_err(gx.reshape(-1), num_x, mask_x)


def _rel_err(a, b, mask):
    a, b = a[mask], b[mask]
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - b).max() / scale)
