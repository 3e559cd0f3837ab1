"""Small dense networks with hand-written backprop, Adam and soft target updates.

Weights of each layer are stored as (fan_in, fan_out) so a batch ``x`` of
shape (B, fan_in) maps to ``x @ W + b``.

Parameter dump layout (little-endian)::

    b"IOTNN001"                       magic
    uint32 L                          number of layers
    uint32 sizes[L + 1]               layer widths, input first
    uint8  activation[L]              0 identity, 1 relu, 2 tanh
    for each layer: float64 W[in*out] (row-major), float64 b[out]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"IOTNN001"
ACTIVATIONS = ("identity", "relu", "tanh")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


class DenseNet:
    def __init__(self, sizes, activations, rng: np.random.Generator | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(activations) != len(sizes) - 1:
            raise ValueError("one activation per layer required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = list(activations)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            scale = np.sqrt(2.0 / fan_in) if act == "relu" else np.sqrt(1.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x):
        """Return (output, cache); ``cache`` feeds :meth:`backward`."""
        a = np.asarray(x, dtype=float)
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            out = _act(act, z)
            cache.append((a, z, out))
            a = out
        return a, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Reverse pass; returns (parameter grads in ``params`` order, input grad)."""
        g = np.asarray(grad_out, dtype=float)
        grads = []
        for (a_in, z, out), w, act in zip(reversed(cache), reversed(self.weights), reversed(self.activations)):
            dz = g * _act_grad(act, z, out)
            if a_in.ndim == 1:
                dw = np.outer(a_in, dz)
                db = dz
            else:
                dw = a_in.T @ dz
                db = dz.sum(axis=0)
            grads = [dw, db] + grads
            g = dz @ w.T
        return grads, g

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.activations = list(self.activations)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        k = 0
        for p in self.params:
            p[...] = vec[k : k + p.size].reshape(p.shape)
            k += p.size
        if k != vec.size:
            raise ValueError("parameter vector length mismatch")

    def to_bytes(self) -> bytes:
        n = len(self.weights)
        head = MAGIC + struct.pack(f"<I{n + 1}I{n}B", n, *self.sizes, *(ACTIVATIONS.index(a) for a in self.activations))
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "DenseNet":
        if data[:8] != MAGIC:
            raise ValueError("not a parameter dump")
        (n,) = struct.unpack_from("<I", data, 8)
        off = 12
        sizes = list(struct.unpack_from(f"<{n + 1}I", data, off))
        off += 4 * (n + 1)
        acts = [ACTIVATIONS[c] for c in struct.unpack_from(f"<{n}B", data, off)]
        off += n
        net = cls.__new__(cls)
        net.sizes, net.activations, net.weights, net.biases = sizes, acts, [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out).astype(float)
            off += 8 * fan_in * fan_out
            b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off).astype(float)
            off += 8 * fan_out
            net.weights.append(w)
            net.biases.append(b)
        if off != len(data):
            raise ValueError("trailing bytes in parameter dump")
        return net

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DenseNet":
        return cls.from_bytes(Path(path).read_bytes())


def forward(net: DenseNet, x):
    return net.forward(x)[0]


def backward(net: DenseNet, x, upstream):
    _, cache = net.forward(x)
    return net.backward(cache, upstream)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        step = self.lr / c1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p -= step * m / denom


def adam_step(state: Adam, params, grads):
    state.step(params, grads)
    return params


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    for pt, po in zip(target.params, online.params):
        pt *= 1.0 - tau
        pt += tau * po
