"""Parameterised building blocks registered in a :class:`ParamStore`."""
from __future__ import annotations

import math

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError


class Linear:
    def __init__(self, store: nx.ParamStore, name: str, d_in: int, d_out: int, bias: bool = True):
        self.weight = store.add(f"{name}.weight", (d_in, d_out), fan_in=d_in)
        self.bias = store.add(f"{name}.bias", (d_out,), init="zeros") if bias else None

    def __call__(self, x):
        return nx.affine(x, self.weight, self.bias)


class Mlp:
    """Affine layers with ReLU between them (none after the last)."""

    def __init__(self, store, name: str, dims: list[int]):
        self.layers = [Linear(store, f"{name}.{i}", dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def __call__(self, x):
        return nx.affine_relu_stack(x, [(l.weight, l.bias) for l in self.layers])


class LayerNorm:
    def __init__(self, store, name: str, d: int, eps: float = 1e-5):
        self.gain = store.add(f"{name}.gain", (d,), init="ones")
        self.bias = store.add(f"{name}.bias", (d,), init="zeros")
        self.eps = eps

    def __call__(self, x):
        return nx.layer_norm(x, self.gain, self.bias, self.eps)


class BatchNorm:
    """Normalisation over every row fed in one call (all leading axes).

    Uses batch statistics while ``training`` and running averages otherwise.
    The running averages live in ``store.buffers`` so checkpoints carry them.
    """

    def __init__(self, store, name: str, d: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gain = store.add(f"{name}.gain", (d,), init="ones")
        self.bias = store.add(f"{name}.bias", (d,), init="zeros")
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.training = True
        self.store = store
        store.buffers[f"{name}.running_mean"] = np.zeros(d)
        store.buffers[f"{name}.running_var"] = np.ones(d)

    def __call__(self, x):
        shape = x.shape
        flat = nx.reshape(x, (-1, shape[-1]))
        rm, rv = f"{self.name}.running_mean", f"{self.name}.running_var"
        if self.training and flat.shape[0] > 1:
            mu = nx.mean(flat, axis=0, keepdims=True)
            xc = flat - mu
            var = nx.mean(xc * xc, axis=0, keepdims=True)
            xhat = xc * nx.power(var + self.eps, -0.5)
            n = flat.shape[0]
            self.store.buffers[rm] = (1 - self.momentum) * self.store.buffers[rm] + self.momentum * mu.data[0]
            self.store.buffers[rv] = (1 - self.momentum) * self.store.buffers[rv] + self.momentum * var.data[0] * n / (n - 1)
        else:
            xhat = (flat - self.store.buffers[rm]) * (1.0 / np.sqrt(self.store.buffers[rv] + self.eps))
        return nx.reshape(xhat * self.gain + self.bias, shape)


def make_norm(store, name: str, d: int, kind: str):
    if kind == "layer":
        return LayerNorm(store, name, d)
    if kind == "batch":
        return BatchNorm(store, name, d)
    raise ConfigError(f"norm must be 'layer' or 'batch', got {kind!r}")


class NormMlp:
    """Linear -> norm -> ReLU blocks; ``final_act=False`` leaves the last block a plain linear map."""

    def __init__(self, store, name: str, dims: list[int], norm: str = "layer", final_act: bool = True):
        self.linears, self.norms = [], []
        last = len(dims) - 2
        for i in range(len(dims) - 1):
            self.linears.append(Linear(store, f"{name}.{i}", dims[i], dims[i + 1]))
            act = i < last or final_act
            self.norms.append(make_norm(store, f"{name}.{i}.norm", dims[i + 1], norm) if act else None)

    def __call__(self, x):
        for lin, norm in zip(self.linears, self.norms):
            x = lin(x)
            if norm is not None:
                x = nx.relu(norm(x))
        return x


class Attention:
    """Projections for one multi-head attention block."""

    def __init__(self, store, name: str, d: int, heads: int, d_kv: int | None = None):
        if d % heads:
            raise ConfigError(f"model dim {d} not divisible by {heads} heads")
        d_kv = d if d_kv is None else d_kv
        self.q = Linear(store, f"{name}.q", d, d)
        self.k = Linear(store, f"{name}.k", d_kv, d)
        self.v = Linear(store, f"{name}.v", d_kv, d)
        self.o = Linear(store, f"{name}.o", d, d)
        self.heads = heads

    def __call__(self, queries, keys, values, bias=None, return_weights: bool = False):
        return multi_head_attention(queries, keys, values, self, self.heads, bias, return_weights)


def _split_heads(x, heads):
    *lead, n, d = x.shape
    x = nx.reshape(x, (*lead, n, heads, d // heads))
    return nx.swapaxes(x, -2, -3)


def multi_head_attention(queries, keys, values, params: Attention, heads: int, bias=None,
                         return_weights: bool = False):
    """Scaled dot-product attention over ``[..., n, d]`` inputs with ``heads`` heads.

    ``bias`` (``[..., n, m]``, shared by all heads) is added to the logits before the softmax.
    With ``return_weights`` the ``[..., heads, n, m]`` attention weights come back as well.
    """
    if keys.shape[-2] != values.shape[-2]:
        raise DimensionError("keys and values must have the same length")
    q = _split_heads(params.q(queries), heads)
    k = _split_heads(params.k(keys), heads)
    v = _split_heads(params.v(values), heads)
    dh = q.shape[-1]
    logits = nx.matmul(q, nx.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    if bias is not None:
        bias = nx.as_tensor(bias)
        logits = logits + nx.reshape(bias, (*bias.shape[:-2], 1, *bias.shape[-2:]))
    w = nx.softmax(logits, axis=-1)
    out = nx.swapaxes(nx.matmul(w, v), -2, -3)
    *lead, n, h, _ = out.shape
    out = params.o(nx.reshape(out, (*lead, n, h * dh)))
    return (out, w) if return_weights else out


class FeedForward:
    def __init__(self, store, name: str, d: int, hidden: int):
        self.mlp = Mlp(store, name, [d, hidden, d])

    def __call__(self, x):
        return self.mlp(x)
