"""Dense float64 tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor`; when any input requires a gradient the
result records its parents and a backward closure.  ``Tensor.backward`` walks
the graph in reverse topological order.  Any op that produces NaN/Inf raises
:class:`NumericError` immediately instead of propagating.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyGroupError, NumericError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor initialised with non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # -- reverse mode ------------------------------------------------------
    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op} produced non-finite values (output shape {data.shape})")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward, "div")


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    if p == 0:
        return _result(np.ones_like(x.data), (x,), lambda g: (np.zeros_like(g),), "pow")
    out = x.data ** p

    def backward(g):
        if p == 1:
            return (g,)
        return (g * p * x.data ** (p - 1),)

    return _result(out, (x,), backward, "pow")


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _result(out, (x,), lambda g: (g / x.data,), "log")


def sin(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),), "sin")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid_np(x.data)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(x) -> Tensor:
    """log(sigmoid(x)) without overflow for large |x|."""
    x = as_tensor(x)
    out = -(np.log1p(np.exp(-np.abs(x.data))) + np.maximum(-x.data, 0.0))
    return _result(out, (x,), lambda g: (g * _sigmoid_np(-x.data),), "log_sigmoid")


def absolute(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data

    def backward(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

    return _result(np.where(pick_a, a.data, b.data), (a, b), backward, "maximum")


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data

    def backward(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

    return _result(np.where(pick_a, a.data, b.data), (a, b), backward, "minimum")


# -- reductions and shape ----------------------------------------------------
def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out), (x,), backward, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    return _result(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),), "swapaxes")


def index(x, key) -> Tensor:
    x = as_tensor(x)
    out = x.data[key]
    fancy = isinstance(key, (list, np.ndarray)) or (
        isinstance(key, tuple) and any(isinstance(k, (list, np.ndarray)) for k in key)
    )

    def backward(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, key, g)
        else:
            gx[key] = g
        return (gx,)

    return _result(np.array(out, dtype=np.float64), (x,), backward, "index")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(out, tuple(tensors), backward, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(out, tuple(tensors), backward, "stack")


# -- linear algebra ------------------------------------------------------------
def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(out, (a, b), backward, "matmul")


def affine(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with weight stored (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"affine: input dim {x.shape[-1]} vs weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    d_in, d_out = weight.shape

    def backward(g):
        g2 = g.reshape(-1, d_out)
        gx = (g @ weight.data.T) if x.requires_grad else None
        gw = x.data.reshape(-1, d_in).T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward, "affine")


def affine_relu_stack(x, layers, relu_between: bool = True) -> Tensor:
    """Compose affine layers ``[(W, b), ...]`` with ReLU between hidden layers."""
    for i, (w, b) in enumerate(layers):
        x = affine(x, w, b)
        if relu_between and i < len(layers) - 1:
            x = relu(x)
    return x


# -- normalisation and attention primitives ----------------------------------------
def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise DimensionError("log_softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), backward, "log_softmax")


def layer_norm(x, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise DimensionError("layer_norm over an empty axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat
    if gain is not None:
        gain = as_tensor(gain)
        out = out * gain.data
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    parents = tuple(t for t in (x, gain, bias) if t is not None)

    def backward(g):
        gxhat = g * gain.data if gain is not None else g
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gain is not None:
            grads.append((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias is not None:
            grads.append(g.reshape(-1, x.shape[-1]).sum(axis=0))
        return tuple(grads)

    return _result(out, parents, backward, "layer_norm")


def gather_rows(x, idx) -> Tensor:
    """Select rows of ``x`` (shape ``[*batch, n, d]``) by integer ``idx`` (shape ``[*batch, ...]``).

    Output shape is ``idx.shape + (d,)``.  The backward pass scatter-adds, so
    repeated indices accumulate gradient.
    """
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim < 2:
        raise DimensionError("gather_rows needs at least a 2-D input")
    batch = x.shape[:-2]
    n, d = x.shape[-2:]
    if idx.shape[: len(batch)] != batch:
        raise DimensionError(f"gather_rows: index batch dims {idx.shape} vs {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    nb = int(np.prod(batch)) if batch else 1
    offsets = (np.arange(nb) * n).reshape(batch + (1,) * (idx.ndim - len(batch)))
    flat = (idx + offsets).ravel()
    x2 = x.data.reshape(nb * n, d)
    out = x2[flat].reshape(idx.shape + (d,))

    def backward(g):
        gx = np.zeros_like(x2)
        np.add.at(gx, flat, g.reshape(-1, d))
        return (gx.reshape(x.shape),)

    return _result(out, (x,), backward, "gather_rows")


def channel_max(x, axis: int = -2) -> Tensor:
    """Per-channel max over ``axis``; gradient goes to the first maximal entry."""
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise EmptyGroupError("channel_max over an empty group")
    arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, arg, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _result(out, (x,), backward, "channel_max")


# -- parameters and optimisation ----------------------------------------------------
class ParamStore:
    """Named trainable tensors plus AdamW moment buffers and a step counter."""

    def __init__(self, seed: int = 0):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.rng = np.random.default_rng(seed)
        # non-trainable arrays (e.g. batch-norm running statistics)
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, shape, init: str = "uniform", fan_in: int | None = None, value=None) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        shape = tuple(shape)
        if value is not None:
            data = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).copy()
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "uniform":
            bound = 1.0 / math.sqrt(fan_in if fan_in is not None else shape[0])
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == "normal":
            data = self.rng.normal(0.0, 1.0, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros(shape)
        self.v[name] = np.zeros(shape)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_params(self) -> int:
        return sum(t.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"parameter name mismatch: {sorted(missing)[:5]}")
        for k, arr in state.items():
            if arr.shape != self.params[k].shape:
                raise DimensionError(f"{k}: checkpoint shape {arr.shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(arr, dtype=np.float64)


def adamw_step(
    store: ParamStore,
    grads: dict[str, np.ndarray] | None = None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> ParamStore:
    """One AdamW update: decoupled decay ``w *= 1 - lr*wd`` then the bias-corrected Adam step.

    ``grads`` defaults to each parameter's ``.grad``; parameters without a
    gradient are left untouched.
    """
    if grads is None:
        grads = {k: t.grad for k, t in store.params.items() if t.grad is not None}
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        p = store.params[name]
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(f"{name}: grad shape {g.shape} vs param {p.shape}")
        m = store.m[name] = beta1 * store.m[name] + (1.0 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1.0 - beta2) * g * g
        w = p.data * (1.0 - lr * weight_decay) if weight_decay else p.data
        p.data = w - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return store


# -- gradient verification ------------------------------------------------------------
@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    max_abs_err: float
    n_checked: int
    worst: tuple = ()
    per_param: dict = field(default_factory=dict)
    message: str = ""


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def finite_diff_check(
    f,
    params,
    h: float = 1e-4,
    tol: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f()`` against central differences.

    ``params`` is a dict name -> Tensor (or a list).  ``f`` must rebuild its
    output from the current ``.data`` of those tensors on every call.  With
    ``max_coords`` set, at most that many coordinates per tensor are probed,
    chosen by a seeded generator.
    """
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    try:
        out = f()
    except NumericError as exc:
        return GradCheckReport(False, math.inf, math.inf, 0, message=f"forward failed: {exc}")
    if out.size != 1:
        raise DimensionError("finite_diff_check needs a scalar function")
    out.backward()
    rng = np.random.default_rng(seed)
    worst_rel, worst_abs, worst, n_checked = 0.0, 0.0, (), 0
    per_param = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        coords = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        flat = p.data.reshape(-1)
        numeric = np.empty(len(coords))
        for k, c in enumerate(coords):
            orig = flat[c]
            try:
                with no_grad():
                    flat[c] = orig + h
                    fp = f().item()
                    flat[c] = orig - h
                    fm = f().item()
            except NumericError as exc:
                flat[c] = orig
                return GradCheckReport(False, math.inf, math.inf, n_checked,
                                       worst=(name, int(c)), message=f"non-finite f near {name}[{c}]: {exc}")
            finally:
                flat[c] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                return GradCheckReport(False, math.inf, math.inf, n_checked,
                                       worst=(name, int(c)), message=f"non-finite f near {name}[{c}]")
            numeric[k] = (fp - fm) / (2.0 * h)
        a = analytic.reshape(-1)[coords]
        rel = relative_error(a, numeric, floor)
        ab = np.abs(a - numeric)
        n_checked += len(coords)
        pmax = float(rel.max()) if len(rel) else 0.0
        per_param[name] = pmax
        if pmax > worst_rel:
            worst_rel = pmax
            worst = (name, int(coords[int(np.argmax(rel))]))
        if len(ab):
            worst_abs = max(worst_abs, float(ab.max()))
    passed = worst_rel <= tol
    return GradCheckReport(passed, worst_rel, worst_abs, n_checked, worst, per_param,
                           "" if passed else f"max relative error {worst_rel:.3e} at {worst}")
