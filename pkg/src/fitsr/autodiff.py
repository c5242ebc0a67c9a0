"""Reverse-mode automatic differentiation on a recording tape.

Every differentiable primitive is registered in :data:`OPS` as a forward /
backward pair. Complex values travel as real nodes with a leading axis of
size 2 holding the (re, im) planes; the FFT backward is the inverse unitary
transform applied to that pair.

Example::

    tape = Tape()
    x = tape.param("x", np.array([3.0]))
    loss = ad.sum(x * x)
    tape.backward(loss)["x"]   # -> array([6.])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import fft as _fft
from .tensor import ConfigError, ShapeError, im2col, softmax as _softmax

__all__ = ["Node", "Tape", "OPS", "apply", "grad_check"]


@dataclass(frozen=True)
class OpDef:
    name: str
    forward: Callable
    backward: Callable


OPS: dict[str, OpDef] = {}


def register(name: str, forward: Callable, backward: Callable) -> None:
    OPS[name] = OpDef(name, forward, backward)


class Node:
    __slots__ = ("value", "op", "inputs", "saved", "attrs", "tape", "index", "name")

    def __init__(self, value, tape=None, op=None, inputs=(), saved=None, attrs=None, name=None):
        self.value = value
        self.tape = tape
        self.op = op
        self.inputs = inputs
        self.saved = saved
        self.attrs = attrs or {}
        self.name = name
        self.index = -1

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self, None)


class Tape:
    """Append-only record of nodes. ``record=False`` evaluates without keeping history."""

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def param(self, name: str, value) -> Node:
        node = Node(np.asarray(value, dtype=np.float64), tape=self, op="param", name=name)
        self.params[name] = node
        if self.record:
            self._append(node)
        return node

    def _append(self, node: Node) -> None:
        node.index = len(self.nodes)
        self.nodes.append(node)

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        if not self.record:
            raise RuntimeError("tape was created with record=False")
        if loss.tape is not self or loss.value.size != 1:
            raise ValueError(f"backward needs a scalar node on this tape, got shape {loss.value.shape}")
        grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            if node.op == "param":
                continue
            g = grads.pop(node.index, None)
            if g is None:
                continue
            ins = node.inputs
            vals = [x.value if isinstance(x, Node) else x for x in ins]
            in_grads = OPS[node.op].backward(g, node.saved, *vals, **node.attrs)
            for x, gx in zip(ins, in_grads):
                if gx is None or not isinstance(x, Node) or x.tape is not self or x.index < 0:
                    continue
                if x.index in grads:
                    grads[x.index] = grads[x.index] + gx
                else:
                    grads[x.index] = gx
        return {
            name: grads.get(p.index, np.zeros_like(p.value)) for name, p in self.params.items()
        }


def apply(name: str, *inputs, **attrs) -> Node:
    op = OPS[name]
    tape = None
    for x in inputs:
        if isinstance(x, Node) and x.tape is not None:
            tape = x.tape
            break
    vals = [x.value if isinstance(x, Node) else x for x in inputs]
    out, saved = op.forward(*vals, **attrs)
    if tape is None or not tape.record:
        return Node(out, tape=tape, op=name)
    node = Node(out, tape=tape, op=name, inputs=inputs, saved=saved, attrs=attrs)
    tape._append(node)
    return node


def value(x):
    return x.value if isinstance(x, Node) else x


# ---------------------------------------------------------------- primitives


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


register(
    "add",
    lambda a, b: (a + b, None),
    lambda g, s, a, b: (_unbroadcast(g, np.shape(a)), _unbroadcast(g, np.shape(b))),
)
register(
    "sub",
    lambda a, b: (a - b, None),
    lambda g, s, a, b: (_unbroadcast(g, np.shape(a)), _unbroadcast(-g, np.shape(b))),
)
register(
    "mul",
    lambda a, b: (a * b, None),
    lambda g, s, a, b: (_unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b))),
)
register("scale", lambda a, c: (a * c, None), lambda g, s, a, c: (g * c,))


def _matmul_bwd(g, s, a, b):
    ga = g @ np.swapaxes(b, -1, -2)
    gb = np.swapaxes(a, -1, -2) @ g
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def _matmul_fwd(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b, None


register("matmul", _matmul_fwd, _matmul_bwd)


def _transpose_bwd(g, s, a, axes):
    if axes is None:
        return (g.T,)
    return (np.transpose(g, np.argsort(axes)),)


register("transpose", lambda a, axes: (np.transpose(a, axes), None), _transpose_bwd)
register(
    "reshape",
    lambda a, shape: (a.reshape(shape), None),
    lambda g, s, a, shape: (g.reshape(a.shape),),
)


def _getitem_bwd(g, s, a, key):
    out = np.zeros_like(a)
    np.add.at(out, key, g)
    return (out,)


register("getitem", lambda a, key: (a[key], None), _getitem_bwd)


def _concat_fwd(*xs, axis):
    return np.concatenate(xs, axis=axis), [x.shape[axis] for x in xs]


def _concat_bwd(g, sizes, *xs, axis):
    return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


register("concat", _concat_fwd, _concat_bwd)
register(
    "stack",
    lambda *xs, axis: (np.stack(xs, axis=axis), None),
    lambda g, s, *xs, axis: tuple(np.moveaxis(g, axis, 0)),
)


def _sum_bwd(g, s, a, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


register(
    "sum",
    lambda a, axis, keepdims: (np.asarray(np.sum(a, axis=axis, keepdims=keepdims)), None),
    _sum_bwd,
)
register(
    "relu",
    lambda a: (np.maximum(a, 0.0), None),
    lambda g, s, a: (g * (a > 0),),
)


def _softmax_fwd(a, axis):
    y = _softmax(a, axis=axis)
    return y, y


def _softmax_bwd(g, y, a, axis):
    # J^T g = y * (g - <g, y>) without materializing J
    return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)


register("softmax", _softmax_fwd, _softmax_bwd)


def _conv2d_fwd(x, k):
    cout, cin, kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if x.ndim != 3 or x.shape[0] != cin:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernel {k.shape}")
    _, h, w = x.shape
    cols = im2col(x, kh, kw)
    return (k.reshape(cout, -1) @ cols.T).reshape(cout, h, w), cols


def _conv2d_bwd(g, cols, x, k):
    cout, cin, kh, kw = k.shape
    g2 = g.reshape(cout, -1)
    gk = (g2 @ cols).reshape(k.shape)
    # adjoint of same-padded correlation: correlate with the flipped, transposed kernel
    kt = np.ascontiguousarray(k.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gcols = im2col(g, kh, kw)
    gx = (kt.reshape(cin, -1) @ gcols.T).reshape(x.shape)
    return gx, gk


register("conv2d", _conv2d_fwd, _conv2d_bwd)


def _pconv_fwd(x, w):
    if x.ndim != 3 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"pconv: input {x.shape} does not match weights {w.shape}")
    c, h, wd = x.shape
    return (w @ x.reshape(c, -1)).reshape(w.shape[0], h, wd), None


def _pconv_bwd(g, s, x, w):
    c, h, wd = x.shape
    g2 = g.reshape(w.shape[0], -1)
    x2 = x.reshape(c, -1)
    return (w.T @ g2).reshape(x.shape), g2 @ x2.T


register("pconv", _pconv_fwd, _pconv_bwd)


def _pair_to_complex(z):
    return z[0] + 1j * z[1]


def _complex_to_pair(c):
    return np.stack([c.real, c.imag])


def _fft2c_fwd(z, inverse):
    return _complex_to_pair(_fft.fft2_array(_pair_to_complex(z), inverse=inverse)), None


def _fft2c_bwd(g, s, z, inverse):
    # the unitary map is orthogonal on (re, im) pairs: adjoint == inverse
    return (_complex_to_pair(_fft.fft2_array(_pair_to_complex(g), inverse=not inverse)),)


register("fft2c", _fft2c_fwd, _fft2c_bwd)


def _cmatmul_fwd(a, b):
    if a.shape[0] != 2 or b.shape[0] != 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cmatmul: cannot multiply {a.shape} by {b.shape}")
    ar, ai, br, bi = a[0], a[1], b[0], b[1]
    return np.stack([ar @ br - ai @ bi, ar @ bi + ai @ br]), None


def _cmatmul_bwd(g, s, a, b):
    gr, gi = g[0], g[1]
    ar, ai, br, bi = a[0], a[1], b[0], b[1]
    t = lambda m: np.swapaxes(m, -1, -2)  # noqa: E731
    ga = np.stack([gr @ t(br) + gi @ t(bi), -gr @ t(bi) + gi @ t(br)])
    gb = np.stack([t(ar) @ gr + t(ai) @ gi, -t(ai) @ gr + t(ar) @ gi])
    return ga, gb


register("cmatmul", _cmatmul_fwd, _cmatmul_bwd)


def _gather_fwd(feat, idx, weights):
    # feat (M, C); idx, weights (..., k) -> (..., C)
    return np.einsum("...k,...kc->...c", weights, feat[idx]), None


def _gather_bwd(g, s, feat, idx, weights):
    contrib = weights[..., None] * g[..., None, :]
    out = np.zeros_like(feat)
    np.add.at(out, idx.reshape(-1), contrib.reshape(-1, feat.shape[1]))
    return (out,)


register("gather", _gather_fwd, _gather_bwd)


def _l1_fwd(pred, target):
    if pred.shape != np.shape(target):
        raise ShapeError(f"l1_loss: {pred.shape} vs {np.shape(target)}")
    d = pred - target
    return np.array([np.mean(np.abs(d))]), np.sign(d)


def _l1_bwd(g, sign, pred, target):
    gp = g[0] * sign / sign.size
    return gp, -gp


register("l1_loss", _l1_fwd, _l1_bwd)


# ------------------------------------------------------------ public helpers


def add(a, b):
    return apply("add", a, b)


def sub(a, b):
    return apply("sub", a, b)


def mul(a, b):
    return apply("mul", a, b)


def scale(a, c: float):
    return apply("scale", a, c=float(c))


def matmul(a, b):
    return apply("matmul", a, b)


def transpose(a, axes=None):
    return apply("transpose", a, axes=None if axes is None else tuple(axes))


def reshape(a, shape):
    return apply("reshape", a, shape=tuple(shape))


def getitem(a, key):
    return apply("getitem", a, key=key)


def concat(xs, axis=0):
    return apply("concat", *xs, axis=axis)


def stack(xs, axis=0):
    return apply("stack", *xs, axis=axis)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    return apply("sum", a, axis=axis, keepdims=keepdims)


def mean(a):
    return scale(sum(a), 1.0 / value(a).size)


def relu(a):
    return apply("relu", a)


def softmax(a, axis=-1):
    return apply("softmax", a, axis=axis)


def conv2d(x, k, b=None):
    out = apply("conv2d", x, k)
    if b is not None:
        out = add(out, reshape(b, (-1, 1, 1)))
    return out


def pconv(x, w, b=None):
    out = apply("pconv", x, w)
    if b is not None:
        out = add(out, reshape(b, (-1, 1, 1)))
    return out


def linear(x, w, b=None):
    """Row-vector layer: x (..., in) @ w.T (in, out) + b."""
    out = matmul(x, transpose(w))
    if b is not None:
        out = add(out, b)
    return out


def fft2c(z):
    return apply("fft2c", z, inverse=False)


def ifft2c(z):
    return apply("fft2c", z, inverse=True)


def complex_from_real(x):
    """Real node (...) -> complex pair node (2, ...) with zero imaginary plane."""
    return stack([x, scale(x, 0.0)], axis=0)


def cmatmul(a, b):
    return apply("cmatmul", a, b)


def gather(feat, idx, weights):
    return apply("gather", feat, idx=np.asarray(idx), weights=np.asarray(weights, dtype=np.float64))


def l1_loss(pred, target):
    return apply("l1_loss", pred, target)


# ---------------------------------------------------------------- checking


def grad_check(
    f: Callable[[Tape, Mapping[str, Node]], Node],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    max_coords: int = 32,
    seed: int = 0,
) -> float:
    """Worst relative error between backward() and central differences.

    ``f(tape, nodes)`` must build a scalar loss from the parameter nodes.
    Parameters larger than ``max_coords`` entries are probed on a random
    subset of that many coordinates.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step {h} outside [1e-7, 1e-3]")
    # C order so the flat views below alias the arrays being evaluated
    params = {k: np.array(v, dtype=np.float64, order="C") for k, v in params.items()}
    tape = Tape()
    nodes = {k: tape.param(k, v) for k, v in params.items()}
    grads = tape.backward(f(tape, nodes))
    rng = np.random.default_rng(seed)

    def evaluate() -> float:
        t = Tape(record=False)
        return float(f(t, {k: t.param(k, v) for k, v in params.items()}).value.reshape(-1)[0])

    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        ga = grads[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = evaluate()
            flat[i] = orig - h
            fm = evaluate()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            rel = abs(ga[i] - num) / max(abs(ga[i]), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst
