"""Minimal dense reverse-mode autodiff over 2-D float64 arrays.

Every value is a (rows, cols) C-order float64 array; a Tape records op nodes
in topological order and backward() replays them once in reverse. Only the
handful of ops the surrogate and denoiser need are provided. Ops raise
NonFiniteError instead of letting NaN/Inf propagate silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "affine",
    "silu",
    "gelu",
    "relu",
    "tanh",
    "layer_norm",
    "concat",
    "repeat_rows",
    "mse",
    "AdamState",
    "adam_step",
    "sinusoidal_embed",
    "init_linear",
]

_LN_EPS = 1e-5
_GELU_C = 0.7978845608028654  # sqrt(2/pi)


class NonFiniteError(FloatingPointError):
    """An op produced a NaN or Inf."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def _as2d(value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


@dataclass
class _Node:
    kind: str
    inputs: tuple
    value: np.ndarray
    cache: tuple = ()
    needs_grad: bool = True


class Tensor:
    """Handle to one node's value on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Tape:
    """Ordered op records; inputs always precede outputs."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[_Node] = []
        self.check_finite = check_finite

    def leaf(self, value, needs_grad: bool = True) -> Tensor:
        # Leaves are caller-supplied; ops check their own outputs, so a NaN
        # input is caught at the first op that consumes it.
        self.nodes.append(_Node(kind="leaf", inputs=(), value=_as2d(value),
                                needs_grad=needs_grad))
        return Tensor(self, len(self.nodes) - 1)

    def _record(self, kind, value, inputs, cache=()) -> Tensor:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"op '{kind}' produced a non-finite value")
        nodes = self.nodes
        needs = any(nodes[i].needs_grad for i in inputs)
        nodes.append(_Node(kind=kind, inputs=inputs, value=value, cache=cache,
                           needs_grad=needs))
        return Tensor(self, len(nodes) - 1)


def _lift(tape: Tape, x):
    """Tensors pass through; raw arrays become constant leaves."""
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.leaf(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    b = _lift(a.tape, b)
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul mismatch: {av.shape} @ {bv.shape}")
    return a.tape._record("matmul", av @ bv, (a.idx, b.idx))


def _check_broadcast(av, bv, op):
    if av.shape == bv.shape:
        return
    if bv.shape == (1, av.shape[1]):
        return
    raise ShapeError(f"{op} mismatch: {av.shape} vs {bv.shape}")


def add(a: Tensor, b) -> Tensor:
    b = _lift(a.tape, b)
    _check_broadcast(a.value, b.value, "add")
    return a.tape._record("add", a.value + b.value, (a.idx, b.idx))


def sub(a: Tensor, b) -> Tensor:
    b = _lift(a.tape, b)
    _check_broadcast(a.value, b.value, "sub")
    return a.tape._record("sub", a.value - b.value, (a.idx, b.idx))


def mul(a: Tensor, b) -> Tensor:
    b = _lift(a.tape, b)
    _check_broadcast(a.value, b.value, "mul")
    return a.tape._record("mul", a.value * b.value, (a.idx, b.idx))


def scale(a: Tensor, c: float) -> Tensor:
    return a.tape._record("scale", a.value * float(c), (a.idx,), (float(c),))


def affine(a: Tensor, scale_row: np.ndarray, shift_row: np.ndarray) -> Tensor:
    """a * scale + shift with constant (1, n) rows; no gradient to the constants."""
    s = np.asarray(scale_row, dtype=float).reshape(1, -1)
    t = np.asarray(shift_row, dtype=float).reshape(1, -1)
    if s.shape[1] != a.cols or t.shape[1] != a.cols:
        raise ShapeError(f"affine constants must have {a.cols} columns")
    return a.tape._record("affine", a.value * s + t, (a.idx,), (s,))


def silu(a: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-a.value))
    return a.tape._record("silu", a.value * sig, (a.idx,), (sig,))


def gelu(a: Tensor) -> Tensor:
    # tanh approximation, pinned so tests check a single formula
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    return a.tape._record("gelu", 0.5 * x * (1.0 + th), (a.idx,), (th,))


def relu(a: Tensor) -> Tensor:
    return a.tape._record("relu", np.maximum(a.value, 0.0), (a.idx,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return a.tape._record("tanh", out, (a.idx,), (out,))


def layer_norm(a: Tensor) -> Tensor:
    """Row-wise (x - mean) / sqrt(var + eps); constant rows map to zeros."""
    x = a.value
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mean) * inv
    return a.tape._record("layer_norm", xhat, (a.idx,), (xhat, inv))


def concat(*tensors) -> Tensor:
    if len(tensors) < 2:
        raise ValueError("concat needs at least 2 operands")
    tape = tensors[0].tape
    tensors = tuple(_lift(tape, t) for t in tensors)
    rows = tensors[0].rows
    if any(t.rows != rows for t in tensors):
        raise ShapeError("concat operands must share the row count")
    widths = tuple(t.cols for t in tensors)
    value = np.concatenate([t.value for t in tensors], axis=1)
    return tape._record("concat", value, tuple(t.idx for t in tensors), (widths,))


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat every row k times (backward sums each block of k rows)."""
    if k < 1:
        raise ValueError("k must be positive")
    return a.tape._record("repeat_rows", np.repeat(a.value, k, axis=0), (a.idx,), (k,))


def mse(a: Tensor, b) -> Tensor:
    b = _lift(a.tape, b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mse mismatch: {a.value.shape} vs {b.value.shape}")
    diff = a.value - b.value
    out = np.array([[float(np.mean(diff * diff))]])
    return a.tape._record("mse", out, (a.idx, b.idx), (diff,))


def _make_accumulate(nodes, grads):
    def acc(idx, g):
        if not nodes[idx].needs_grad:
            return
        # Always copy on first store: g may alias a consumer's grad or a view.
        if grads[idx] is None:
            grads[idx] = np.array(g)
        else:
            grads[idx] += g
    return acc


def _grad_for_broadcast(g, shape):
    if shape == g.shape:
        return g
    return g.sum(axis=0, keepdims=True)


def backward(tape: Tape, output: Tensor) -> dict:
    """Gradients of a scalar output w.r.t. every node, keyed by node index."""
    if output.value.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1,1) output, got {output.value.shape}")
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    grads[output.idx] = np.ones((1, 1))
    acc = _make_accumulate(nodes, grads)
    for idx in range(output.idx, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        node = nodes[idx]
        kind = node.kind
        if kind == "leaf":
            continue
        elif kind == "matmul":
            ia, ib = node.inputs
            if nodes[ia].needs_grad:
                acc(ia, g @ nodes[ib].value.T)
            if nodes[ib].needs_grad:
                acc(ib, nodes[ia].value.T @ g)
        elif kind == "add":
            ia, ib = node.inputs
            acc(ia, g)
            if nodes[ib].needs_grad:
                acc(ib, _grad_for_broadcast(g, nodes[ib].value.shape))
        elif kind == "sub":
            ia, ib = node.inputs
            acc(ia, g)
            if nodes[ib].needs_grad:
                acc(ib, -_grad_for_broadcast(g, nodes[ib].value.shape))
        elif kind == "mul":
            ia, ib = node.inputs
            bv = nodes[ib].value
            if nodes[ia].needs_grad:
                acc(ia, g * bv)
            if nodes[ib].needs_grad:
                acc(ib, _grad_for_broadcast(g * nodes[ia].value, bv.shape))
        elif kind == "scale":
            acc(node.inputs[0], g * node.cache[0])
        elif kind == "affine":
            acc(node.inputs[0], g * node.cache[0])
        elif kind == "silu":
            sig = node.cache[0]
            x = nodes[node.inputs[0]].value
            acc(node.inputs[0], g * (sig * (1.0 + x * (1.0 - sig))))
        elif kind == "gelu":
            th = node.cache[0]
            x = nodes[node.inputs[0]].value
            dinner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
            d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * dinner
            acc(node.inputs[0], g * d)
        elif kind == "relu":
            x = nodes[node.inputs[0]].value
            acc(node.inputs[0], g * (x > 0.0))
        elif kind == "tanh":
            out = node.cache[0]
            acc(node.inputs[0], g * (1.0 - out**2))
        elif kind == "layer_norm":
            xhat, inv = node.cache
            n = xhat.shape[1]
            gm = g.mean(axis=1, keepdims=True)
            gx = (g * xhat).mean(axis=1, keepdims=True)
            acc(node.inputs[0], inv * (g - gm - xhat * gx))
        elif kind == "concat":
            widths = node.cache[0]
            start = 0
            for inp, w in zip(node.inputs, widths):
                acc(inp, g[:, start:start + w])
                start += w
        elif kind == "repeat_rows":
            k = node.cache[0]
            rows = nodes[node.inputs[0]].value.shape[0]
            acc(node.inputs[0], g.reshape(rows, k, -1).sum(axis=1))
        elif kind == "mse":
            diff = node.cache[0]
            d = (2.0 / diff.size) * diff * g[0, 0]
            acc(node.inputs[0], d)
            acc(node.inputs[1], -d)
        else:  # pragma: no cover
            raise RuntimeError(f"no backward rule for op '{kind}'")
    return {i: gr for i, gr in enumerate(grads) if gr is not None}


@dataclass
class AdamState:
    """Adam/AdamW moment buffers; weight_decay > 0 gives decoupled decay."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @staticmethod
    def for_params(params: dict, lr: float, weight_decay: float = 0.0) -> "AdamState":
        state = AdamState(lr=lr, weight_decay=weight_decay)
        for name, arr in params.items():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One in-place Adam(W) update on every parameter with a gradient."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, want {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p
        p -= state.lr * update


def sinusoidal_embed(t, dim: int) -> np.ndarray:
    """Interleaved sin/cos embedding over geometric frequencies 1 down to 1e-4.

    ``t`` may be a scalar or 1-D array of timesteps; returns (len(t), dim).
    """
    if dim % 2 != 0 or dim < 2:
        raise ValueError("embedding dim must be a positive even number")
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    if half == 1:
        freqs = np.array([1.0])
    else:
        freqs = 10.0 ** (-4.0 * np.arange(half) / (half - 1))
    angles = tv[:, None] * freqs[None, :]
    out = np.empty((tv.shape[0], dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int):
    """Weight (fan_in, fan_out) ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), zero bias."""
    bound = (1.0 / fan_in) ** 0.5
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = np.zeros((1, fan_out))
    return w, b
