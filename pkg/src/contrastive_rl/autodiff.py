"""Reverse-mode automatic differentiation on flat numpy buffers.

A ``Tensor`` wraps a row-major numpy array plus an optional gradient
buffer.  Operations executed while a ``Tape`` is active append a record
(inputs, output, backward rule); ``Tape.backward`` replays the records in
reverse, accumulating gradients additively into every tensor that
requires them.  The tape is rebuilt from scratch on every training step,
there is no graph caching.

The op set is deliberately closed: ``forward_op`` dispatches exactly the
kinds listed in ``OP_KINDS``; everything else in the package is composed
from these primitives (plus constants).
"""

from __future__ import annotations

import numpy as np

from . import _convkernels as _conv

# Default scalar type for freshly created tensors.  Training runs in
# float32; gradient checks build float64 tensors directly (the widened
# precision mode), which every op preserves end to end.
_DEFAULT_DTYPE = np.float32

# When enabled, ops raise on non-finite inputs and Adam raises on
# non-finite gradients.  Off by default: the scan costs a full pass.
_STRICT_CHECKS = False

OP_KINDS = (
    "matmul", "conv2d", "add", "mul", "relu", "tanh", "exp", "log",
    "sum", "mean", "softmax_cross_entropy", "layer_norm", "reshape",
    "slice", "concat", "min_elementwise", "gaussian_log_prob",
)


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


def default_dtype():
    return _DEFAULT_DTYPE


def set_strict_checks(enabled: bool):
    global _STRICT_CHECKS
    _STRICT_CHECKS = bool(enabled)


def strict_checks() -> bool:
    return _STRICT_CHECKS


class Tensor:
    """N-d float array with an optional same-shape gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad=False, name=None):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.values = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self):
        return self.values.size

    def detach(self) -> "Tensor":
        """Same value buffer, severed from any tape."""
        return Tensor(self.values, requires_grad=False, name=self.name)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(np.broadcast_to(g, self.values.shape),
                                 dtype=self.values.dtype)
        else:
            self.grad += g

    def item(self) -> float:
        return float(self.values)

    # Operator sugar; everything lowers to the primitive op kinds.
    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return mul(_lift(other, self.dtype), self)

    def __sub__(self, other):
        return add(self, mul(_lift(other, self.dtype), _lift(-1.0, self.dtype)))

    def __rsub__(self, other):
        return add(_lift(other, self.dtype), mul(self, _lift(-1.0, self.dtype)))

    def __neg__(self):
        return mul(self, _lift(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.dtype}{tag})"


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


class _Record:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; context manager activates it."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor):
        """Fill grad buffers with d(loss)/d(tensor) for every recorded tensor.

        Gradients accumulate additively, so zero them before reuse.
        """
        if loss.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {tuple(loss.shape)}")
        loss.accumulate_grad(np.ones((), dtype=loss.dtype))
        for rec in reversed(self.records):
            g_out = rec.output.grad
            if g_out is None:
                continue  # branch never reached the loss
            grads = rec.backward_fn(g_out)
            for t, g in zip(rec.inputs, grads):
                if g is not None and t.requires_grad:
                    t.accumulate_grad(g)


_TAPE_STACK: list = []


class no_grad:
    """Context that suppresses recording regardless of enclosing tapes."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _check_finite(op, inputs):
    if not _STRICT_CHECKS:
        return
    for i, t in enumerate(inputs):
        if not np.all(np.isfinite(t.values)):
            raise FloatingPointError(f"{op}: non-finite values in input {i}")


def _make(op, inputs, values, backward_fn, attrs=None) -> Tensor:
    """Create the output tensor and record it if grads are needed."""
    out = Tensor(values)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(_Record(tuple(inputs), out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape numpy broadcast it up from."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("add", (a, b))
    try:
        vals = a.values + b.values
    except ValueError:
        raise ValueError(f"add: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", (a, b), vals, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("mul", (a, b))
    try:
        vals = a.values * b.values
    except ValueError:
        raise ValueError(f"mul: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)

    return _make("mul", (a, b), vals, bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("matmul", (a, b))
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")
    av, bv = a.values, b.values

    def bwd(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return _make("matmul", (a, b), av @ bv, bwd)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, layout: str = "nchw") -> Tensor:
    """Valid-padding 2-d correlation; kernel is (F, C, KH, KW) either way.

    ``layout`` selects the input/output memory order: "nchw" or "nhwc".
    The channels-last path is the fast one (im2col without transposed
    copies); the encoder uses it throughout.
    """
    _check_finite("conv2d", (x, kernel))
    if x.values.ndim != 4 or kernel.values.ndim != 4:
        raise ValueError(
            f"conv2d: expected 4-d input and kernel, got {tuple(x.shape)} and {tuple(kernel.shape)}")
    if layout not in ("nchw", "nhwc"):
        raise ValueError(f"conv2d: unknown layout {layout!r}")
    if layout == "nchw":
        B, C, H, W = x.shape
    else:
        B, H, W, C = x.shape
    F, CK, KH, KW = kernel.shape
    if C != CK:
        raise ValueError(f"conv2d: input channels {C} != kernel channels {CK}")
    if KH > H or KW > W:
        raise ValueError(f"conv2d: kernel {KH}x{KW} larger than input {H}x{W}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    OH = (H - KH) // stride + 1
    OW = (W - KW) // stride + 1

    xv = x.values if layout == "nhwc" else np.ascontiguousarray(
        x.values.transpose(0, 2, 3, 1))
    kmat = np.ascontiguousarray(kernel.values.transpose(2, 3, 1, 0)).reshape(
        KH * KW * C, F)
    cols2 = _conv.im2col(xv, KH, KW, stride)
    out = (cols2 @ kmat).reshape(B, OH, OW, F)
    if layout == "nchw":
        out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def bwd(g):
        if layout == "nchw":
            g = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        grs = g.reshape(B * OH * OW, F)
        gk = None
        if kernel.requires_grad:
            gk = np.ascontiguousarray(
                (cols2.T @ grs).reshape(KH, KW, C, F).transpose(3, 2, 0, 1))
        gx = None
        if x.requires_grad:
            gcols = grs @ kmat.T
            gxv = _conv.col2im(gcols, B, H, W, C, KH, KW, stride)
            gx = gxv if layout == "nhwc" else np.ascontiguousarray(
                gxv.transpose(0, 3, 1, 2))
        return gx, gk

    return _make("conv2d", (x, kernel), out, bwd)


def relu(x: Tensor) -> Tensor:
    _check_finite("relu", (x,))
    vals = np.maximum(x.values, 0)
    mask = x.values > 0

    def bwd(g):
        return (g * mask,)

    return _make("relu", (x,), vals, bwd)


def tanh(x: Tensor) -> Tensor:
    _check_finite("tanh", (x,))
    t = np.tanh(x.values)

    def bwd(g):
        return (g * (1.0 - t * t),)

    return _make("tanh", (x,), t, bwd)


def exp(x: Tensor) -> Tensor:
    _check_finite("exp", (x,))
    e = np.exp(x.values)

    def bwd(g):
        return (g * e,)

    return _make("exp", (x,), e, bwd)


def log(x: Tensor) -> Tensor:
    _check_finite("log", (x,))
    xv = x.values

    def bwd(g):
        return (g / xv,)

    return _make("log", (x,), np.log(xv), bwd)


def tsum(x: Tensor, axis=None) -> Tensor:
    _check_finite("sum", (x,))
    vals = x.values.sum(axis=axis)
    shape = x.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make("sum", (x,), vals, bwd)


def tmean(x: Tensor, axis=None) -> Tensor:
    _check_finite("mean", (x,))
    vals = x.values.mean(axis=axis)
    shape = x.shape
    n = x.values.size if axis is None else shape[axis]

    def bwd(g):
        gs = g / n
        if axis is None:
            return (np.broadcast_to(gs, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(gs, axis), shape).copy(),)

    return _make("mean", (x,), vals, bwd)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Per-row cross entropy of a row-wise softmax against integer labels.

    Returns a length-B vector of losses; reduce with ``tmean`` as needed.
    """
    _check_finite("softmax_cross_entropy", (logits,))
    if logits.values.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: expected 2-d logits, got {tuple(logits.shape)}")
    labels = np.asarray(labels)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"softmax_cross_entropy: labels shape {labels.shape} != ({B},)")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError("softmax_cross_entropy: label out of range")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    norm = expv.sum(axis=1, keepdims=True)
    logp = shifted - np.log(norm)
    losses = -logp[np.arange(B), labels]
    softmax = expv / norm

    def bwd(g):
        gl = softmax.copy()
        gl[np.arange(B), labels] -= 1.0
        return (gl * g[:, None],)

    return _make("softmax_cross_entropy", (logits,), losses, bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    _check_finite("layer_norm", (x, gamma, beta))
    D = x.shape[-1]
    if gamma.shape != (D,) or beta.shape != (D,):
        raise ValueError(
            f"layer_norm: scale/offset shapes {tuple(gamma.shape)}/{tuple(beta.shape)} != ({D},)")
    mu = x.values.mean(axis=-1, keepdims=True)
    var = x.values.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv
    vals = xhat * gamma.values + beta.values
    gv = gamma.values

    def bwd(g):
        gb = _unbroadcast(g, (D,)) if beta.requires_grad else None
        gg = _unbroadcast(g * xhat, (D,)) if gamma.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gv
            # standard layer-norm backward over the last axis
            gx = inv * (gxhat
                        - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return _make("layer_norm", (x, gamma, beta), vals, bwd)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.shape
    vals = x.values.reshape(shape)

    def bwd(g):
        return (g.reshape(orig),)

    return _make("reshape", (x,), vals, bwd)


def tslice(x: Tensor, key) -> Tensor:
    """Basic (non-fancy) indexing; gradient scatters back into zeros."""
    vals = x.values[key]
    shape = x.shape

    def bwd(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[key] = g
        return (gx,)

    return _make("slice", (x,), vals, bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    _check_finite("concat", tensors)
    vals = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", tuple(tensors), vals, bwd)


def min_elementwise(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties route the gradient to the first input."""
    _check_finite("min_elementwise", (a, b))
    if a.shape != b.shape:
        raise ValueError(f"min_elementwise: shapes {tuple(a.shape)} != {tuple(b.shape)}")
    take_a = a.values <= b.values
    vals = np.where(take_a, a.values, b.values)

    def bwd(g):
        return g * take_a, g * ~take_a

    return _make("min_elementwise", (a, b), vals, bwd)


def gaussian_log_prob(u: Tensor, mu: Tensor, log_sigma: Tensor) -> Tensor:
    """Row-wise diagonal-Gaussian log density of u under N(mu, exp(log_sigma)^2).

    All three inputs are (B, D); the result is (B,).
    """
    _check_finite("gaussian_log_prob", (u, mu, log_sigma))
    if not (u.shape == mu.shape == log_sigma.shape) or u.values.ndim != 2:
        raise ValueError(
            f"gaussian_log_prob: shapes {tuple(u.shape)}, {tuple(mu.shape)}, "
            f"{tuple(log_sigma.shape)} must match and be 2-d")
    D = u.shape[1]
    sigma = np.exp(log_sigma.values)
    z = (u.values - mu.values) / sigma
    const = 0.5 * D * np.log(2.0 * np.pi)
    vals = -0.5 * (z * z).sum(axis=1) - log_sigma.values.sum(axis=1) - const
    vals = vals.astype(u.dtype)

    def bwd(g):
        gcol = g[:, None]
        gu = -gcol * z / sigma if u.requires_grad else None
        gmu = gcol * z / sigma if mu.requires_grad else None
        gls = gcol * (z * z - 1.0) if log_sigma.requires_grad else None
        return gu, gmu, gls

    return _make("gaussian_log_prob", (u, mu, log_sigma), vals, bwd)


_DISPATCH = {
    "matmul": matmul,
    "conv2d": conv2d,
    "add": add,
    "mul": mul,
    "relu": relu,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "sum": tsum,
    "mean": tmean,
    "softmax_cross_entropy": softmax_cross_entropy,
    "layer_norm": layer_norm,
    "reshape": reshape,
    "slice": tslice,
    "concat": concat,
    "min_elementwise": min_elementwise,
    "gaussian_log_prob": gaussian_log_prob,
}


def forward_op(op_kind: str, inputs, **attrs) -> Tensor:
    """Dispatch one primitive op by name.

    ``inputs`` is a list of Tensors except for ``concat`` (list passed
    through) and ops whose extra arguments arrive via ``attrs``.
    """
    if op_kind not in _DISPATCH:
        raise ValueError(f"unknown op kind {op_kind!r}")
    fn = _DISPATCH[op_kind]
    if op_kind == "concat":
        return fn(inputs, **attrs)
    return fn(*inputs, **attrs)
