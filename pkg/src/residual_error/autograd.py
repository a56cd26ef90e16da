"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only what feed-forward networks need: matmul, bias broadcast, a handful of
elementwise ops, softmax cross-entropy and MSE. Operations are recorded on
the innermost active :class:`ComputationTape` whenever one of their operands
is tracked (marked ``requires_grad`` or itself produced on that tape)::

    x = Tensor(x_data, requires_grad=True)
    with ComputationTape() as tape:
        loss = softmax_cross_entropy(matmul(x, w) + b, labels)
    grads = backward(tape, loss)
    grads[x]
"""
import threading

import numpy as np

from .errors import DimensionError, NumericDivergenceError, ValidationError

_local = threading.local()


def _tape_stack():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class Tensor:
    """A dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValidationError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return elementwise("add", self, _as_tensor(other))

    def __radd__(self, other):
        return elementwise("add", _as_tensor(other), self)

    def __sub__(self, other):
        return elementwise("sub", self, _as_tensor(other))

    def __rsub__(self, other):
        return elementwise("sub", _as_tensor(other), self)

    def __mul__(self, other):
        return elementwise("mul", self, _as_tensor(other))

    def __rmul__(self, other):
        return elementwise("mul", _as_tensor(other), self)

    def __neg__(self):
        return elementwise("neg", self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def relu(self):
        return elementwise("relu", self)

    def exp(self):
        return elementwise("exp", self)

    def log(self):
        return elementwise("log", self)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class _Record:
    __slots__ = ("op", "out", "inputs", "backward_fn")

    def __init__(self, op, out, inputs, backward_fn):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class ComputationTape:
    """Ordered log of primitive operations from one forward pass.

    Use as a context manager; tapes nest, and only the innermost one records.
    """

    def __init__(self):
        self.records = []
        self._produced = set()

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.records)

    def tracks(self, t):
        return t.requires_grad or id(t) in self._produced

    def produced(self, t):
        return id(t) in self._produced

    def _record(self, op, out, inputs, backward_fn):
        self.records.append(_Record(op, out, inputs, backward_fn))
        self._produced.add(id(out))


def _emit(op, value, inputs, backward_fn):
    out = Tensor(value)
    stack = _tape_stack()
    if stack:
        tape = stack[-1]
        if any(tape.tracks(t) for t in inputs):
            tape._record(op, out, inputs, backward_fn)
    return out


def _check_finite(op, value):
    if not np.all(np.isfinite(value)):
        raise NumericDivergenceError(f"{op} produced non-finite values")
    return value


def matmul(a, b):
    """Matrix product of ``a`` (m x k) and ``b`` (k x n)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def backward_fn(g):
        return g @ B.T, A.T @ g

    return _emit("matmul", A @ B, (a, b), backward_fn)


def _broadcast_axes(a_shape, b_shape):
    """Return which operand (if any) is broadcast along the leading axis."""
    if a_shape == b_shape:
        return None
    if len(a_shape) >= 1 and b_shape in (a_shape[1:], (1,) + a_shape[1:]):
        return "b"
    if len(b_shape) >= 1 and a_shape in (b_shape[1:], (1,) + b_shape[1:]):
        return "a"
    if a_shape == () or b_shape == ():
        return "a" if a_shape == () else "b"
    raise DimensionError(f"shapes {a_shape} and {b_shape} are not broadcastable along the batch axis")


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    if len(shape) < grad.ndim:
        return grad.sum(axis=0)
    return grad.sum(axis=0, keepdims=True)


_UNARY = ("relu", "exp", "log", "neg")
_BINARY = ("add", "sub", "mul")


def elementwise(op_kind, a, b=None):
    """Apply ``op_kind`` elementwise.

    Binary kinds (add, sub, mul) accept equal shapes or a right/left operand
    broadcast along the leading batch axis (e.g. a bias row). Unary kinds are
    relu, exp, log and neg.
    """
    if op_kind in _UNARY:
        if b is not None:
            raise ValidationError(f"{op_kind} takes one operand")
        x = a.data
        if op_kind == "relu":
            mask = x > 0
            return _emit("relu", np.where(mask, x, 0.0), (a,), lambda g: (g * mask,))
        if op_kind == "neg":
            return _emit("neg", -x, (a,), lambda g: (-g,))
        if op_kind == "exp":
            with np.errstate(over="ignore"):
                y = _check_finite("exp", np.exp(x))
            return _emit("exp", y, (a,), lambda g: (g * y,))
        if np.any(x <= 0):
            raise ValidationError("log of a non-positive value")
        return _emit("log", np.log(x), (a,), lambda g: (g / x,))

    if op_kind not in _BINARY:
        raise ValidationError(f"unknown elementwise op {op_kind!r}")
    if b is None:
        raise ValidationError(f"{op_kind} takes two operands")
    _broadcast_axes(a.shape, b.shape)
    x, y = a.data, b.data
    sa, sb = a.shape, b.shape
    if op_kind == "add":
        return _emit("add", x + y, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))
    if op_kind == "sub":
        return _emit("sub", x - y, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))
    return _emit("mul", x * y, (a, b), lambda g: (_unbroadcast(g * y, sa), _unbroadcast(g * x, sb)))


def tensor_sum(a):
    shape = a.shape
    return _emit("sum", np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def tensor_mean(a):
    shape, n = a.shape, a.size
    return _emit("mean", np.mean(a.data), (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),))


def log_softmax(z):
    """Row-wise log-softmax of a 2-D array, stabilised by max subtraction."""
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels, reduction="mean"):
    """Cross-entropy of softmax(logits) against integer class labels.

    ``reduction`` is "mean" (default) or "sum".
    """
    z = logits.data
    if z.ndim != 2:
        raise DimensionError(f"logits must be batch x classes, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (z.shape[0],):
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for a batch of {z.shape[0]}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValidationError("class labels must be integers")
        labels = labels.astype(np.int64)
    if np.any((labels < 0) | (labels >= z.shape[1])):
        raise ValidationError(f"labels must lie in [0, {z.shape[1]})")
    rows = np.arange(z.shape[0])
    logp = log_softmax(z)
    scale = 1.0 / z.shape[0] if reduction == "mean" else 1.0
    value = -logp[rows, labels].sum() * scale

    def backward_fn(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g * scale),)

    return _emit("softmax_cross_entropy", value, (logits,), backward_fn)


def mse_loss(pred, target, reduction="mean"):
    """Squared error between predictions (batch x 1 or batch) and targets."""
    p = pred.data
    t = np.asarray(target, dtype=np.float64).reshape(p.shape[0], *([1] * (p.ndim - 1)))
    if p.ndim == 2 and p.shape[1] != 1:
        raise DimensionError(f"regression output must have one column, got {pred.shape}")
    diff = p - t
    scale = 1.0 / p.shape[0] if reduction == "mean" else 1.0
    return _emit("mse", np.sum(diff * diff) * scale, (pred,), lambda g: (2.0 * diff * (g * scale),))


class Gradients:
    """Mapping from tensors on a tape to their gradients (lookup by identity)."""

    def __init__(self, grads, tensors):
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, t):
        try:
            return self._grads[id(t)]
        except KeyError:
            raise LookupError("tensor was not recorded on this tape") from None

    def __contains__(self, t):
        return id(t) in self._grads

    def __len__(self):
        return len(self._grads)

    def tensors(self):
        return list(self._tensors.values())


def backward(tape, loss):
    """Reverse-accumulate d(loss)/d(t) for every ``requires_grad`` tensor on ``tape``.

    Gradients are also stored on each such tensor's ``.grad``.
    """
    if loss.size != 1:
        raise ValidationError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.produced(loss):
        raise LookupError("loss was not produced on this tape")
    acc = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for rec in reversed(tape.records):
        g = acc.pop(id(rec.out), None)
        if rec.out.requires_grad:
            leaves[id(rec.out)] = rec.out
            if g is not None:
                acc[id(rec.out)] = g
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.backward_fn(g)):
            if not tape.tracks(t):
                continue
            key = id(t)
            acc[key] = acc[key] + gi if key in acc else gi
            if t.requires_grad:
                leaves[key] = t
    grads = {}
    for key, t in leaves.items():
        grad = acc.get(key, np.zeros_like(t.data))
        t.grad = grad
        grads[key] = grad
    return Gradients(grads, leaves)
