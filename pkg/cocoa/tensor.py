"""
Reverse-mode differentiable arrays (the numeric core)

A DiffTensor wraps a float64 numpy array. Operations executed while a
GradientTape is active record a vector-Jacobian product on that tape;
``backward`` replays them in reverse creation order. Outside a tape nothing
is recorded, which is how inference and frozen-encoder evaluation run.

Tapes are thread-local, so independent training runs may share a process.
"""

import threading
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, InputError, UsageError

_local = threading.local()

ArrayLike = Union["DiffTensor", np.ndarray, float, int, Sequence]


class _Node:
    """One recorded operation: its output, its inputs and its adjoint rule."""

    __slots__ = ("index", "output", "parents", "vjp")

    def __init__(self, index: int, output: "DiffTensor", parents: Tuple["DiffTensor", ...],
                 vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.index = index
        self.output = output
        self.parents = parents
        self.vjp = vjp


class DiffTensor:
    """Dense float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "node", "tape")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, copy: bool = True):
        if isinstance(data, DiffTensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[_Node] = None
        self.tape: Optional["GradientTape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def tape_id(self) -> Optional[int]:
        return None if self.node is None else self.node.index

    def tracked_by(self, tape: "GradientTape") -> bool:
        """True if gradients can flow through this tensor on ``tape``."""
        return self.requires_grad or (self.node is not None and self.tape is tape)

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffTensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # Operators delegate to the module functions below
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    @property
    def T(self) -> "DiffTensor":
        return transpose(self)

    def sum(self, axis=None, keepdims=False) -> "DiffTensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> "DiffTensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "DiffTensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class GradientTape:
    """
    Ordered record of differentiable operations.

    Use as a context manager; every op run inside the ``with`` block whose
    inputs are trainable (or derived from trainable leaves) is recorded.
    A tape can be replayed exactly once.
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self.leaves = {}
        self.consumed = False
        self._previous: Optional["GradientTape"] = None

    def __enter__(self) -> "GradientTape":
        self._previous = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape = self._previous
        self._previous = None
        return False

    def record(self, output: DiffTensor, parents: Tuple[DiffTensor, ...], vjp) -> None:
        node = _Node(len(self.nodes), output, parents, vjp)
        output.node = node
        output.tape = self
        for parent in parents:
            if parent.requires_grad:
                self.leaves.setdefault(id(parent), parent)
        self.nodes.append(node)

    def backward(self, loss: DiffTensor, wrt: Optional[Iterable[DiffTensor]] = None) -> List[np.ndarray]:
        """
        Replay the tape from a scalar loss.

        Args:
            loss (DiffTensor): Scalar produced on this tape
            wrt (Optional[Iterable[DiffTensor]]): Leaves to return gradients for;
                defaults to every trainable leaf the tape saw

        Returns:
            List[np.ndarray]: One gradient per requested leaf (zeros when the
            leaf did not influence the loss). Each leaf's ``grad`` is set too.
        """
        if self.consumed:
            raise UsageError("gradient tape already consumed; record a new tape for another backward pass")
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        self.consumed = True

        adjoints = {}
        if loss.tracked_by(self):
            adjoints[id(loss)] = np.ones_like(loss.data)

        for node in reversed(self.nodes):
            g = adjoints.pop(id(node.output), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.tracked_by(self):
                    continue
                key = id(parent)
                adjoints[key] = adjoints[key] + pg if key in adjoints else pg

        targets = list(self.leaves.values()) if wrt is None else list(wrt)
        grads = []
        for leaf in targets:
            g = adjoints.get(id(leaf))
            g = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
            leaf.grad = g
            grads.append(g)
        return grads


def current_tape() -> Optional[GradientTape]:
    return getattr(_local, "tape", None)


def backward(loss: DiffTensor, wrt: Optional[Iterable[DiffTensor]] = None,
             tape: Optional[GradientTape] = None) -> List[np.ndarray]:
    """
    Compute gradients of a scalar loss with respect to trainable leaves.

    The tape is taken from ``tape``, else from the loss itself, else from the
    active context. A constant loss (no tape involvement) yields zero
    gradients for every leaf in ``wrt``.
    """
    tape = tape or loss.tape or current_tape()
    if tape is None:
        if wrt is None:
            raise UsageError("backward on a constant loss needs explicit leaves (wrt) or a live tape")
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = []
        for leaf in wrt:
            leaf.grad = np.zeros_like(leaf.data)
            grads.append(leaf.grad)
        return grads
    return tape.backward(loss, wrt)


def as_tensor(value: ArrayLike) -> DiffTensor:
    return value if isinstance(value, DiffTensor) else DiffTensor(value)


def _make(data: np.ndarray, parents: Tuple[DiffTensor, ...], vjp) -> DiffTensor:
    out = DiffTensor(data, copy=False)
    tape = current_tape()
    if tape is not None and not tape.consumed and any(p.tracked_by(tape) for p in parents):
        tape.record(out, parents, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and reduction primitives
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: ArrayLike, b: ArrayLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g / (2.0 * out),))


def square(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def relu(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def maximum(a: ArrayLike, floor: float) -> DiffTensor:
    """Elementwise max(a, floor); the gradient is zero where the floor is active."""
    a = as_tensor(a)
    mask = a.data > floor
    return _make(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


def matmul(a: ArrayLike, b: ArrayLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def tensor_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> DiffTensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), vjp)


def tensor_mean(a: ArrayLike, axis=None, keepdims: bool = False) -> DiffTensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return div(tensor_sum(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> DiffTensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike) -> DiffTensor:
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,))


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> DiffTensor:
    parts = tuple(as_tensor(t) for t in tensors)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([p.data for p in parts], axis=axis), parts,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def take_rows(a: ArrayLike, index: Sequence[int]) -> DiffTensor:
    """Gather rows along axis 0 (repeats allowed)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), vjp)


def gather(a: ArrayLike, rows: Sequence[int], cols: Sequence[int]) -> DiffTensor:
    """Gather the elements a[rows[k], cols[k]] of a matrix."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _make(a.data[rows, cols], (a,), vjp)


def log_softmax(a: ArrayLike, axis: int = -1) -> DiffTensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _make(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


# ---------------------------------------------------------------------------
# Network layers
# ---------------------------------------------------------------------------

def conv1d(x: ArrayLike, kernel: ArrayLike, bias: ArrayLike) -> DiffTensor:
    """
    Valid, stride-1 cross-correlation over the time axis.

    Args:
        x: N x T x C_in input
        kernel: K x C_in x C_out taps
        bias: C_out

    Returns:
        DiffTensor: N x (T - K + 1) x C_out
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3 or kernel.ndim != 3 or bias.ndim != 1:
        raise ConfigurationError(
            f"conv1d: expected input N x T x C_in, kernel K x C_in x C_out and bias C_out, "
            f"got {x.shape}, {kernel.shape}, {bias.shape}")
    n, t, c_in = x.shape
    k, k_in, c_out = kernel.shape
    if k_in != c_in:
        raise ConfigurationError(f"conv1d: input has C_in={c_in} but kernel expects C_in={k_in}")
    if bias.shape[0] != c_out:
        raise ConfigurationError(f"conv1d: bias has {bias.shape[0]} entries, kernel has C_out={c_out}")
    if t < k:
        raise ConfigurationError(f"conv1d: input length T={t} is shorter than kernel size K={k}")

    t_out = t - k + 1
    # (N, T_out, C_in, K) -> (N, T_out, K, C_in) so rows line up with the kernel layout
    patches = np.ascontiguousarray(sliding_window_view(x.data, k, axis=1).transpose(0, 1, 3, 2))
    patches2d = patches.reshape(n * t_out, k * c_in)
    kernel2d = kernel.data.reshape(k * c_in, c_out)
    out = (patches2d @ kernel2d).reshape(n, t_out, c_out) + bias.data

    def vjp(g):
        g2d = g.reshape(n * t_out, c_out)
        grad_kernel = (patches2d.T @ g2d).reshape(k, c_in, c_out)
        grad_bias = g2d.sum(axis=0)
        grad_patches = (g2d @ kernel2d.T).reshape(n, t_out, k, c_in)
        grad_x = np.zeros_like(x.data)
        for tap in range(k):
            grad_x[:, tap:tap + t_out, :] += grad_patches[:, :, tap, :]
        return grad_x, grad_kernel, grad_bias

    return _make(out, (x, kernel, bias), vjp)


def layer_norm(x: ArrayLike, gain: ArrayLike, shift: ArrayLike, eps: float) -> DiffTensor:
    """Normalise every (n, t) position over its channels, then scale and shift."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    if eps <= 0:
        raise ConfigurationError(f"layer_norm: eps must be positive, got {eps}")
    channels = x.shape[-1]
    if gain.shape != (channels,) or shift.shape != (channels,):
        raise ConfigurationError(
            f"layer_norm: gain/shift must have shape ({channels},), got {gain.shape} and {shift.shape}")

    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gain.data + shift.data
    reduce_axes = tuple(range(x.ndim - 1))

    def vjp(g):
        d_normed = g * gain.data
        grad_x = inv_std * (d_normed
                            - d_normed.mean(axis=-1, keepdims=True)
                            - normed * (d_normed * normed).mean(axis=-1, keepdims=True))
        return grad_x, (g * normed).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return _make(out, (x, gain, shift), vjp)


def dense(x: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> DiffTensor:
    """Affine map x @ weight + bias for an N x d_in input."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ConfigurationError(f"dense: input {x.shape} does not match weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ConfigurationError(f"dense: bias {bias.shape} does not match weight {weight.shape}")
    return add(matmul(x, weight), bias)


def global_avg_pool(x: ArrayLike) -> DiffTensor:
    """Mean over the time axis of an N x T x C tensor."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[1] < 1:
        raise ConfigurationError(f"global_avg_pool: expected N x T x C with T >= 1, got {x.shape}")
    t = x.shape[1]
    return _make(x.data.mean(axis=1), (x,),
                 lambda g: (np.broadcast_to(g[:, None, :] / t, x.shape).copy(),))


def softmax_cross_entropy(logits: ArrayLike, labels: Sequence[int]) -> DiffTensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ConfigurationError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise InputError(f"softmax_cross_entropy: labels must lie in [0, {classes}), "
                         f"got range [{labels.min()}, {labels.max()}]")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def vjp(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (g * grad / n,)

    return _make(np.asarray(loss), (logits,), vjp)
