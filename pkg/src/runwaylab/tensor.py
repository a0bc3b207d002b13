"""Dense float64 tensors with a reverse-mode gradient tape.

Everything downstream (attention, rewiring, training, the verification
suite) runs on this small op set. Design constraints:

* float64 only — the verification checks need tight tolerances and the
  models are desk-scale, so there is no reason to trade precision away.
* fixed op vocabulary, each with a hand-written vector-Jacobian product,
  rather than general autodiff. Ops support numpy-style broadcasting;
  gradients are summed back over broadcast axes.
* tensors are immutable once built (the backing array is marked
  read-only). The only sanctioned mutation is gradient accumulation on
  ``.grad`` during ``backward``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class TapeError(RuntimeError):
    """Backward called on something that is not a taped scalar."""


class NumericError(ArithmeticError):
    """A value that must be finite is NaN or Inf."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("tensor data contains NaN/Inf")
    return arr


class Tensor:
    """n-dimensional float64 array, optionally participating in the tape.

    ``requires_grad`` marks a node whose gradient should be retained.
    Results of ops inherit participation from their parents; calling
    :func:`backward` on a scalar fills ``.grad`` on every participant.
    Repeated backward calls accumulate (reset by assigning ``grad = None``).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _vjp=None):
        arr = _as_array(data)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents)
        self.grad: np.ndarray | None = None
        self._parents = _parents if self.requires_grad else ()
        self._vjp = _vjp if self.requires_grad else None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise TapeError(f"expected scalar, got shape {self.shape}")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, idx):
        return index(self, idx)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor(a.data + b.data, _parents=(a, b), _vjp=vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return Tensor(a.data - b.data, _parents=(a, b), _vjp=vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))
    return Tensor(a.data * b.data, _parents=(a, b), _vjp=vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return Tensor(a.data / b.data, _parents=(a, b), _vjp=vjp)


def where(cond, a: Tensor, b: Tensor) -> Tensor:
    """Select ``a`` where ``cond`` (a constant boolean array) else ``b``."""
    c = np.asarray(cond, dtype=bool)

    def vjp(g):
        return (_unbroadcast(np.where(c, g, 0.0), a.shape),
                _unbroadcast(np.where(c, 0.0, g), b.shape))
    return Tensor(np.where(c, a.data, b.data), _parents=(a, b), _vjp=vjp)


# -- linear algebra ----------------------------------------------------------

def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """np.matmul with shape-stable rounding.

    BLAS picks kernels by shape and memory layout: ragged edges and single
    rows go through tail/gemv paths, and a transposed (non-contiguous)
    operand goes through the transB path, each with accumulation orders
    that differ from the blocked contiguous kernel by a ULP. That breaks
    the guarantee that truncating a sequence reproduces the surviving
    output rows bit-for-bit (and that growing a causal product leaves
    earlier rows alone, since trailing weights are exact zeros).
    Zero-padding every dimension to a multiple of 8 and always handing
    BLAS freshly contiguous buffers keeps the kernel choice uniform; the
    extra terms are exact +0.0s.
    """
    M, K = a.shape[-2], a.shape[-1]
    N = b.shape[-1]
    Mp, Kp, Np = -(-M // 8) * 8, -(-K // 8) * 8, -(-N // 8) * 8
    if (Mp, Kp, Np) == (M, K, N):
        return np.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))
    ap = np.zeros(a.shape[:-2] + (Mp, Kp))
    ap[..., :M, :K] = a
    bp = np.zeros(b.shape[:-2] + (Kp, Np))
    bp[..., :K, :N] = b
    return np.matmul(ap, bp)[..., :M, :N]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product on the trailing two axes, broadcast over the rest."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def vjp(g):
        return (_unbroadcast(np.matmul(g, _swap(b.data)), a.shape),
                _unbroadcast(np.matmul(_swap(a.data), g), b.shape))
    return Tensor(_mm(a.data, b.data), _parents=(a, b), _vjp=vjp)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inv),)
    return Tensor(np.transpose(a.data, axes), _parents=(a,), _vjp=vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def vjp(g):
        return (g.reshape(a.shape),)
    return Tensor(a.data.reshape(shape), _parents=(a,), _vjp=vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))
    return Tensor(np.concatenate([t.data for t in ts], axis=axis),
                  _parents=tuple(ts), _vjp=vjp)


def index(a: Tensor, idx) -> Tensor:
    """Basic indexing (ints/slices). Gradient scatters back additively."""

    def vjp(g):
        out = np.zeros(a.shape)
        out[idx] += g
        return (out,)
    return Tensor(a.data[idx], _parents=(a,), _vjp=vjp)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Pick rows along axis 0 by integer array (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.int64)

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)
    return Tensor(a.data[idx], _parents=(a,), _vjp=vjp)


# -- reductions --------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)
    return Tensor(a.data.sum(axis=axis, keepdims=keepdims),
                  _parents=(a,), _vjp=vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def rowsum_stable(a: Tensor) -> Tensor:
    """Sum over the last axis with length-independent rounding.

    numpy's pairwise reduction groups terms by the axis length, so a row
    of 7 weights sums differently inside a length-7 array than inside a
    length-9 one whose tail is exact zeros — which would make attention
    rows depend on how much future follows them. Zero-padding the axis to
    a multiple of 8 pins the grouping. Keeps dims.
    """
    n = a.shape[-1]
    pad = (-n) % 8
    data = a.data
    if pad:
        data = np.concatenate(
            [data, np.zeros(a.shape[:-1] + (pad,))], axis=-1)
    s = data.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (np.broadcast_to(g, a.shape).copy(),)
    return Tensor(s, _parents=(a,), _vjp=vjp)


# -- nonlinearities ----------------------------------------------------------

def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)

    def vjp(g):
        return (g * s * (1.0 - s),)
    return Tensor(s, _parents=(a,), _vjp=vjp)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)
    return Tensor(x * cdf, _parents=(a,), _vjp=vjp)


def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """Row-wise softmax over the last axis with an optional keep-mask.

    ``mask`` is a boolean array broadcastable to ``x.shape``; True marks a
    valid slot. Masked slots come out exactly 0; each row of valid slots
    sums to 1 (within float rounding) and every valid slot is strictly
    positive. A row with no valid slot is a contract violation.
    """
    z = x.data
    if mask is None:
        m = z.max(axis=-1, keepdims=True)
        e = np.exp(z - m)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not keep.any(axis=-1).all():
            raise ShapeError("softmax_rows: fully masked row")
        neg = np.where(keep, z, -np.inf)
        m = neg.max(axis=-1, keepdims=True)
        e = np.exp(neg - m)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)
    return Tensor(p, _parents=(x,), _vjp=vjp)


def layer_norm(x: Tensor, scale: Tensor, bias: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then affine-transform."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def vjp(g):
        n = x.shape[-1]
        gxh = g * scale.data
        gx = inv * (gxh - gxh.mean(axis=-1, keepdims=True)
                    - xhat * (gxh * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return (gx,
                _unbroadcast((g * xhat).sum(axis=red), scale.shape),
                _unbroadcast(g.sum(axis=red), bias.shape))
    return Tensor(xhat * scale.data + bias.data,
                  _parents=(x, scale, bias), _vjp=vjp)


# -- rotary position op ------------------------------------------------------

def rope_tables(positions, head_dim: int, theta: float):
    """cos/sin tables of shape (n, head_dim/2) for the given positions."""
    if head_dim % 2 != 0:
        raise ShapeError("rope requires an even head_dim")
    pos = np.asarray(positions, dtype=np.float64)
    k = np.arange(head_dim // 2, dtype=np.float64)
    inv_freq = theta ** (-2.0 * k / head_dim)
    ang = pos[:, None] * inv_freq[None, :]
    return np.cos(ang), np.sin(ang)


def rope(x: Tensor, positions, theta: float = 10000.0) -> Tensor:
    """Rotate (…, n, head_dim) by per-position planar rotations.

    The feature axis is split in halves; pair k = (x[k], x[k+d/2]) rotates
    by angle pos * theta^(-2k/d). Rotations are isometries, so norms are
    preserved and q·k depends on positions only through their difference.
    """
    d = x.shape[-1]
    cos, sin = rope_tables(positions, d, theta)
    h = d // 2
    x1, x2 = x.data[..., :h], x.data[..., h:]
    out = np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)

    def vjp(g):
        g1, g2 = g[..., :h], g[..., h:]
        return (np.concatenate([g1 * cos + g2 * sin,
                                -g1 * sin + g2 * cos], axis=-1),)
    return Tensor(out, _parents=(x,), _vjp=vjp)


# -- loss --------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean next-token cross entropy in nats. ``targets`` are class ids."""
    t = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or t.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy expects (n, vocab) logits and (n,) ids")
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=-1))
    n = z.shape[0]
    loss = (lse - z[np.arange(n), t]).mean()

    def vjp(g):
        p = np.exp(z - m)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(n), t] -= 1.0
        return (g * p / n,)
    return Tensor(loss, _parents=(logits,), _vjp=vjp)


# -- the tape ----------------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` on every tape participant.

    ``loss`` must be a taped scalar. Gradients add onto whatever is already
    in ``.grad``; set ``grad = None`` to reset between independent passes.
    """
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss does not participate in the tape")
    order = _topo(loss)
    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for p, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in flowing:
                flowing[id(p)] = flowing[id(p)] + pg
            else:
                flowing[id(p)] = pg


def tape_jacobian(f: Callable[..., Tensor], *xs: Tensor) -> list[np.ndarray]:
    """Jacobians of ``f(*xs)`` w.r.t. each input, via repeated backward.

    Returns one (out_size, x_size) array per input, rows in flat output
    order. The graph is built once; each output component reseeds it.
    """
    leaves = [Tensor(x.data, requires_grad=True) for x in xs]
    y = f(*leaves)
    flat = reshape(y, (y.size,))
    jacs = [np.empty((y.size, x.size)) for x in xs]
    for k in range(y.size):
        for leaf in leaves:
            leaf.grad = None
        backward(flat[k])
        for j, leaf in enumerate(leaves):
            g = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
            jacs[j][k] = g.reshape(-1)
    return jacs
