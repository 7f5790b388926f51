"""A small reverse-mode autodiff engine over numpy arrays.

Every primitive returns a new :class:`Tensor` that remembers its parents
and a closure pushing the output adjoint back to them. :func:`backward`
walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "op", "requires_grad", "name")

    def __init__(self, data, parents: tuple["Tensor", ...] = (), op: str = "",
                 requires_grad: bool | None = None, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op
        self.requires_grad = (any(p.requires_grad for p in parents)
                              if requires_grad is None else requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _make(data, parents, op, backward) -> Tensor:
    out = Tensor(data, parents, op)
    if out.requires_grad:
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))
    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    """Elementwise (broadcasting) product; ``b`` may be a plain scalar."""
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), "mul", bw)


def matmul(a, b) -> Tensor:
    """``numpy.matmul`` semantics, including batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def bw(g):
        a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
    return _make(a.data @ b.data, (a, b), "matmul", bw)


def spmm(op, x) -> Tensor:
    """Constant sparse (or block-sparse) matrix times a dense tensor."""
    x = as_tensor(x)
    mat = op.to_csr() if hasattr(op, "to_csr") else sp.csr_matrix(op)
    if mat.shape[1] != x.shape[0]:
        raise ValueError(f"operator is {mat.shape}, input has {x.shape[0]} rows")
    mat_t = mat.T.tocsr()

    def bw(g):
        x._accum(mat_t @ g)
    return _make(mat @ x.data, (x,), "spmm", bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        x._accum(g.reshape(x.shape))
    return _make(x.data.reshape(shape), (x,), "reshape", bw)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    inv = None if axes is None else np.argsort(axes)

    def bw(g):
        x._accum(np.transpose(g, inv))
    return _make(np.transpose(x.data, axes), (x,), "transpose", bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, cuts, axis=axis)):
            t._accum(piece)
    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), "concat", bw)


def gather(x, index) -> Tensor:
    """Rows ``x[index]`` along the first axis."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def bw(g):
        acc = np.zeros_like(x.data)
        np.add.at(acc, index, g)
        x._accum(acc)
    return _make(x.data[index], (x,), "gather", bw)


def scatter_add(x, index, size: int) -> Tensor:
    """Sum rows of ``x`` into ``size`` output rows selected by ``index``."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((size,) + x.shape[1:])
    np.add.at(out, index, x.data)

    def bw(g):
        x._accum(g[index])
    return _make(out, (x,), "scatter_add", bw)


def total(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        x._accum(np.broadcast_to(g, x.shape))
    return _make(np.sum(x.data), (x,), "sum", bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def bw(g):
        x._accum(g * mask)
    return _make(np.where(mask, x.data, 0.0), (x,), "relu", bw)


def elu(x, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    neg_part = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg_part)

    def bw(g):
        x._accum(g * np.where(pos, 1.0, neg_part + alpha))
    return _make(out, (x,), "elu", bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def bw(g):
        x._accum(g * (1.0 - out * out))
    return _make(out, (x,), "tanh", bw)


def identity(x) -> Tensor:
    return as_tensor(x)


def pinv_sqrt(x, floor: float = 1e-12) -> Tensor:
    """Elementwise ``x^-1/2`` where ``x > floor``, zero elsewhere."""
    x = as_tensor(x)
    keep = x.data > floor
    safe = np.where(keep, x.data, 1.0)
    out = np.where(keep, safe ** -0.5, 0.0)

    def bw(g):
        x._accum(g * np.where(keep, -0.5 * safe ** -1.5, 0.0))
    return _make(out, (x,), "pinv_sqrt", bw)


def dropout(x, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout; the sampled mask is kept for the backward pass."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    def bw(g):
        x._accum(g * mask)
    return _make(x.data * mask, (x,), "dropout", bw)


def apply_mask(x, mask: np.ndarray) -> Tensor:
    """Multiply by a fixed mask (dropout with a caller-supplied mask)."""
    return mul(x, Tensor(mask, requires_grad=False))


def softmax_cross_entropy(logits, labels, index=None) -> Tensor:
    """Mean cross-entropy of ``softmax(logits[index])`` against ``labels[index]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    index = np.arange(logits.shape[0]) if index is None else np.asarray(index, dtype=np.int64)
    z = logits.data[index]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    tgt = labels[index]
    k = len(index)
    loss = -logp[np.arange(k), tgt].mean() if k else 0.0

    def bw(g):
        probs = np.exp(logp)
        probs[np.arange(k), tgt] -= 1.0
        acc = np.zeros_like(logits.data)
        acc[index] = probs * (g / max(k, 1))
        logits._accum(acc)
    return _make(loss, (logits,), "softmax_ce", bw)


ACTIVATIONS = {"elu": elu, "relu": relu, "identity": identity}


class CycleError(RuntimeError):
    pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, iter(root.parents))]
    state[id(root)] = 1
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            state[id(node)] = 2
            order.append(node)
            continue
        if not nxt.requires_grad:
            continue
        s = state.get(id(nxt))
        if s == 1:
            raise CycleError("cycle in the recorded graph")
        if s is None:
            state[id(nxt)] = 1
            stack.append((nxt, iter(nxt.parents)))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> list[np.ndarray]:
    """Back-propagate from a scalar ``loss``.

    Returns gradients for ``params`` in order; parameters the loss does not
    depend on get exact zeros.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    params = list(params)
    for p in params:
        p.grad = None
    order = _topo_order(loss)
    for node in order:
        if node is not loss:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    grads = []
    for p in params:
        grads.append(np.zeros_like(p.data) if p.grad is None else p.grad)
    return grads
