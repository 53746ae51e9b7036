"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array. Every operation in this module returns
a new tensor that remembers its inputs and a closure computing the
vector-Jacobian product, so :func:`backward` can walk the recorded graph in
reverse topological order. The graph is rebuilt on every forward pass.

Gradients accumulate into ``Tensor.grad`` of leaf tensors across repeated
``backward`` calls; callers reset them with :func:`zero_grad`.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "InvalidMaskError",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "tsum",
    "mean",
    "concat",
    "softmax",
    "cross_entropy",
    "gelu",
    "layer_norm",
    "dropout",
    "embedding",
    "broadcast_to",
    "getitem",
    "linear",
    "topological_order",
    "backward",
    "zero_grad",
    "grad_check",
    "grad_errors",
]

DTYPE = np.float64
PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


class InvalidMaskError(ValueError):
    pass


class Tensor:
    """Dense float64 array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data / b.data, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)

    def bw(g):
        return (g * (cdf + x.data * pdf),)

    return _node(x.data * cdf, (x,), bw, "gelu")


# -- linear algebra and shapes -----------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting; a 1-D ``b`` is a column."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 1:
        raise ShapeError(f"matmul needs a matrix on the left: got {a.shape} x {b.shape}")
    if b.ndim == 1:
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), bw, "matmul")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[:-2] + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _node(a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(src),), "reshape")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice)) or i is Ellipsis or i is None for i in items)


def getitem(a: Tensor, index) -> Tensor:
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _node(a.data[index], (a,), bw, "getitem")


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _node(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the rows."""
    ids = np.asarray(ids, dtype=np.int64)
    return getitem(table, ids)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ranks = {t.ndim for t in tensors}
    if len(ranks) != 1:
        raise ShapeError(f"concat needs equal ranks, got shapes {[t.shape for t in tensors]}")
    ax = axis % tensors[0].ndim
    try:
        out = np.concatenate([t.data for t in tensors], axis=ax)
    except ValueError as exc:
        raise ShapeError(f"concat shapes incompatible: {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _node(out, tensors, bw, "concat")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with ``weight`` stored as [out, in]."""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear input {x.shape} does not match weight {weight.shape}")
    y = matmul(weight, x) if x.ndim == 1 else matmul(x, transpose(weight))
    return y if bias is None else add(y, bias)


# -- normalisation and losses ------------------------------------------------


def softmax(x: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is False get exactly 0.

    ``mask`` broadcasts against ``x``. Max-subtraction keeps large logits finite.
    """
    logits = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not np.all(keep.any(axis=axis)):
            raise InvalidMaskError("softmax mask leaves no unmasked position")
        logits = np.where(keep, logits, -np.inf)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _node(y, (x,), bw, "softmax")


def cross_entropy(probs: Tensor, gold) -> Tensor:
    """Mean of ``-log(probs[gold])`` over rows, probabilities floored at 1e-12.

    ``probs`` is a distribution of shape [k] (``gold`` an int) or a batch
    [B, k] (``gold`` a length-B sequence).
    """
    single = probs.ndim == 1
    p = probs.data[None, :] if single else probs.data
    gold_idx = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    k = p.shape[-1]
    if gold_idx.shape[0] != p.shape[0]:
        raise ShapeError(f"{gold_idx.shape[0]} gold labels for {p.shape[0]} distributions")
    if np.any(gold_idx < 0) or np.any(gold_idx >= k):
        raise IndexError(f"gold label out of range [0, {k}): {gold_idx.tolist()}")
    rows = np.arange(p.shape[0])
    picked = p[rows, gold_idx]
    clipped = np.maximum(picked, PROB_FLOOR)
    loss = -np.log(clipped).mean()

    def bw(g):
        full = np.zeros_like(p)
        full[rows, gold_idx] = np.where(picked >= PROB_FLOOR, -1.0 / clipped, 0.0)
        full *= g / p.shape[0]
        return (full[0] if single else full,)

    return _node(np.asarray(loss), (probs,), bw, "cross_entropy")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def bw(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        ggamma = _unbroadcast(g * xhat, gamma.shape)
        gbeta = _unbroadcast(g, beta.shape)
        return gx, ggamma, gbeta

    return _node(xhat * gamma.data + beta.data, (x, gamma, beta), bw, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate`` is 0."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# -- graph traversal -----------------------------------------------------------


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, each after all of its inputs."""
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# -- finite-difference checking -----------------------------------------------


def grad_errors(f: Callable[[], Tensor], params: dict[str, Tensor] | Sequence[Tensor],
                eps: float = 1e-5) -> dict[str, float]:
    """Per-parameter max of |analytic - numeric| / max(1, |numeric|).

    ``f`` must be deterministic (dropout off). Central differences perturb each
    entry in place and restore it afterwards.
    """
    named = params if isinstance(params, dict) else {str(i): p for i, p in enumerate(params)}
    plist = list(named.values())
    zero_grad(plist)
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError(f"objective is not finite: {loss.data}")
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in named.items()}
    zero_grad(plist)

    def evaluate() -> float:
        val = f().item()
        if not math.isfinite(val):
            raise FloatingPointError(f"objective is not finite: {val}")
        return val

    errors: dict[str, float] = {}
    for key, p in named.items():
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate()
            flat[i] = orig - eps
            down = evaluate()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(analytic[key].reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
        errors[key] = worst
    return errors


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5) -> float:
    errs = grad_errors(f, params, eps)
    return max(errs.values()) if errs else 0.0
