"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy array and, when it participates in a
differentiable computation, remembers its parents and a closure that routes
gradients back to them. Calling :func:`backward` on a scalar loss walks the
graph once in reverse topological order; gradients accumulate into ``grad``
buffers, so calling it twice doubles them.

Broadcasting follows numpy's trailing-dimension alignment (leading axes are
expanded); gradients of broadcast operands are summed back to the original
shape. Data buffers are treated as immutable once created, except that the
optimizer updates Parameter data in place between steps.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Shapes are incompatible for the requested operation."""


DEFAULT_DTYPE = np.float64

# active backward passes; gradients land here first, then flush into buffers
_PASS: list[dict] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None and arr.dtype != dtype:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autodiff ----------------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        # stored gradient arrays are never mutated in place; accumulation
        # allocates, so views handed out by backward closures stay safe
        if _PASS:
            store = _PASS[-1]
            entry = store.get(id(self))
            if entry is None:
                store[id(self)] = [self, g]
            else:
                entry[1] = entry[1] + g
        else:
            self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        """Add d(self)/d(node) into every reachable grad buffer.

        ``self`` must be scalar. Each call contributes exactly one full
        gradient, so calling twice accumulates exactly twice the single-call
        gradient.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar tensor, got shape {self.shape}")
        topo: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        store: dict[int, list] = {id(self): [self, np.ones_like(self.data)]}
        _PASS.append(store)
        try:
            for node in reversed(topo):
                entry = store.get(id(node))
                if entry is not None and node._backward is not None:
                    node._backward(entry[1])
        finally:
            _PASS.pop()
        for tensor, grad in store.values():
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self.dtype))

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


class Parameter(Tensor):
    """Trainable tensor; carries a dotted path name once registered in a model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were expanded by broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise primitives ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _node(-a.data, (a,), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1))

    return _node(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _node(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data)

    return _node(np.log(a.data), (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / data)

    return _node(data, (a,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; batched over leading axes with numpy broadcast rules."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires ndim >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _node(data, (a, b), backward)


# -- reductions and reshaping --------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _node(data, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[i] for i in axes]))
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / n)

    return _node(data, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    def backward(g):
        if axes is None:
            a._accumulate(np.transpose(g))
        else:
            a._accumulate(np.transpose(g, np.argsort(axes)))

    return _node(np.transpose(a.data, axes), (a,), backward)


def _fancy_index(idx) -> bool:
    if isinstance(idx, (int, slice, type(None))):
        return False
    if isinstance(idx, tuple):
        return any(_fancy_index(i) for i in idx)
    return True  # arrays and lists may carry duplicate indices


def getitem(a: Tensor, idx) -> Tensor:
    data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        if _fancy_index(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        a._accumulate(full)

    return _node(data, (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _node(data, tuple(tensors), backward)


def assemble_rows(visible: Tensor, fill_row: Tensor, visible_idx: np.ndarray, n_total: int) -> Tensor:
    """Build an (n_total, D) sequence: ``fill_row`` everywhere, ``visible`` rows
    scattered to ``visible_idx``. Used to interleave encoded tokens with the
    shared mask token."""
    if visible.ndim != 2 or fill_row.ndim != 1:
        raise DimensionError(f"assemble_rows expects (V,D) and (D,), got {visible.shape}, {fill_row.shape}")
    data = np.broadcast_to(fill_row.data, (n_total, fill_row.shape[0])).copy()
    data[visible_idx] = visible.data
    hidden = np.setdiff1d(np.arange(n_total), visible_idx, assume_unique=False)

    def backward(g):
        if visible.requires_grad:
            visible._accumulate(g[visible_idx])
        if fill_row.requires_grad:
            fill_row._accumulate(g[hidden].sum(axis=0))

    return _node(data, (visible, fill_row), backward)
