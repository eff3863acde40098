"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value flowing through the model is a :class:`Tensor`: a row-major
numpy float64 array plus an optional gradient buffer and a backward closure
linking it to its inputs. The op set is exactly what the architecture needs
(elementwise arithmetic, matmul, reshaping, softmax, layer norm, GELU/ReLU,
a stride-2 transposed convolution and a fused logit BCE); anything hotter
than a BLAS call is routed through :mod:`gavs.kernels` so the compiled
backend can take over.

Tensors are immutable after construction except for their ``grad`` buffer.
Gradient tracking is global and can be suspended with :func:`no_grad` for
evaluation passes.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an op's contract."""


class ContractError(RuntimeError):
    """Raised when a non-shape precondition is violated."""


_grad_enabled = True
_check_finite = False


@contextlib.contextmanager
def no_grad():
    """Suspend graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_check_finite(enabled: bool):
    """Toggle NaN/Inf assertions after every forward op (debug mode)."""
    global _check_finite
    _check_finite = bool(enabled)


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A dense float64 array with optional gradient tracking.

    Attributes:
        data: the value, row-major float64.
        requires_grad: whether backward should populate ``grad``.
        grad: gradient buffer of identical shape, or None until backward
            reaches this tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # -- construction of op results ------------------------------------

    @staticmethod
    def _result(data, parents, backward, op):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        out._op = op
        if _check_finite and not np.all(np.isfinite(data)):
            raise ContractError(f"non-finite values produced by op {op!r}")
        return out

    # -- basic properties ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, grad={self.requires_grad})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Tensor):
            data = self.data + other
            return Tensor._result(data, (self,), lambda g: (g,), "add_const")
        data = self.data + other.data
        a, b = self, other

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._result(data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        if not isinstance(other, Tensor):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            c = float(other)
            return Tensor._result(self.data * c, (self,), lambda g: (g * c,), "scale")
        data = self.data * other.data
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            )

        return Tensor._result(data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return self * (1.0 / float(other))
        data = self.data / other.data
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            )

        return Tensor._result(data, (a, b), backward, "div")

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        data = self.data[idx]
        if np.isscalar(data) or data.ndim == 0:
            data = np.asarray(data)
        src = self

        def backward(g):
            gx = np.zeros_like(src.data)
            np.add.at(gx, idx, g)
            return (gx,)

        return Tensor._result(np.ascontiguousarray(data), (src,), backward, "getitem")

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        src = self

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, src.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, src.shape).copy(),)

        return Tensor._result(np.asarray(data), (src,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = np.ascontiguousarray(self.data.reshape(shape))
        src = self

        def backward(g):
            return (g.reshape(src.shape),)

        return Tensor._result(data, (src,), backward, "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        data = np.ascontiguousarray(self.data.transpose(axes))
        inv = tuple(np.argsort(axes))
        src = self

        def backward(g):
            return (np.ascontiguousarray(g.transpose(inv)),)

        return Tensor._result(data, (src,), backward, "transpose")

    @property
    def T(self):
        return self.transpose()

    # -- backward pass ------------------------------------------------------

    def backward(self):
        """Populate grads of every reachable requires_grad tensor.

        Only valid on scalar (single-element) tensors.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            return
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


def _toposort(root: Tensor):
    """Reverse topological order of the graph above root, deterministic."""
    order = []
    visited = set()
    stack = [(root, iter(root._parents))]
    visited.add(id(root))
    while stack:
        node, children = stack[-1]
        advanced = False
        for child in children:
            if id(child) not in visited and child.requires_grad:
                visited.add(id(child))
                stack.append((child, iter(child._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    order.reverse()
    return order


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Parameter(Tensor):
    """A trainable tensor with a stable name.

    ``trainable=False`` parameters are skipped by the optimizer (bitwise
    unchanged across steps) but may still receive gradients.
    """

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.trainable = trainable


# -- free-function ops ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2D operands or equal-batch 3D stacks."""
    if a.ndim == b.ndim and a.ndim in (2, 3):
        if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
            raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    else:
        raise ShapeError(f"matmul expects 2D or 3D pairs, got {a.shape} x {b.shape}")
    data = a.data @ b.data
    ta, tb = a, b

    def backward(g):
        ga = g @ np.swapaxes(tb.data, -1, -2)
        gb = np.swapaxes(ta.data, -1, -2) @ g
        return ga, gb

    return Tensor._result(data, (a, b), backward, "matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    parts = list(tensors)
    data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.shape[axis] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(parts)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(np.ascontiguousarray(g[tuple(slicer)]))
        return tuple(grads)

    return Tensor._result(data, tuple(parts), backward, "concat")


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    mask = x.data > 0.0
    return Tensor._result(data, (x,), lambda g: (g * mask,), "relu")


def gelu(x: Tensor) -> Tensor:
    """Exact erf-based GELU."""
    data = kernels.gelu(x.data)
    src = x
    return Tensor._result(
        data, (x,), lambda g: (kernels.gelu_grad(src.data, g),), "gelu"
    )


def sigmoid(x: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
    data = np.where(x.data >= 0, data, 1.0 - data)

    def backward(g):
        return (g * data * (1.0 - data),)

    return Tensor._result(data, (x,), backward, "sigmoid")


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)
    return Tensor._result(data, (x,), lambda g: (g * 0.5 / data,), "sqrt")


def maximum_scalar(x: Tensor, c: float) -> Tensor:
    """Elementwise max(x, c); gradient flows only where x > c."""
    data = np.maximum(x.data, c)
    mask = x.data > c
    return Tensor._result(data, (x,), lambda g: (g * mask,), "maximum")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along an axis, max-subtracted for stability."""
    axis = axis % x.ndim
    if axis != x.ndim - 1:
        moved = x.transpose(*_move_to_last(x.ndim, axis))
        out = softmax(moved, axis=-1)
        return out.transpose(*_move_from_last(x.ndim, axis))
    shape = x.shape
    n = shape[-1]
    y2 = kernels.softmax_rows(np.ascontiguousarray(x.data.reshape(-1, n)))
    data = y2.reshape(shape)

    def backward(g):
        gx = kernels.softmax_rows_grad(y2, np.ascontiguousarray(g.reshape(-1, n)))
        return (gx.reshape(shape),)

    return Tensor._result(data, (x,), backward, "softmax")


def _move_to_last(ndim, axis):
    axes = [i for i in range(ndim) if i != axis]
    axes.append(axis)
    return axes


def _move_from_last(ndim, axis):
    axes = list(range(ndim - 1))
    axes.insert(axis, ndim - 1)
    return axes


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer norm over the last axis with affine gain/bias."""
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last axis {n}"
        )
    shape = x.shape
    x2 = np.ascontiguousarray(x.data.reshape(-1, n))
    y2, xhat, rstd = kernels.layer_norm_rows(x2, gain.data, bias.data, eps)
    data = y2.reshape(shape)

    def backward(g):
        gx, ggain, gbias = kernels.layer_norm_rows_grad(
            xhat, rstd, gain.data, np.ascontiguousarray(g.reshape(-1, n))
        )
        return gx.reshape(shape), ggain, gbias

    return Tensor._result(data, (x, gain, bias), backward, "layer_norm")


def conv_transpose2d(x: Tensor, kernel: Tensor) -> Tensor:
    """Stride-2, kernel-2 transposed convolution: (c_in,h,w) -> (c_out,2h,2w)."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(
            f"conv_transpose2d expects (c,h,w) input and (c_in,c_out,2,2) kernel, "
            f"got {x.shape} and {kernel.shape}"
        )
    if kernel.shape[0] != x.shape[0]:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input {x.shape} vs kernel {kernel.shape}"
        )
    if kernel.shape[2:] != (2, 2):
        raise ShapeError(f"conv_transpose2d kernel spatial size must be 2x2, got {kernel.shape}")
    data = kernels.conv_transpose2d_k2s2(x.data, kernel.data)
    tx, tk = x, kernel

    def backward(g):
        g = np.ascontiguousarray(g)
        return (
            kernels.conv_transpose2d_k2s2_grad_x(g, tk.data),
            kernels.conv_transpose2d_k2s2_grad_w(tx.data, g),
        )

    return Tensor._result(data, (x, kernel), backward, "conv_transpose2d")


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy from logits, numerically stable form."""
    y = np.asarray(target, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"bce target shape {y.shape} != logits shape {logits.shape}")
    z = logits.data
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(loss.mean())
    n = z.size

    def backward(g):
        s = 1.0 / (1.0 + np.exp(-np.abs(z)))
        s = np.where(z >= 0, s, 1.0 - s)
        return (g * (s - y) / n,)

    return Tensor._result(data, (logits,), backward, "bce_with_logits")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1D tensors (scalar output)."""
    return (a * b).sum()


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Cosine similarity of two vectors; norms clamped at eps."""
    na = sqrt((a * a).sum())
    nb = sqrt((b * b).sum())
    return dot(a, b) / maximum_scalar(na * nb, eps)
