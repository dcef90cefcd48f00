"""Minimal reverse-mode differentiation over numpy arrays.

Each op-kind registers a forward and a backward function. `eval_op` runs the
forward pass and, when any input requires a gradient, records the producing
op and its parents on the result so `backward` can walk the graph in reverse
topological order. Graphs are rebuilt every step; nothing persists between
calls except the leaves the caller keeps.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse


class ShapeError(ValueError):
    """Raised when inputs to an op-kind have incompatible shapes."""


@dataclass
class OpRecord:
    kind: str
    parents: Tuple["DiffNode", ...]
    attrs: Dict[str, Any] = field(default_factory=dict)


class DiffNode:
    """A value in the differentiation graph."""

    __slots__ = ("data", "_grad", "op", "requires_grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        op: Optional[OpRecord] = None,
    ):
        self.data = np.asarray(data)
        self._grad = None
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, g: np.ndarray):
        if self._grad is None:
            self._grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self._grad += g

    def __repr__(self):
        label = self.name or (self.op.kind if self.op else "leaf")
        return f"DiffNode({label}, shape={self.data.shape})"


def leaf(data, name: Optional[str] = None) -> DiffNode:
    """A trainable leaf; gradients accumulate on it."""
    return DiffNode(data, requires_grad=True, name=name)


def constant(data) -> DiffNode:
    return DiffNode(data, requires_grad=False)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}"
        ) from None


def _as_batched(x: np.ndarray, kind: str) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{kind}: expected (C,H,W) or (B,C,H,W) input, got {x.shape}")


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B,C,H,W) -> (B,9C,H,W), neighbor-major: slot k*C + c, k = 3*(dy+1) + (dx+1)."""
    b, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((b, 9, c, h, w), dtype=x.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[:, k] = padded[:, :, dy : dy + h, dx : dx + w]
    return cols.reshape(b, 9 * c, h, w)


def _col2im(cols: np.ndarray, c: int) -> np.ndarray:
    b, _, h, w = cols.shape
    cols = cols.reshape(b, 9, c, h, w)
    padded = np.zeros((b, c, h + 2, w + 2), dtype=cols.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        padded[:, :, dy : dy + h, dx : dx + w] += cols[:, k]
    return padded[:, :, 1:-1, 1:-1]


def _kernel_matrix(weight: np.ndarray) -> np.ndarray:
    """(O,C,3,3) -> (O,9C) matching the `_im2col` slot order."""
    o, c = weight.shape[:2]
    return weight.transpose(0, 2, 3, 1).reshape(o, 9 * c)


# --------------------------------------------------------------------------
# op-kinds: forward(datas, attrs) -> array, backward(g, datas, out, attrs) -> grads
# --------------------------------------------------------------------------


def _check_arity(kind: str, datas: Sequence[np.ndarray], n: int):
    if len(datas) != n:
        raise ShapeError(f"{kind}: expected {n} inputs, got {len(datas)}")


def _add_fwd(d, attrs):
    _check_arity("add", d, 2)
    _broadcast_shape("add", d[0], d[1])
    return d[0] + d[1]


def _add_bwd(g, d, out, attrs):
    return [_unbroadcast(g, d[0].shape), _unbroadcast(g, d[1].shape)]


def _sub_fwd(d, attrs):
    _check_arity("subtract", d, 2)
    _broadcast_shape("subtract", d[0], d[1])
    return d[0] - d[1]


def _sub_bwd(g, d, out, attrs):
    return [_unbroadcast(g, d[0].shape), _unbroadcast(-g, d[1].shape)]


def _mul_fwd(d, attrs):
    _check_arity("multiply", d, 2)
    _broadcast_shape("multiply", d[0], d[1])
    return d[0] * d[1]


def _mul_bwd(g, d, out, attrs):
    return [_unbroadcast(g * d[1], d[0].shape), _unbroadcast(g * d[0], d[1].shape)]


def _matmul_fwd(d, attrs):
    _check_arity("matmul", d, 2)
    a, b = d
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dims differ, {a.shape} @ {b.shape} ({a.shape[1]} != {b.shape[0]})"
        )
    return a @ b


def _matmul_bwd(g, d, out, attrs):
    a, b = d
    return [g @ b.T, a.T @ g]


def _conv_fwd(d, attrs):
    _check_arity("conv2d", d, 2)
    x, weight = d
    xb, squeeze = _as_batched(x, "conv2d")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: kernel must be (O,C,3,3), got {weight.shape}")
    if weight.shape[1] != xb.shape[1]:
        raise ShapeError(
            f"conv2d: kernel expects {weight.shape[1]} input channels, input has {xb.shape[1]}"
        )
    b, _, h, w = xb.shape
    cols = _im2col(xb).reshape(b, -1, h * w)
    out = np.matmul(_kernel_matrix(weight), cols).reshape(b, weight.shape[0], h, w)
    return out[0] if squeeze else out


def _conv_bwd(g, d, out, attrs):
    x, weight = d
    xb, squeeze = _as_batched(x, "conv2d")
    gb = g[None] if squeeze else g
    b, c, h, w = xb.shape
    o = weight.shape[0]
    cols = _im2col(xb).reshape(b, 9 * c, h * w)
    g2 = gb.reshape(b, o, h * w)
    g_kernel = np.einsum("bop,bkp->ok", g2, cols)
    g_weight = g_kernel.reshape(o, 3, 3, c).transpose(0, 3, 1, 2)
    g_cols = np.matmul(_kernel_matrix(weight).T, g2).reshape(b, 9 * c, h, w)
    g_x = _col2im(g_cols, c)
    return [g_x[0] if squeeze else g_x, g_weight]


def _unfold_fwd(d, attrs):
    _check_arity("unfold3x3", d, 1)
    xb, squeeze = _as_batched(d[0], "unfold3x3")
    out = _im2col(xb)
    return out[0] if squeeze else out


def _unfold_bwd(g, d, out, attrs):
    xb, squeeze = _as_batched(d[0], "unfold3x3")
    gb = g[None] if squeeze else g
    gx = _col2im(gb, xb.shape[1])
    return [gx[0] if squeeze else gx]


def _relu_fwd(d, attrs):
    return np.maximum(d[0], 0)


def _relu_bwd(g, d, out, attrs):
    return [g * (d[0] > 0)]


def _sin_fwd(d, attrs):
    return np.sin(d[0])


def _sin_bwd(g, d, out, attrs):
    return [g * np.cos(d[0])]


def _cos_fwd(d, attrs):
    return np.cos(d[0])


def _cos_bwd(g, d, out, attrs):
    return [-g * np.sin(d[0])]


def _abs_fwd(d, attrs):
    return np.abs(d[0])


def _abs_bwd(g, d, out, attrs):
    return [g * np.sign(d[0])]


def _concat_fwd(d, attrs):
    if not d:
        raise ShapeError("concat: no inputs")
    lead = d[0].shape[:-1]
    for i, x in enumerate(d):
        if x.shape[:-1] != lead:
            raise ShapeError(
                f"concat: input {i} has leading dims {x.shape[:-1]}, expected {lead}"
            )
    return np.concatenate(d, axis=-1)


def _concat_bwd(g, d, out, attrs):
    bounds = np.cumsum([x.shape[-1] for x in d])[:-1]
    return np.split(g, bounds, axis=-1)


def _slice_fwd(d, attrs):
    index = attrs["index"]
    try:
        return d[0][index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {d[0].shape}: {exc}")


def _slice_bwd(g, d, out, attrs):
    gx = np.zeros_like(d[0])
    np.add.at(gx, attrs["index"], g)
    return [gx]


def _gather_fwd(d, attrs):
    x = d[0]
    rows = attrs["rows"]
    if x.ndim != 2:
        raise ShapeError(f"gather: expected a 2-d table, got {x.shape}")
    if rows.size and (rows.min() < 0 or rows.max() >= x.shape[0]):
        raise ShapeError(
            f"gather: row indices span [{rows.min()}, {rows.max()}], table has {x.shape[0]} rows"
        )
    return x[rows]


def _gather_bwd(g, d, out, attrs):
    rows = attrs["rows"]
    n_rows = d[0].shape[0]
    scatter = scipy.sparse.csr_matrix(
        (np.ones(rows.size, dtype=g.dtype), (rows, np.arange(rows.size))),
        shape=(n_rows, rows.size),
    )
    return [np.asarray(scatter @ g)]


def _reshape_fwd(d, attrs):
    try:
        return d[0].reshape(attrs["shape"])
    except ValueError:
        raise ShapeError(
            f"reshape: cannot reshape {d[0].shape} into {attrs['shape']}"
        ) from None


def _reshape_bwd(g, d, out, attrs):
    return [g.reshape(d[0].shape)]


def _transpose_fwd(d, attrs):
    axes = attrs.get("axes")
    if axes is not None and len(axes) != d[0].ndim:
        raise ShapeError(f"transpose: axes {axes} do not match shape {d[0].shape}")
    return np.transpose(d[0], axes)


def _transpose_bwd(g, d, out, attrs):
    axes = attrs.get("axes")
    if axes is None:
        return [np.transpose(g)]
    return [np.transpose(g, np.argsort(axes))]


def _sum_fwd(d, attrs):
    return np.sum(d[0], axis=attrs.get("axis"))


def _sum_bwd(g, d, out, attrs):
    axis = attrs.get("axis")
    if axis is not None:
        g = np.expand_dims(g, axis)
    return [np.broadcast_to(g, d[0].shape).copy()]


def _mean_fwd(d, attrs):
    if d[0].size == 0:
        raise ShapeError("mean: empty input")
    return np.mean(d[0], axis=attrs.get("axis"))


def _mean_bwd(g, d, out, attrs):
    axis = attrs.get("axis")
    count = d[0].size if axis is None else int(np.prod([d[0].shape[a] for a in np.atleast_1d(axis)]))
    if axis is not None:
        g = np.expand_dims(g, axis)
    return [np.broadcast_to(g / count, d[0].shape).copy()]


def _scale_fwd(d, attrs):
    return d[0] * attrs["factor"]


def _scale_bwd(g, d, out, attrs):
    return [g * attrs["factor"]]


OpFn = Callable[..., Any]

OPS: Dict[str, Tuple[OpFn, OpFn]] = {
    "add": (_add_fwd, _add_bwd),
    "subtract": (_sub_fwd, _sub_bwd),
    "multiply": (_mul_fwd, _mul_bwd),
    "matmul": (_matmul_fwd, _matmul_bwd),
    "conv2d": (_conv_fwd, _conv_bwd),
    "unfold3x3": (_unfold_fwd, _unfold_bwd),
    "relu": (_relu_fwd, _relu_bwd),
    "sin": (_sin_fwd, _sin_bwd),
    "cos": (_cos_fwd, _cos_bwd),
    "abs": (_abs_fwd, _abs_bwd),
    "concat": (_concat_fwd, _concat_bwd),
    "slice": (_slice_fwd, _slice_bwd),
    "gather": (_gather_fwd, _gather_bwd),
    "reshape": (_reshape_fwd, _reshape_bwd),
    "transpose": (_transpose_fwd, _transpose_bwd),
    "sum": (_sum_fwd, _sum_bwd),
    "mean": (_mean_fwd, _mean_bwd),
    "scale": (_scale_fwd, _scale_bwd),
}


def eval_op(kind: str, inputs: Sequence[DiffNode], **attrs) -> DiffNode:
    """Run op `kind` forward on `inputs` and record it for backward."""
    if kind not in OPS:
        raise KeyError(f"unknown op-kind '{kind}'")
    forward, _ = OPS[kind]
    nodes = tuple(x if isinstance(x, DiffNode) else constant(x) for x in inputs)
    out = forward([n.data for n in nodes], attrs)
    if any(n.requires_grad for n in nodes):
        return DiffNode(out, requires_grad=True, op=OpRecord(kind, nodes, attrs))
    return DiffNode(out)


def _topological_order(root: DiffNode) -> List[DiffNode]:
    order: List[DiffNode] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.op is not None:
            for parent in node.op.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(root: DiffNode) -> Dict[str, np.ndarray]:
    """Propagate d(root)/d(node) to every node that requires a gradient.

    Returns the accumulated gradients of the named leaves. Unnamed leaves
    still receive their `.grad`.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    if not root.requires_grad:
        return {}
    order = _topological_order(root)
    root._accumulate(np.ones_like(root.data))
    for node in reversed(order):
        if node.op is None or node._grad is None:
            continue
        _, backward_fn = OPS[node.op.kind]
        datas = [p.data for p in node.op.parents]
        grads = backward_fn(node._grad, datas, node.data, node.op.attrs)
        for parent, g in zip(node.op.parents, grads):
            if parent.requires_grad:
                parent._accumulate(g)
    return {
        n.name: n.grad for n in order if n.op is None and n.name is not None
    }


# --------------------------------------------------------------------------
# thin wrappers
# --------------------------------------------------------------------------


def add(a, b):
    return eval_op("add", [a, b])


def subtract(a, b):
    return eval_op("subtract", [a, b])


def multiply(a, b):
    return eval_op("multiply", [a, b])


def matmul(a, b):
    return eval_op("matmul", [a, b])


def conv2d(x, weight):
    return eval_op("conv2d", [x, weight])


def unfold3x3(x):
    return eval_op("unfold3x3", [x])


def relu(x):
    return eval_op("relu", [x])


def sin(x):
    return eval_op("sin", [x])


def cos(x):
    return eval_op("cos", [x])


def absolute(x):
    return eval_op("abs", [x])


def concat(xs):
    return eval_op("concat", list(xs))


def slice_(x, index):
    return eval_op("slice", [x], index=index)


def gather(x, rows):
    return eval_op("gather", [x], rows=np.asarray(rows, dtype=np.int64))


def reshape(x, shape):
    return eval_op("reshape", [x], shape=tuple(shape))


def transpose(x, axes=None):
    return eval_op("transpose", [x], axes=None if axes is None else tuple(axes))


def sum_(x, axis=None):
    return eval_op("sum", [x], axis=axis)


def mean(x, axis=None):
    return eval_op("mean", [x], axis=axis)


def scale(x, factor: float):
    return eval_op("scale", [x], factor=float(factor))


__all__ = [
    "DiffNode",
    "OpRecord",
    "ShapeError",
    "OPS",
    "eval_op",
    "backward",
    "leaf",
    "constant",
]
