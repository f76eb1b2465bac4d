"""Dense 2-D tensors with a small reverse-mode tape.

Every op records a node on a :class:`Graph` (insertion order is the
topological order). Nodes keep their op kind, input ids and attributes, so
the whole graph can be re-evaluated after perturbing leaf data; that is what
:func:`finite_difference_check` relies on.

Sub-expressions whose inputs carry no gradient are folded into constants at
construction time, so an inference pass with frozen parameters records only
leaves and constants.

All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateLengthError,
    DimensionError,
    NumericalInstabilityError,
)

__all__ = [
    "Tensor",
    "Var",
    "Graph",
    "backward",
    "finite_difference_check",
    "conv1d_output_length",
]


class Tensor:
    """Row-major 2-D float64 array with an optional gradient buffer.

    1-D input is stored as a single row, scalars as 1x1.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericalInstabilityError(f"non-finite entries in tensor {name!r}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, requires_grad: bool = False, name: str | None = None) -> "Tensor":
        """Wrap an existing float64 2-D array without copying or validating."""
        t = cls.__new__(cls)
        t.data, t.requires_grad, t.grad, t.name = arr, requires_grad, None, name
        return t

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    kind: str
    inputs: tuple[int, ...]
    attrs: dict
    out: np.ndarray
    cache: object = None
    needs_grad: bool = False
    tensor: Tensor | None = None


@dataclass(frozen=True)
class Var:
    """Handle to a node of a particular graph."""

    graph: "Graph" = field(repr=False)
    index: int

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.index].out

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        v = self.value
        if v.shape != (1, 1):
            raise DimensionError(f"item() on non-scalar of shape {v.shape}")
        return float(v[0, 0])


def conv1d_output_length(t: int, k: int, s: int, p: int) -> int:
    return (t + 2 * p - k) // s + 1


# ---------------------------------------------------------------------------
# op kernels: forward(xs, attrs) -> (out, cache); backward(g, xs, out, cache, attrs)


def _im2col(x: np.ndarray, k: int, s: int, p: int, t_out: int) -> np.ndarray:
    if p:
        x = np.pad(x, ((p, p), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=0)  # (T+2p-k+1, D, k)
    win = win[: s * (t_out - 1) + 1 : s]
    # weight rows are laid out tap-major: row = tap * Din + channel
    return np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(t_out, -1)


def _conv1d_fwd(xs, a):
    x, w, b = xs
    k, s, p = a["k"], a["s"], a["p"]
    t_out = conv1d_output_length(x.shape[0], k, s, p)
    cols = _im2col(x, k, s, p, t_out)
    return cols @ w + b, cols


def _conv1d_bwd(g, xs, out, cols, a):
    x, w, b = xs
    k, s, p = a["k"], a["s"], a["p"]
    t, din = x.shape
    t_out = g.shape[0]
    dw = cols.T @ g
    db = g.sum(axis=0, keepdims=True)
    dcols = g @ w.T
    dxp = np.zeros((t + 2 * p, din))
    stop = s * (t_out - 1) + 1
    for tap in range(k):
        dxp[tap : tap + stop : s] += dcols[:, tap * din : (tap + 1) * din]
    return dxp[p : p + t], dw, db


def _affine_fwd(xs, a):
    x, w, b = xs
    return x @ w + b, None


def _affine_bwd(g, xs, out, cache, a):
    x, w, b = xs
    return g @ w.T, x.T @ g, g.sum(axis=0, keepdims=True)


def _matmul_fwd(xs, a):
    x, y = xs
    return (x @ y.T if a["transpose_b"] else x @ y), None


def _matmul_bwd(g, xs, out, cache, a):
    x, y = xs
    if a["transpose_b"]:
        return g @ y, g.T @ x
    return g @ y.T, x.T @ g


def _relu_fwd(xs, a):
    return np.maximum(xs[0], 0.0), None


def _relu_bwd(g, xs, out, cache, a):
    return (g * (xs[0] > 0.0),)


def _sigmoid_fwd(xs, a):
    x = xs[0]
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, None


def _sigmoid_bwd(g, xs, out, cache, a):
    return (g * out * (1.0 - out),)


def _add_fwd(xs, a):
    return xs[0] + xs[1], None


def _add_bwd(g, xs, out, cache, a):
    return g, g


def _mul_fwd(xs, a):
    return xs[0] * xs[1], None


def _mul_bwd(g, xs, out, cache, a):
    return g * xs[1], g * xs[0]


def _scale_fwd(xs, a):
    return xs[0] * a["c"], None


def _scale_bwd(g, xs, out, cache, a):
    return (g * a["c"],)


def _sum_fwd(xs, a):
    return np.array([[xs[0].sum()]]), None


def _sum_bwd(g, xs, out, cache, a):
    return (np.full_like(xs[0], g[0, 0]),)


def _mean_fwd(xs, a):
    return np.array([[xs[0].mean()]]), None


def _mean_bwd(g, xs, out, cache, a):
    return (np.full_like(xs[0], g[0, 0] / xs[0].size),)


def _mean_rows_fwd(xs, a):
    return xs[0][a["start"] : a["stop"]].mean(axis=0, keepdims=True), None


def _mean_rows_bwd(g, xs, out, cache, a):
    dx = np.zeros_like(xs[0])
    dx[a["start"] : a["stop"]] = g / (a["stop"] - a["start"])
    return (dx,)


def _concat_fwd(xs, a):
    return np.concatenate(xs, axis=0), None


def _concat_bwd(g, xs, out, cache, a):
    grads = []
    row = 0
    for x in xs:
        grads.append(g[row : row + x.shape[0]])
        row += x.shape[0]
    return tuple(grads)


def _l2norm_fwd(xs, a):
    x = xs[0]
    norm = np.sqrt((x * x).sum(axis=1, keepdims=True)) + a["eps"]
    return x / norm, norm


def _l2norm_bwd(g, xs, out, norm, a):
    # d(x/n)/dx with n = |x| + eps
    dot = (g * out).sum(axis=1, keepdims=True)
    raw = np.sqrt((xs[0] * xs[0]).sum(axis=1, keepdims=True))
    ratio = np.where(raw > 0, norm / np.where(raw > 0, raw, 1.0), 0.0)
    return ((g - out * dot * ratio) / norm,)


def _custom_fwd(xs, a):
    value, grad = a["fn"](xs[0])
    return np.array([[float(value)]]), np.asarray(grad, dtype=np.float64).reshape(xs[0].shape)


def _custom_bwd(g, xs, out, grad, a):
    return (g[0, 0] * grad,)


_OPS: dict[str, tuple[Callable, Callable]] = {
    "conv1d": (_conv1d_fwd, _conv1d_bwd),
    "affine": (_affine_fwd, _affine_bwd),
    "matmul": (_matmul_fwd, _matmul_bwd),
    "relu": (_relu_fwd, _relu_bwd),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd),
    "add": (_add_fwd, _add_bwd),
    "mul": (_mul_fwd, _mul_bwd),
    "scale": (_scale_fwd, _scale_bwd),
    "sum": (_sum_fwd, _sum_bwd),
    "mean": (_mean_fwd, _mean_bwd),
    "mean_rows": (_mean_rows_fwd, _mean_rows_bwd),
    "concat_rows": (_concat_fwd, _concat_bwd),
    "l2_normalize_rows": (_l2norm_fwd, _l2norm_bwd),
    "custom": (_custom_fwd, _custom_bwd),
}


class Graph:
    """Append-only tape. Not thread-safe; use one graph per thread."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._leaf_ids: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    # -- construction ------------------------------------------------------

    def leaf(self, t: Tensor) -> Var:
        idx = self._leaf_ids.get(id(t))
        if idx is not None and self.nodes[idx].tensor is t:
            return Var(self, idx)
        node = _Node("leaf", (), {}, t.data, needs_grad=t.requires_grad, tensor=t)
        self.nodes.append(node)
        self._leaf_ids[id(t)] = len(self.nodes) - 1
        return Var(self, len(self.nodes) - 1)

    def const(self, data) -> Var:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim == 0:
            arr = arr.reshape(1, 1)
        self.nodes.append(_Node("const", (), {}, arr))
        return Var(self, len(self.nodes) - 1)

    def as_var(self, x) -> Var:
        if isinstance(x, Var):
            if x.graph is not self:
                raise ContractError("Var belongs to a different graph")
            return x
        if isinstance(x, Tensor):
            return self.leaf(x)
        return self.const(x)

    def _apply(self, kind: str, inputs: Sequence, attrs: dict | None = None) -> Var:
        attrs = attrs or {}
        vs = [self.as_var(x) for x in inputs]
        xs = [self.nodes[v.index].out for v in vs]
        out, cache = _OPS[kind][0](xs, attrs)
        needs = any(self.nodes[v.index].needs_grad for v in vs)
        if not needs:
            self.nodes.append(_Node("const", (), {}, out))
        else:
            self.nodes.append(
                _Node(kind, tuple(v.index for v in vs), attrs, out, cache, needs_grad=True)
            )
        return Var(self, len(self.nodes) - 1)

    # -- ops ---------------------------------------------------------------

    def conv1d(self, x, w, b, k: int, s: int = 1, p: int = 0) -> Var:
        """Cross-correlation over rows; weight is (k*Din) x Dout, tap-major."""
        if k < 1 or s < 1 or p < 0:
            raise ContractError(f"invalid conv1d geometry k={k} s={s} p={p}")
        xv, wv, bv = (self.as_var(v) for v in (x, w, b))
        t, din = xv.shape
        if wv.shape[0] != k * din:
            raise DimensionError(
                f"conv1d weight has {wv.shape[0]} rows, expected k*Din = {k * din}"
            )
        if bv.shape != (1, wv.shape[1]):
            raise DimensionError(f"conv1d bias shape {bv.shape} != (1, {wv.shape[1]})")
        if conv1d_output_length(t, k, s, p) < 1:
            raise DegenerateLengthError(f"conv1d output length < 1 for T={t}, k={k}, s={s}, p={p}")
        return self._apply("conv1d", (xv, wv, bv), {"k": k, "s": s, "p": p})

    def affine(self, x, w, b) -> Var:
        xv, wv, bv = (self.as_var(v) for v in (x, w, b))
        if xv.shape[1] != wv.shape[0] or bv.shape != (1, wv.shape[1]):
            raise DimensionError(f"affine shapes {xv.shape} @ {wv.shape} + {bv.shape}")
        return self._apply("affine", (xv, wv, bv))

    def matmul(self, a, b, transpose_b: bool = False) -> Var:
        av, bv = self.as_var(a), self.as_var(b)
        inner = bv.shape[1] if transpose_b else bv.shape[0]
        if av.shape[1] != inner:
            raise DimensionError(f"matmul shapes {av.shape} x {bv.shape} (transpose_b={transpose_b})")
        return self._apply("matmul", (av, bv), {"transpose_b": transpose_b})

    def relu(self, x) -> Var:
        return self._apply("relu", (x,))

    def sigmoid(self, x) -> Var:
        return self._apply("sigmoid", (x,))

    def _same_shape(self, a, b) -> tuple[Var, Var]:
        av, bv = self.as_var(a), self.as_var(b)
        if av.shape != bv.shape:
            raise DimensionError(f"elementwise op on shapes {av.shape} and {bv.shape}")
        return av, bv

    def add(self, a, b) -> Var:
        return self._apply("add", self._same_shape(a, b))

    def mul(self, a, b) -> Var:
        return self._apply("mul", self._same_shape(a, b))

    def scale(self, x, c: float) -> Var:
        return self._apply("scale", (x,), {"c": float(c)})

    def sum(self, x) -> Var:
        return self._apply("sum", (x,))

    def mean(self, x) -> Var:
        return self._apply("mean", (x,))

    def mean_rows(self, x, start: int, stop: int) -> Var:
        xv = self.as_var(x)
        if not 0 <= start < stop <= xv.shape[0]:
            raise ContractError(f"row range [{start}, {stop}) outside 0..{xv.shape[0]}")
        return self._apply("mean_rows", (xv,), {"start": start, "stop": stop})

    def concat_rows(self, xs: Iterable) -> Var:
        vs = [self.as_var(x) for x in xs]
        if not vs:
            raise ContractError("concat_rows needs at least one input")
        if len({v.shape[1] for v in vs}) != 1:
            raise DimensionError("concat_rows inputs differ in column count")
        return self._apply("concat_rows", vs)

    def l2_normalize_rows(self, x, eps: float = 1e-12) -> Var:
        return self._apply("l2_normalize_rows", (x,), {"eps": float(eps)})

    def custom(self, x, fn: Callable[[np.ndarray], tuple[float, np.ndarray]]) -> Var:
        """Scalar node whose value and input gradient come from ``fn``.

        ``fn`` must be a pure function of its argument; it is re-called on
        :meth:`replay`.
        """
        return self._apply("custom", (x,), {"fn": fn})

    # -- evaluation --------------------------------------------------------

    def replay(self) -> None:
        """Recompute every op node from current leaf data."""
        for node in self.nodes:
            if node.kind == "leaf":
                node.out = node.tensor.data
            elif node.kind != "const":
                xs = [self.nodes[i].out for i in node.inputs]
                node.out, node.cache = _OPS[node.kind][0](xs, node.attrs)

    def parameters(self) -> list[Tensor]:
        return [n.tensor for n in self.nodes if n.kind == "leaf" and n.tensor.requires_grad]


def _param_name(t: Tensor, idx: int) -> str:
    return t.name if t.name is not None else f"param{idx}"


def backward(graph: Graph, loss: Var, accumulate: bool = False) -> dict[str, np.ndarray]:
    """Reverse-mode sweep from a 1x1 loss node.

    Gradients are pushed in reverse insertion order. Parameter ``.grad``
    buffers are overwritten unless ``accumulate`` is set. Returns a map from
    parameter name to its gradient for this call.
    """
    if loss.graph is not graph:
        raise ContractError("loss node belongs to a different graph")
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    nodes = graph.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    grads[loss.index] = np.ones((1, 1))
    result: dict[str, np.ndarray] = {}
    for i in range(loss.index, -1, -1):
        node = nodes[i]
        g = grads[i]
        if node.kind == "leaf":
            t = node.tensor
            if not t.requires_grad:
                continue
            g = np.zeros_like(t.data) if g is None else g
            if accumulate and t.grad is not None:
                t.grad = t.grad + g
            else:
                t.grad = g.copy()
            result[_param_name(t, i)] = t.grad
            continue
        if g is None or not node.needs_grad or node.kind == "const":
            continue
        xs = [nodes[j].out for j in node.inputs]
        in_grads = _OPS[node.kind][1](g, xs, node.out, node.cache, node.attrs)
        for j, gj in zip(node.inputs, in_grads):
            if gj is None or not nodes[j].needs_grad:
                continue
            grads[j] = gj.copy() if grads[j] is None else grads[j] + gj
    # parameters registered after the loss node cannot influence it
    for i in range(loss.index + 1, len(nodes)):
        node = nodes[i]
        if node.kind == "leaf" and node.tensor.requires_grad:
            t = node.tensor
            if not accumulate or t.grad is None:
                t.grad = np.zeros_like(t.data)
            result[_param_name(t, i)] = t.grad
    return result


def finite_difference_check(
    graph: Graph,
    loss: Var,
    eps: float = 1e-6,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between backward() and central differences.

    Relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    ``max_coords_per_param`` samples a seeded subset of coordinates per
    parameter; None checks all of them.
    """
    if not (0.0 < eps <= 1e-2):
        raise ContractError(f"eps must lie in (0, 1e-2], got {eps}")
    params = graph.parameters()
    for t in params:
        if not np.all(np.isfinite(t.data)):
            raise NumericalInstabilityError(f"non-finite parameter {t.name!r}")
    backward(graph, loss)
    analytic = {id(t): t.grad.copy() for t in params}
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for t in params:
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords_per_param is not None and flat.size > max_coords_per_param:
                coords = rng.choice(flat.size, size=max_coords_per_param, replace=False)
            ga = analytic[id(t)].reshape(-1)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                graph.replay()
                f_plus = loss.item()
                flat[c] = orig - eps
                graph.replay()
                f_minus = loss.item()
                flat[c] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise NumericalInstabilityError(
                        f"non-finite loss when perturbing {t.name!r}[{c}]"
                    )
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = abs(ga[c] - numeric) / max(1.0, abs(ga[c]))
                worst = max(worst, err)
    finally:
        graph.replay()
    return worst
