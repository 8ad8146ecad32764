"""Minimal reverse-mode differentiation over float64 arrays.

Forward operations append nodes to a ``Tape``; ``backward`` sweeps the tape
in reverse topological order (node ids are already topologically sorted by
construction) and accumulates gradients by addition wherever a value feeds
several consumers.  The primitive set is exactly what an LSTM + additive
attention + cross-entropy stack needs; there is no broadcasting beyond a
bias vector added over the last dimension and explicit row scaling.

Everything is float64: the finite-difference harness checks analytic
gradients at 1e-4 relative tolerance, which single precision cannot sustain.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class AutodiffError(ValueError):
    """Shape mismatch, non-finite values or tape misuse."""


class Tensor:
    """A shaped float64 array, optionally attached to a tape node.

    Leaf tensors (parameters, constants) never carry a tape pointer; their
    registration lives in the tape's watch table, so the same leaf can feed
    many tapes and inference never mutates shared parameters.  Tensors
    produced by primitives belong to exactly one tape.  ``grad`` is
    populated by ``backward`` and holds d(loss)/d(self).
    """

    __slots__ = ("data", "grad", "tape", "node_id")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.tape: "Tape | None" = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, node_id={self.node_id})"


def tensor(data) -> Tensor:
    return Tensor(data)


class _Node:
    __slots__ = ("kind", "input_ids", "saved", "out")

    def __init__(self, kind: str, input_ids: tuple[int, ...], saved, out: Tensor):
        self.kind = kind
        self.input_ids = input_ids
        self.saved = saved
        self.out = out


class Tape:
    """Append-only record of primitive applications.

    A tape is single-threaded; separate tapes are independent.  Leaf tensors
    may be shared across tapes because their registration lives here, not on
    the tensor.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaf_ids: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, t: Tensor) -> int:
        """Register a leaf tensor, returning its node id (idempotent)."""
        nid = self._leaf_ids.get(id(t))
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(_Node("leaf", (), None, t))
            self._leaf_ids[id(t)] = nid
        return nid

    def _input_id(self, t: Tensor) -> int:
        if t.tape is self:
            assert t.node_id is not None
            return t.node_id
        if t.tape is None:
            return self.watch(t)
        raise AutodiffError("input tensor belongs to a different tape")

    # Convenience wrappers; each is a single recorded primitive.

    def matmul(self, a: Tensor, b: Tensor, trans_a: bool = False,
               trans_b: bool = False) -> Tensor:
        return apply_primitive(self, "matmul", [a, b],
                               trans_a=trans_a, trans_b=trans_b)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return apply_primitive(self, "add", [a, b])

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        return apply_primitive(self, "mul", [a, b])

    def scale_rows(self, m: Tensor, w: Tensor) -> Tensor:
        return apply_primitive(self, "scale_rows", [m, w])

    def tanh(self, x: Tensor) -> Tensor:
        return apply_primitive(self, "tanh", [x])

    def sigmoid(self, x: Tensor) -> Tensor:
        return apply_primitive(self, "sigmoid", [x])

    def softmax(self, x: Tensor) -> Tensor:
        return apply_primitive(self, "softmax", [x])

    def embedding(self, table: Tensor, indices) -> Tensor:
        return apply_primitive(self, "embedding_lookup", [table],
                               indices=np.asarray(indices, dtype=np.intp))

    def concat(self, parts: Sequence[Tensor]) -> Tensor:
        return apply_primitive(self, "concat", list(parts))

    def vstack(self, parts: Sequence[Tensor]) -> Tensor:
        return apply_primitive(self, "vstack", list(parts))

    def slice_cols(self, x: Tensor, start: int, stop: int) -> Tensor:
        return apply_primitive(self, "slice_cols", [x], start=start, stop=stop)

    def reshape(self, x: Tensor, shape: tuple[int, ...]) -> Tensor:
        return apply_primitive(self, "reshape", [x], shape=tuple(shape))

    def sum(self, x: Tensor) -> Tensor:
        return apply_primitive(self, "sum_all", [x])

    def masked_cross_entropy(self, probs: Tensor, targets, mask) -> Tensor:
        return apply_primitive(
            self, "masked_cross_entropy", [probs],
            targets=np.asarray(targets, dtype=np.intp),
            mask=np.asarray(mask, dtype=np.float64),
        )


# Probabilities below this are clamped before the log in cross-entropy.
CROSS_ENTROPY_CLAMP = 1e-12


def _fw_matmul(vals, attrs):
    a, b = vals
    if a.ndim != 2 or b.ndim != 2:
        raise AutodiffError("matmul requires 2-D operands")
    ta, tb = attrs["trans_a"], attrs["trans_b"]
    left = a.T if ta else a
    right = b.T if tb else b
    if left.shape[1] != right.shape[0]:
        raise AutodiffError(
            f"matmul shape mismatch: {a.shape} x {b.shape} "
            f"(trans_a={ta}, trans_b={tb})"
        )
    return left @ right, (a, b, ta, tb)


def _bw_matmul(g, saved):
    a, b, ta, tb = saved
    if not ta and not tb:
        return [g @ b.T, a.T @ g]
    if not ta and tb:
        return [g @ b, g.T @ a]
    if ta and not tb:
        return [b @ g.T, a @ g]
    return [(g @ b).T, (a @ g).T]


def _fw_add(vals, attrs):
    a, b = vals
    if a.shape == b.shape:
        return a + b, ("same",)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return a + b, ("bias",)
    raise AutodiffError(f"add shape mismatch: {a.shape} + {b.shape}")


def _bw_add(g, saved):
    if saved[0] == "same":
        return [g, g]
    return [g, g.sum(axis=0)]


def _fw_mul(vals, attrs):
    a, b = vals
    if a.shape != b.shape:
        raise AutodiffError(f"mul shape mismatch: {a.shape} * {b.shape}")
    return a * b, (a, b)


def _bw_mul(g, saved):
    a, b = saved
    return [g * b, g * a]


def _fw_scale_rows(vals, attrs):
    m, w = vals
    if m.ndim != 2:
        raise AutodiffError("scale_rows requires a 2-D matrix")
    if w.shape not in ((m.shape[0],), (m.shape[0], 1)):
        raise AutodiffError(
            f"scale_rows weight shape {w.shape} does not match {m.shape[0]} rows"
        )
    col = w.reshape(m.shape[0], 1)
    return m * col, (m, w)


def _bw_scale_rows(g, saved):
    m, w = saved
    col = w.reshape(m.shape[0], 1)
    dw = (g * m).sum(axis=1).reshape(w.shape)
    return [g * col, dw]


def _fw_tanh(vals, attrs):
    y = np.tanh(vals[0])
    return y, (y,)


def _bw_tanh(g, saved):
    (y,) = saved
    return [g * (1.0 - y * y)]


def _fw_sigmoid(vals, attrs):
    # tanh form avoids exp overflow at very negative inputs
    y = 0.5 * (1.0 + np.tanh(0.5 * vals[0]))
    return y, (y,)


def _bw_sigmoid(g, saved):
    (y,) = saved
    return [g * y * (1.0 - y)]


def _fw_softmax(vals, attrs):
    x = vals[0]
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return y, (y,)


def _bw_softmax(g, saved):
    (y,) = saved
    inner = (g * y).sum(axis=-1, keepdims=True)
    return [y * (g - inner)]


def _fw_embedding(vals, attrs):
    table = vals[0]
    idx = attrs["indices"]
    if table.ndim != 2:
        raise AutodiffError("embedding table must be 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise AutodiffError("embedding index out of range")
    return table[idx], (table.shape, idx)


def _bw_embedding(g, saved):
    shape, idx = saved
    dt = np.zeros(shape, dtype=np.float64)
    np.add.at(dt, idx, g)
    return [dt]


def _fw_concat(vals, attrs):
    ndim = vals[0].ndim
    if any(v.ndim != ndim for v in vals):
        raise AutodiffError("concat operands must share rank")
    if ndim == 2 and any(v.shape[0] != vals[0].shape[0] for v in vals):
        raise AutodiffError("concat operands must share leading dimension")
    widths = [v.shape[-1] for v in vals]
    return np.concatenate(vals, axis=-1), (widths,)


def _bw_concat(g, saved):
    (widths,) = saved
    out = []
    offset = 0
    for w in widths:
        out.append(g[..., offset : offset + w])
        offset += w
    return out


def _fw_vstack(vals, attrs):
    if any(v.ndim != 2 for v in vals):
        raise AutodiffError("vstack requires 2-D operands")
    if any(v.shape[1] != vals[0].shape[1] for v in vals):
        raise AutodiffError("vstack operands must share column count")
    heights = [v.shape[0] for v in vals]
    return np.concatenate(vals, axis=0), (heights,)


def _bw_vstack(g, saved):
    (heights,) = saved
    out = []
    offset = 0
    for h in heights:
        out.append(g[offset : offset + h])
        offset += h
    return out


def _fw_slice_cols(vals, attrs):
    x = vals[0]
    start, stop = attrs["start"], attrs["stop"]
    if not 0 <= start < stop <= x.shape[-1]:
        raise AutodiffError(
            f"slice [{start}:{stop}] out of range for width {x.shape[-1]}"
        )
    return x[..., start:stop].copy(), (x.shape, start, stop)


def _bw_slice_cols(g, saved):
    shape, start, stop = saved
    dx = np.zeros(shape, dtype=np.float64)
    dx[..., start:stop] = g
    return [dx]


def _fw_reshape(vals, attrs):
    x = vals[0]
    shape = attrs["shape"]
    try:
        return x.reshape(shape), (x.shape,)
    except ValueError as exc:
        raise AutodiffError(str(exc)) from exc


def _bw_reshape(g, saved):
    (shape,) = saved
    return [g.reshape(shape)]


def _fw_sum_all(vals, attrs):
    x = vals[0]
    return np.asarray(x.sum()), (x.shape,)


def _bw_sum_all(g, saved):
    (shape,) = saved
    return [np.full(shape, float(g), dtype=np.float64)]


def _fw_masked_cross_entropy(vals, attrs):
    probs = vals[0]
    targets = attrs["targets"]
    mask = attrs["mask"]
    if probs.ndim != 2:
        raise AutodiffError("cross-entropy expects a (positions, vocab) matrix")
    n = probs.shape[0]
    if targets.shape != (n,) or mask.shape != (n,):
        raise AutodiffError("targets/mask length must match probability rows")
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise AutodiffError("target index out of range")
    denom = mask.sum()
    if denom <= 0.0:
        raise AutodiffError("all positions masked")
    picked = probs[np.arange(n), targets]
    clamped = np.maximum(picked, CROSS_ENTROPY_CLAMP)
    loss = -(mask * np.log(clamped)).sum() / denom
    return np.asarray(loss), (probs.shape, targets, mask, picked, clamped, denom)


def _bw_masked_cross_entropy(g, saved):
    shape, targets, mask, picked, clamped, denom = saved
    dp = np.zeros(shape, dtype=np.float64)
    # Zero slope inside the clamp region: the forward value is constant there.
    live = picked >= CROSS_ENTROPY_CLAMP
    rows = np.arange(shape[0])
    dp[rows, targets] = np.where(live, -float(g) * mask / (clamped * denom), 0.0)
    return [dp]


_FORWARD: dict[str, Callable] = {
    "matmul": _fw_matmul,
    "add": _fw_add,
    "mul": _fw_mul,
    "scale_rows": _fw_scale_rows,
    "tanh": _fw_tanh,
    "sigmoid": _fw_sigmoid,
    "softmax": _fw_softmax,
    "embedding_lookup": _fw_embedding,
    "concat": _fw_concat,
    "vstack": _fw_vstack,
    "slice_cols": _fw_slice_cols,
    "reshape": _fw_reshape,
    "sum_all": _fw_sum_all,
    "masked_cross_entropy": _fw_masked_cross_entropy,
}

_BACKWARD: dict[str, Callable] = {
    "matmul": _bw_matmul,
    "add": _bw_add,
    "mul": _bw_mul,
    "scale_rows": _bw_scale_rows,
    "tanh": _bw_tanh,
    "sigmoid": _bw_sigmoid,
    "softmax": _bw_softmax,
    "embedding_lookup": _bw_embedding,
    "concat": _bw_concat,
    "vstack": _bw_vstack,
    "slice_cols": _bw_slice_cols,
    "reshape": _bw_reshape,
    "sum_all": _bw_sum_all,
    "masked_cross_entropy": _bw_masked_cross_entropy,
}

PRIMITIVE_KINDS = tuple(_FORWARD)


def apply_primitive(tape: Tape, kind: str, inputs: Sequence[Tensor],
                    **attrs) -> Tensor:
    """Run one forward primitive and record it on the tape."""
    fw = _FORWARD.get(kind)
    if fw is None:
        raise AutodiffError(f"unknown primitive kind: {kind!r}")
    input_ids = tuple(tape._input_id(t) for t in inputs)
    # Non-finite values raise below; silence numpy's interim warnings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out_data, saved = fw([t.data for t in inputs], attrs)
    if not np.all(np.isfinite(out_data)):
        raise AutodiffError(f"non-finite result from primitive {kind!r}")
    out = Tensor(out_data)
    out.tape = tape
    out.node_id = len(tape.nodes)
    tape.nodes.append(_Node(kind, input_ids, saved, out))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every tensor of the tape reachable from ``loss``.

    Sweeps nodes in reverse id order, which is a reverse topological order by
    construction.  Unreached tensors get ``grad`` of None.
    """
    if loss.tape is not tape or loss.node_id is None:
        raise AutodiffError("loss tensor was not produced on this tape")
    if loss.data.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.node_id] = np.ones_like(loss.data)
    for nid in range(loss.node_id, -1, -1):
        node = tape.nodes[nid]
        g = grads[nid]
        node.out.grad = g
        if g is None or node.kind == "leaf":
            continue
        input_grads = _BACKWARD[node.kind](g, node.saved)
        for iid, ig in zip(node.input_ids, input_grads):
            if ig is None:
                continue
            if grads[iid] is None:
                grads[iid] = ig
            else:
                grads[iid] = grads[iid] + ig
    # Nodes above the loss were never visited by the sweep.
    for nid in range(loss.node_id + 1, len(tape.nodes)):
        tape.nodes[nid].out.grad = None


def finite_difference_check(f: Callable[[list[Tensor]], Tensor],
                            params: list[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic function building a fresh tape per call and
    returning a scalar tensor.  Every coordinate of every parameter is
    perturbed by +/- eps; relative error is |a - n| / max(1e-8, |a| + |n|).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    for p in params:
        p.grad = None
    loss = f(params)
    if not np.all(np.isfinite(loss.data)):
        raise AutodiffError("non-finite loss in gradient check")
    backward(loss.tape, loss)
    analytic = [
        np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params
    ]

    def value() -> float:
        out = f(params)
        if not np.all(np.isfinite(out.data)):
            raise AutodiffError("non-finite loss in gradient check")
        return float(out.data)

    max_err = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = value()
            flat[i] = orig - eps
            down = value()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
