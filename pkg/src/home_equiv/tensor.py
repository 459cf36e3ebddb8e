"""Dense float64 tensors on an explicit reverse-mode tape.

A Graph is an append-only list of nodes (op kind, input ids, saved forward
value); inputs always have smaller ids, so the tape is acyclic by
construction and replayable: after set_leaf(), forward() recomputes every
op node in order with no hidden state. backward() walks the tape in
reverse and returns a gradient for every leaf.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import BadConfig, NonScalarLoss, ShapeMismatch


def as_tensor(value) -> np.ndarray:
    """Validate and own a float64, C-contiguous, all-finite array."""
    arr = np.array(value, dtype=np.float64, order="C")
    if not np.all(np.isfinite(arr)):
        raise BadConfig("tensor values must be finite (no NaN/Inf)")
    return arr


class OpDef(NamedTuple):
    forward: Callable   # (input_values, aux) -> ndarray
    backward: Callable  # (input_values, out_value, grad, aux, needs) -> tuple


OPS: dict[str, OpDef] = {}


def register_op(name: str, forward, backward) -> None:
    OPS[name] = OpDef(forward, backward)


class Graph:
    """Replayable reverse-mode tape over float64 arrays."""

    def __init__(self):
        self._ops: list[tuple[str, tuple[int, ...], object]] = []
        self._values: list[np.ndarray] = []
        self._leaf_ids: list[int] = []

    def __len__(self):
        return len(self._ops)

    @property
    def leaf_ids(self) -> list[int]:
        return list(self._leaf_ids)

    def value(self, nid: int) -> np.ndarray:
        return self._values[nid]

    def op_of(self, nid: int) -> str:
        return self._ops[nid][0]

    def inputs_of(self, nid: int) -> tuple:
        return self._ops[nid][1]

    def leaf(self, value, name: str | None = None) -> int:
        nid = len(self._ops)
        self._ops.append(("leaf", (), name))
        self._values.append(as_tensor(value))
        self._leaf_ids.append(nid)
        return nid

    def shared_leaf(self, arr: np.ndarray, name: str | None = None) -> int:
        """Leaf that aliases the caller's array instead of copying it.

        Used for trainable parameters: in-place optimizer updates are then
        visible to every graph holding the leaf. The array must already be
        float64, C-contiguous, and finite.
        """
        if (not isinstance(arr, np.ndarray) or arr.dtype != np.float64
                or not arr.flags["C_CONTIGUOUS"]):
            raise BadConfig("shared leaf requires a C-contiguous float64 array")
        if not np.all(np.isfinite(arr)):
            raise BadConfig("tensor values must be finite (no NaN/Inf)")
        nid = len(self._ops)
        self._ops.append(("leaf", (), name))
        self._values.append(arr)
        self._leaf_ids.append(nid)
        return nid

    def set_leaf(self, nid: int, value) -> None:
        if self._ops[nid][0] != "leaf":
            raise BadConfig(f"node {nid} is not a leaf")
        arr = as_tensor(value)
        if arr.shape != self._values[nid].shape:
            raise ShapeMismatch(
                f"leaf {nid} shape {self._values[nid].shape} cannot become {arr.shape}")
        self._values[nid] = arr

    def set_aux(self, nid: int, aux) -> None:
        op, inputs, _ = self._ops[nid]
        self._ops[nid] = (op, inputs, aux)

    def apply_op(self, name: str, *inputs: int, aux=None) -> int:
        opdef = OPS[name]
        vals = [self._values[i] for i in inputs]
        out = opdef.forward(vals, aux)
        nid = len(self._ops)
        self._ops.append((name, tuple(inputs), aux))
        self._values.append(out)
        return nid

    # -- primitives -------------------------------------------------------

    def matmul(self, a: int, b: int) -> int:
        return self.apply_op("matmul", a, b)

    def add(self, a: int, b: int) -> int:
        return self.apply_op("add", a, b)

    def sub(self, a: int, b: int) -> int:
        return self.apply_op("sub", a, b)

    def scale(self, a: int, factor: float) -> int:
        return self.apply_op("scale", a, aux=float(factor))

    def relu(self, a: int) -> int:
        return self.apply_op("relu", a)

    def row_softmax(self, a: int) -> int:
        return self.apply_op("row_softmax", a)

    def cross_entropy(self, logits: int, labels) -> int:
        labels = np.asarray(labels, dtype=np.int64)
        return self.apply_op("cross_entropy", logits, aux=labels)

    def frobenius_sq(self, a: int) -> int:
        return self.apply_op("frobenius_sq", a)

    def transpose(self, a: int) -> int:
        return self.apply_op("transpose", a)

    def concat_cols(self, a: int, b: int) -> int:
        return self.apply_op("concat_cols", a, b)

    def slice_cols(self, a: int, lo: int, hi: int) -> int:
        return self.apply_op("slice_cols", a, aux=(int(lo), int(hi)))

    # -- execution --------------------------------------------------------

    def forward(self) -> None:
        """Recompute every op node, in order, from current leaf values."""
        for nid, (op, inputs, aux) in enumerate(self._ops):
            if op == "leaf":
                continue
            vals = [self._values[i] for i in inputs]
            self._values[nid] = OPS[op].forward(vals, aux)

    def backward(self, loss: int, wrt=None) -> dict[int, np.ndarray]:
        """Gradients of a scalar loss node with respect to leaves.

        Returns {leaf id: gradient}; unreachable leaves get zeros. `wrt`
        restricts the output (and prunes the walk) to a subset of leaves.
        """
        out_val = self._values[loss]
        if out_val.shape not in ((), (1,)):
            raise NonScalarLoss(f"loss node has shape {out_val.shape}")
        if wrt is None:
            wrt = self._leaf_ids
        wrt = list(wrt)

        needed = [False] * (loss + 1)
        for nid in wrt:
            if nid <= loss:
                needed[nid] = True
        for nid in range(loss + 1):
            op, inputs, _ = self._ops[nid]
            if op != "leaf" and any(needed[i] for i in inputs):
                needed[nid] = True

        grads: dict[int, np.ndarray] = {loss: np.ones(out_val.shape)}
        for nid in range(loss, -1, -1):
            if nid not in grads or not needed[nid]:
                continue
            op, inputs, aux = self._ops[nid]
            if op == "leaf":
                continue
            vals = [self._values[i] for i in inputs]
            needs = tuple(needed[i] for i in inputs)
            parts = OPS[op].backward(vals, self._values[nid], grads[nid], aux, needs)
            for i, part in zip(inputs, parts):
                if part is None:
                    continue
                if i in grads:
                    grads[i] = grads[i] + part
                else:
                    grads[i] = part
        return {nid: grads.get(nid, np.zeros_like(self._values[nid])) for nid in wrt}


# -- op implementations ----------------------------------------------------

def _fw_matmul(ins, aux):
    a, b = ins
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul needs (m,k)@(k,n), got {a.shape} and {b.shape}")
    return a @ b


def _bw_matmul(ins, out, g, aux, needs):
    a, b = ins
    da = g @ b.T if needs[0] else None
    db = a.T @ g if needs[1] else None
    return da, db


def _check_addlike(a, b, op):
    if a.shape == b.shape:
        return False
    if a.ndim == 2 and b.shape == (1, a.shape[1]):
        return True
    raise ShapeMismatch(f"{op} shapes incompatible: {a.shape} and {b.shape}")


def _fw_add(ins, aux):
    a, b = ins
    _check_addlike(a, b, "add")
    return a + b


def _bw_add(ins, out, g, aux, needs):
    a, b = ins
    broadcast = a.shape != b.shape
    da = g if needs[0] else None
    if not needs[1]:
        db = None
    else:
        db = g.sum(axis=0, keepdims=True) if broadcast else g
    return da, db


def _fw_sub(ins, aux):
    a, b = ins
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub shapes differ: {a.shape} and {b.shape}")
    return a - b


def _bw_sub(ins, out, g, aux, needs):
    da = g if needs[0] else None
    db = -g if needs[1] else None
    return da, db


def _fw_scale(ins, aux):
    return ins[0] * aux


def _bw_scale(ins, out, g, aux, needs):
    return (g * aux if needs[0] else None,)


def _fw_relu(ins, aux):
    return np.maximum(ins[0], 0.0)


def _bw_relu(ins, out, g, aux, needs):
    # subgradient at 0 is 0
    return (g * (ins[0] > 0.0) if needs[0] else None,)


def _fw_row_softmax(ins, aux):
    x = ins[0]
    if x.ndim != 2:
        raise ShapeMismatch(f"row_softmax needs a 2D input, got {x.shape}")
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _bw_row_softmax(ins, out, g, aux, needs):
    if not needs[0]:
        return (None,)
    dot = (g * out).sum(axis=1, keepdims=True)
    return (out * (g - dot),)


def _fw_cross_entropy(ins, labels):
    logits = ins[0]
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"cross_entropy needs (m,n) logits and (m,) labels, got {logits.shape} "
            f"and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise BadConfig("label index outside logit columns")
    m = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - m).sum(axis=1)) + m[:, 0]
    picked = logits[np.arange(logits.shape[0]), labels]
    return np.asarray((lse - picked).mean())


def _bw_cross_entropy(ins, out, g, labels, needs):
    if not needs[0]:
        return (None,)
    logits = ins[0]
    rows = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    p[np.arange(rows), labels] -= 1.0
    return (p * (g / rows),)


def _fw_frobenius_sq(ins, aux):
    x = ins[0]
    return np.asarray(np.sum(x * x))


def _bw_frobenius_sq(ins, out, g, aux, needs):
    return ((2.0 * g) * ins[0] if needs[0] else None,)


def _fw_transpose(ins, aux):
    x = ins[0]
    if x.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2D input, got {x.shape}")
    return np.ascontiguousarray(x.T)


def _bw_transpose(ins, out, g, aux, needs):
    return (np.ascontiguousarray(g.T) if needs[0] else None,)


def _fw_concat_cols(ins, aux):
    a, b = ins
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"concat_cols needs matching rows, got {a.shape} and {b.shape}")
    return np.hstack([a, b])


def _bw_concat_cols(ins, out, g, aux, needs):
    split = ins[0].shape[1]
    da = np.ascontiguousarray(g[:, :split]) if needs[0] else None
    db = np.ascontiguousarray(g[:, split:]) if needs[1] else None
    return da, db


def _fw_slice_cols(ins, aux):
    x = ins[0]
    lo, hi = aux
    if x.ndim != 2 or not (0 <= lo < hi <= x.shape[1]):
        raise ShapeMismatch(f"slice_cols[{lo}:{hi}] invalid for shape {x.shape}")
    return np.ascontiguousarray(x[:, lo:hi])


def _bw_slice_cols(ins, out, g, aux, needs):
    if not needs[0]:
        return (None,)
    lo, hi = aux
    dx = np.zeros_like(ins[0])
    dx[:, lo:hi] = g
    return (dx,)


register_op("matmul", _fw_matmul, _bw_matmul)
register_op("add", _fw_add, _bw_add)
register_op("sub", _fw_sub, _bw_sub)
register_op("scale", _fw_scale, _bw_scale)
register_op("relu", _fw_relu, _bw_relu)
register_op("row_softmax", _fw_row_softmax, _bw_row_softmax)
register_op("cross_entropy", _fw_cross_entropy, _bw_cross_entropy)
register_op("frobenius_sq", _fw_frobenius_sq, _bw_frobenius_sq)
register_op("transpose", _fw_transpose, _bw_transpose)
register_op("concat_cols", _fw_concat_cols, _bw_concat_cols)
register_op("slice_cols", _fw_slice_cols, _bw_slice_cols)


def finite_diff_check(f, x, analytic, step: float = 1e-5) -> float:
    """Max relative error between an analytic gradient and central differences.

    f maps an ndarray to a float; analytic has x's shape. The relative
    error denominator is max(1e-8, |analytic| + |numeric|) per coordinate.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ShapeMismatch(f"gradient shape {analytic.shape} != input shape {x.shape}")
    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        numeric = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * step)
        a = analytic.ravel()[i]
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
