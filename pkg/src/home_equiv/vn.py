"""Vector-neuron stack: lift scalar features to 3D vector channels.

A feature is an n x 3 matrix (n channels, one 3-vector each). On the tape,
a batch of features is packed as a (rows, 3n) matrix of coordinate planes
[X | Y | Z]; row r holds feature r's x-, y-, z-components side by side.
The lift stage applies three learned n x n projection heads (one per
output coordinate); removing the subsequent VN layers leaves exactly the
concatenated-projection-heads baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeMismatch
from .tensor import Graph, as_tensor, register_op


@dataclass
class LiftHead:
    """Three n x n projection heads producing the x/y/z feature columns."""

    w_x: np.ndarray
    w_y: np.ndarray
    w_z: np.ndarray

    def __post_init__(self):
        self.w_x = as_tensor(self.w_x)
        self.w_y = as_tensor(self.w_y)
        self.w_z = as_tensor(self.w_z)
        n = self.w_x.shape
        if len(n) != 2 or n[0] != n[1] or self.w_y.shape != n or self.w_z.shape != n:
            raise ShapeMismatch(
                f"lift heads must be equal square matrices, got {self.w_x.shape}, "
                f"{self.w_y.shape}, {self.w_z.shape}")


@dataclass
class VNLinear:
    """Channel-mixing linear layer, w: (n_out, n_in)."""

    w: np.ndarray

    def __post_init__(self):
        self.w = as_tensor(self.w)
        if self.w.ndim != 2:
            raise ShapeMismatch(f"vn linear weight must be 2D, got {self.w.shape}")


@dataclass
class VNReLU:
    """Direction-gated nonlinearity with learned q/k projections."""

    w_q: np.ndarray
    w_k: np.ndarray

    def __post_init__(self):
        self.w_q = as_tensor(self.w_q)
        self.w_k = as_tensor(self.w_k)
        if self.w_q.ndim != 2 or self.w_q.shape != self.w_k.shape:
            raise ShapeMismatch(
                f"vn relu weights must match, got {self.w_q.shape} and {self.w_k.shape}")


@dataclass
class VNStack:
    """Lift head followed by alternating VNLinear / VNReLU layers."""

    lift: LiftHead
    layers: list = field(default_factory=list)

    def param_items(self):
        yield "vn/lift/x", self.lift.w_x
        yield "vn/lift/y", self.lift.w_y
        yield "vn/lift/z", self.lift.w_z
        for i, layer in enumerate(self.layers):
            if isinstance(layer, VNLinear):
                yield f"vn/{i}/linear", layer.w
            else:
                yield f"vn/{i}/relu/q", layer.w_q
                yield f"vn/{i}/relu/k", layer.w_k


def init_vn_stack(n: int, rng, with_vn: bool = True) -> VNStack:
    """Default stack: lift -> VNLinear(n,n) -> VNReLU -> VNLinear(n,n).

    Weights are Normal(0, 1/n_in) (variance), i.e. std 1/sqrt(n_in). With
    with_vn=False only the lift heads remain (the ablation baseline).
    """
    std = (1.0 / n) ** 0.5
    lift = LiftHead(rng.normal(0.0, std, (n, n)),
                    rng.normal(0.0, std, (n, n)),
                    rng.normal(0.0, std, (n, n)))
    layers = []
    if with_vn:
        layers.append(VNLinear(rng.normal(0.0, std, (n, n))))
        layers.append(VNReLU(rng.normal(0.0, std, (n, n)),
                             rng.normal(0.0, std, (n, n))))
        layers.append(VNLinear(rng.normal(0.0, std, (n, n))))
    return VNStack(lift, layers)


# -- tape op for the gated nonlinearity -------------------------------------

def _fw_vn_gate(ins, n):
    q, k = ins
    if q.shape != k.shape or q.ndim != 2 or q.shape[1] != 3 * n:
        raise ShapeMismatch(f"vn_gate needs two (rows, {3 * n}) planes, got "
                            f"{q.shape} and {k.shape}")
    return kernels.vn_gate_forward(np.ascontiguousarray(q), np.ascontiguousarray(k), n)


def _bw_vn_gate(ins, out, g, n, needs):
    gq, gk = kernels.vn_gate_backward(np.ascontiguousarray(g),
                                      np.ascontiguousarray(ins[0]),
                                      np.ascontiguousarray(ins[1]), n)
    return (gq if needs[0] else None, gk if needs[1] else None)


register_op("vn_gate", _fw_vn_gate, _bw_vn_gate)


# -- plane packing -----------------------------------------------------------

def feature_to_planes(v: np.ndarray) -> np.ndarray:
    """(n, 3) feature -> (1, 3n) plane row [x-components | y | z]."""
    v = as_tensor(v)
    if v.ndim != 2 or v.shape[1] != 3:
        raise ShapeMismatch(f"feature must be (n, 3), got {v.shape}")
    return np.ascontiguousarray(v.T).reshape(1, -1)


def planes_to_feature(row: np.ndarray) -> np.ndarray:
    """(3n,) or (1, 3n) plane row -> (n, 3) feature."""
    row = np.asarray(row, dtype=np.float64).reshape(-1)
    if row.size % 3:
        raise ShapeMismatch(f"plane row length {row.size} is not divisible by 3")
    return np.ascontiguousarray(row.reshape(3, -1).T)


# -- graph builders ----------------------------------------------------------

def lift_graph(g: Graph, wx: int, wy: int, wz: int, z: int) -> int:
    """z: (rows, n) node -> (rows, 3n) planes via the three heads."""
    x = g.matmul(z, g.transpose(wx))
    y = g.matmul(z, g.transpose(wy))
    zc = g.matmul(z, g.transpose(wz))
    return g.concat_cols(g.concat_cols(x, y), zc)


def vn_linear_graph(g: Graph, w: int, planes: int, n_in: int) -> int:
    wt = g.transpose(w)
    parts = [g.matmul(g.slice_cols(planes, c * n_in, (c + 1) * n_in), wt)
             for c in range(3)]
    return g.concat_cols(g.concat_cols(parts[0], parts[1]), parts[2])


def vn_relu_graph(g: Graph, wq: int, wk: int, planes: int, n_in: int, n_out: int) -> int:
    q = vn_linear_graph(g, wq, planes, n_in)
    k = vn_linear_graph(g, wk, planes, n_in)
    return g.apply_op("vn_gate", q, k, aux=n_out)


def vn_forward_graph(g: Graph, stack: VNStack, leaf_of, z: int) -> int:
    """Full stack on the tape; leaf_of maps parameter names to leaf ids."""
    planes = lift_graph(g, leaf_of("vn/lift/x"), leaf_of("vn/lift/y"),
                        leaf_of("vn/lift/z"), z)
    n_cur = stack.lift.w_x.shape[0]
    for i, layer in enumerate(stack.layers):
        if isinstance(layer, VNLinear):
            planes = vn_linear_graph(g, leaf_of(f"vn/{i}/linear"), planes, n_cur)
            n_cur = layer.w.shape[0]
        elif isinstance(layer, VNReLU):
            n_out = layer.w_q.shape[0]
            planes = vn_relu_graph(g, leaf_of(f"vn/{i}/relu/q"),
                                   leaf_of(f"vn/{i}/relu/k"), planes, n_cur, n_out)
            n_cur = n_out
        else:
            raise ShapeMismatch(f"unknown vn layer type: {type(layer)!r}")
    return planes


def _single(builder, z_row):
    g = Graph()
    z = g.leaf(z_row)
    out = builder(g, z)
    return planes_to_feature(g.value(out))


# -- single-feature convenience API ------------------------------------------

def lift(z, head: LiftHead) -> np.ndarray:
    """n-vector -> (n, 3) feature; column k of the output is w_k . z."""
    z = as_tensor(z).reshape(1, -1)
    if z.shape[1] != head.w_x.shape[1]:
        raise ShapeMismatch(f"input length {z.shape[1]} != head dim {head.w_x.shape[1]}")
    def build(g, zn):
        return lift_graph(g, g.leaf(head.w_x), g.leaf(head.w_y), g.leaf(head.w_z), zn)
    return _single(build, z)


def vn_linear(layer: VNLinear, v) -> np.ndarray:
    """(n_in, 3) feature -> (n_out, 3): output = w . v."""
    planes = feature_to_planes(v)
    n_in = planes.shape[1] // 3
    if layer.w.shape[1] != n_in:
        raise ShapeMismatch(f"weight {layer.w.shape} cannot act on {n_in} channels")
    def build(g, pn):
        return vn_linear_graph(g, g.leaf(layer.w), pn, n_in)
    return _single(build, planes)


def vn_relu(layer: VNReLU, v) -> np.ndarray:
    """Direction-gated nonlinearity on an (n_in, 3) feature.

    Per output channel c: q_c = (w_q v) row c, k_c = (w_k v) row c; the
    output is q_c when <q_c, k_c> >= 0 (or ||k_c|| < 1e-12), otherwise
    q_c - (<q_c, k_c>/||k_c||^2) k_c.
    """
    planes = feature_to_planes(v)
    n_in = planes.shape[1] // 3
    if layer.w_q.shape[1] != n_in:
        raise ShapeMismatch(f"weight {layer.w_q.shape} cannot act on {n_in} channels")
    def build(g, pn):
        return vn_relu_graph(g, g.leaf(layer.w_q), g.leaf(layer.w_k), pn,
                             n_in, layer.w_q.shape[0])
    return _single(build, planes)


def vn_forward(stack: VNStack, z) -> np.ndarray:
    """Encoder output vector -> final (n, 3) representation."""
    z = as_tensor(z).reshape(1, -1)
    if z.shape[1] != stack.lift.w_x.shape[1]:
        raise ShapeMismatch(
            f"input length {z.shape[1]} != lift dim {stack.lift.w_x.shape[1]}")
    def build(g, zn):
        leaves = {name: g.leaf(arr) for name, arr in stack.param_items()}
        return vn_forward_graph(g, stack, leaves.__getitem__, zn)
    return _single(build, z)
