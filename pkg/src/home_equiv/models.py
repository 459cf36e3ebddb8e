"""Encoder and decoder MLPs over flattened pixels.

Both are plain affine stacks with ReLU between layers and a linear final
layer; the encoder ends at the representation width n, the decoder at the
class count after exactly three hidden layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, ShapeMismatch
from .tensor import Graph, as_tensor


@dataclass
class Encoder:
    layers: list  # [(w: (out,in), b: (1,out)), ...]
    in_dim: int

    def __post_init__(self):
        self.layers = [(as_tensor(w), as_tensor(b)) for w, b in self.layers]
        dim = self.in_dim
        for w, b in self.layers:
            if w.shape[1] != dim or b.shape != (1, w.shape[0]):
                raise ShapeMismatch(f"layer {w.shape}/{b.shape} breaks chain at {dim}")
            dim = w.shape[0]

    @property
    def n_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def param_items(self):
        for i, (w, b) in enumerate(self.layers):
            yield f"enc/{i}/w", w
            yield f"enc/{i}/b", b


@dataclass
class Decoder:
    layers: list  # 3 hidden + 1 output

    def __post_init__(self):
        self.layers = [(as_tensor(w), as_tensor(b)) for w, b in self.layers]
        if len(self.layers) != 4:
            raise BadConfig(f"decoder needs 3 hidden layers + output, got {len(self.layers)}")
        dim = self.layers[0][0].shape[1]
        for w, b in self.layers:
            if w.shape[1] != dim or b.shape != (1, w.shape[0]):
                raise ShapeMismatch(f"layer {w.shape}/{b.shape} breaks chain at {dim}")
            dim = w.shape[0]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def param_items(self):
        for i, (w, b) in enumerate(self.layers):
            yield f"dec/{i}/w", w
            yield f"dec/{i}/b", b


def _he_layers(dims, rng):
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = (2.0 / fan_in) ** 0.5
        layers.append((rng.normal(0.0, std, (fan_out, fan_in)),
                       np.zeros((1, fan_out))))
    return layers


def init_encoder(in_dim, hidden, n_dim, rng) -> Encoder:
    """He-initialized MLP in_dim -> hidden... -> n_dim, zero biases."""
    dims = [in_dim, *hidden, n_dim]
    if any(d < 1 for d in dims):
        raise BadConfig(f"nonpositive layer width in {dims}")
    return Encoder(_he_layers(dims, rng), in_dim)


def init_decoder(n_dim, hidden, n_classes, rng) -> Decoder:
    if len(hidden) != 3:
        raise BadConfig(f"decoder takes exactly 3 hidden widths, got {hidden}")
    dims = [n_dim, *hidden, n_classes]
    if any(d < 1 for d in dims):
        raise BadConfig(f"nonpositive layer width in {dims}")
    return Decoder(_he_layers(dims, rng))


def mlp_graph(g: Graph, layer_nids, x: int) -> int:
    """Affine + ReLU chain on the tape; no activation after the last layer."""
    h = x
    for i, (w, b) in enumerate(layer_nids):
        h = g.add(g.matmul(h, g.transpose(w)), b)
        if i < len(layer_nids) - 1:
            h = g.relu(h)
    return h


def _run_single(layers, vec):
    g = Graph()
    x = g.leaf(vec.reshape(1, -1))
    nids = [(g.leaf(w), g.leaf(b)) for w, b in layers]
    out = mlp_graph(g, nids, x)
    return g.value(out).reshape(-1)


def encode(enc: Encoder, pixels) -> np.ndarray:
    """Flatten an image row-major and run the encoder; returns an n-vector."""
    flat = as_tensor(pixels).reshape(-1)
    if flat.size != enc.in_dim:
        raise ShapeMismatch(f"image size {flat.size} != encoder input {enc.in_dim}")
    return _run_single(enc.layers, flat)


def decode(dec: Decoder, z) -> np.ndarray:
    """Representation vector -> class logits."""
    z = as_tensor(z).reshape(-1)
    if z.size != dec.layers[0][0].shape[1]:
        raise ShapeMismatch(f"vector size {z.size} != decoder input "
                            f"{dec.layers[0][0].shape[1]}")
    return _run_single(dec.layers, z)
