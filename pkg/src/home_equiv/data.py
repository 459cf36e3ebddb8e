"""Procedural toy corpus, synthetic multi-view generation, and disk formats.

Samples are grayscale images of four geometric classes (filled disk,
hollow square, diagonal cross, horizontal stripes) with jittered
placement, scale, and intensity plus additive Gaussian noise. Each
multi-view sample stores its views stacked vertically in one 8-bit binary
PGM (view order = manifest view order); the JSON manifest records the
generator seed, per-view transform parameters and matrices, and a CRC32
per sample file.
"""

from __future__ import annotations

import json
import os
import re
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, ChecksumMismatch, CorruptManifest, IoError
from .geometry import (Homography, HomographyParams, compose,
                       homography_from_params, invert, random_homography,
                       warp_image)
from .home_loss import NeighborGraph, build_chain_graph
from .seeding import NS_SAMPLE, NS_VIEW, child_rng

CLASS_NAMES = ("disk", "hollow_square", "diag_cross", "h_stripes")
NOISE_SIGMA = 0.05
KNOWN_SPLITS = ("train", "val", "test", "aux")


@dataclass
class Image:
    pixels: np.ndarray  # (H, W) float64 in [0, 1]

    def __post_init__(self):
        p = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise BadConfig(f"image must be 2D and nonempty, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise BadConfig("pixel values must lie in [0, 1]")
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class MultiViewSample:
    views: list       # view 0 is the original ("C")
    label: int
    t: int = 0


# -- procedural shapes -------------------------------------------------------

def _grids(width, height):
    x = np.arange(width, dtype=np.float64)[None, :]
    y = np.arange(height, dtype=np.float64)[:, None]
    return x, y


def _render(label, rng, width, height):
    s = float(min(width, height))
    x, y = _grids(width, height)
    if label == 0:
        # filled disk: tame jitter so the bright-pixel floor always holds
        cx = width / 2.0 + rng.uniform(-0.12 * s, 0.12 * s)
        cy = height / 2.0 + rng.uniform(-0.12 * s, 0.12 * s)
        scale = rng.uniform(0.8, 1.2)
        amp = rng.uniform(0.6, 1.0)
        r = 0.33 * s * scale
        dx, dy = x - cx, y - cy
        mask = dx * dx + dy * dy <= r * r
    elif label == 1:                     # hollow square, thin ring
        cx = width / 2.0 + rng.uniform(-0.22 * s, 0.22 * s)
        cy = height / 2.0 + rng.uniform(-0.22 * s, 0.22 * s)
        scale = rng.uniform(0.7, 1.3)
        amp = rng.uniform(0.5, 1.0)
        outer = 0.36 * s * scale
        inner = outer - 0.09 * s
        dx, dy = x - cx, y - cy
        cheb = np.maximum(np.abs(dx), np.abs(dy))
        mask = (cheb <= outer) & (cheb >= inner)
    elif label == 2:                     # diagonal cross, thin arms
        cx = width / 2.0 + rng.uniform(-0.22 * s, 0.22 * s)
        cy = height / 2.0 + rng.uniform(-0.22 * s, 0.22 * s)
        scale = rng.uniform(0.7, 1.3)
        amp = rng.uniform(0.5, 1.0)
        extent = 0.46 * s * scale
        thick = 0.07 * s
        dx, dy = x - cx, y - cy
        cheb = np.maximum(np.abs(dx), np.abs(dy))
        mask = ((np.abs(dx - dy) <= thick) | (np.abs(dx + dy) <= thick)) & (cheb <= extent)
    else:                                # horizontal stripes, random period
        period = int(rng.integers(3, 6))
        phase = int(rng.integers(0, period))
        amp = rng.uniform(0.5, 1.0)
        yy = np.broadcast_to(y, (height, width))
        mask = ((yy + phase) % period) < (period // 2 + period % 2)
    img = np.where(mask, amp, 0.0)
    img = img + rng.normal(0.0, NOISE_SIGMA, (height, width))
    return Image(np.clip(img, 0.0, 1.0))


def procedural_corpus(seed, count, classes=4, width=16, height=16):
    """Seeded class-balanced corpus; sample i uses the (seed, i) child stream."""
    if not (1 <= classes <= len(CLASS_NAMES)):
        raise BadConfig(f"classes must be 1..{len(CLASS_NAMES)}, got {classes}")
    if count < classes:
        raise BadConfig(f"count {count} smaller than class count {classes}")
    if min(width, height) < 8:
        raise BadConfig(f"image dims must be at least 8x8, got {width}x{height}")
    images, labels = [], []
    for i in range(count):
        label = i % classes
        images.append(_render(label, child_rng(seed, NS_SAMPLE, i), width, height))
        labels.append(label)
    return images, labels


# -- multi-view construction --------------------------------------------------

def view_names(n_views: int):
    """C plus alternating left/right camera names; 3 views give C, L, R."""
    if n_views < 2:
        raise BadConfig(f"need at least 2 views, got {n_views}")
    if n_views == 3:
        return ["C", "L", "R"]
    names = ["C"]
    for v in range(1, n_views):
        depth = (v + 1) // 2
        names.append(f"L{depth}" if v % 2 == 1 else f"R{depth}")
    return names


def chain_view_order(n_views: int):
    """Manifest view indices in chain order: deepest left ... C ... deepest right."""
    lefts = [v for v in range(1, n_views) if v % 2 == 1]
    rights = [v for v in range(1, n_views) if v % 2 == 0]
    return lefts[::-1] + [0] + rights


def chain_graph_for_views(matrices) -> NeighborGraph:
    """Neighbor graph over chain positions from per-view C->view homographies."""
    homs = [Homography(m) for m in matrices]
    order = chain_view_order(len(homs))
    chain_hs = []
    for a, b in zip(order[:-1], order[1:]):
        chain_hs.append(compose(homs[b], invert(homs[a])))
    return build_chain_graph(chain_hs)


def make_multiview(images, labels, view_homs):
    """Warp each image through the fixed per-view homographies.

    Returns MultiViewSamples whose view 0 is the original; warped pixels
    are clipped to [0, 1] to absorb bilinear rounding dust.
    """
    samples = []
    for img, label in zip(images, labels):
        views = [img]
        for h in view_homs:
            views.append(Image(np.clip(warp_image(img.pixels, h), 0.0, 1.0)))
        samples.append(MultiViewSample(views, label))
    return samples


# -- PGM + manifest -----------------------------------------------------------

def quantize(pixels) -> np.ndarray:
    return np.floor(pixels * 255.0 + 0.5).astype(np.uint8)


def write_pgm(path, pixels) -> None:
    arr = quantize(pixels)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise IoError(f"not a binary PGM: {path}")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != 255:
        raise IoError(f"unsupported maxval {maxval} in {path}")
    body = data[m.end():]
    if len(body) != w * h:
        raise IoError(f"truncated or oversized pixel data in {path}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def _params_dict(p: HomographyParams):
    return {"sx": p.sx, "sy": p.sy, "tx": p.tx, "ty": p.ty, "theta_deg": p.theta_deg}


def _params_from_dict(d) -> HomographyParams:
    return HomographyParams(d["sx"], d["sy"], d["tx"], d["ty"], d["theta_deg"])


def save_dataset(out_dir, samples, seed, view_params, view_matrices, splits,
                 classes=CLASS_NAMES):
    """Write images/ and manifest.json; returns the manifest path.

    view_params/view_matrices cover every view including the identity "C"
    at index 0; splits is the per-sample split tag list.
    """
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    width = samples[0].views[0].width
    height = samples[0].views[0].height
    names = view_names(len(samples[0].views))
    entries = []
    for idx, (sample, split) in enumerate(zip(samples, splits)):
        rel = f"images/{idx:05d}.pgm"
        strip = np.vstack([v.pixels for v in sample.views])
        path = os.path.join(out_dir, rel)
        write_pgm(path, strip)
        with open(path, "rb") as fh:
            crc = zlib.crc32(fh.read()) & 0xFFFFFFFF
        entries.append({"file": rel, "label": sample.label, "split": split,
                        "crc32": crc})
    manifest = {
        "seed": seed,
        "classes": list(classes),
        "width": width,
        "height": height,
        "views": [{"name": names[v],
                   "params": _params_dict(view_params[v]),
                   "matrix": [float(x) for x in np.asarray(view_matrices[v]).ravel()]}
                  for v in range(len(names))],
        "samples": entries,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


@dataclass
class Dataset:
    samples: list              # MultiViewSample per entry
    splits: dict               # split tag -> list of sample indices
    views: list                # manifest view dicts
    graph: NeighborGraph       # over chain positions
    chain: list                # manifest view index per chain position
    manifest: dict

    @property
    def width(self):
        return self.manifest["width"]

    @property
    def height(self):
        return self.manifest["height"]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def classes(self):
        return list(self.manifest["classes"])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def pixels_matrix(self, view: int, sample_ids) -> np.ndarray:
        """Flattened (len(ids), H*W) pixel rows for one manifest view."""
        return np.stack([self.samples[i].views[view].pixels.ravel()
                         for i in sample_ids])


def load_dataset(path) -> Dataset:
    """Load and fully validate a dataset directory."""
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"manifest is not valid JSON: {exc}") from exc

    for key in ("seed", "classes", "width", "height", "views", "samples"):
        if key not in manifest:
            raise CorruptManifest(f"manifest missing field {key!r}")
    width, height = manifest["width"], manifest["height"]
    n_classes = len(manifest["classes"])

    matrices = []
    for view in manifest["views"]:
        try:
            params = _params_from_dict(view["params"])
        except (KeyError, BadConfig) as exc:
            raise CorruptManifest(f"view {view.get('name')}: bad params: {exc}") from exc
        stored = np.array(view["matrix"], dtype=np.float64)
        if stored.size != 9:
            raise CorruptManifest(f"view {view.get('name')}: matrix needs 9 floats")
        stored = stored.reshape(3, 3)
        rebuilt = homography_from_params(params, width, height).m
        if np.max(np.abs(rebuilt - stored)) > 1e-9:
            raise CorruptManifest(
                f"view {view.get('name')}: stored matrix does not match params")
        matrices.append(stored)

    graph = chain_graph_for_views(matrices)
    chain = chain_view_order(len(matrices))

    samples, split_map = [], {}
    for entry in manifest["samples"]:
        rel, label, split = entry["file"], entry["label"], entry["split"]
        if split not in KNOWN_SPLITS:
            raise CorruptManifest(f"unknown split tag {split!r} for {rel}")
        if not (0 <= label < n_classes):
            raise CorruptManifest(f"label {label} out of range for {rel}")
        fpath = os.path.join(path, rel)
        try:
            with open(fpath, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read {fpath}: {exc}") from exc
        if (zlib.crc32(raw) & 0xFFFFFFFF) != entry["crc32"]:
            raise ChecksumMismatch(f"CRC32 mismatch for {fpath}")
        strip = read_pgm(fpath)
        if strip.shape != (height * len(matrices), width):
            raise CorruptManifest(
                f"{rel}: expected {len(matrices)} stacked {width}x{height} views, "
                f"got {strip.shape}")
        views = [Image(strip[v * height:(v + 1) * height]) for v in range(len(matrices))]
        split_map.setdefault(split, []).append(len(samples))
        samples.append(MultiViewSample(views, label))

    return Dataset(samples, split_map, manifest["views"], graph, chain, manifest)


def generate_dataset(out_dir, seed, count, classes=4, width=16, height=16,
                     n_views=3, aux=0):
    """End-to-end generation: corpus, fixed random views, splits, disk.

    Splits are 8:1:1 train/val/test over `count` samples (val and test get
    count//10 each); `aux` extra samples carry the 'aux' tag for the
    supervised transfer-learning baseline. Returns (manifest path, params).
    """
    if count < 1:
        raise BadConfig(f"count must be positive, got {count}")
    total = count + aux
    images, labels = procedural_corpus(seed, total, classes, width, height)

    view_params = [HomographyParams.identity()]
    view_matrices = [np.eye(3)]
    homs = []
    for v in range(1, n_views):
        h, params = random_homography(child_rng(seed, NS_VIEW, v), width, height)
        homs.append(h)
        view_params.append(params)
        view_matrices.append(h.m)

    samples = make_multiview(images, labels, homs)
    n_val = count // 10
    n_test = count // 10
    n_train = count - n_val - n_test
    splits = (["train"] * n_train + ["val"] * n_val + ["test"] * n_test
              + ["aux"] * aux)
    manifest_path = save_dataset(out_dir, samples, seed, view_params,
                                 view_matrices, splits,
                                 classes=CLASS_NAMES[:classes])
    return manifest_path, view_params[1:]
