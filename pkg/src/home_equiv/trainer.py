"""Deterministic optimization loops for the five training regimes.

Regimes: sup (cross-entropy from scratch), sup-tl (frozen encoder from a
supervised checkpoint, decoder only), home-tl (frozen equivariance-
pretrained encoder, decoder only), home-jo (joint cross-entropy +
weighted equivariance loss), home (warm start from pretraining, all
weights fine-tuned on cross-entropy). Everything is driven by
(config, seed, dataset bytes): batch order, initialization, and optimizer
state are fully reproducible, and checkpoints carry enough state (weights,
Adam moments, epoch, config hash, shuffle RNG) to resume bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset
from .errors import (BadConfig, EmptySplit, MissingCheckpoint, NegativeAlpha,
                     RegimePrereqViolation, ShapeMismatch)
from .home_loss import home_loss_graph
from .homt import load_tensors, save_tensors
from .models import (Decoder, Encoder, init_decoder, init_encoder, mlp_graph)
from .seeding import (NS_DECODER, NS_ENCODER, NS_SHUFFLE, NS_VN, child_rng,
                      rng_state_from_array, rng_state_to_array)
from .tensor import Graph
from .vn import (LiftHead, VNLinear, VNReLU, VNStack, init_vn_stack,
                 vn_forward_graph)

REGIMES = ("sup", "sup-tl", "home-tl", "home-jo", "home")


@dataclass
class TrainConfig:
    regime: str = "sup"
    epochs: int = 200
    batch_size: int = 16
    lr_start: float = 0.01
    lr_end: float = 0.0001
    alpha: float = 0.1
    finetune_epochs: int = 50
    finetune_lr: float = 0.0001
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_dim: int = 16
    enc_hidden: tuple = (128, 64)
    dec_hidden: tuple = (64, 64, 32)
    use_vn: bool = True
    all_views: bool = False
    train_split: str = "train"

    def validate(self):
        if self.regime not in REGIMES:
            raise BadConfig(f"unknown regime {self.regime!r}")
        if self.epochs < 1 or self.finetune_epochs < 1 or self.batch_size < 1:
            raise BadConfig("epochs and batch size must be at least 1")
        if self.lr_start <= 0 or self.lr_end <= 0 or self.finetune_lr <= 0:
            raise BadConfig("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise BadConfig(f"lr_end {self.lr_end} exceeds lr_start {self.lr_start}")
        if self.alpha < 0:
            raise NegativeAlpha(f"alpha must be nonnegative, got {self.alpha}")
        if self.n_dim < 1:
            raise BadConfig("representation width must be positive")
        return self

    def to_dict(self):
        return {
            "regime": self.regime, "epochs": self.epochs,
            "batch_size": self.batch_size, "lr_start": self.lr_start,
            "lr_end": self.lr_end, "alpha": self.alpha,
            "finetune_epochs": self.finetune_epochs,
            "finetune_lr": self.finetune_lr, "seed": self.seed,
            "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "n_dim": self.n_dim, "enc_hidden": list(self.enc_hidden),
            "dec_hidden": list(self.dec_hidden), "use_vn": self.use_vn,
            "all_views": self.all_views, "train_split": self.train_split,
        }


def config_hash_limbs(cfg: TrainConfig) -> np.ndarray:
    digest = hashlib.sha256(
        json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")).digest()
    return np.array([float(int.from_bytes(digest[i:i + 4], "little"))
                     for i in range(0, 32, 4)])


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Log-interpolated learning rate for the main schedule."""
    if not (0 <= epoch < cfg.epochs):
        raise BadConfig(f"epoch {epoch} outside [0, {cfg.epochs})")
    if cfg.epochs == 1 or epoch == 0:
        return cfg.lr_start
    if epoch == cfg.epochs - 1:
        return cfg.lr_end
    frac = epoch / (cfg.epochs - 1)
    return math.exp(math.log(cfg.lr_start)
                    + frac * (math.log(cfg.lr_end) - math.log(cfg.lr_start)))


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params, grads, state: AdamState, lr: float, cfg: TrainConfig):
    """One in-place Adam update over the named parameter dict."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        kernels.adam_update(p, state.m[name], state.v[name],
                            np.ascontiguousarray(g), lr,
                            cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2)


# -- model bundle ------------------------------------------------------------

@dataclass
class Model:
    encoder: Encoder
    vn_stack: VNStack
    decoder: Decoder

    def param_items(self):
        yield from self.encoder.param_items()
        yield from self.vn_stack.param_items()
        yield from self.decoder.param_items()

    def params(self):
        return dict(self.param_items())


def init_model(cfg: TrainConfig, in_dim: int, n_classes: int) -> Model:
    enc = init_encoder(in_dim, cfg.enc_hidden, cfg.n_dim,
                       child_rng(cfg.seed, NS_ENCODER))
    stack = init_vn_stack(cfg.n_dim, child_rng(cfg.seed, NS_VN), cfg.use_vn)
    dec = init_decoder(cfg.n_dim, cfg.dec_hidden, n_classes,
                       child_rng(cfg.seed, NS_DECODER))
    return Model(enc, stack, dec)


def model_tensors(model: Model) -> dict:
    return {name: arr for name, arr in model.param_items()}


def model_from_tensors(tensors) -> Model:
    """Rebuild a model from checkpoint weight names (enc/, vn/, dec/)."""
    def layer_count(prefix):
        i = 0
        while f"{prefix}/{i}/w" in tensors:
            i += 1
        return i

    n_enc = layer_count("enc")
    if n_enc == 0:
        raise RegimePrereqViolation("checkpoint carries no encoder weights")
    enc_layers = [(tensors[f"enc/{i}/w"], tensors[f"enc/{i}/b"]) for i in range(n_enc)]
    encoder = Encoder(enc_layers, enc_layers[0][0].shape[1])

    if "vn/lift/x" not in tensors:
        raise RegimePrereqViolation("checkpoint carries no lift heads")
    lift = (tensors["vn/lift/x"], tensors["vn/lift/y"], tensors["vn/lift/z"])
    layers = []
    i = 0
    while True:
        if f"vn/{i}/linear" in tensors:
            layers.append(VNLinear(tensors[f"vn/{i}/linear"]))
        elif f"vn/{i}/relu/q" in tensors:
            layers.append(VNReLU(tensors[f"vn/{i}/relu/q"], tensors[f"vn/{i}/relu/k"]))
        else:
            break
        i += 1
    stack = VNStack(LiftHead(*lift), layers)

    n_dec = layer_count("dec")
    if n_dec != 4:
        raise RegimePrereqViolation(f"checkpoint decoder has {n_dec} layers, expected 4")
    dec_layers = [(tensors[f"dec/{i}/w"], tensors[f"dec/{i}/b"]) for i in range(n_dec)]
    return Model(encoder, stack, Decoder(dec_layers))


def load_pretrained_into(model: Model, tensors, components=("enc", "vn")) -> None:
    """Copy enc/vn weights from a checkpoint into an existing model."""
    params = model.params()
    for name, arr in params.items():
        if name.split("/")[0] not in components:
            continue
        if name not in tensors:
            raise RegimePrereqViolation(f"checkpoint missing tensor {name!r}")
        src = tensors[name]
        if src.shape != arr.shape:
            raise RegimePrereqViolation(
                f"checkpoint tensor {name!r} has shape {src.shape}, model needs {arr.shape}")
        np.copyto(arr, src)


# -- tape bundles ------------------------------------------------------------

@dataclass
class _Bundle:
    graph: Graph
    param_nids: dict
    x_nids: list          # one per chain position (fr/joint) or [x] (ce)
    ce_nids: list = field(default_factory=list)   # cross-entropy nodes
    logits_nid: int = -1
    fr_raw_nid: int = -1
    loss_nid: int = -1


def _register_params(g, model):
    return {name: g.shared_leaf(arr, name) for name, arr in model.param_items()}


def _build_bundle(model, dataset, cfg, kind, batch: int) -> _Bundle:
    g = Graph()
    nids = _register_params(g, model)
    leaf_of = nids.__getitem__
    in_dim = dataset.width * dataset.height
    enc_nids = [(nids[f"enc/{i}/w"], nids[f"enc/{i}/b"])
                for i in range(len(model.encoder.layers))]
    dec_nids = [(nids[f"dec/{i}/w"], nids[f"dec/{i}/b"])
                for i in range(len(model.decoder.layers))]
    zeros = np.zeros((batch, in_dim))
    dummy_labels = np.zeros(batch, dtype=np.int64)

    if kind == "ce":
        views = list(range(dataset.n_views)) if cfg.all_views else [0]
        x_nids, ce_nids = [], []
        logits_nid = -1
        for _ in views:
            x = g.leaf(zeros)
            z = mlp_graph(g, enc_nids, x)
            logits = mlp_graph(g, dec_nids, z)
            x_nids.append(x)
            ce_nids.append(g.cross_entropy(logits, dummy_labels))
            logits_nid = logits
        loss = ce_nids[0]
        for extra in ce_nids[1:]:
            loss = g.add(loss, extra)
        if len(ce_nids) > 1:
            loss = g.scale(loss, 1.0 / len(ce_nids))
        return _Bundle(g, nids, x_nids, ce_nids, logits_nid, -1, loss)

    # fr and joint need every view, in chain order
    x_nids, planes = [], []
    z_by_view = {}
    for view in dataset.chain:
        x = g.leaf(zeros)
        z = mlp_graph(g, enc_nids, x)
        planes.append(vn_forward_graph(g, model.vn_stack, leaf_of, z))
        x_nids.append(x)
        z_by_view[view] = z
    fr_raw = home_loss_graph(g, planes, dataset.graph, cfg.n_dim)
    fr_mean = g.scale(fr_raw, 1.0 / batch)
    if kind == "fr":
        return _Bundle(g, nids, x_nids, [], -1, fr_raw, fr_mean)

    # joint: cross-entropy on the original view's representation
    ce_views = sorted(z_by_view) if cfg.all_views else [0]
    ce_nids = []
    for view in ce_views:
        logits = mlp_graph(g, dec_nids, z_by_view[view])
        ce_nids.append(g.cross_entropy(logits, dummy_labels))
    ce = ce_nids[0]
    for extra in ce_nids[1:]:
        ce = g.add(ce, extra)
    if len(ce_nids) > 1:
        ce = g.scale(ce, 1.0 / len(ce_nids))
    total = g.add(ce, g.scale(fr_mean, cfg.alpha))
    return _Bundle(g, nids, x_nids, ce_nids, -1, fr_raw, total)


# -- phase runner ------------------------------------------------------------

def _now_ms():
    return time.perf_counter() * 1000.0


class _PhaseRunner:
    """One optimization phase: fixed loss kind, trainable set, schedule."""

    def __init__(self, model, dataset, cfg, *, kind, trainable, epochs,
                 lr_fn, regime_label, out_path, metrics_path):
        self.model = model
        self.dataset = dataset
        self.cfg = cfg
        self.kind = kind
        self.epochs = epochs
        self.lr_fn = lr_fn
        self.regime_label = regime_label
        self.out_path = out_path
        self.metrics_path = metrics_path
        self.params = {k: v for k, v in model.params().items()
                       if k.split("/")[0] in trainable or k in trainable}
        if not self.params:
            raise BadConfig(f"no trainable parameters for {trainable}")
        self.adam = AdamState.zeros_like(self.params)
        self.rng = child_rng(cfg.seed, NS_SHUFFLE)
        self.cfg_limbs = config_hash_limbs(cfg)
        self._bundles = {}
        self.train_ids = np.array(dataset.splits.get(cfg.train_split, []), dtype=np.int64)
        if self.train_ids.size == 0:
            raise EmptySplit(f"split {cfg.train_split!r} is empty")
        self.val_ids = np.array(dataset.splits.get("val", []), dtype=np.int64)
        self.labels = dataset.labels()
        self.xmat = [dataset.pixels_matrix(v, range(len(dataset.samples)))
                     for v in range(dataset.n_views)]
        # higher metric is better for accuracy, lower for losses
        self.metric_sign = 1.0 if (kind != "fr" and self.val_ids.size) else -1.0
        self.best_metric = -np.inf
        self.best_epoch = -1
        self.best = {k: v.copy() for k, v in model.params().items()}
        self.epoch_next = 0

    def _bundle(self, kind, batch):
        key = (kind, batch)
        if key not in self._bundles:
            self._bundles[key] = _build_bundle(self.model, self.dataset,
                                               self.cfg, kind, batch)
        return self._bundles[key]

    def _set_batch(self, bundle, kind, ids):
        if kind == "ce":
            views = (list(range(self.dataset.n_views)) if self.cfg.all_views
                     else [0])
            for x_nid, view in zip(bundle.x_nids, views):
                bundle.graph.set_leaf(x_nid, self.xmat[view][ids])
            for ce_nid in bundle.ce_nids:
                bundle.graph.set_aux(ce_nid, self.labels[ids])
        else:
            for x_nid, view in zip(bundle.x_nids, self.dataset.chain):
                bundle.graph.set_leaf(x_nid, self.xmat[view][ids])
            for ce_nid in bundle.ce_nids:
                bundle.graph.set_aux(ce_nid, self.labels[ids])

    def _train_epoch(self, epoch):
        lr = self.lr_fn(epoch)
        order = self.train_ids[self.rng.permutation(self.train_ids.size)]
        bs = self.cfg.batch_size
        total, count = 0.0, 0
        wrt_names = list(self.params)
        for start in range(0, order.size, bs):
            ids = order[start:start + bs]
            bundle = self._bundle(self.kind, ids.size)
            self._set_batch(bundle, self.kind, ids)
            bundle.graph.forward()
            loss = float(bundle.graph.value(bundle.loss_nid))
            wrt = [bundle.param_nids[k] for k in wrt_names]
            grads = bundle.graph.backward(bundle.loss_nid, wrt=wrt)
            adam_step(self.params,
                      {k: grads[bundle.param_nids[k]] for k in wrt_names},
                      self.adam, lr, self.cfg)
            total += loss * ids.size
            count += ids.size
        return lr, total / count

    def _mean_loss(self, kind, ids, loss_of):
        bs = self.cfg.batch_size
        total = 0.0
        for start in range(0, ids.size, bs):
            chunk = ids[start:start + bs]
            bundle = self._bundle(kind, chunk.size)
            self._set_batch(bundle, kind, chunk)
            bundle.graph.forward()
            total += loss_of(bundle) * chunk.size
        return total / ids.size

    def _val_metrics(self):
        if self.val_ids.size == 0:
            return None, None
        if self.kind == "fr":
            val_loss = self._mean_loss(
                "fr", self.val_ids,
                lambda b: float(b.graph.value(b.fr_raw_nid)) / b.graph.value(b.x_nids[0]).shape[0])
            return val_loss, None
        val_loss = self._mean_loss(
            "ce", self.val_ids, lambda b: float(b.graph.value(b.ce_nids[0])))
        result = evaluate(self.model, self.dataset, "val",
                          batch_size=self.cfg.batch_size)
        return val_loss, result.accuracy

    def _save(self, finished: bool):
        tensors = {}
        tensors.update({k: v for k, v in self.best.items()})
        tensors.update({f"last/{k}": v for k, v in self.model.params().items()})
        tensors.update({f"adam/m/{k}": v for k, v in self.adam.m.items()})
        tensors.update({f"adam/v/{k}": v for k, v in self.adam.v.items()})
        tensors["adam/t"] = np.asarray(float(self.adam.t))
        tensors["rng/shuffle"] = rng_state_to_array(self.rng)
        tensors["meta/epoch_next"] = np.asarray(float(self.epoch_next))
        tensors["meta/best_epoch"] = np.asarray(float(self.best_epoch))
        tensors["meta/best_metric"] = np.asarray(
            self.best_metric if np.isfinite(self.best_metric) else -1e308)
        tensors["meta/config_sha256"] = self.cfg_limbs
        tensors["meta/finished"] = np.asarray(1.0 if finished else 0.0)
        save_tensors(self.out_path, tensors)

    def _load_resume(self, path):
        tensors = load_tensors(path)
        if "meta/config_sha256" not in tensors or not np.array_equal(
                tensors["meta/config_sha256"], self.cfg_limbs):
            raise BadConfig("resume checkpoint was written under a different config")
        for name, arr in self.model.params().items():
            np.copyto(arr, tensors[f"last/{name}"])
            if name in self.best:
                self.best[name] = tensors[name].copy()
        for name in self.adam.m:
            np.copyto(self.adam.m[name], tensors[f"adam/m/{name}"])
            np.copyto(self.adam.v[name], tensors[f"adam/v/{name}"])
        self.adam.t = int(tensors["adam/t"])
        self.rng = rng_state_from_array(tensors["rng/shuffle"])
        self.epoch_next = int(tensors["meta/epoch_next"])
        self.best_epoch = int(tensors["meta/best_epoch"])
        self.best_metric = float(tensors["meta/best_metric"])
        if self.best_metric <= -1e308:
            self.best_metric = -np.inf

    def run(self, resume=False, stop_after=None):
        mode = "w"
        if resume:
            self._load_resume(self.out_path)
            mode = "a"
        metrics_fh = open(self.metrics_path, mode) if self.metrics_path else None
        try:
            last_train = None
            for epoch in range(self.epoch_next, self.epochs):
                t0 = _now_ms()
                lr, train_loss = self._train_epoch(epoch)
                val_loss, val_acc = self._val_metrics()
                last_train = train_loss
                if self.metric_sign > 0:
                    metric = val_acc
                else:
                    metric = -(val_loss if val_loss is not None else train_loss)
                if metric is not None and metric > self.best_metric:
                    self.best_metric = metric
                    self.best_epoch = epoch
                    self.best = {k: v.copy() for k, v in self.model.params().items()}
                self.epoch_next = epoch + 1
                done = self.epoch_next >= self.epochs
                self._save(finished=done)
                if metrics_fh:
                    line = {"epoch": epoch, "lr": lr, "train_loss": train_loss,
                            "val_loss": val_loss, "val_acc": val_acc,
                            "regime": self.regime_label, "seed": self.cfg.seed,
                            "wallclock_ms": round(_now_ms() - t0, 3)}
                    metrics_fh.write(json.dumps(line) + "\n")
                if stop_after is not None and epoch + 1 >= stop_after:
                    break
            return {"out": self.out_path, "best_epoch": self.best_epoch,
                    "best_metric": self.best_metric,
                    "final_train_loss": last_train,
                    "epochs_run": self.epoch_next}
        finally:
            if metrics_fh:
                metrics_fh.close()


# -- public entry points -------------------------------------------------------

def pretrain(dataset: Dataset, cfg: TrainConfig, out_path, metrics_path=None,
             model=None, resume=False, stop_after=None):
    """Minimize the equivariance loss over encoder + VN weights."""
    cfg.validate()
    if model is None:
        model = init_model(cfg, dataset.width * dataset.height,
                           len(dataset.classes))
    runner = _PhaseRunner(
        model, dataset, cfg, kind="fr", trainable=("enc", "vn"),
        epochs=cfg.epochs, lr_fn=lambda e: lr_at(e, cfg),
        regime_label="pretrain", out_path=out_path, metrics_path=metrics_path)
    result = runner.run(resume=resume, stop_after=stop_after)
    result["model"] = model
    return result


def _load_ckpt_tensors(path):
    if path is None:
        raise MissingCheckpoint("this regime requires --from CHECKPOINT")
    if not os.path.exists(path):
        raise MissingCheckpoint(f"checkpoint not found: {path}")
    return load_tensors(path)


def train(dataset: Dataset, cfg: TrainConfig, out_path, metrics_path=None,
          from_path=None, resume=False, stop_after=None):
    """Run one regime end to end; returns the runner summary."""
    cfg.validate()
    model = init_model(cfg, dataset.width * dataset.height,
                       len(dataset.classes))
    regime = cfg.regime
    if regime in ("sup", "home-jo") and from_path is not None:
        raise RegimePrereqViolation(f"regime {regime} trains from scratch; "
                                    f"--from is not allowed")
    if regime in ("sup-tl", "home-tl", "home"):
        load_pretrained_into(model, _load_ckpt_tensors(from_path))

    if regime == "sup":
        spec = dict(kind="ce", trainable=("enc", "dec"), epochs=cfg.epochs,
                    lr_fn=lambda e: lr_at(e, cfg))
    elif regime == "home-jo":
        spec = dict(kind="joint", trainable=("enc", "vn", "dec"),
                    epochs=cfg.epochs, lr_fn=lambda e: lr_at(e, cfg))
    elif regime in ("sup-tl", "home-tl"):
        spec = dict(kind="ce", trainable=("dec",), epochs=cfg.finetune_epochs,
                    lr_fn=lambda e: cfg.finetune_lr)
    else:  # home
        spec = dict(kind="ce", trainable=("enc", "vn", "dec"),
                    epochs=cfg.finetune_epochs, lr_fn=lambda e: cfg.finetune_lr)

    runner = _PhaseRunner(model, dataset, cfg, regime_label=regime,
                          out_path=out_path, metrics_path=metrics_path, **spec)
    result = runner.run(resume=resume, stop_after=stop_after)
    result["model"] = model
    return result


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    n: int


def _predict_chunk(model, dataset, ids, batch_size):
    cache = {}  # batch rows -> (graph, x leaf, logits node)
    preds = np.empty(len(ids), dtype=np.int64)
    pos = 0
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        x = dataset.pixels_matrix(0, chunk)
        rows = x.shape[0]
        if rows not in cache:
            g = Graph()
            nids = _register_params(g, model)
            enc_nids = [(nids[f"enc/{i}/w"], nids[f"enc/{i}/b"])
                        for i in range(len(model.encoder.layers))]
            dec_nids = [(nids[f"dec/{i}/w"], nids[f"dec/{i}/b"])
                        for i in range(len(model.decoder.layers))]
            x_nid = g.leaf(np.zeros((rows, x.shape[1])))
            logits_nid = mlp_graph(g, dec_nids, mlp_graph(g, enc_nids, x_nid))
            cache[rows] = (g, x_nid, logits_nid)
        g, x_nid, logits_nid = cache[rows]
        g.set_leaf(x_nid, x)
        g.forward()
        preds[pos:pos + rows] = np.argmax(g.value(logits_nid), axis=1)
        pos += rows
    return preds


def evaluate(model: Model, dataset: Dataset, split: str,
             batch_size: int = 64) -> EvalResult:
    """Argmax accuracy and per-class confusion counts on one split.

    Predictions use view 0 (the original view). Ties break toward the
    lower class index. HOME_EQUIV_THREADS > 1 fans sample chunks out to a
    thread pool; counts are reduced in chunk order, so results match the
    single-threaded run exactly.
    """
    ids = np.array(dataset.splits.get(split, []), dtype=np.int64)
    if ids.size == 0:
        raise EmptySplit(f"split {split!r} has no samples")
    labels = dataset.labels()
    n_classes = len(dataset.classes)
    threads = max(1, int(os.environ.get("HOME_EQUIV_THREADS", "1")))
    if threads == 1 or ids.size < 2 * batch_size:
        preds = _predict_chunk(model, dataset, ids, batch_size)
    else:
        chunks = np.array_split(ids, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda c: _predict_chunk(model, dataset, c, batch_size), chunks))
        preds = np.concatenate(parts)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for true, pred in zip(labels[ids], preds):
        confusion[true, pred] += 1
    accuracy = float(np.trace(confusion)) / ids.size
    return EvalResult(accuracy, confusion, int(ids.size))


def representations(model: Model, dataset: Dataset, ids, view: int,
                    batch_size: int = 64) -> np.ndarray:
    """Final (len(ids), 3n) representation planes for one manifest view."""
    rows = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        x = dataset.pixels_matrix(view, chunk)
        g = Graph()
        nids = _register_params(g, model)
        enc_nids = [(nids[f"enc/{i}/w"], nids[f"enc/{i}/b"])
                    for i in range(len(model.encoder.layers))]
        x_nid = g.leaf(x)
        z = mlp_graph(g, enc_nids, x_nid)
        planes = vn_forward_graph(g, model.vn_stack, nids.__getitem__, z)
        rows.append(g.value(planes))
    return np.vstack(rows)


def export_embeddings(model: Model, dataset: Dataset, out_path, split=None) -> int:
    """Write one CSV row per (sample, view): representation + mapped partner.

    Columns: sample_id, view, the flattened (n, 3) representation of this
    view, then the partner view's representation mapped through the
    partner-to-view homography (the partner is the adjacent chain view,
    preferring the one nearer the chain start). Returns the row count.
    """
    from .vn import planes_to_feature

    if split is None:
        ids = list(range(len(dataset.samples)))
    else:
        ids = dataset.splits.get(split, [])
        if not ids:
            raise EmptySplit(f"split {split!r} has no samples")
    planes = {v: representations(model, dataset, ids, v)
              for v in range(dataset.n_views)}
    pos_of = {view: pos for pos, view in enumerate(dataset.chain)}
    partner = {}
    for view in range(dataset.n_views):
        pos = pos_of[view]
        neigh = sorted(dataset.graph.neighbors[pos])
        partner[view] = dataset.chain[neigh[0]]

    n3 = planes[0].shape[1]
    header = (["sample_id", "view"]
              + [f"coord_{i}" for i in range(n3)]
              + [f"transformed_{i}" for i in range(n3)])
    rows = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row, sample_id in enumerate(ids):
            for view in range(dataset.n_views):
                own = planes_to_feature(planes[view][row])
                pview = partner[view]
                h = dataset.graph.h[(pos_of[pview], pos_of[view])].m
                mapped = (h @ planes_to_feature(planes[pview][row]).T).T
                cells = ([str(sample_id), str(view)]
                         + [repr(float(x)) for x in own.ravel()]
                         + [repr(float(x)) for x in mapped.ravel()])
                fh.write(",".join(cells) + "\n")
                rows += 1
    return rows
