"""Multi-modal scan quality model.

An image conv encoder and a pose/force encoder each produce a 128-d
feature; the fusion head maps the concatenation to a 128-d task feature
and a 2-class confidence. Variants differ in which pose/force inputs
exist and whether pose and force share one encoder:

  net1: image + pose(4)          net2: image + wrench(6)
  net3: image + pose and wrench through parallel encoders (no interaction)
  net4: image + concatenated pose+wrench(10) through one encoder
"""

from dataclasses import dataclass, field, asdict
import hashlib
import json
import time
import zlib

import numpy as np

from . import nn
from .dataset import Dataset
from .errors import (
    ChecksumError,
    ConfigError,
    EmptyDatasetError,
    FileFormatError,
    InvalidHyperparameterError,
    ShapeError,
    TrainingDivergedError,
    TruncatedFileError,
    VersionError,
)
from .phantom import ProbeState, UltrasoundFrame

MODEL_MAGIC = b"USGM1"
MODEL_FORMAT_VERSION = 1

VARIANTS = ("net1", "net2", "net3", "net4")
FEATURE_DIM = 128


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "net4"
    image_size: tuple = (64, 64, 1)
    conv_channels: tuple = (16, 32, 64, 64)
    pf_hidden: tuple = (64, 128, 128, 128)
    head_hidden: int = FEATURE_DIM
    input_norm: dict | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.pf_hidden[-1] != FEATURE_DIM:
            raise ConfigError("pose/force encoder must end in 128 features")
        if self.head_hidden != FEATURE_DIM:
            raise ConfigError("task feature vector must be 128-d")
        h, w, _ = self.image_size
        if h % (2 ** len(self.conv_channels)) or w % (2 ** len(self.conv_channels)):
            raise ConfigError("image size must be divisible by 2^n_conv_blocks")

    @property
    def pf_input_widths(self):
        return {"net1": (4,), "net2": (6,), "net3": (4, 6), "net4": (10,)}[self.variant]

    @property
    def fusion_width(self):
        return FEATURE_DIM * (1 + len(self.pf_input_widths))


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 20
    epochs: int = 20
    seed: int = 0
    target_val_acc: float | None = None  # stop early once reached

    def validate(self):
        if self.lr <= 0:
            raise InvalidHyperparameterError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise InvalidHyperparameterError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidHyperparameterError("epochs must be >= 0")
        if self.target_val_acc is not None and not 0 < self.target_val_acc <= 1:
            raise InvalidHyperparameterError("target_val_acc must be in (0, 1]")


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # dicts with losses/accuracies
    initial: dict | None = None
    wall_clock_s: float = 0.0
    confusion: list | None = None               # [[tn, fp], [fn, tp]]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for i, e in enumerate(self.epochs, start=1):
            lines.append(f"{i},{e['train_loss']:.6f},{e['train_acc']:.6f},"
                         f"{e['val_loss']:.6f},{e['val_acc']:.6f}")
        return "\n".join(lines) + "\n"


def _image_stack(config: ModelConfig):
    h, w, c = config.image_size
    stack = []
    prev = c
    for ch in config.conv_channels:
        stack += [nn.conv2d(prev, ch), nn.relu(), nn.maxpool2x2()]
        prev = ch
    side_h = h // (2 ** len(config.conv_channels))
    side_w = w // (2 ** len(config.conv_channels))
    stack += [nn.flatten(), nn.linear(side_h * side_w * prev, FEATURE_DIM), nn.relu()]
    return stack


def _pf_stack(in_width, hidden):
    stack = []
    prev = in_width
    for width in hidden:
        stack += [nn.linear(prev, width), nn.relu()]
        prev = width
    return stack


class QualityModel:
    """Trained parameters plus the networks that execute them."""

    def __init__(self, config: ModelConfig, store: nn.ParamStore,
                 trained_epochs=0, train_seed=None):
        self.config = config
        self.store = store
        self.trained_epochs = trained_epochs
        self.train_seed = train_seed
        h, w, c = config.image_size
        self.image_net = nn.Network(_image_stack(config), (h, w, c), prefix="img.")
        self.pf_nets = [
            nn.Network(_pf_stack(width, config.pf_hidden), (width,), prefix=f"pf{k}.")
            for k, width in enumerate(config.pf_input_widths)
        ]
        self.fuse_net = nn.Network(
            [nn.linear(config.fusion_width, config.head_hidden), nn.relu()],
            (config.fusion_width,), prefix="fuse.")
        self.out_net = nn.Network([nn.linear(config.head_hidden, 2)],
                                  (config.head_hidden,), prefix="out.")

    def networks(self):
        return [self.image_net, *self.pf_nets, self.fuse_net, self.out_net]

    def _norm(self, poses, wrenches):
        norm = self.config.input_norm
        if norm is None:
            return poses, wrenches
        p = (poses - np.asarray(norm["pose_mean"], np.float32)) / \
            np.asarray(norm["pose_std"], np.float32)
        f = (wrenches - np.asarray(norm["wrench_mean"], np.float32)) / \
            np.asarray(norm["wrench_std"], np.float32)
        return p.astype(np.float32), f.astype(np.float32)

    def _pf_inputs(self, poses, wrenches):
        p, f = self._norm(poses, wrenches)
        if self.config.variant == "net1":
            return [p]
        if self.config.variant == "net2":
            return [f]
        if self.config.variant == "net3":
            return [p, f]
        return [np.concatenate([p, f], axis=1)]

    def forward_batch(self, pixels, poses, wrenches, keep_cache=False):
        """Returns (logits (n,2), task features (n,128))."""
        pixels = np.asarray(pixels, np.float32)
        poses = np.asarray(poses, np.float32).reshape(-1, 4)
        wrenches = np.asarray(wrenches, np.float32).reshape(-1, 6)
        img_feat = self.image_net.forward(self.store, pixels, keep_cache)
        pf_feats = [
            net.forward(self.store, x, keep_cache)
            for net, x in zip(self.pf_nets, self._pf_inputs(poses, wrenches))
        ]
        fused_in = np.concatenate([img_feat, *pf_feats], axis=1)
        vt = self.fuse_net.forward(self.store, fused_in, keep_cache)
        logits = self.out_net.forward(self.store, vt, keep_cache)
        return logits, vt

    def backward_batch(self, dlogits):
        """Backprop after a forward_batch(keep_cache=True)."""
        dvt = self.out_net.backward(self.store, dlogits)
        dfused = self.fuse_net.backward(self.store, dvt)
        self.image_net.backward(self.store, dfused[:, :FEATURE_DIM])
        for k, net in enumerate(self.pf_nets):
            lo = FEATURE_DIM * (1 + k)
            net.backward(self.store, dfused[:, lo : lo + FEATURE_DIM])

    def n_params(self):
        return self.store.n_params()


@dataclass(frozen=True)
class TaskFeature:
    values: np.ndarray  # (128,)


def build(config: ModelConfig, seed) -> QualityModel:
    """Initialized untrained model; (config, seed) determines all weights."""
    store = nn.ParamStore(seed)
    model = QualityModel(config, store)
    rng = np.random.default_rng(seed)
    for net in model.networks():
        net.init_params(store, rng)
    return model


def forward(model: QualityModel, frame: UltrasoundFrame, state: ProbeState):
    """Single-sample inference: P(label 1) plus the 128-d task feature."""
    pixels = np.asarray(frame.pixels, np.float32)
    if pixels.shape != tuple(model.config.image_size):
        raise ShapeError(
            f"frame shape {pixels.shape} does not match model "
            f"image size {model.config.image_size}"
        )
    logits, vt = model.forward_batch(
        pixels[None], state.pose[None], state.wrench[None])
    probs = nn.softmax_probs(logits)[0]
    return {
        "confidence": float(probs[1]),
        "feature": TaskFeature(vt[0].copy()),
    }


def _iter_batches(n, batch_size):
    for lo in range(0, n, batch_size):
        yield np.arange(lo, min(lo + batch_size, n))


def _metrics(model, data: Dataset, batch_size=64):
    losses, preds = [], np.empty(len(data), dtype=np.int64)
    conf1 = np.empty(len(data))
    for idx in _iter_batches(len(data), batch_size):
        logits, _ = model.forward_batch(
            data.pixels[idx], data.poses[idx], data.wrenches[idx])
        loss, _ = nn.cross_entropy_batch(logits, data.labels[idx])
        losses.append(loss * len(idx))
        probs = nn.softmax_probs(logits)
        preds[idx] = probs.argmax(axis=1)
        conf1[idx] = probs[:, 1]
    labels = data.labels.astype(np.int64)
    acc = float((preds == labels).mean())
    loss = float(np.sum(losses) / len(data))
    return acc, loss, preds, conf1


def evaluate(model: QualityModel, data: Dataset) -> dict:
    """Accuracy, confusion matrix and per-class mean confidence."""
    if len(data) == 0:
        raise EmptyDatasetError("evaluate on an empty dataset")
    acc, loss, preds, conf1 = _metrics(model, data)
    labels = data.labels.astype(np.int64)
    confusion = [
        [int(((labels == 0) & (preds == 0)).sum()),
         int(((labels == 0) & (preds == 1)).sum())],
        [int(((labels == 1) & (preds == 0)).sum()),
         int(((labels == 1) & (preds == 1)).sum())],
    ]
    out = {"accuracy": acc, "loss": loss, "confusion": confusion}
    for lab in (0, 1):
        sel = labels == lab
        out[f"mean_confidence_label{lab}"] = (
            float(conf1[sel].mean()) if sel.any() else float("nan"))
    return out


def train(model: QualityModel, train_set: Dataset, val_set: Dataset,
          hyper: TrainConfig) -> TrainReport:
    """SGD over seeded shuffled batches; updates the model in place."""
    hyper.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptyDatasetError("train/val sets must be nonempty")
    t0 = time.monotonic()
    report = TrainReport()
    tr_acc, tr_loss, _, _ = _metrics(model, train_set)
    va_acc, va_loss, _, _ = _metrics(model, val_set)
    report.initial = {"train_loss": tr_loss, "train_acc": tr_acc,
                      "val_loss": va_loss, "val_acc": va_acc}
    rng = np.random.default_rng(hyper.seed)
    for epoch in range(hyper.epochs):
        perm = rng.permutation(len(train_set))
        for idx in _iter_batches(len(train_set), hyper.batch_size):
            batch = perm[idx]
            logits, _ = model.forward_batch(
                train_set.pixels[batch], train_set.poses[batch],
                train_set.wrenches[batch], keep_cache=True)
            loss, dlogits = nn.cross_entropy_batch(logits, train_set.labels[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1)
            model.backward_batch(dlogits)
            nn.sgd_step(model.store, hyper.lr)
        tr_acc, tr_loss, _, _ = _metrics(model, train_set)
        va_acc, va_loss, _, _ = _metrics(model, val_set)
        report.epochs.append({"train_loss": tr_loss, "train_acc": tr_acc,
                              "val_loss": va_loss, "val_acc": va_acc})
        model.trained_epochs += 1
        if hyper.target_val_acc is not None and va_acc >= hyper.target_val_acc:
            break
    model.train_seed = hyper.seed
    _, _, preds, _ = _metrics(model, val_set)
    labels = val_set.labels.astype(np.int64)
    report.confusion = [
        [int(((labels == 0) & (preds == 0)).sum()),
         int(((labels == 0) & (preds == 1)).sum())],
        [int(((labels == 1) & (preds == 0)).sum()),
         int(((labels == 1) & (preds == 1)).sum())],
    ]
    report.wall_clock_s = time.monotonic() - t0
    return report


def pretrain_image_encoder(model: QualityModel, data: Dataset,
                           hyper: TrainConfig) -> QualityModel:
    """Warm start: train the image encoder on (image, label) pairs through
    a temporary 2-class head, then discard the head."""
    hyper.validate()
    if len(data) == 0:
        raise EmptyDatasetError("pretrain on an empty dataset")
    head_store = nn.ParamStore(hyper.seed)
    head = nn.Network([nn.linear(FEATURE_DIM, 2)], (FEATURE_DIM,), prefix="pre.")
    head.init_params(head_store, np.random.default_rng(hyper.seed))
    rng = np.random.default_rng(hyper.seed)
    for epoch in range(hyper.epochs):
        perm = rng.permutation(len(data))
        for idx in _iter_batches(len(data), hyper.batch_size):
            batch = perm[idx]
            feat = model.image_net.forward(model.store, data.pixels[batch])
            logits = head.forward(head_store, feat)
            loss, dlogits = nn.cross_entropy_batch(logits, data.labels[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1)
            dfeat = head.backward(head_store, dlogits)
            model.image_net.backward(model.store, dfeat)
            nn.sgd_step(head_store, hyper.lr)
            nn.sgd_step(model.store, hyper.lr)
    return model


def image_only_accuracy(model: QualityModel, data: Dataset, head_seed=0) -> float:
    """Linear probe readout of the (possibly pretrained) image encoder."""
    head_store = nn.ParamStore(head_seed)
    head = nn.Network([nn.linear(FEATURE_DIM, 2)], (FEATURE_DIM,), prefix="pre.")
    head.init_params(head_store, np.random.default_rng(head_seed))
    correct = 0
    for idx in _iter_batches(len(data), 64):
        feat = model.image_net.forward(model.store, data.pixels[idx], keep_cache=False)
        logits = head.forward(head_store, feat, keep_cache=False)
        correct += int((logits.argmax(axis=1) == data.labels[idx]).sum())
    return correct / len(data)


def ablate(train_set: Dataset, val_set: Dataset, repeats=5, epochs=20,
           seeds=None, base_config: ModelConfig | None = None,
           lr=0.001, batch_size=20) -> dict:
    """Train every variant `repeats` times; per-variant val accuracy table."""
    if repeats < 1:
        raise InvalidHyperparameterError("repeats must be >= 1")
    if seeds is None:
        seeds = list(range(repeats))
    if len(seeds) != repeats:
        raise InvalidHyperparameterError("need one seed per repeat")
    base = base_config or ModelConfig()
    rows = []
    for variant in VARIANTS:
        for r, seed in enumerate(seeds):
            cfg = ModelConfig(variant=variant, image_size=base.image_size,
                              conv_channels=base.conv_channels,
                              pf_hidden=base.pf_hidden,
                              input_norm=base.input_norm)
            m = build(cfg, seed)
            try:
                rep = train(m, train_set, val_set,
                            TrainConfig(lr=lr, batch_size=batch_size,
                                        epochs=epochs, seed=seed))
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(
                    exc.epoch, f"{variant} repeat {r}: {exc}") from exc
            rows.append({"variant": variant, "repeat": r, "seed": seed,
                         "val_acc": rep.epochs[-1]["val_acc"],
                         "train_acc": rep.epochs[-1]["train_acc"]})
    summary = {}
    for variant in VARIANTS:
        accs = np.array([r["val_acc"] for r in rows if r["variant"] == variant])
        summary[variant] = {"mean": float(accs.mean()),
                            "std": float(accs.std(ddof=1)) if len(accs) > 1 else 0.0}
    a3 = np.array([r["val_acc"] for r in rows if r["variant"] == "net3"])
    a4 = np.array([r["val_acc"] for r in rows if r["variant"] == "net4"])
    gap = float(a4.mean() - a3.mean())
    if repeats > 1:
        se = float(np.sqrt(a4.var(ddof=1) / repeats + a3.var(ddof=1) / repeats))
    else:
        se = 0.0
    summary["net4_minus_net3"] = {"gap": gap,
                                  "ci95": [gap - 1.96 * se, gap + 1.96 * se]}
    majority = max(val_set.labels.mean(), 1 - val_set.labels.mean())
    summary["majority_baseline"] = float(majority)
    return {"rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# USGM1 model files


def _config_blob(model: QualityModel) -> bytes:
    doc = {
        "variant": model.config.variant,
        "image_size": list(model.config.image_size),
        "conv_channels": list(model.config.conv_channels),
        "pf_hidden": list(model.config.pf_hidden),
        "head_hidden": model.config.head_hidden,
        "input_norm": model.config.input_norm,
        "trained_epochs": model.trained_epochs,
        "train_seed": model.train_seed,
        "init_seed": model.store.rng_seed,
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def save_model(model: QualityModel, path) -> bytes:
    params = nn.save_params(model.store, _NullSink())
    blob = _config_blob(model)
    out = bytearray()
    out += MODEL_MAGIC
    out += np.uint32(MODEL_FORMAT_VERSION).tobytes()
    out += np.uint64(len(blob)).tobytes()
    out += blob
    out += np.uint32(zlib.crc32(params)).tobytes()
    out += params
    with open(path, "wb") as f:
        f.write(bytes(out))
    return bytes(out)


class _NullSink:
    def write(self, _data):
        pass


def load_model(path) -> QualityModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] != MODEL_MAGIC:
        raise VersionError(f"bad model magic {data[:5]!r}")
    off = 5

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise TruncatedFileError("model file ends before declared payload")
        chunk = data[off : off + n]
        off += n
        return chunk

    version = int(np.frombuffer(take(4), "<u4")[0])
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(f"unsupported model format version {version}")
    blob_len = int(np.frombuffer(take(8), "<u8")[0])
    doc = json.loads(take(blob_len).decode("utf-8"))
    crc = int(np.frombuffer(take(4), "<u4")[0])
    params = data[off:]
    if zlib.crc32(params) != crc:
        raise ChecksumError("model parameter payload checksum mismatch")
    store = nn.load_params(params)
    store.rng_seed = doc.get("init_seed") or 0
    config = ModelConfig(
        variant=doc["variant"],
        image_size=tuple(doc["image_size"]),
        conv_channels=tuple(doc["conv_channels"]),
        pf_hidden=tuple(doc["pf_hidden"]),
        head_hidden=doc["head_hidden"],
        input_norm=doc["input_norm"],
    )
    return QualityModel(config, store, trained_epochs=doc["trained_epochs"],
                        train_seed=doc["train_seed"])


def model_hash(model: QualityModel) -> str:
    h = hashlib.sha256()
    h.update(_config_blob(model))
    h.update(nn.save_params(model.store, _NullSink()))
    return h.hexdigest()


def analytic_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count for a ModelConfig (used as an oracle)."""
    h, w, c = config.image_size
    total = 0
    prev = c
    for ch in config.conv_channels:
        total += 9 * prev * ch + ch
        prev = ch
    side_h = h // (2 ** len(config.conv_channels))
    side_w = w // (2 ** len(config.conv_channels))
    total += side_h * side_w * prev * FEATURE_DIM + FEATURE_DIM
    for width in config.pf_input_widths:
        prev_w = width
        for hid in config.pf_hidden:
            total += prev_w * hid + hid
            prev_w = hid
    total += config.fusion_width * config.head_hidden + config.head_hidden
    total += config.head_hidden * 2 + 2
    return total
