"""The gesture network: two 3D conv blocks, an LSTM over the surviving
time steps, and a softmax classifier head.

Training is plain mini-batch Adam with per-epoch seeded shuffling; no
early stopping (the convergence epoch in the report is diagnostic only).
Cross-validation trains one fresh net per participant-disjoint fold and
pools the held-out predictions.
"""

import concurrent.futures
import dataclasses
import json
import logging
import multiprocessing
import os
import struct

import numpy as np

from .dataset import kfold
from .errors import ConfigError, DimensionError, FormatError, InputError
from .tensor import (
    Parameter,
    Tensor,
    adam_step,
    affine,
    assert_finite,
    conv3d,
    cross_entropy,
    lstm_step,
    maxpool3d,
    no_grad,
    relu,
    reshape,
    slice_time,
    softmax,
)

log = logging.getLogger(__name__)


@dataclasses.dataclass
class ConvBlock:
    filters: int
    kernel: tuple
    pool: tuple


@dataclasses.dataclass
class ModelConfig:
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    block1: ConvBlock = dataclasses.field(
        default_factory=lambda: ConvBlock(8, (3, 3, 3), (2, 2, 2))
    )
    block2: ConvBlock = dataclasses.field(
        default_factory=lambda: ConvBlock(16, (3, 3, 3), (2, 2, 2))
    )
    lstm_hidden: int = 64
    num_classes: int = 27
    seed: int = 0
    # raw gesture-class ids behind each output column; None means 0..K-1
    class_ids: tuple | None = None

    def validate(self):
        if self.class_ids is not None and len(self.class_ids) != self.num_classes:
            raise ConfigError(
                f"class_ids has {len(self.class_ids)} entries for "
                f"{self.num_classes} outputs"
            )
        dims = (self.frames, self.height, self.width)
        if any(d < 1 for d in dims) or self.channels < 1:
            raise ConfigError(f"input dims must be positive, got {dims}")
        if self.lstm_hidden < 1 or self.num_classes < 1:
            raise ConfigError("lstm_hidden and num_classes must be positive")
        for name, block in (("block1", self.block1), ("block2", self.block2)):
            if block.filters < 1:
                raise ConfigError(f"{name}: filter count must be positive")
            for axis, d, p in zip("THW", dims, block.pool):
                if p < 1 or d % p:
                    raise ConfigError(
                        f"{name}: pool {p} does not divide axis {axis}={d}"
                    )
            dims = tuple(d // p for d, p in zip(dims, block.pool))
        if any(d < 1 for d in dims):
            raise ConfigError(f"conv stack reduces dims to {dims}")
        return dims  # (T, H, W) after both blocks

    def reduced_dims(self):
        return self.validate()

    def lstm_input_size(self):
        _, h, w = self.reduced_dims()
        return self.block2.filters * h * w

    def parameter_count(self):
        """Closed-form total across all layers (weights plus biases)."""
        kt1, kh1, kw1 = self.block1.kernel
        kt2, kh2, kw2 = self.block2.kernel
        f1, f2 = self.block1.filters, self.block2.filters
        hd, k = self.lstm_hidden, self.num_classes
        d = self.lstm_input_size()
        conv1 = f1 * self.channels * kt1 * kh1 * kw1 + f1
        conv2 = f2 * f1 * kt2 * kh2 * kw2 + f2
        lstm = d * 4 * hd + hd * 4 * hd + 4 * hd
        head = hd * k + k
        return conv1 + conv2 + lstm + head

    def to_dict(self):
        return {
            "frames": self.frames, "height": self.height, "width": self.width,
            "channels": self.channels,
            "block1": [self.block1.filters, list(self.block1.kernel),
                       list(self.block1.pool)],
            "block2": [self.block2.filters, list(self.block2.kernel),
                       list(self.block2.pool)],
            "lstm_hidden": self.lstm_hidden,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "class_ids": list(self.class_ids) if self.class_ids else None,
        }

    @classmethod
    def from_dict(cls, d):
        def block(v):
            return ConvBlock(int(v[0]), tuple(v[1]), tuple(v[2]))

        ids = d.get("class_ids")
        return cls(
            frames=d["frames"], height=d["height"], width=d["width"],
            channels=d["channels"], block1=block(d["block1"]),
            block2=block(d["block2"]), lstm_hidden=d["lstm_hidden"],
            num_classes=d["num_classes"], seed=d["seed"],
            class_ids=tuple(ids) if ids else None,
        )


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class GestureNet:
    """conv1 -> ReLU -> pool -> conv2 -> ReLU -> pool -> LSTM -> softmax."""

    PARAM_ORDER = (
        "conv1_k", "conv1_b", "conv2_k", "conv2_b",
        "lstm_wx", "lstm_wh", "lstm_b", "fc_w", "fc_b",
    )

    def __init__(self, config, params):
        self.config = config
        self.params = params

    def parameters(self):
        return [self.params[name] for name in self.PARAM_ORDER]

    @property
    def class_ids(self):
        """Raw gesture-class id behind each output column."""
        if self.config.class_ids is not None:
            return list(self.config.class_ids)
        return list(range(self.config.num_classes))

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x):
        """Probability rows for a batch ``x`` of shape (N, C, T, H, W).

        Pixels are expected pre-scaled to [0, 1].  Records the autodiff
        graph unless wrapped in ``no_grad``.
        """
        if isinstance(x, Tensor):
            xt = x
        else:
            xt = Tensor(np.asarray(x, dtype=np.float64))
        cfg = self.config
        expected = (cfg.channels, cfg.frames, cfg.height, cfg.width)
        if xt.data.ndim != 5 or xt.shape[1:] != expected:
            raise DimensionError(
                f"clips must be (N, {expected[0]}, {expected[1]}, "
                f"{expected[2]}, {expected[3]}), got {tuple(xt.shape)}"
            )
        p = self.params
        pad1 = tuple(k // 2 for k in cfg.block1.kernel)
        pad2 = tuple(k // 2 for k in cfg.block2.kernel)
        h = maxpool3d(relu(conv3d(xt, p["conv1_k"], p["conv1_b"],
                                  padding=pad1)), cfg.block1.pool)
        h = maxpool3d(relu(conv3d(h, p["conv2_k"], p["conv2_b"],
                                  padding=pad2)), cfg.block2.pool)
        n = xt.shape[0]
        t_steps = h.shape[2]
        d = cfg.lstm_input_size()
        hd = cfg.lstm_hidden
        state_h = Tensor(np.zeros((n, hd)))
        state_c = Tensor(np.zeros((n, hd)))
        for t in range(t_steps):
            xt_step = reshape(slice_time(h, t), (n, d))
            state_h, state_c = lstm_step(
                xt_step, state_h, state_c,
                p["lstm_wx"], p["lstm_wh"], p["lstm_b"],
            )
        logits = affine(state_h, p["fc_w"], p["fc_b"])
        return softmax(logits)

    def predict(self, x, batch=32):
        """Argmax-free inference: probability matrix without graph capture."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        with no_grad():
            for lo in range(0, len(x), batch):
                out.append(self.forward(x[lo:lo + batch]).data)
        return np.concatenate(out) if out else np.zeros((0, self.config.num_classes))


def build(config):
    """Fresh seeded network; identical seeds give bit-identical parameters."""
    dims = config.validate()
    if min(dims) < 1:
        raise ConfigError(f"invalid reduced dims {dims}")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed & 0x7FFFFFFF))
    c = config
    kt1, kh1, kw1 = c.block1.kernel
    kt2, kh2, kw2 = c.block2.kernel
    f1, f2 = c.block1.filters, c.block2.filters
    d, hd, k = c.lstm_input_size(), c.lstm_hidden, c.num_classes
    vol1, vol2 = kt1 * kh1 * kw1, kt2 * kh2 * kw2

    params = {
        "conv1_k": Parameter(
            _glorot(rng, (f1, c.channels, kt1, kh1, kw1),
                    c.channels * vol1, f1 * vol1), "conv1_k"),
        "conv1_b": Parameter(np.zeros(f1), "conv1_b"),
        "conv2_k": Parameter(
            _glorot(rng, (f2, f1, kt2, kh2, kw2), f1 * vol2, f2 * vol2),
            "conv2_k"),
        "conv2_b": Parameter(np.zeros(f2), "conv2_b"),
        "lstm_wx": Parameter(_glorot(rng, (d, 4 * hd), d, 4 * hd), "lstm_wx"),
        "lstm_wh": Parameter(_glorot(rng, (hd, 4 * hd), hd, 4 * hd), "lstm_wh"),
        "lstm_b": Parameter(np.zeros(4 * hd), "lstm_b"),
        "fc_w": Parameter(_glorot(rng, (hd, k), hd, k), "fc_w"),
        "fc_b": Parameter(np.zeros(k), "fc_b"),
    }
    return GestureNet(config, params)


# ---------------------------------------------------------------------------
# Training


@dataclasses.dataclass
class TrainReport:
    train_loss: list
    train_acc: list
    val_acc: list
    epochs_run: int
    converged_epoch: int | None

    @staticmethod
    def convergence_epoch(val_acc, window=5, delta=0.005):
        """First epoch after which val accuracy moves < delta over the
        next ``window`` epochs; None when it never settles."""
        for e in range(len(val_acc) - window):
            tail = val_acc[e: e + window + 1]
            if max(tail) - min(tail) < delta:
                return e + 1  # 1-indexed epoch number
        return None


def clips_to_arrays(clips):
    """Stack clips into (N, C, T, H, W) float64 in [0,1] plus label array."""
    if not clips:
        raise InputError("empty clip set")
    x = np.stack([c.frames for c in clips]).astype(np.float64) / 255.0
    x = np.ascontiguousarray(np.moveaxis(x, -1, 1))  # (N, C, T, H, W)
    y = np.array([c.class_id for c in clips], dtype=np.int64)
    return x, y


def train_fold(net, train_data, val_data, epochs=100, batch=16, lr=1e-3,
               seed=0, label_map=None):
    """Mini-batch Adam over ``train_data``; per-epoch validation accuracy.

    ``train_data``/``val_data`` are (X, y) pairs.  ``label_map`` remaps raw
    class ids onto the net's contiguous output indices when the dataset
    uses a class subset.
    """
    x_train, y_train = train_data
    if len(x_train) == 0:
        raise InputError("training set is empty")
    x_val, y_val = val_data if val_data is not None else (None, None)
    if label_map is not None:
        y_train = np.array([label_map[int(v)] for v in y_train])
        if y_val is not None:
            y_val = np.array([label_map[int(v)] for v in y_val])

    params = net.parameters()
    losses, accs, vaccs = [], [], []
    for epoch in range(epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([seed & 0x7FFFFFFF, epoch])
        ).permutation(len(x_train))
        total_loss = 0.0
        correct = 0
        for lo in range(0, len(order), batch):
            idx = order[lo:lo + batch]
            probs = net.forward(x_train[idx])
            loss = cross_entropy(probs, y_train[idx])
            net.zero_grads()
            loss.backward()
            adam_step(params, lr=lr)
            total_loss += float(loss.data) * len(idx)
            correct += int((probs.data.argmax(axis=1) == y_train[idx]).sum())
        epoch_loss = total_loss / len(order)
        assert_finite(np.asarray(epoch_loss), "epoch loss")
        losses.append(epoch_loss)
        accs.append(correct / len(order))
        if x_val is not None and len(x_val):
            preds = net.predict(x_val).argmax(axis=1)
            vaccs.append(float((preds == y_val).mean()))
        else:
            vaccs.append(float("nan"))
    return TrainReport(
        train_loss=losses, train_acc=accs, val_acc=vaccs, epochs_run=epochs,
        converged_epoch=TrainReport.convergence_epoch(vaccs) if epochs else None,
    )


# ---------------------------------------------------------------------------
# Cross-validation


@dataclasses.dataclass
class CVResult:
    pooled_preds: np.ndarray
    pooled_labels: np.ndarray
    pooled_indices: np.ndarray
    fold_accuracies: list
    reports: list

    @property
    def mean(self):
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self):
        if len(self.fold_accuracies) < 2:
            return 0.0
        return float(np.std(self.fold_accuracies, ddof=1))


_FOLD_DATA = {}


def _run_fold(args):
    (fold, config_dict, epochs, batch, lr, seed) = args
    config = ModelConfig.from_dict(config_dict)
    x, y, folds, label_map = (
        _FOLD_DATA["x"], _FOLD_DATA["y"], _FOLD_DATA["folds"],
        _FOLD_DATA["label_map"],
    )
    train_idx = np.flatnonzero(folds != fold)
    test_idx = np.flatnonzero(folds == fold)
    cfg = dataclasses.replace(config, seed=config.seed + fold)
    net = build(cfg)
    report = train_fold(
        net, (x[train_idx], y[train_idx]), (x[test_idx], y[test_idx]),
        epochs=epochs, batch=batch, lr=lr, seed=seed + fold,
        label_map=label_map,
    )
    preds = net.predict(x[test_idx]).argmax(axis=1)
    mapped = np.array([label_map[int(v)] for v in y[test_idx]])
    acc = float((preds == mapped).mean()) if len(test_idx) else 0.0
    return fold, test_idx, preds, mapped, acc, report


def cross_validate(clips, manifest, config, k=5, epochs=100, batch=16,
                   lr=1e-3, seed=0, workers=None):
    """Participant-disjoint k-fold CV; pools held-out predictions.

    Returns a CVResult whose pooled predictions cover every clip exactly
    once.  Class ids are remapped onto contiguous net outputs; pooled
    labels/preds are in that mapped space.
    """
    if any(e.fold < 0 for e in manifest.entries):
        manifest = kfold(manifest, k=k, seed=seed)
    folds = np.array([e.fold for e in manifest.entries])
    if folds.max() + 1 != k:
        raise InputError(f"manifest has {folds.max() + 1} folds, expected {k}")
    x, y = clips_to_arrays(clips)
    class_ids = sorted(set(int(v) for v in y))
    if len(class_ids) != config.num_classes:
        raise ConfigError(
            f"config expects {config.num_classes} classes, dataset has "
            f"{len(class_ids)}"
        )
    if config.class_ids is None:
        config = dataclasses.replace(config, class_ids=tuple(class_ids))
    elif sorted(config.class_ids) != class_ids:
        raise ConfigError(
            f"config class_ids {config.class_ids} do not match dataset "
            f"classes {class_ids}"
        )
    label_map = {c: i for i, c in enumerate(class_ids)}

    _FOLD_DATA.update(x=x, y=y, folds=folds, label_map=label_map)
    tasks = [
        (fold, config.to_dict(), epochs, batch, lr, seed) for fold in range(k)
    ]
    if workers is None:
        workers = int(os.environ.get("HIROS_WORKERS",
                                     min(k, os.cpu_count() or 1)))
    results = []
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, mp_context=ctx
        ) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    n = len(clips)
    pooled_preds = np.full(n, -1, dtype=np.int64)
    pooled_labels = np.full(n, -1, dtype=np.int64)
    fold_accs = [0.0] * k
    reports = [None] * k
    for fold, test_idx, preds, labels, acc, report in results:
        pooled_preds[test_idx] = preds
        pooled_labels[test_idx] = labels
        fold_accs[fold] = acc
        reports[fold] = report
    if (pooled_preds < 0).any():
        raise InputError("folds do not cover the dataset")
    return CVResult(
        pooled_preds=pooled_preds, pooled_labels=pooled_labels,
        pooled_indices=np.arange(n), fold_accuracies=fold_accs,
        reports=reports,
    )


# ---------------------------------------------------------------------------
# Checkpoints

_GNET_MAGIC = b"GNET"
_GNET_VERSION = 1


def save_checkpoint(net, path):
    config_json = json.dumps(net.config.to_dict()).encode("utf-8")
    blob = bytearray()
    blob += _GNET_MAGIC
    blob += bytes([_GNET_VERSION])
    blob += struct.pack("<I", len(config_json))
    blob += config_json
    for name in GestureNet.PARAM_ORDER:
        raw = net.params[name].data.astype("<f8").tobytes()
        blob += struct.pack("<I", len(raw))
        blob += raw
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    off = 0

    def need(n, what):
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated while reading {what}", offset=off)
        chunk = data[off:off + n]
        off += n
        return chunk

    magic = need(4, "magic")
    if magic != _GNET_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version = need(1, "version")[0]
    if version != _GNET_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    (cfg_len,) = struct.unpack("<I", need(4, "config length"))
    try:
        config = ModelConfig.from_dict(json.loads(need(cfg_len, "config")))
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad config block: {exc}", offset=9) from exc
    net = build(config)  # establishes shapes; values overwritten below
    for name in GestureNet.PARAM_ORDER:
        start = off
        (nbytes,) = struct.unpack("<I", need(4, f"{name} length"))
        expected = net.params[name].data.size * 8
        if nbytes != expected:
            raise FormatError(
                f"{name}: expected {expected} bytes, header says {nbytes}",
                offset=start,
            )
        raw = need(nbytes, name)
        net.params[name].data[...] = np.frombuffer(raw, dtype="<f8").reshape(
            net.params[name].data.shape
        )
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", offset=off)
    return net
