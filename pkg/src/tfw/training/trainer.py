"""Mini-batch training and clip-level evaluation for every model kind.

Samples are clips. Each epoch visits every training clip once in a fresh
random order; a single-frame classifier sees one uniformly drawn frame of the
clip, a sequence model sees ``n_frames`` frames picked by the sampling mode.

When the backbone is frozen and no random geometry is applied, backbone
features of every training frame are computed once and the head is trained
on them, which gives the same updates at a fraction of the cost.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from tfw.core import LrSchedule, ParamStore, SoftmaxCrossEntropy, adam_step, lr_at, sgd_momentum_step
from tfw.data.augment import augment_frames, resize_then_crop
from tfw.data.index import DatasetIndex
from tfw.data.sampling import sample_indices
from tfw.errors import ConfigError, TrainingError
from tfw.models import Model, build_model, mean_vote
from tfw.training.config import TrainConfig
from tfw.training.metrics import MetricsReport

FEATURE_CHUNK = 256


@dataclass
class TrainResult:
    model: Model
    config: TrainConfig
    history: list[dict] = field(default_factory=list)
    pretrained: "TrainResult | None" = None

    @property
    def store(self) -> ParamStore:
        return self.model.store

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy", "lr"])
        for h in self.history:
            w.writerow([h["epoch"], f"{h['loss']:.6f}", f"{h['accuracy']:.4f}", f"{h['lr']:.6g}"])
        return buf.getvalue()


def _prepare(frames, config: TrainConfig, rng, train: bool):
    """Resize/crop (random crop when training) and, when training, sequence-wide augmentation."""
    if config.resize_to is not None:
        frames = resize_then_crop(frames, config.resize_to, config.crop_to, rng if train else None, center=not train)
    if train and not config.augment.is_identity:
        frames = augment_frames(frames, config.augment, rng)
    return frames


def _cacheable(config: TrainConfig) -> bool:
    random_crop = config.resize_to is not None and config.crop_to != config.resize_to
    return config.freeze_backbone and config.augment.is_identity and not random_crop


def _clip_features(model: Model, dataset: DatasetIndex, config: TrainConfig) -> dict:
    """Backbone features (L, D) for every frame of every clip, keyed by clip."""
    out = {}
    keys, frames = [], []

    def flush():
        if not frames:
            return
        lengths = [len(f) for f in frames]
        feats = _frame_features(model, np.concatenate(frames))
        for key, part in zip(keys, np.split(feats, np.cumsum(lengths)[:-1])):
            out[key] = part
        keys.clear()
        frames.clear()

    total = 0
    for clip in dataset:
        f = _prepare(dataset.frames(clip), config, None, train=False)
        keys.append(clip.key)
        frames.append(f)
        total += len(f)
        if total >= FEATURE_CHUNK:
            flush()
            total = 0
    flush()
    return out


def _frame_features(model: Model, frames):
    """(M, H, W) -> (M, D) through the backbone only."""
    feats = [model.backbone.forward(model._cast(frames[i:i + FEATURE_CHUNK]))
             for i in range(0, len(frames), FEATURE_CHUNK)]
    model.backbone_clear()
    return np.concatenate(feats)


def _optimizer_step(store: ParamStore, config: TrainConfig, lr: float) -> None:
    if config.optimizer == "sgd":
        sgd_momentum_step(store, lr, momentum=config.momentum, l2=config.l2)
    else:
        adam_step(store, lr, beta1=config.momentum, l2=config.l2)


def _draw(clip, config: TrainConfig, rng) -> list[int]:
    if config.sequence:
        return sample_indices(clip, config.n_frames, config.sampling_mode, rng)
    return [int(rng.integers(len(clip)))]


def init_from(model: Model, source) -> None:
    """Copy backbone weights from a trained model, store or value dict."""
    if isinstance(source, (Model, TrainResult)):
        source = source.store
    values = source.snapshot() if isinstance(source, ParamStore) else source
    model.store.load_values({k: v for k, v in values.items() if k.startswith("backbone.")}, strict=False)


def train(config: TrainConfig, dataset: DatasetIndex, rng: np.random.Generator | None = None,
          init=None) -> TrainResult:
    """Train a model of ``config.kind`` on every clip of ``dataset``.

    ``init`` (a trained model, TrainResult, ParamStore or value dict) supplies
    the backbone weights. Without it, a config carrying ``pretrain`` first
    trains that classifier on the same clips and uses its backbone.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    rng = np.random.default_rng([config.seed, 3]) if rng is None else rng
    pretrained = None
    if init is None and config.pretrain is not None:
        pretrained = train(config.pretrain, dataset, np.random.default_rng([config.pretrain.seed, 5]))
        init = pretrained
    model = build_model(config.model_spec(dataset.n_classes), dtype=config.np_dtype, seed=config.seed)
    if init is not None:
        init_from(model, init)
    frozen = config.freeze_backbone
    store = model.head_store() if frozen else model.store
    cache = _clip_features(model, dataset, config) if _cacheable(config) else None

    clips = list(dataset)
    labels = dataset.labels()
    steps_per_epoch = -(-len(clips) // config.batch_size)
    schedule = LrSchedule(config.schedule, config.max_lr, cycle_steps=config.cycle_epochs * steps_per_epoch)
    loss_fn = SoftmaxCrossEntropy()
    history, step = [], 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(clips))
        total_loss = correct = 0.0
        for b in range(steps_per_epoch):
            batch = order[b * config.batch_size:(b + 1) * config.batch_size]
            y = labels[batch]
            picks = [_draw(clips[i], config, rng) for i in batch]
            lr = lr_at(schedule, step)
            if cache is not None:
                feats = np.stack([cache[clips[i].key][idx] for i, idx in zip(batch, picks)])
                x = feats if config.sequence else feats[:, 0]
            else:
                x = np.stack([_prepare(dataset.frames(clips[i])[idx], config, rng, train=True)
                              for i, idx in zip(batch, picks)])
                if not config.sequence:
                    x = x[:, 0]
                if frozen:
                    x = model.features(x)
            store.zero_grad()
            if frozen:
                logits = model.head_logits(model._cast(x), training=True)
            else:
                logits = model.logits(x, training=True)
            loss, probs = loss_fn.forward(logits, y)
            if not np.isfinite(loss):
                model.clear()
                loss_fn.clear()
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {b} (lr={lr:.6g})")
            dlogits = loss_fn.backward()
            if frozen:
                model.head_backward(dlogits)
            else:
                model.backward(dlogits)
            _optimizer_step(store, config, lr)
            total_loss += loss * len(batch)
            correct += int((probs.argmax(axis=-1) == y).sum())
            step += 1
        history.append({"epoch": epoch + 1, "loss": total_loss / len(clips),
                        "accuracy": 100.0 * correct / len(clips), "lr": lr})
    model.clear()
    return TrainResult(model, config, history, pretrained)


def predict(model: Model, dataset: DatasetIndex, *, sampling_mode: str = "consecutive", n_frames: int | None = None,
            seed: int = 0, config: TrainConfig | None = None, vote: bool | None = None,
            batch_clips: int = 64) -> np.ndarray:
    """Class probabilities, one row per clip, dropout off.

    A single-frame model scores one seeded random frame per clip, or with
    ``vote`` the mean of its probabilities over ``n_frames`` sampled frames.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    n_classes = model.spec.head.n_classes
    if dataset.n_classes != n_classes:
        raise ConfigError(f"label set has {dataset.n_classes} classes, model predicts {n_classes}")
    vote = model.kind == "mean_vote" if vote is None else vote
    n = n_frames or model.spec.head.n_frames
    if config is not None:
        sampling_mode = config.sampling_mode
    rng = np.random.default_rng([seed, 4])
    clips = list(dataset)
    out = []
    for start in range(0, len(clips), batch_clips):
        chunk = clips[start:start + batch_clips]
        if model.sequence or vote:
            idx = [sample_indices(c, n, sampling_mode, rng) for c in chunk]
        else:
            idx = [[int(rng.integers(len(c)))] for c in chunk]
        x = np.stack([dataset.frames(c)[i] for c, i in zip(chunk, idx)])
        if config is not None:
            x = np.stack([_prepare(s, config, None, train=False) for s in x])
        if model.sequence:
            out.append(model.predict_proba(x))
        else:
            b, k = x.shape[:2]
            p = model.predict_proba(x.reshape(b * k, *x.shape[2:])).reshape(b, k, -1)
            out.append(np.stack([mean_vote(rows) for rows in p]) if vote else p[:, 0])
    return np.concatenate(out)


def evaluate(model: Model, dataset: DatasetIndex, **kwargs) -> MetricsReport:
    """Clip-level metrics; keyword arguments as for :func:`predict`."""
    probs = predict(model, dataset, **kwargs)
    return MetricsReport.from_predictions(probs.argmax(axis=1), dataset.labels(), dataset.n_classes,
                                          dataset.label_set)
