"""Training configuration and the two recipe presets."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from tfw.data.augment import AugmentSpec
from tfw.data.sampling import MODES
from tfw.errors import ConfigError
from tfw.models.spec import HEAD_KINDS, BackboneSpec, HeadSpec, ModelSpec

OPTIMIZERS = ("sgd", "adam")
DTYPES = {"float32": np.float32, "float64": np.float64}
SEQUENCE_KINDS = ("gru", "gru_tfw", "attention")
_HEAD_OPTIONS = ("hidden", "weave_k", "weave_order", "token_dim", "n_heads", "fc_dim")


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "image"
    optimizer: str = "sgd"
    max_lr: float = 0.08
    momentum: float = 0.75  # SGD momentum, or Adam beta1
    l2: float = 5e-4
    dropout: float = 0.6
    batch_size: int = 16
    epochs: int = 50
    cycle_epochs: int = 10  # one triangular LR cycle per this many epochs
    schedule: str = "cyclic"
    sampling_mode: str = "consecutive"
    n_frames: int = 4
    seed: int = 0
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    resize_to: int | None = None  # resize then crop to crop_to; None keeps frames as stored
    crop_to: int | None = None
    freeze_backbone: bool = False
    dtype: str = "float32"
    pretrain: "TrainConfig | None" = None  # classifier trained first to initialize the backbone
    hidden: int | None = None
    weave_k: int | None = None
    weave_order: str | None = None
    token_dim: int | None = None
    n_heads: int | None = None
    fc_dim: int | None = None

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {HEAD_KINDS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.schedule not in ("cyclic", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}; expected 'cyclic' or 'constant'")
        if self.sampling_mode not in MODES:
            raise ConfigError(f"unknown sampling mode {self.sampling_mode!r}; expected one of {MODES}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")
        if self.max_lr < 0 or self.l2 < 0:
            raise ConfigError("max_lr and l2 must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum/beta1 must be in [0, 1), got {self.momentum}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("batch_size", "epochs", "cycle_epochs", "n_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if (self.resize_to is None) != (self.crop_to is None):
            raise ConfigError("resize_to and crop_to must be given together")
        if self.crop_to is not None and not 0 < self.crop_to <= self.resize_to:
            raise ConfigError(f"need 0 < crop_to <= resize_to, got {self.crop_to}, {self.resize_to}")
        if self.pretrain is not None and self.pretrain.kind not in ("image", "mean_vote"):
            raise ConfigError("pretrain must be a single-frame classifier config")
        self.head_spec(2)  # validates head options against the kind

    @property
    def sequence(self) -> bool:
        return self.kind in SEQUENCE_KINDS

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def head_spec(self, n_classes: int) -> HeadSpec:
        opts = {k: getattr(self, k) for k in _HEAD_OPTIONS if getattr(self, k) is not None}
        return HeadSpec(self.kind, n_classes, dropout=self.dropout, n_frames=self.n_frames, **opts)

    def model_spec(self, n_classes: int) -> ModelSpec:
        return ModelSpec(self.head_spec(n_classes), self.backbone)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["backbone"] = asdict(self.backbone)
        d["backbone"]["stages"] = [list(s) for s in self.backbone.stages]
        d["augment"] = asdict(self.augment)
        if self.augment.scale_range is not None:
            d["augment"]["scale_range"] = list(self.augment.scale_range)
        d["pretrain"] = self.pretrain.to_dict() if self.pretrain else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if isinstance(d.get("backbone"), dict):
                d["backbone"] = BackboneSpec(**d["backbone"])
            if isinstance(d.get("augment"), dict):
                aug = dict(d["augment"])
                if aug.get("scale_range") is not None:
                    aug["scale_range"] = tuple(aug["scale_range"])
                d["augment"] = AugmentSpec(**aug)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(d.get("pretrain"), dict):
            d["pretrain"] = cls.from_dict(d["pretrain"])
        return cls(**d)


def classifier_preset(**overrides) -> TrainConfig:
    """Single-frame recipe: SGD, cyclic LR peaking at 0.08, momentum 0.75, L2 5e-4, dropout 0.6, 50 epochs."""
    base = dict(kind="image", optimizer="sgd", max_lr=0.08, momentum=0.75, l2=5e-4, dropout=0.6,
                batch_size=16, epochs=50)
    return TrainConfig(**{**base, **overrides})


def sequence_preset(kind: str = "gru_tfw", **overrides) -> TrainConfig:
    """Sequence recipe: Adam, cyclic LR peaking at 0.003, beta1 0.75, L2 1e-3, dropout 0.5, 60 epochs.

    The backbone starts from a classifier trained with :func:`classifier_preset`
    on the same training split and is fine-tuned together with the head.
    """
    base = dict(kind=kind, optimizer="adam", max_lr=0.003, momentum=0.75, l2=1e-3, dropout=0.5,
                batch_size=16, epochs=60)
    if "pretrain" not in overrides:
        pre = {k: overrides[k] for k in ("seed", "backbone", "resize_to", "crop_to", "dtype") if k in overrides}
        base["pretrain"] = classifier_preset(**pre)
    return TrainConfig(**{**base, **overrides})


PRESETS = {"classifier": classifier_preset, "gru": lambda **kw: sequence_preset("gru", **kw),
           "gru_tfw": lambda **kw: sequence_preset("gru_tfw", **kw),
           "attention": lambda **kw: sequence_preset("attention", **kw)}
