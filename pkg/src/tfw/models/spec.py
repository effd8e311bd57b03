"""Model topology descriptions and their JSON form."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from tfw.errors import ConfigError

HEAD_KINDS = ("image", "mean_vote", "gru", "gru_tfw", "attention")


@dataclass(frozen=True)
class BackboneSpec:
    """Residual CNN: stride-2 stem, then stages of (channels, blocks, downsample)."""

    input_size: int = 32
    stem_channels: int = 8
    stages: tuple = ((8, 1, False), (16, 1, True), (32, 1, True))
    feature_dim: int | None = 64  # None: no projection, D = last stage channels

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(s) for s in self.stages))
        if not self.stages:
            raise ConfigError("backbone needs at least one stage")
        for ch, blocks, down in self.stages:
            if ch < 1 or blocks < 1:
                raise ConfigError(f"invalid stage {(ch, blocks, down)}")

    @property
    def dim(self) -> int:
        return self.feature_dim if self.feature_dim else self.stages[-1][0]


@dataclass(frozen=True)
class HeadSpec:
    kind: str
    n_classes: int
    dropout: float = 0.5
    n_frames: int = 4
    hidden: int | None = None  # gru kinds
    weave_k: int | None = None  # gru_tfw; defaults to n_frames
    weave_order: str | None = None  # gru_tfw
    token_dim: int | None = None  # attention
    n_heads: int | None = None  # attention
    fc_dim: int | None = None  # attention

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {self.kind!r}; expected one of {HEAD_KINDS}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        allowed = {
            "image": set(), "mean_vote": set(),
            "gru": {"hidden"},
            "gru_tfw": {"hidden", "weave_k", "weave_order"},
            "attention": {"token_dim", "n_heads", "fc_dim"},
        }[self.kind]
        for name in ("hidden", "weave_k", "weave_order", "token_dim", "n_heads", "fc_dim"):
            if getattr(self, name) is not None and name not in allowed:
                raise ConfigError(f"{name} is not valid for head kind {self.kind!r}")
        defaults = {"hidden": 32, "weave_k": self.n_frames, "weave_order": "natural", "n_heads": 4}
        for name in allowed:
            if getattr(self, name) is None and name in defaults:
                object.__setattr__(self, name, defaults[name])


@dataclass(frozen=True)
class ModelSpec:
    head: HeadSpec
    backbone: BackboneSpec = field(default_factory=BackboneSpec)

    @property
    def kind(self) -> str:
        return self.head.kind

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"]["stages"] = [list(s) for s in self.backbone.stages]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(head=HeadSpec(**d["head"]), backbone=BackboneSpec(**d.get("backbone", {})))

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))
