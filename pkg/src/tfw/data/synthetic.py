"""Synthetic viewpoint clips where some classes differ only in how they move.

Every class has a static template (a few Gaussian blobs) and one dynamic blob
whose size and brightness oscillate with a class-specific frequency. The two
classes of an ambiguous pair share the template and the dynamic blob exactly;
one oscillates slowly and the other quickly. With a random starting phase per
clip, any single frame of one class is reproducible by the other at the same
phase, so the pair can only be told apart from how frames change over time.

Per-patient jitter (intensity gain and a small offset of every structure)
makes clips of the same patient more alike than clips of different patients.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from tfw.data.index import NED12, ClipRecord, DatasetIndex, frame_name, write_frame, write_manifest
from tfw.errors import ConfigError

SLOW_FREQ = 1.0 / 16.0  # cycles per frame
FAST_FREQ = 1.0 / 4.0
OTHER_FREQS = (1.0 / 12.0, 1.0 / 8.0, 3.0 / 16.0, 1.0 / 5.0)


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 12
    n_patients: int = 20
    clips_per_patient: int = 4  # per class
    frames_per_clip: int = 16
    image_size: int = 32
    ambiguous_pairs: tuple | None = None  # None: two default pairs (one when < 4 classes)
    noise_level: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2 or self.n_patients < 1 or self.clips_per_patient < 1:
            raise ConfigError("need >= 2 classes, >= 1 patient and >= 1 clip per patient")
        if self.frames_per_clip < 8:
            raise ConfigError(f"frames_per_clip must be >= 8, got {self.frames_per_clip}")
        if self.image_size < 8:
            raise ConfigError("image_size must be >= 8")
        pairs = self.ambiguous_pairs
        if pairs is None:
            if self.n_classes == 12:
                pairs = ((0, 1), (9, 10))  # APICAL_4C_LVRV/APICAL_5C, PSAX_PAPS/PSAX_MV
            elif self.n_classes >= 4:
                pairs = ((0, 1), (2, 3))
            else:
                pairs = ((0, 1),)
        pairs = tuple(tuple(int(v) for v in p) for p in pairs)
        flat = [c for p in pairs for c in p]
        if any(len(p) != 2 or p[0] == p[1] for p in pairs):
            raise ConfigError(f"ambiguous pairs must be distinct class pairs: {pairs}")
        if any(not 0 <= c < self.n_classes for c in flat):
            raise ConfigError(f"ambiguous pairs {pairs} outside class range [0, {self.n_classes})")
        if len(set(flat)) != len(flat):
            raise ConfigError(f"a class may appear in at most one ambiguous pair: {pairs}")
        object.__setattr__(self, "ambiguous_pairs", pairs)
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")

    @property
    def class_names(self) -> tuple[str, ...]:
        if self.n_classes == 12:
            return NED12
        return tuple(f"C{i:02d}" for i in range(self.n_classes))

    @property
    def ambiguous_classes(self) -> set[int]:
        return {c for p in self.ambiguous_pairs for c in p}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ambiguous_pairs"] = [list(p) for p in self.ambiguous_pairs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ClassModel:
    static: tuple  # (row, col, sigma, amplitude) per blob
    dynamic: tuple  # (row, col, sigma, amplitude)
    freq: float  # cycles per frame


@dataclass(frozen=True)
class PatientJitter:
    gain: float = 1.0
    offset: tuple[float, float] = (0.0, 0.0)


def class_models(spec: SyntheticSpec) -> list[ClassModel]:
    rng = np.random.default_rng([spec.seed, 0])
    s = spec.image_size
    u = s / 32.0
    lo, hi = 5 * u, s - 1 - 5 * u
    models = []
    for _ in range(spec.n_classes):
        static = tuple((float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)),
                        float(rng.uniform(1.5, 3.0) * u), float(rng.uniform(0.35, 0.7))) for _ in range(3))
        dynamic = (float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)), float(rng.uniform(2.0, 3.0) * u), 0.7)
        models.append(ClassModel(static, dynamic, float(rng.choice(OTHER_FREQS))))
    for a, b in spec.ambiguous_pairs:
        models[a] = ClassModel(models[a].static, models[a].dynamic, SLOW_FREQ)
        models[b] = ClassModel(models[a].static, models[a].dynamic, FAST_FREQ)
    return models


def patient_jitter(spec: SyntheticSpec, patient: int) -> PatientJitter:
    rng = np.random.default_rng([spec.seed, 1, patient])
    u = spec.image_size / 32.0
    return PatientJitter(float(rng.uniform(0.85, 1.15)), tuple(float(v) for v in rng.uniform(-1.5, 1.5, 2) * u))


def _blob(grid_r, grid_c, r, c, sigma, amp):
    return amp * np.exp(-((grid_r - r) ** 2 + (grid_c - c) ** 2) / (2.0 * sigma * sigma))


def render_frame(model: ClassModel, jitter: PatientJitter, phase: float, size: int) -> np.ndarray:
    """Noise-free frame at motion phase ``phase`` (radians); values clipped to [0, 1]."""
    gr, gc = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float), indexing="ij")
    dr, dc = jitter.offset
    img = np.zeros((size, size))
    for r, c, sigma, amp in model.static:
        img += _blob(gr, gc, r + dr, c + dc, sigma, amp)
    opening = 0.5 * (1.0 + math.sin(phase))
    r, c, sigma, amp = model.dynamic
    img += _blob(gr, gc, r + dr, c + dc, sigma * (0.7 + 0.5 * opening), amp * (0.15 + 0.85 * opening))
    return np.clip(img * jitter.gain, 0.0, 1.0)


def render_clip(spec: SyntheticSpec, model: ClassModel, jitter: PatientJitter,
                rng: np.random.Generator) -> np.ndarray:
    phase0 = rng.uniform(0.0, 2.0 * math.pi)
    frames = []
    for t in range(spec.frames_per_clip):
        f = render_frame(model, jitter, phase0 + 2.0 * math.pi * model.freq * t, spec.image_size)
        if spec.noise_level:
            f = f + rng.normal(0.0, spec.noise_level, f.shape)
        frames.append(np.clip(f, 0.0, 1.0))
    return np.stack(frames)


def patient_name(p: int) -> str:
    return f"P{p:03d}"


def clip_name(cls: int, j: int) -> str:
    return f"c{cls:02d}_{j:02d}"


def gen_synthetic(spec: SyntheticSpec, root) -> DatasetIndex:
    """Render the dataset as 8-bit PNGs in the patient/viewpoint/clip tree.

    Also writes ``manifest.csv``, ``labels.txt`` and ``synthetic.json``.
    Returns the declared index (what ``load_index(root)`` must reproduce).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    root = root.resolve()
    models = class_models(spec)
    names = spec.class_names
    clips = []
    for p in range(spec.n_patients):
        jitter = patient_jitter(spec, p)
        for cls in range(spec.n_classes):
            for j in range(spec.clips_per_patient):
                rng = np.random.default_rng([spec.seed, 2, p, cls, j])
                frames = render_clip(spec, models[cls], jitter, rng)
                d = root / patient_name(p) / names[cls] / clip_name(cls, j)
                d.mkdir(parents=True, exist_ok=True)
                paths = []
                for t, f in enumerate(frames):
                    path = d / frame_name(t)
                    write_frame(path, f)
                    paths.append(path)
                clips.append(ClipRecord(patient_name(p), names[cls], clip_name(cls, j), tuple(paths)))
    clips.sort(key=lambda c: (c.patient_id, c.viewpoint, c.clip_id))
    index = DatasetIndex(clips, names)
    write_manifest(index, root)
    (root / "synthetic.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return index


def template_oracle(train_frames, train_labels, test_frames, n_classes: int) -> np.ndarray:
    """Nearest class-mean frame (L2) classifier: the single-frame chance baseline."""
    train_frames = np.asarray(train_frames, dtype=np.float64).reshape(len(train_frames), -1)
    test_frames = np.asarray(test_frames, dtype=np.float64).reshape(len(test_frames), -1)
    train_labels = np.asarray(train_labels)
    means = np.stack([train_frames[train_labels == c].mean(axis=0) for c in range(n_classes)])
    d = ((test_frames[:, None, :] - means[None]) ** 2).sum(axis=-1)
    return d.argmin(axis=1)
