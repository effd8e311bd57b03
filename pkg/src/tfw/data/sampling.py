"""Choosing which frames of a clip form a sequence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfw.data.index import ClipRecord

MODES = ("consecutive", "spaced")


def _length(clip) -> tuple[int, str]:
    if isinstance(clip, ClipRecord):
        return len(clip), f"{clip.patient_id}/{clip.clip_id}"
    return int(clip), "clip"


def sample_consecutive(clip, n: int, rng: np.random.Generator) -> list[int]:
    """n adjacent frame indices starting at a uniformly drawn valid offset."""
    length, name = _length(clip)
    if length < n:
        raise ValueError(f"{name} has {length} frames, fewer than the {n} requested")
    start = int(rng.integers(0, length - n + 1))
    return list(range(start, start + n))


def sample_spaced(clip, n: int) -> list[int]:
    """Endpoint-inclusive even spacing: round_half_up(i * (L - 1) / (n - 1))."""
    length, name = _length(clip)
    if length < n:
        raise ValueError(f"{name} has {length} frames, fewer than the {n} requested")
    if n == 1:
        return [0]
    # integer arithmetic keeps the .5 ties exact
    return [(2 * i * (length - 1) + (n - 1)) // (2 * (n - 1)) for i in range(n)]


def sample_indices(clip, n: int, mode: str, rng: np.random.Generator) -> list[int]:
    if mode == "consecutive":
        return sample_consecutive(clip, n, rng)
    if mode == "spaced":
        return sample_spaced(clip, n)
    raise ValueError(f"unknown sampling mode {mode!r}; expected one of {MODES}")


@dataclass
class FrameSequence:
    frames: np.ndarray  # (N, H, W) in [0, 1]
    clip: ClipRecord
    label: int
    sampling_mode: str
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"frames must be (N>=1, H, W), got {self.frames.shape}")


def load_sequence(index, clip: ClipRecord, n: int, mode: str, rng) -> FrameSequence:
    idx = sample_indices(clip, n, mode, rng)
    return FrameSequence(index.frames(clip)[idx], clip, index.label(clip), mode, tuple(idx))
