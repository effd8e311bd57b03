"""Sequence-wide augmentation and frame geometry.

A single parameter draw is made per sequence and the identical transform is
applied to every frame, so motion between frames is never distorted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from tfw.data.sampling import FrameSequence
from tfw.errors import ConfigError


@dataclass(frozen=True)
class AugmentSpec:
    rotation_max_deg: float = 0.0  # angle drawn uniformly from [-max, max]
    auto_contrast: bool = False
    scale_range: tuple[float, float] | None = None
    shift_range: float | None = None  # max shift as a fraction of the frame size
    hflip_prob: float = 0.0
    vflip_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rotation_max_deg < 360.0:
            raise ConfigError(f"rotation_max_deg must be in [0, 360), got {self.rotation_max_deg}")
        if self.scale_range is not None:
            lo, hi = self.scale_range
            if not 0 < lo <= hi:
                raise ConfigError(f"invalid scale_range {self.scale_range}")
            object.__setattr__(self, "scale_range", (float(lo), float(hi)))
        if self.shift_range is not None and not 0 <= self.shift_range < 1:
            raise ConfigError(f"shift_range must be in [0, 1), got {self.shift_range}")
        for p in (self.hflip_prob, self.vflip_prob):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"flip probability {p} outside [0, 1]")

    @property
    def is_identity(self) -> bool:
        return (self.rotation_max_deg == 0 and not self.auto_contrast and self.scale_range in (None, (1.0, 1.0))
                and not self.shift_range and self.hflip_prob == 0 and self.vflip_prob == 0)


def _sample_zero_fill(frames, r, c):
    """Bilinear sample (N, H, W) frames at float coords; outside pixels read as 0."""
    _, H, W = frames.shape
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    fr, fc = r - r0, c - c0
    out = np.zeros((frames.shape[0],) + r.shape, dtype=np.float64)
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        rr = r0 + dr
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            cc = c0 + dc
            valid = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
            vals = frames[:, np.clip(rr, 0, H - 1), np.clip(cc, 0, W - 1)]
            out += (wr * wc * valid) * vals
    return out


def affine_frames(frames, angle_deg=0.0, scale=1.0, shift=(0.0, 0.0)):
    """Rotate (counter-clockwise) and scale about the frame centre, then shift by (rows, cols) pixels."""
    frames = np.asarray(frames)
    _, H, W = frames.shape
    cr, cc = (H - 1) / 2.0, (W - 1) / 2.0
    i, j = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    di = (i - shift[0] - cr) / scale
    dj = (j - shift[1] - cc) / scale
    t = math.radians(angle_deg)
    cos, sin = math.cos(t), math.sin(t)
    src_r = cr + cos * di + sin * dj
    src_c = cc - sin * di + cos * dj
    return _sample_zero_fill(frames, src_r, src_c).astype(frames.dtype)


def rotate(frame, angle_deg):
    frame = np.asarray(frame)
    return affine_frames(frame[None], angle_deg)[0]


def auto_contrast(frame):
    """Linear remap so the minimum goes to 0 and the maximum to 1; constant frames are returned as-is."""
    frame = np.asarray(frame)
    lo, hi = frame.min(), frame.max()
    if hi <= lo:
        return frame.copy()
    return ((frame - lo) / (hi - lo)).astype(frame.dtype)


def augment_frames(frames, spec: AugmentSpec, rng: np.random.Generator):
    frames = np.asarray(frames)
    if spec.is_identity:
        return frames.copy()
    angle = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg) if spec.rotation_max_deg else 0.0
    scale = rng.uniform(*spec.scale_range) if spec.scale_range else 1.0
    H, W = frames.shape[-2:]
    if spec.shift_range:
        shift = (rng.uniform(-1, 1) * spec.shift_range * H, rng.uniform(-1, 1) * spec.shift_range * W)
    else:
        shift = (0.0, 0.0)
    hflip = spec.hflip_prob > 0 and rng.random() < spec.hflip_prob
    vflip = spec.vflip_prob > 0 and rng.random() < spec.vflip_prob
    out = frames
    if angle or scale != 1.0 or shift != (0.0, 0.0):
        out = affine_frames(out, angle, scale, shift)
    if hflip:
        out = out[..., :, ::-1]
    if vflip:
        out = out[..., ::-1, :]
    if spec.auto_contrast:
        out = np.stack([auto_contrast(f) for f in out])
    return np.ascontiguousarray(out)


def augment_sequence(seq, spec: AugmentSpec, rng: np.random.Generator):
    """Apply one random draw of ``spec`` identically to every frame.

    Accepts a :class:`FrameSequence` or a bare (N, H, W) array and returns the same kind.
    """
    if isinstance(seq, FrameSequence):
        return replace(seq, frames=augment_frames(seq.frames, spec, rng))
    return augment_frames(seq, spec, rng)


def resize_bilinear(frames, out_h: int, out_w: int):
    """Half-pixel-centre bilinear resize with edge clamping; (..., H, W) -> (..., out_h, out_w)."""
    frames = np.asarray(frames)
    H, W = frames.shape[-2:]
    if (H, W) == (out_h, out_w):
        return frames.copy()

    def axis(n_in, n_out):
        src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = axis(H, out_h)
    c0, c1, fc = axis(W, out_w)
    top = frames[..., r0, :] * (1 - fr)[:, None] + frames[..., r1, :] * fr[:, None]
    out = top[..., c0] * (1 - fc) + top[..., c1] * fc
    return out.astype(frames.dtype)


def resize_then_crop(frame, resize_to: int, crop_to: int, rng: np.random.Generator | None = None,
                     center: bool = False):
    """Square bilinear resize, then a crop: random offset from ``rng``, centred when ``center`` or no rng.

    Works on a single (H, W) frame or a (N, H, W) sequence (one offset for all frames).
    """
    if crop_to > resize_to:
        raise ConfigError(f"crop {crop_to} larger than resize {resize_to}")
    out = resize_bilinear(frame, resize_to, resize_to)
    slack = resize_to - crop_to
    if center or rng is None:
        r = c = slack // 2
    else:
        r, c = (int(v) for v in rng.integers(0, slack + 1, size=2))
    return out[..., r:r + crop_to, c:c + crop_to]
