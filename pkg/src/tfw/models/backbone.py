"""Desk-scale residual CNN used as the per-frame feature extractor."""
from __future__ import annotations

import numpy as np

from tfw.core import Conv2d, Dense, GlobalAvgPool, ParamStore, ReLU
from tfw.errors import DimensionError
from tfw.models.spec import BackboneSpec


class ResidualBlock:
    """out = skip(x) + conv2(relu(conv1(x))).

    The skip path is the identity when shapes match, otherwise a learned
    projection (2x2 stride-2 when downsampling, else 1x1). No activation is
    applied after the sum, so zeroed branch weights give out == x exactly.
    """

    def __init__(self, store, name, c_in, c_out, downsample, rng):
        if downsample:
            self.conv1 = Conv2d(store, f"{name}.conv1", c_in, c_out, 4, stride=2, pad=1, rng=rng)
        else:
            self.conv1 = Conv2d(store, f"{name}.conv1", c_in, c_out, 3, stride=1, pad=1, rng=rng)
        self.relu = ReLU()
        self.conv2 = Conv2d(store, f"{name}.conv2", c_out, c_out, 3, stride=1, pad=1, rng=rng)
        # scale the last conv down so the residual sum starts near the skip path
        self.conv2.W.value *= 0.5
        self.proj = None
        if downsample:
            self.proj = Conv2d(store, f"{name}.proj", c_in, c_out, 2, stride=2, rng=rng)
        elif c_in != c_out:
            self.proj = Conv2d(store, f"{name}.proj", c_in, c_out, 1, rng=rng)

    def layers(self):
        out = [self.conv1, self.relu, self.conv2]
        return out + ([self.proj] if self.proj else [])

    def branch_params(self):
        return self.conv1.params() + self.conv2.params()

    def forward(self, x):
        branch = self.conv2.forward(self.relu.forward(self.conv1.forward(x)))
        skip = self.proj.forward(x) if self.proj else x
        return skip + branch

    def backward(self, grad):
        dx = self.conv1.backward(self.relu.backward(self.conv2.backward(grad)))
        return dx + (self.proj.backward(grad) if self.proj else grad)


class Backbone:
    """frames (B, H, W) -> features (B, D)."""

    def __init__(self, spec: BackboneSpec, store: ParamStore, rng: np.random.Generator,
                 prefix: str = "backbone"):
        self.spec = spec
        self.stem = Conv2d(store, f"{prefix}.stem", 1, spec.stem_channels, 4, stride=2, pad=1, rng=rng)
        self.stem_relu = ReLU()
        self.blocks: list[ResidualBlock] = []
        c = spec.stem_channels
        for si, (ch, n_blocks, down) in enumerate(spec.stages):
            for bi in range(n_blocks):
                self.blocks.append(ResidualBlock(store, f"{prefix}.s{si}.b{bi}", c, ch,
                                                 bool(down) and bi == 0, rng))
                c = ch
        self.out_relu = ReLU()
        self.pool = GlobalAvgPool()
        self.proj = self.proj_relu = None
        if spec.feature_dim:
            self.proj = Dense(store, f"{prefix}.proj", c, spec.feature_dim, rng=rng)
            self.proj_relu = ReLU()
        self.dim = spec.dim

    def layers(self):
        out = [self.stem, self.stem_relu, self.out_relu, self.pool]
        for b in self.blocks:
            out += b.layers()
        if self.proj:
            out += [self.proj, self.proj_relu]
        return out

    def forward(self, frames):
        x = np.asarray(frames)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (self.spec.input_size, self.spec.input_size):
            raise DimensionError(
                f"backbone expects {self.spec.input_size}x{self.spec.input_size} frames, got {x.shape[-2:]}")
        x = self.stem_relu.forward(self.stem.forward(x[:, None]))
        for b in self.blocks:
            x = b.forward(x)
        f = self.pool.forward(self.out_relu.forward(x))
        if self.proj:
            f = self.proj_relu.forward(self.proj.forward(f))
        return f

    def backward(self, grad):
        if self.proj:
            grad = self.proj.backward(self.proj_relu.backward(grad))
        g = self.out_relu.backward(self.pool.backward(grad))
        for b in reversed(self.blocks):
            g = b.backward(g)
        g = self.stem.backward(self.stem_relu.backward(g))
        return g[:, 0]
