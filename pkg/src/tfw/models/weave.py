"""Temporal feature weaving: a parameter-free regrouping of per-frame feature chunks.

Each frame's feature vector X_n (length D) is cut into K contiguous chunks
C_n1 .. C_nK of length D/K. Weaved vector k gathers chunk k of every frame in
time order: W_k = C_1k ‖ C_2k ‖ ... ‖ C_Nk. No arithmetic is performed; the
result is a permutation of the N*D input scalars.
"""
from __future__ import annotations

import numpy as np

from tfw.errors import ConfigError, DimensionError

ORDERS = ("natural", "reversed")


def chunk_size(d: int, k: int) -> int:
    if k < 1 or d % k:
        raise ConfigError(f"weave: feature length D={d} is not divisible by K={k}")
    return d // k


def weave(features, k: int, order: str = "natural"):
    """(..., N, D) -> (..., K, N*D/K).

    ``order`` selects the sequence order of the weaved rows fed downstream:
    ``"natural"`` is W_1..W_K, ``"reversed"`` is W_K..W_1.
    """
    x = np.asarray(features)
    if x.ndim < 2:
        raise DimensionError(f"weave expects (..., N, D) features, got shape {x.shape}")
    *lead, n, d = x.shape
    c = chunk_size(d, k)
    w = np.swapaxes(x.reshape(*lead, n, k, c), -3, -2).reshape(*lead, k, n * c)
    if order == "reversed":
        w = w[..., ::-1, :]
    elif order != "natural":
        raise ConfigError(f"unknown weave order {order!r}; expected one of {ORDERS}")
    return w


def unweave(weaved, n: int, d: int, k: int, order: str = "natural"):
    """Inverse of :func:`weave`: (..., K, N*D/K) -> (..., N, D)."""
    w = np.asarray(weaved)
    c = chunk_size(d, k)
    if w.ndim < 2 or w.shape[-2:] != (k, n * c):
        raise DimensionError(f"unweave: expected trailing shape ({k}, {n * c}) for N={n}, D={d}, K={k}, got {w.shape}")
    if order == "reversed":
        w = w[..., ::-1, :]
    *lead, _, _ = w.shape
    return np.swapaxes(w.reshape(*lead, k, n, c), -3, -2).reshape(*lead, n, d)


def weave_table(n: int, d: int, k: int) -> list[list[tuple[int, int]]]:
    """Source (frame, offset) of every position of every weaved row, 0-based."""
    src = np.stack(np.meshgrid(np.arange(n), np.arange(d), indexing="ij"), axis=-1)  # N, D, 2
    c = chunk_size(d, k)
    rows = np.swapaxes(src.reshape(n, k, c, 2), 0, 1).reshape(k, n * c, 2)
    return [[(int(f), int(o)) for f, o in row] for row in rows]
