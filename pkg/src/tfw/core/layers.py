"""Differentiable layers with hand-written backward passes.

Every layer keeps a LIFO stack of forward caches: ``forward`` pushes, ``backward``
pops. A recurrent cell unrolled T times is therefore back-propagated by calling
``backward`` T times in reverse step order. Parameter gradients accumulate
(``+=``) into the owning :class:`ParamStore`.

All layers accept a leading batch axis; single samples work as well.
"""
from __future__ import annotations

import math

import numpy as np

from tfw.core.params import Param, ParamStore, record_macs
from tfw.errors import ConfigError, DimensionError, StateError


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class Layer:
    def __init__(self):
        self._caches: list = []

    def _push(self, cache) -> None:
        self._caches.append(cache)

    def _pop(self):
        if not self._caches:
            raise StateError(f"{type(self).__name__}.backward called with no retained forward")
        return self._caches.pop()

    def clear(self) -> None:
        self._caches.clear()

    def params(self) -> list[Param]:
        return []


class Dense(Layer):
    """y = W x + b with W of shape (d_out, d_in)."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator | None = None, init: str = "he"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out = d_in, d_out
        if init == "he":
            w = rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_out, d_in))
        elif init == "xavier":
            w = rng.normal(0.0, math.sqrt(2.0 / (d_in + d_out)), size=(d_out, d_in))
        elif init == "zeros":
            w = np.zeros((d_out, d_in))
        else:
            raise ConfigError(f"unknown init {init!r}")
        self.W = store.add(f"{name}.W", w)
        self.b = store.add(f"{name}.b", np.zeros(d_out), decay=False)

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"dense: W has shape {self.W.value.shape} but x has shape {x.shape}")
        record_macs("dense", (x.size // self.d_in) * self.d_in * self.d_out)
        self._push(x)
        return x @ self.W.value.T + self.b.value

    def backward(self, grad):
        x = self._pop()
        g2 = grad.reshape(-1, self.d_out)
        self.W.grad += g2.T @ x.reshape(-1, self.d_in)
        self.b.grad += g2.sum(axis=0)
        return grad @ self.W.value


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0 or span % stride:
        raise ConfigError(
            f"conv: (size {size} + 2*pad {pad} - k {k}) / stride {stride} is not a non-negative integer")
    return span // stride + 1


class Conv2d(Layer):
    """Cross-correlation with kernels (c_out, c_in, k, k) via im2col."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, k: int,
                 stride: int = 1, pad: int = 0, rng: np.random.Generator | None = None,
                 init: str = "he"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in, self.c_out, self.k, self.stride, self.pad = c_in, c_out, k, stride, pad
        shape = (c_out, c_in, k, k)
        if init == "he":
            w = rng.normal(0.0, math.sqrt(2.0 / (c_in * k * k)), size=shape)
        elif init == "zeros":
            w = np.zeros(shape)
        else:
            raise ConfigError(f"unknown init {init!r}")
        self.W = store.add(f"{name}.W", w)
        self.b = store.add(f"{name}.b", np.zeros(c_out), decay=False)

    def params(self):
        return [self.W, self.b]

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        return (conv_output_size(h, self.k, self.stride, self.pad),
                conv_output_size(w, self.k, self.stride, self.pad))

    def forward(self, x):
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise DimensionError(f"conv: kernels {self.W.value.shape} vs input {x.shape}")
        B, C, H, W = x.shape
        Ho, Wo = self.out_shape(H, W)
        k, s, p = self.k, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, : s * (Ho - 1) + 1: s, : s * (Wo - 1) + 1: s]  # B,C,Ho,Wo,k,k
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(C * k * k, B * Ho * Wo)
        out = self.W.value.reshape(self.c_out, -1) @ cols
        out = out.reshape(self.c_out, B, Ho, Wo).transpose(1, 0, 2, 3) + self.b.value[:, None, None]
        record_macs("conv2d", B * self.c_out * Ho * Wo * C * k * k)
        self._push((cols, x.shape, single))
        return out[0] if single else out

    def backward(self, grad):
        cols, xshape, single = self._pop()
        if single:
            grad = grad[None]
        B, C, H, W = xshape
        _, _, Ho, Wo = grad.shape
        k, s, p = self.k, self.stride, self.pad
        g2 = grad.transpose(1, 0, 2, 3).reshape(self.c_out, -1)
        self.W.grad += (g2 @ cols.T).reshape(self.W.value.shape)
        self.b.grad += g2.sum(axis=1)
        dcols = (self.W.value.reshape(self.c_out, -1).T @ g2).reshape(C, k, k, B, Ho, Wo)
        dxp = np.zeros((B, C, H + 2 * p, W + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i: i + s * (Ho - 1) + 1: s, j: j + s * (Wo - 1) + 1: s] += \
                    dcols[:, i, j].transpose(1, 0, 2, 3)
        dx = dxp[:, :, p: p + H, p: p + W] if p else dxp
        return dx[0] if single else dx


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        self._push(mask)
        return x * mask

    def backward(self, grad):
        return grad * self._pop()


class GlobalAvgPool(Layer):
    """(..., C, H, W) -> (..., C)."""

    def forward(self, x):
        self._push(x.shape)
        return x.mean(axis=(-2, -1))

    def backward(self, grad):
        shape = self._pop()
        hw = shape[-1] * shape[-2]
        return np.broadcast_to((grad / hw)[..., None, None], shape).copy()


class MaxPool2d(Layer):
    """Non-overlapping k x k max pooling; H and W must be multiples of k."""

    def __init__(self, k: int = 2):
        super().__init__()
        self.k = k

    def forward(self, x):
        k = self.k
        *lead, H, W = x.shape
        if H % k or W % k:
            raise ConfigError(f"maxpool: {H}x{W} not divisible by {k}")
        blocks = x.reshape(*lead, H // k, k, W // k, k)
        blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, H // k, W // k, k * k)
        idx = blocks.argmax(axis=-1)
        self._push((idx, x.shape))
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        idx, shape = self._pop()
        k = self.k
        *lead, H, W = shape
        blocks = np.zeros((*lead, H // k, W // k, k * k), dtype=grad.dtype)
        np.put_along_axis(blocks, idx[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(*lead, H // k, W // k, k, k)
        return np.moveaxis(blocks, -2, -3).reshape(shape)


class Dropout(Layer):
    """Inverted dropout; identity when not training or p == 0."""

    def __init__(self, p: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout p must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, training: bool = False):
        if not training or self.p == 0.0:
            self._push(None)
            return x
        mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        self._push(mask)
        return x * mask

    def backward(self, grad):
        mask = self._pop()
        return grad if mask is None else grad * mask


class GRUCell(Layer):
    """Gated recurrent unit.

    z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
    h~ = tanh(Wh x + Uh (r*h) + bh), h' = (1 - z) h + z h~.

    Gate weights are stored stacked in z, r, h order: ``W`` (3H, D),
    ``U`` (3H, H), ``b`` (3H).
    """

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.hidden = d_in, hidden
        bound = 1.0 / math.sqrt(hidden)
        self.W = store.add(f"{name}.W", rng.uniform(-bound, bound, (3 * hidden, d_in)))
        self.U = store.add(f"{name}.U", rng.uniform(-bound, bound, (3 * hidden, hidden)))
        self.b = store.add(f"{name}.b", np.zeros(3 * hidden), decay=False)

    def params(self):
        return [self.W, self.U, self.b]

    def forward(self, x, h):
        H = self.hidden
        if x.shape[-1] != self.d_in or h.shape[-1] != H or x.shape[:-1] != h.shape[:-1]:
            raise DimensionError(
                f"gru: W {self.W.value.shape}, U {self.U.value.shape} vs x {x.shape}, h {h.shape}")
        U = self.U.value
        gx = x @ self.W.value.T + self.b.value
        gzr = h @ U[: 2 * H].T
        z = sigmoid(gx[..., :H] + gzr[..., :H])
        r = sigmoid(gx[..., H: 2 * H] + gzr[..., H:])
        rh = r * h
        ht = np.tanh(gx[..., 2 * H:] + rh @ U[2 * H:].T)
        h_new = (1.0 - z) * h + z * ht
        n = x.size // self.d_in
        record_macs("gru", n * 3 * H * (self.d_in + H))
        self._push((x, h, z, r, rh, ht))
        return h_new

    def backward(self, grad):
        """Returns (grad_x, grad_h_prev)."""
        x, h, z, r, rh, ht = self._pop()
        H = self.hidden
        U = self.U.value
        dz = grad * (ht - h)
        dht = grad * z
        dh = grad * (1.0 - z)
        dhp = dht * (1.0 - ht * ht)
        drh = dhp @ U[2 * H:]
        dr = drh * h
        dh = dh + drh * r
        dzp = dz * z * (1.0 - z)
        drp = dr * r * (1.0 - r)
        dzr = np.concatenate([dzp, drp], axis=-1)
        dg = np.concatenate([dzp, drp, dhp], axis=-1)
        dg2 = dg.reshape(-1, 3 * H)
        self.W.grad += dg2.T @ x.reshape(-1, self.d_in)
        self.b.grad += dg2.sum(axis=0)
        self.U.grad[: 2 * H] += dzr.reshape(-1, 2 * H).T @ h.reshape(-1, H)
        self.U.grad[2 * H:] += dhp.reshape(-1, H).T @ rh.reshape(-1, H)
        dh = dh + dzr @ U[: 2 * H]
        dx = dg @ self.W.value
        return dx, dh


class SoftmaxCrossEntropy(Layer):
    """Mean cross-entropy over the batch; ``forward`` returns (loss, probs)."""

    def forward(self, logits, labels):
        single = logits.ndim == 1
        lg = logits[None] if single else logits
        labels = np.atleast_1d(np.asarray(labels))
        C = lg.shape[-1]
        if labels.shape[0] != lg.shape[0]:
            raise DimensionError(f"softmax_ce: {lg.shape[0]} logits rows vs {labels.shape[0]} labels")
        if np.any(labels < 0) or np.any(labels >= C):
            raise IndexError(f"label out of range [0, {C}): {labels.tolist()}")
        shifted = lg - lg.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        logp = shifted - logz
        probs = np.exp(logp)
        rows = np.arange(lg.shape[0])
        loss = float(-logp[rows, labels].mean())
        self._push((probs, labels, single))
        return loss, (probs[0] if single else probs)

    def backward(self, grad: float = 1.0):
        probs, labels, single = self._pop()
        d = probs.copy()
        d[np.arange(len(labels)), labels] -= 1.0
        d *= grad / len(labels)
        return d[0] if single else d


class MeanPool(Layer):
    """Mean over the token axis (-2): (B, T, E) -> (B, E)."""

    def forward(self, x):
        self._push(x.shape)
        return x.mean(axis=-2)

    def backward(self, grad):
        shape = self._pop()
        return np.broadcast_to(grad[..., None, :] / shape[-2], shape).copy()


class MultiHeadSelfAttention(Layer):
    """Scaled dot-product self-attention over (B, T, E) tokens.

    A learned positional embedding (T, E) is added to the tokens first.
    ``last_attention`` holds the (B, heads, T, T) weights of the latest forward.
    """

    def __init__(self, store: ParamStore, name: str, dim: int, n_heads: int, n_tokens: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if dim % n_heads:
            raise ConfigError(f"attention: dim {dim} not divisible by heads {n_heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim, self.n_heads, self.n_tokens = dim, n_heads, n_tokens
        self.head_dim = dim // n_heads
        std = math.sqrt(1.0 / dim)
        self.pos = store.add(f"{name}.pos", rng.normal(0.0, 0.02, (n_tokens, dim)), decay=False)
        # Keys get no bias: q.(k + b) shifts every score of a row by q.b, which
        # softmax ignores, so such a bias would have an identically zero gradient.
        self.proj = {}
        for key in ("q", "k", "v", "o"):
            w = store.add(f"{name}.W{key}", rng.normal(0.0, std, (dim, dim)))
            b = None if key == "k" else store.add(f"{name}.b{key}", np.zeros(dim), decay=False)
            self.proj[key] = (w, b)
        self.last_attention = None

    def params(self):
        out = [self.pos]
        for w, b in self.proj.values():
            out += [w] if b is None else [w, b]
        return out

    def _split(self, t):
        B, T, _ = t.shape
        return t.reshape(B, T, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, t):
        B, h, T, d = t.shape
        return t.transpose(0, 2, 1, 3).reshape(B, T, h * d)

    def forward(self, x):
        single = x.ndim == 2
        if single:
            x = x[None]
        B, T, E = x.shape
        if T != self.n_tokens or E != self.dim:
            raise DimensionError(f"attention: expects ({self.n_tokens}, {self.dim}) tokens, got {x.shape}")
        xp = x + self.pos.value
        q, k, v = (self._split(xp @ w.value.T + (0.0 if b is None else b.value)) for w, b in
                   (self.proj["q"], self.proj["k"], self.proj["v"]))
        scale = 1.0 / math.sqrt(self.head_dim)
        att = softmax(q @ k.transpose(0, 1, 3, 2) * scale, axis=-1)
        o = self._merge(att @ v)
        wo, bo = self.proj["o"]
        y = o @ wo.value.T + bo.value
        record_macs("attention", B * (4 * T * E * E + 2 * self.n_heads * T * T * self.head_dim))
        self.last_attention = att
        self._push((xp, q, k, v, att, o, single))
        return y[0] if single else y

    def backward(self, grad):
        xp, q, k, v, att, o, single = self._pop()
        if single:
            grad = grad[None]
        E = self.dim
        wo, bo = self.proj["o"]
        g2 = grad.reshape(-1, E)
        wo.grad += g2.T @ o.reshape(-1, E)
        bo.grad += g2.sum(axis=0)
        do = self._split(grad @ wo.value)
        datt = do @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ do
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) / math.sqrt(self.head_dim)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dx = np.zeros_like(xp)
        x2 = xp.reshape(-1, E)
        for key, d in (("q", dq), ("k", dk), ("v", dv)):
            w, b = self.proj[key]
            dm = self._merge(d)
            w.grad += dm.reshape(-1, E).T @ x2
            if b is not None:
                b.grad += dm.reshape(-1, E).sum(axis=0)
            dx += dm @ w.value
        self.pos.grad += dx.sum(axis=0)
        return dx[0] if single else dx
