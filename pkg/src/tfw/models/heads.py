"""Complete models: backbone plus one of the classification heads.

Every model exposes the same two-stage interface so a frozen backbone's
features can be cached and only the head trained:

    feats  = model.features(x)                 # no caches kept
    logits = model.head_logits(feats, training)
    dfeats = model.head_backward(dlogits)
"""
from __future__ import annotations

import numpy as np

from tfw.core import Dense, Dropout, GRUCell, MeanPool, MultiHeadSelfAttention, ParamStore, ReLU, softmax
from tfw.errors import ConfigError, DimensionError
from tfw.models.backbone import Backbone
from tfw.models.spec import ModelSpec
from tfw.models.weave import unweave, weave


def mean_vote(prob_rows):
    """Average N per-frame probability vectors into one clip-level vector."""
    rows = [np.asarray(r, dtype=float) for r in prob_rows]
    if not rows:
        raise DimensionError("mean_vote needs at least one row")
    if len({r.shape for r in rows}) != 1:
        raise DimensionError(f"mean_vote: inconsistent row shapes {[r.shape for r in rows]}")
    return np.mean(rows, axis=0)


class Model:
    sequence = True

    def __init__(self, spec: ModelSpec, dtype=np.float64, seed: int = 0):
        self.spec = spec
        self.store = ParamStore(dtype)
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(spec.backbone, self.store, rng)
        self.dim = self.backbone.dim
        self.rng = np.random.default_rng([seed, 1])  # dropout masks
        self._build_head(rng)

    @property
    def kind(self) -> str:
        return self.spec.kind

    def _build_head(self, rng):
        raise NotImplementedError

    def head_layers(self) -> list:
        raise NotImplementedError

    def layers(self):
        return self.backbone.layers() + self.head_layers()

    def clear(self):
        for layer in self.layers():
            layer.clear()

    def param_count(self) -> int:
        return self.store.count()

    def head_store(self) -> ParamStore:
        return self.store.subset("head.")

    def _cast(self, x):
        return np.asarray(x, dtype=self.store.dtype)

    # -- backbone stage
    def _backbone_forward(self, x):
        x = self._cast(x)
        if self.sequence:
            if x.ndim == 3:
                x = x[None]
            b, n = x.shape[:2]
            return self.backbone.forward(x.reshape(b * n, *x.shape[2:])).reshape(b, n, -1)
        return self.backbone.forward(x)

    def _backbone_backward(self, dfeats):
        if self.sequence:
            b, n, d = dfeats.shape
            return self.backbone.backward(dfeats.reshape(b * n, d)).reshape(b, n, *self.backbone_input_shape)
        return self.backbone.backward(dfeats)

    @property
    def backbone_input_shape(self):
        s = self.spec.backbone.input_size
        return (s, s)

    def features(self, x):
        """Backbone features without retaining caches."""
        f = self._backbone_forward(x)
        self.backbone_clear()
        return f

    def backbone_clear(self):
        for layer in self.backbone.layers():
            layer.clear()

    # -- full model
    def logits(self, x, training: bool = False):
        return self.head_logits(self._backbone_forward(x), training)

    def backward(self, dlogits):
        return self._backbone_backward(self.head_backward(dlogits))

    def predict_proba(self, x):
        p = softmax(self.logits(x, training=False))
        self.clear()
        return p

    def head_proba(self, feats):
        p = softmax(self.head_logits(self._cast(feats), training=False))
        for layer in self.head_layers():
            layer.clear()
        return p


class ImageClassifier(Model):
    """Single frame: backbone -> dropout -> dense -> softmax."""

    sequence = False

    def _build_head(self, rng):
        self.dropout = Dropout(self.spec.head.dropout, rng=self.rng)
        self.fc = Dense(self.store, "head.fc", self.dim, self.spec.head.n_classes, rng=rng, init="xavier")

    def head_layers(self):
        return [self.dropout, self.fc]

    def head_logits(self, feats, training=False):
        return self.fc.forward(self.dropout.forward(feats, training))

    def head_backward(self, dlogits):
        return self.dropout.backward(self.fc.backward(dlogits))

    def classify_image(self, frame):
        return self.predict_proba(frame)


class GRUSequenceModel(Model):
    """Backbone per frame -> (optional weave) -> GRU -> dense head on every step.

    The prediction is the final step's probabilities. With ``gru_tfw`` and
    K == N the GRU input size equals D, so the plain and weaved variants have
    identical parameter counts.
    """

    def _build_head(self, rng):
        h = self.spec.head
        self.weaved = h.kind == "gru_tfw"
        n, d = h.n_frames, self.dim
        if self.weaved:
            if d % h.weave_k:
                raise ConfigError(f"weave: feature length D={d} is not divisible by K={h.weave_k}")
            self.steps, self.d_in = h.weave_k, n * d // h.weave_k
        else:
            self.steps, self.d_in = n, d
        self.gru = GRUCell(self.store, "head.gru", self.d_in, h.hidden, rng=rng)
        self.dropout = Dropout(h.dropout, rng=self.rng)
        self.fc = Dense(self.store, "head.fc", h.hidden, h.n_classes, rng=rng, init="xavier")
        self._n = n

    def head_layers(self):
        return [self.gru, self.dropout, self.fc]

    def rows(self, feats):
        h = self.spec.head
        if feats.shape[-2] != self._n:
            raise DimensionError(f"model expects {self._n} frames, got {feats.shape[-2]}")
        return weave(feats, h.weave_k, h.weave_order) if self.weaved else feats

    def _unrows(self, drows):
        h = self.spec.head
        return unweave(drows, self._n, self.dim, h.weave_k, h.weave_order) if self.weaved else drows

    def _run(self, rows):
        if rows.shape[-2] == 0:
            raise DimensionError("empty sequence")
        if rows.shape[-1] != self.d_in:
            raise DimensionError(f"gru expects rows of length {self.d_in}, got {rows.shape[-1]}")
        h = np.zeros(rows.shape[:-2] + (self.spec.head.hidden,), dtype=rows.dtype)
        states = []
        for t in range(rows.shape[-2]):
            h = self.gru.forward(rows[..., t, :], h)
            states.append(h)
        return states

    def forward_rows(self, rows, training: bool = False):
        """Returns (per-step probabilities (..., T, C), final probabilities)."""
        rows = self._cast(rows)
        states = self._run(rows)
        W, b = self.fc.W.value, self.fc.b.value
        per_step = np.stack([softmax(s @ W.T + b) for s in states[:-1]]
                            + [softmax(self.fc.forward(self.dropout.forward(states[-1], training)))], axis=-2)
        for layer in self.head_layers():
            layer.clear()
        return per_step, per_step[..., -1, :]

    def head_logits(self, feats, training=False):
        states = self._run(self.rows(feats))
        return self.fc.forward(self.dropout.forward(states[-1], training))

    def head_backward(self, dlogits):
        dh = self.dropout.backward(self.fc.backward(dlogits))
        drows = []
        for _ in range(self.steps):
            dx, dh = self.gru.backward(dh)
            drows.append(dx)
        return self._unrows(np.stack(drows[::-1], axis=-2))


class AttentionModel(Model):
    """Concatenated frame features cut into tokens -> self-attention -> mean pool -> 2 dense layers."""

    def _build_head(self, rng):
        h = self.spec.head
        n, d = h.n_frames, self.dim
        self.token_dim = h.token_dim or max(1, d // 4)
        self.fc_dim = h.fc_dim or d
        if (n * d) % self.token_dim:
            raise ConfigError(f"attention: N*D = {n * d} not divisible by token_dim {self.token_dim}")
        self.n_tokens = n * d // self.token_dim
        self.attn = MultiHeadSelfAttention(self.store, "head.attn", self.token_dim, h.n_heads,
                                           self.n_tokens, rng=rng)
        self.pool = MeanPool()
        self.fc1 = Dense(self.store, "head.fc1", self.token_dim, self.fc_dim, rng=rng)
        self.relu = ReLU()
        self.dropout = Dropout(h.dropout, rng=self.rng)
        self.fc2 = Dense(self.store, "head.fc2", self.fc_dim, h.n_classes, rng=rng, init="xavier")
        self._n = n

    def head_layers(self):
        return [self.attn, self.pool, self.fc1, self.relu, self.dropout, self.fc2]

    def head_logits(self, feats, training=False):
        if feats.shape[-2] != self._n:
            raise DimensionError(f"model expects {self._n} frames, got {feats.shape[-2]}")
        lead = feats.shape[:-2]
        tokens = feats.reshape(*lead, self.n_tokens, self.token_dim)
        x = self.pool.forward(self.attn.forward(tokens))
        x = self.dropout.forward(self.relu.forward(self.fc1.forward(x)), training)
        return self.fc2.forward(x)

    def head_backward(self, dlogits):
        g = self.fc1.backward(self.relu.backward(self.dropout.backward(self.fc2.backward(dlogits))))
        g = self.attn.backward(self.pool.backward(g))
        return g.reshape(*g.shape[:-2], self._n, self.dim)


def build_model(spec: ModelSpec, dtype=np.float64, seed: int = 0) -> Model:
    cls = {"image": ImageClassifier, "mean_vote": ImageClassifier, "gru": GRUSequenceModel,
           "gru_tfw": GRUSequenceModel, "attention": AttentionModel}[spec.kind]
    return cls(spec, dtype=dtype, seed=seed)


def param_count(model: Model) -> int:
    return model.param_count()
