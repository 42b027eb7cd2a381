"""Aspect sentiment classifiers: Majority, NBOW, LSTM, AT-LSTM, ATAE-LSTM, AF-LSTM.

All layer functions take a leading batch axis ``B``.  Sequences are stored
``[B, L, d]`` (one row per position) and every weight is applied on the
right as ``x @ W.T`` so the stored shapes read like the usual column-vector
equations (``W_y`` is ``d x d``, ``W_f`` is ``K x d``).
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from . import autograd as ag
from .autograd import DimensionError, Parameter, Tensor
from .data import PAD, Batch
from .holo import FusionOperator, associate, norm_clip


class ModelVariant(str, enum.Enum):
    MAJORITY = "majority"
    NBOW = "nbow"
    LSTM = "lstm"
    AT_LSTM = "at-lstm"
    ATAE_LSTM = "atae-lstm"
    AF_LSTM = "af-lstm"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; expected one of "
                             f"{', '.join(v.value for v in cls)}") from None

    @property
    def has_attention(self) -> bool:
        return self in (ModelVariant.AT_LSTM, ModelVariant.ATAE_LSTM, ModelVariant.AF_LSTM)

    @property
    def uses_aspect(self) -> bool:
        return self.has_attention

    def __str__(self) -> str:
        return self.value


INIT_SCALE = 0.08
EMBED_STD = 0.1   # random (non-pretrained) embedding rows ~ N(0, EMBED_STD^2)


@dataclass(frozen=True)
class ModelConfig:
    variant: ModelVariant
    vocab_size: int
    embed_dim: int = 300
    hidden_dim: int = 300
    max_len: int = 80
    num_classes: int = 3
    fusion: FusionOperator | None = None
    use_projection: bool = False
    use_normalization: bool = False
    dropout_p: float = 0.5
    freeze_embeddings: bool = False
    seed: int = 0
    embed_std: float = EMBED_STD

    def __post_init__(self):
        object.__setattr__(self, "variant", ModelVariant(self.variant))
        if self.fusion is not None:
            object.__setattr__(self, "fusion", FusionOperator(self.fusion))
        if min(self.embed_dim, self.hidden_dim, self.max_len) < 1:
            raise ValueError("embed_dim, hidden_dim and max_len must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must cover the padding and unknown rows")
        if self.num_classes not in (2, 3):
            raise ValueError(f"num_classes must be 2 or 3, got {self.num_classes}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.embed_std <= 0:
            raise ValueError(f"embed_std must be positive, got {self.embed_std}")
        is_af = self.variant is ModelVariant.AF_LSTM
        if is_af and self.fusion is None:
            raise ValueError("af-lstm needs a fusion operator")
        if not is_af and self.fusion is not None:
            raise ValueError(f"fusion is only valid for af-lstm, not {self.variant}")
        if self.use_projection and not self.variant.has_attention:
            raise ValueError(f"projection layer needs an attention variant, not {self.variant}")
        if self.use_normalization and not is_af:
            raise ValueError("normalization layer only applies to af-lstm")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["fusion"] = None if self.fusion is None else self.fusion.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# -- parameter groups ----------------------------------------------------------

@dataclass
class LstmParams:
    """Gate blocks stacked in the order input, forget, candidate, output."""

    W_ih: Parameter   # [4d, k_in]
    W_hh: Parameter   # [4d, d]
    b: Parameter      # [4d]

    @property
    def hidden_dim(self) -> int:
        return self.W_hh.shape[1]


@dataclass
class AttentionParams:
    W_y: Parameter                # [d_a, d_a]
    w: Parameter                  # [d_a]
    W_v: Parameter | None = None  # [d, k], AT/ATAE aspect projection


@dataclass
class ProjectionParams:
    W_p: Parameter
    W_x: Parameter


@dataclass
class ClassifierParams:
    W_f: Parameter   # [K, d_r]
    b_f: Parameter   # [K]


def _uniform(rng, shape, name) -> Parameter:
    return Parameter(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape), name)


def init_lstm(rng, k_in: int, d: int, prefix: str = "lstm") -> LstmParams:
    b = np.zeros(4 * d)
    b[d:2 * d] = 1.0
    return LstmParams(_uniform(rng, (4 * d, k_in), f"{prefix}.W_ih"),
                      _uniform(rng, (4 * d, d), f"{prefix}.W_hh"),
                      Parameter(b, f"{prefix}.b"))


# -- layers --------------------------------------------------------------------

def embed_sequence(tokens: Sequence[int], table: Tensor, max_len: int) -> tuple[Tensor, np.ndarray]:
    """Single sequence to ``[L, k]`` rows plus mask; end-truncated, end-padded."""
    ids = np.zeros(max_len, dtype=np.intp)
    kept = list(tokens)[:max_len]
    ids[:len(kept)] = kept
    if len(kept) and (min(kept) < 0 or max(kept) >= table.shape[0]):
        raise IndexError(f"token index outside vocabulary of size {table.shape[0]}")
    return ag.take_rows(table, ids, padding_idx=PAD), ids != PAD


def aspect_embed(aspect_ids, table: Tensor) -> Tensor:
    """Sum of aspect token rows: ``[B, A]`` ids (0-padded) to ``[B, k]``."""
    aspect_ids = np.atleast_2d(np.asarray(aspect_ids, dtype=np.intp))
    if not (aspect_ids != PAD).any(axis=1).all():
        raise ag.ContractError("every aspect needs at least one token")
    return ag.sum(ag.take_rows(table, aspect_ids, padding_idx=PAD), axis=1)


def lstm_forward(X: Tensor, mask: np.ndarray, params: LstmParams) -> Tensor:
    """``[B, L, k_in]`` inputs to ``[B, L, d]`` hidden states.

    Masked steps carry the previous state forward, so ``H[:, -1]`` is the
    last real hidden state.
    """
    B, L, k_in = X.shape
    d = params.hidden_dim
    if params.W_ih.shape != (4 * d, k_in):
        raise DimensionError(f"lstm: input width {k_in} vs W_ih {params.W_ih.shape}")
    mask = np.asarray(mask, dtype=bool)
    Xt = ag.reshape(ag.transpose(X, (1, 0, 2)), (L * B, k_in))
    XW = ag.matmul(Xt, ag.transpose(params.W_ih)) + ag.expand(params.b, (L * B, 4 * d))
    XW = ag.reshape(XW, (L, B, 4 * d))
    W_hh_T = ag.transpose(params.W_hh)
    h = Tensor(np.zeros((B, d)))
    c = Tensor(np.zeros((B, d)))
    hs = []
    for t in range(L):
        z = XW[t] + ag.matmul(h, W_hh_T)
        sz, tz = ag.sigmoid(z), ag.tanh(z)
        i, f, g, o = sz[:, :d], sz[:, d:2 * d], tz[:, 2 * d:3 * d], sz[:, 3 * d:]
        c_new = f * c + i * g
        h_new = o * ag.tanh(c_new)
        m = np.broadcast_to(mask[:, t:t + 1], (B, d))
        c = ag.where(m, c_new, c)
        h = ag.where(m, h_new, h)
        hs.append(h)
    return ag.stack(hs, axis=1)


def fuse(H: Tensor, s: Tensor, op: FusionOperator, use_normalization: bool = False) -> Tensor:
    """Association layer: every row of ``H`` bound to the aspect vector ``s``."""
    if use_normalization:
        H, s = norm_clip(H), norm_clip(s)
    return associate(H, s, op)


def attend(M: Tensor, H: Tensor, mask: np.ndarray, params: AttentionParams) -> tuple[Tensor, Tensor]:
    """Score positions from ``M``, return the weighted sum of ``H`` and the weights."""
    B, L, d_a = M.shape
    if params.W_y.shape != (d_a, d_a) or H.shape[:2] != (B, L):
        raise DimensionError(f"attend: M {M.shape}, H {H.shape}, W_y {params.W_y.shape}")
    Y = ag.tanh(ag.matmul(ag.reshape(M, (B * L, d_a)), ag.transpose(params.W_y)))
    scores = ag.reshape(ag.matmul(Y, ag.reshape(params.w, (d_a, 1))), (B, L))
    a = ag.masked_softmax(scores, mask)
    r = ag.reshape(ag.bmm(ag.reshape(a, (B, 1, L)), H), (B, H.shape[2]))
    return r, a


def project(r: Tensor, h_last: Tensor, params: ProjectionParams) -> Tensor:
    return ag.tanh(ag.matmul(r, ag.transpose(params.W_p))
                   + ag.matmul(h_last, ag.transpose(params.W_x)))


def classify(r: Tensor, params: ClassifierParams) -> Tensor:
    B = r.shape[0]
    logits = ag.matmul(r, ag.transpose(params.W_f)) + ag.expand(params.b_f, (B, params.b_f.size))
    return ag.softmax(logits)


# -- model ---------------------------------------------------------------------

class Model:
    def __init__(self, config: ModelConfig, embeddings: np.ndarray | None = None):
        self.config = config
        cfg = config
        rng = np.random.default_rng(cfg.seed)
        k, d, K = cfg.embed_dim, cfg.hidden_dim, cfg.num_classes
        v = cfg.variant
        self.majority_class = 0

        if embeddings is None:
            embeddings = rng.normal(0.0, cfg.embed_std, size=(cfg.vocab_size, k))
        embeddings = np.array(embeddings, dtype=np.float64)
        if embeddings.shape != (cfg.vocab_size, k):
            raise DimensionError(f"embedding table {embeddings.shape} != ({cfg.vocab_size}, {k})")
        embeddings[PAD] = 0.0
        self.embedding = Parameter(embeddings, "embedding", frozen_rows=(PAD,))

        self.lstm = self.attention = self.projection = None
        self.aspect_map = None
        if v in (ModelVariant.LSTM, ModelVariant.AT_LSTM, ModelVariant.AF_LSTM):
            self.lstm = init_lstm(rng, k, d)
        elif v is ModelVariant.ATAE_LSTM:
            self.lstm = init_lstm(rng, 2 * k, d)

        if v in (ModelVariant.AT_LSTM, ModelVariant.ATAE_LSTM):
            self.attention = AttentionParams(_uniform(rng, (2 * d, 2 * d), "attention.W_y"),
                                             _uniform(rng, (2 * d,), "attention.w"),
                                             _uniform(rng, (d, k), "attention.W_v"))
        elif v is ModelVariant.AF_LSTM:
            if k != d:
                self.aspect_map = _uniform(rng, (d, k), "aspect_map")
            self.attention = AttentionParams(_uniform(rng, (d, d), "attention.W_y"),
                                             _uniform(rng, (d,), "attention.w"))
        if cfg.use_projection:
            self.projection = ProjectionParams(_uniform(rng, (d, d), "projection.W_p"),
                                               _uniform(rng, (d, d), "projection.W_x"))
        d_r = k if v is ModelVariant.NBOW else d
        self.classifier = None
        if v is not ModelVariant.MAJORITY:
            self.classifier = ClassifierParams(_uniform(rng, (K, d_r), "classifier.W_f"),
                                               Parameter(np.zeros(K), "classifier.b_f"))

    # parameters

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        """Every parameter in a fixed order, embedding first."""
        yield "embedding", self.embedding
        groups = (self.lstm, self.attention, self.aspect_map, self.projection, self.classifier)
        for group in groups:
            if group is None:
                continue
            if isinstance(group, Parameter):
                yield group.name, group
                continue
            for f in fields(group):
                p = getattr(group, f.name)
                if p is not None:
                    yield p.name, p

    def trainable_parameters(self) -> list[Parameter]:
        if self.config.variant is ModelVariant.MAJORITY:
            return []
        return [p for name, p in self.named_parameters()
                if not (name == "embedding" and self.config.freeze_embeddings)]

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if state[name].shape != p.shape:
                raise DimensionError(f"{name}: stored {state[name].shape} vs model {p.shape}")
            p.data[...] = state[name]

    def fit_majority(self, labels: np.ndarray) -> None:
        counts = np.bincount(np.asarray(labels), minlength=self.config.num_classes)
        self.majority_class = int(np.argmax(counts))

    # forward

    def forward(self, batch: Batch, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray | None]:
        """Class probabilities ``[B, K]`` and attention ``[B, L]`` (or None)."""
        cfg = self.config
        v = cfg.variant
        B = len(batch)
        if v is ModelVariant.MAJORITY:
            probs = np.zeros((B, cfg.num_classes))
            probs[:, self.majority_class] = 1.0
            return Tensor(probs), None

        tokens = batch.tokens[:, :cfg.max_len]
        mask = batch.mask[:, :cfg.max_len]
        if (tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size)):
            raise IndexError(f"token index outside vocabulary of size {cfg.vocab_size}")
        X = ag.take_rows(self.embedding, tokens, padding_idx=PAD)
        attention = None

        if v is ModelVariant.NBOW:
            r = ag.sum(X, axis=1)
        elif v is ModelVariant.LSTM:
            H = lstm_forward(X, mask, self.lstm)
            r = H[:, -1]
        else:
            s = aspect_embed(batch.aspect, self.embedding)
            L, k, d = tokens.shape[1], cfg.embed_dim, cfg.hidden_dim
            if v is ModelVariant.ATAE_LSTM:
                X = ag.concat([X, ag.expand(ag.reshape(s, (B, 1, k)), (B, L, k))], axis=2)
            H = lstm_forward(X, mask, self.lstm)
            if v is ModelVariant.AF_LSTM:
                if self.aspect_map is not None:
                    s = ag.matmul(s, ag.transpose(self.aspect_map))
                M = fuse(H, s, cfg.fusion, cfg.use_normalization)
            else:
                sv = ag.matmul(s, ag.transpose(self.attention.W_v))
                M = ag.concat([H, ag.expand(ag.reshape(sv, (B, 1, d)), (B, L, d))], axis=2)
            r, a = attend(M, H, mask, self.attention)
            attention = a.data
            if self.projection is not None:
                r = project(r, H[:, -1], self.projection)

        if train_mode and cfg.dropout_p > 0:
            r = ag.dropout(r, cfg.dropout_p, rng if rng is not None else np.random.default_rng())
        return classify(r, self.classifier), attention

    def predict(self, batch: Batch) -> tuple[np.ndarray, np.ndarray | None]:
        probs, attention = self.forward(batch)
        return probs.data, attention


def forward(model: Model, batch: Batch, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray | None]:
    return model.forward(batch, train_mode, rng)


def param_count(model: Model, include_embeddings: bool = False) -> int:
    """Trainable scalars; the padding row and frozen tables never count."""
    total = 0
    for name, p in model.named_parameters():
        if name == "embedding":
            if include_embeddings and not model.config.freeze_embeddings:
                total += p.num_trainable()
        elif model.config.variant is not ModelVariant.MAJORITY:
            total += p.size
    return total
