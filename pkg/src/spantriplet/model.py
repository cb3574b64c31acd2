"""The span-pair sentiment extraction model.

One forward pass over a sentence: embed tokens, contextualize with the
BiLSTM, build a vector per enumerated span, score mention types, keep the
top-k target and opinion candidates, and classify every target-opinion
pair over four relation classes. The graph is rebuilt per sentence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import pruning
from .autodiff import FeedForward, Parameter, Tensor
from .encoder import Span, Vocabulary
from .errors import CheckpointError, ConfigurationError, TrainingStateError
from .pruning import SpanCandidate
from .triplet import RELATION_CLASSES, TripletPrediction, decode_triplets, pair_distance_bucket


@dataclass
class ModelConfig:
    """Hyperparameters; defaults are the reference configuration.

    ``max_span_gap`` bounds end - start, so enumerated spans cover at most
    ``max_span_gap + 1`` tokens. ``lstm_hidden`` is per direction.
    """

    embedding_dim: int = 300
    lstm_hidden: int = 300
    lstm_dropout: float = 0.5
    ffnn_hidden: int = 150
    ffnn_layers: int = 2
    ffnn_dropout: float = 0.4
    max_span_gap: int = 8
    width_dim: int = 20
    distance_dim: int = 128
    span_mode: str = "boundary"
    use_width_distance: bool = True
    z: float = 0.5
    channel_mode: str = "dual"

    def validate(self) -> None:
        positive = {
            "embedding_dim": self.embedding_dim, "lstm_hidden": self.lstm_hidden,
            "ffnn_hidden": self.ffnn_hidden, "ffnn_layers": self.ffnn_layers,
            "width_dim": self.width_dim, "distance_dim": self.distance_dim,
        }
        for name, value in positive.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.max_span_gap < 0:
            raise ConfigurationError(f"max_span_gap must be >= 0, got {self.max_span_gap}")
        for name, value in (("lstm_dropout", self.lstm_dropout),
                            ("ffnn_dropout", self.ffnn_dropout)):
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1), got {value}")
        if self.span_mode not in enc.SPAN_MODES:
            raise ConfigurationError(
                f"span_mode must be one of {enc.SPAN_MODES}, got {self.span_mode!r}")
        if self.channel_mode not in pruning.CHANNEL_MODES:
            raise ConfigurationError(
                f"channel_mode must be one of {pruning.CHANNEL_MODES}, got {self.channel_mode!r}")
        if self.z <= 0:
            raise ConfigurationError(f"z must be positive, got {self.z}")

    @property
    def span_vector_dim(self) -> int:
        core = 2 * self.lstm_hidden
        if self.span_mode == "boundary":
            core *= 2
        return core + (self.width_dim if self.use_width_distance else 0)

    @property
    def pair_vector_dim(self) -> int:
        return 2 * self.span_vector_dim + (self.distance_dim if self.use_width_distance else 0)

    @property
    def mention_classes(self) -> tuple[str, ...]:
        return (pruning.MENTION_CLASSES if self.channel_mode == "dual"
                else pruning.SINGLE_CHANNEL_CLASSES)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        unknown = set(raw) - set(cls().__dict__)
        if unknown:
            raise ConfigurationError(f"unknown model config fields: {sorted(unknown)}")
        config = cls(**raw)
        config.validate()
        return config


@dataclass
class SentenceOutput:
    """Everything one forward pass produced for a sentence."""

    tokens: list[str]
    spans: list[Span]
    span_reps: Tensor                 # (S, D)
    mention_logits: Tensor            # (S, C)
    mention_probs: np.ndarray         # (S, C), detached
    candidates: list[SpanCandidate]
    target_pool: list[SpanCandidate]
    opinion_pool: list[SpanCandidate]
    pairs: list[tuple[SpanCandidate, SpanCandidate]]
    relation_logits: Tensor           # (P, 4)
    relation_probs: np.ndarray        # (P, 4), detached

    @property
    def pair_spans(self) -> list[tuple[Span, Span]]:
        return [(t.span, o.span) for t, o in self.pairs]

    @property
    def pool_size(self) -> int:
        return len(self.target_pool)


class SpanModel:
    """Owns the parameters and runs per-sentence forward passes."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int = 0,
                 pretrained_embeddings: dict[str, np.ndarray] | None = None):
        config.validate()
        self.config = config
        self.vocab = vocab
        init_rng = np.random.default_rng(seed)
        self.embedding = Parameter(
            enc.build_embedding_table(vocab, config.embedding_dim, init_rng,
                                      pretrained_embeddings),
            name="embedding.table")
        self.lstm = enc.BiLstmParams.create("lstm", config.embedding_dim,
                                            config.lstm_hidden, init_rng)
        if config.use_width_distance:
            self.width_table = Parameter(
                init_rng.normal(0.0, 1.0, size=(enc.NUM_BUCKETS, config.width_dim)),
                name="width.table")
            self.distance_table = Parameter(
                init_rng.normal(0.0, 1.0, size=(enc.NUM_BUCKETS, config.distance_dim)),
                name="distance.table")
        else:
            self.width_table = None
            self.distance_table = None
        self.mention_ffnn = FeedForward.create(
            "mention", config.span_vector_dim, len(config.mention_classes),
            hidden_dim=config.ffnn_hidden, hidden_layers=config.ffnn_layers,
            dropout_p=config.ffnn_dropout, rng=init_rng)
        self.relation_ffnn = FeedForward.create(
            "relation", config.pair_vector_dim, len(RELATION_CLASSES),
            hidden_dim=config.ffnn_hidden, hidden_layers=config.ffnn_layers,
            dropout_p=config.ffnn_dropout, rng=init_rng)
        self._check_unique_names()

    def _check_unique_names(self) -> None:
        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ConfigurationError("duplicate parameter names in model")

    def parameters(self) -> list[Parameter]:
        params = [self.embedding] + self.lstm.parameters()
        if self.width_table is not None:
            params += [self.width_table, self.distance_table]
        return params + self.mention_ffnn.parameters() + self.relation_ffnn.parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward(self, tokens: Sequence[str], *, training: bool = False,
                rng: np.random.Generator | None = None,
                pools: tuple[Sequence[int], Sequence[int]] | None = None) -> SentenceOutput:
        """Run the full pipeline on one sentence.

        ``pools`` optionally pins the candidate pools to fixed enumeration
        indices, bypassing score-based pruning; gradient checks and pool
        diagnostics use it to hold the selection constant.
        """
        if training and rng is None:
            raise TrainingStateError("training-mode forward needs a seeded generator")
        tokens = list(tokens)
        config = self.config
        n = len(tokens)
        spans = enc.enumerate_spans(n, config.max_span_gap)

        embedded = enc.embed_tokens(tokens, self.vocab, self.embedding)
        embedded = ad.dropout(embedded, config.lstm_dropout, rng, training)
        hidden = enc.bilstm_forward(embedded, self.lstm)
        hidden = ad.dropout(hidden, config.lstm_dropout, rng, training)

        reps = enc.span_representation_matrix(hidden, spans, config.span_mode,
                                              self.width_table)
        mention_logits = self.mention_ffnn(reps, training=training, rng=rng)
        mention_probs = ad.softmax_probabilities(mention_logits.data)

        candidates = [
            SpanCandidate(span, i, tuple(mention_probs[i]))
            for i, span in enumerate(spans)
        ]
        if pools is not None:
            by_index = {c.index: c for c in candidates}
            target_pool = [by_index[i] for i in pools[0]]
            opinion_pool = [by_index[i] for i in pools[1]]
        elif config.channel_mode == "dual":
            target_pool, opinion_pool = pruning.prune_dual_channel(candidates, n, config.z)
        else:
            pool = pruning.prune_single_channel(candidates, n, config.z)
            target_pool, opinion_pool = pool, pool

        pairs = [(t, o) for t in target_pool for o in opinion_pool]
        pair_parts = [
            ad.rows(reps, [t.index for t, _ in pairs]),
            ad.rows(reps, [o.index for _, o in pairs]),
        ]
        if self.distance_table is not None:
            pair_parts.append(ad.rows(
                self.distance_table,
                [pair_distance_bucket(t.span, o.span) for t, o in pairs]))
        pair_matrix = ad.concat(pair_parts, axis=1)
        relation_logits = self.relation_ffnn(pair_matrix, training=training, rng=rng)
        relation_probs = ad.softmax_probabilities(relation_logits.data)

        return SentenceOutput(
            tokens=tokens, spans=spans, span_reps=reps,
            mention_logits=mention_logits, mention_probs=mention_probs,
            candidates=candidates, target_pool=target_pool, opinion_pool=opinion_pool,
            pairs=pairs, relation_logits=relation_logits, relation_probs=relation_probs,
        )

    # -- inference ----------------------------------------------------------

    def predict(self, tokens: Sequence[str]) -> list[TripletPrediction]:
        output = self.forward(tokens)
        return decode_triplets(output.pair_spans, output.relation_probs)

    def mention_spans(self, tokens: Sequence[str], kind: str) -> set[Span]:
        """Spans whose mention argmax is the requested type, over the full enumeration."""
        if self.config.channel_mode != "dual":
            raise ConfigurationError(
                "direct target/opinion extraction needs the 3-class mention head")
        wanted = {"target": pruning.MENTION_TARGET,
                  "opinion": pruning.MENTION_OPINION}.get(kind)
        if wanted is None:
            raise ConfigurationError(f"kind must be 'target' or 'opinion', got {kind!r}")
        output = self.forward(tokens)
        winners = output.mention_probs.argmax(axis=1)
        return {span for span, label in zip(output.spans, winners) if label == wanted}

    # -- persistence ----------------------------------------------------------

    def save(self, path: str, extra_meta: dict | None = None) -> None:
        meta = {
            "config": self.config.as_dict(),
            "vocab": self.vocab.tokens,
        }
        if extra_meta:
            meta.update(extra_meta)
        ad.save_checkpoint(path, self.parameters(), meta)

    @classmethod
    def load(cls, path: str) -> "SpanModel":
        arrays, meta = ad.load_checkpoint(path)
        if "config" not in meta or "vocab" not in meta:
            raise CheckpointError(f"{path}: checkpoint lacks model config or vocabulary")
        model = cls(ModelConfig.from_dict(meta["config"]), Vocabulary(meta["vocab"]))
        ad.restore_parameters(model.parameters(), arrays)
        return model

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        ad.restore_parameters(self.parameters(), arrays)
