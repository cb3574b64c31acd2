"""Mention typing over enumerated spans and top-k candidate pruning.

Dual-channel pruning keeps two pools of size k = ceil(n * z): one ranked
by the target probability, one by the opinion probability. The
single-channel baseline ranks one shared pool by a 2-class validity
score. Selection is a hard operation on detached probabilities, so
relation-loss gradients never reach the mention scorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import FeedForward, Tensor, softmax_probabilities
from .encoder import Span
from .errors import ConfigurationError, DataError

# Class orders fix the logit layout of the mention scorer.
MENTION_CLASSES = ("target", "opinion", "invalid")
SINGLE_CHANNEL_CLASSES = ("valid", "invalid")

MENTION_TARGET, MENTION_OPINION, MENTION_INVALID = 0, 1, 2
SINGLE_VALID, SINGLE_INVALID = 0, 1

CHANNEL_MODES = ("dual", "single")


@dataclass(frozen=True)
class SpanCandidate:
    """An enumerated span with its position in the enumeration and mention probabilities."""

    span: Span
    index: int
    probs: tuple[float, ...]

    @property
    def target_prob(self) -> float:
        return self.probs[MENTION_TARGET]

    @property
    def opinion_prob(self) -> float:
        return self.probs[MENTION_OPINION]

    @property
    def valid_prob(self) -> float:
        return self.probs[SINGLE_VALID]


def mention_scores(ffnn: FeedForward, rep: Tensor, *, training: bool = False,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Mention-type probabilities for a span vector (or a batch of them).

    Detached on purpose: candidate selection is a hard operation, and the
    scorer trains through its logits, not through these probabilities.
    """
    return softmax_probabilities(ffnn(rep, training=training, rng=rng).data)


def pool_size(n: int, z: float, n_candidates: int) -> int:
    """k = min(ceil(n * z), number of candidates); ceil keeps k >= 1."""
    if z <= 0:
        raise ConfigurationError(f"pruning threshold z must be positive, got {z}")
    return min(math.ceil(n * z), n_candidates)


def _top_k(candidates: list[SpanCandidate], key_index: int, k: int) -> list[SpanCandidate]:
    # Score descending, ties broken by span position ascending.
    ranked = sorted(candidates, key=lambda c: (-c.probs[key_index], c.span))
    return ranked[:k]


def prune_dual_channel(candidates: list[SpanCandidate], n: int,
                       z: float) -> tuple[list[SpanCandidate], list[SpanCandidate]]:
    """Top-k pools by target and by opinion probability (pools may overlap)."""
    if not candidates:
        raise DataError("cannot prune an empty candidate list")
    if len(candidates[0].probs) != len(MENTION_CLASSES):
        raise ConfigurationError(
            "dual-channel pruning needs 3-class mention scores, got "
            f"{len(candidates[0].probs)} classes"
        )
    k = pool_size(n, z, len(candidates))
    return _top_k(candidates, MENTION_TARGET, k), _top_k(candidates, MENTION_OPINION, k)


def prune_single_channel(candidates: list[SpanCandidate], n: int,
                         z: float) -> list[SpanCandidate]:
    """One shared pool ranked by the validity probability of a 2-class scorer."""
    if not candidates:
        raise DataError("cannot prune an empty candidate list")
    if len(candidates[0].probs) != len(SINGLE_CHANNEL_CLASSES):
        raise ConfigurationError(
            "single-channel pruning needs 2-class mention scores, got "
            f"{len(candidates[0].probs)} classes"
        )
    k = pool_size(n, z, len(candidates))
    return _top_k(candidates, SINGLE_VALID, k)
