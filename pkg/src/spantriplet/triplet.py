"""Target-opinion pair features and triplet decoding.

A pair of spans is classified over four relation classes; the fourth
("no relation") acts as the rejection class, so decoding keeps exactly
the pairs whose argmax lands on a sentiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import FeedForward, Parameter, Tensor
from .encoder import Span, bucket_index

# Logit layout of the relation scorer. Argmax ties resolve in this order.
SENTIMENT_TAGS = ("POS", "NEG", "NEU")
RELATION_CLASSES = SENTIMENT_TAGS + ("INVALID",)
RELATION_INVALID = len(RELATION_CLASSES) - 1


def pair_distance(target: Span, opinion: Span) -> int:
    """min(|b - c|, |a - d|) for target (a, b) and opinion (c, d)."""
    a, b = target
    c, d = opinion
    return min(abs(b - c), abs(a - d))


def pair_distance_bucket(target: Span, opinion: Span) -> int:
    return bucket_index(pair_distance(target, opinion))


def pair_representation(target_rep: Tensor, opinion_rep: Tensor, target: Span,
                        opinion: Span,
                        distance_table: Parameter | None) -> Tensor:
    """[target vector ; opinion vector ; bucketed distance embedding]."""
    parts = [target_rep, opinion_rep]
    if distance_table is not None:
        parts.append(ad.row(distance_table, pair_distance_bucket(target, opinion)))
    return ad.concat(parts, axis=0)


def relation_scores(ffnn: FeedForward, pair_rep: Tensor, *, training: bool = False,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Relation-class probabilities for a pair vector (or a batch of them)."""
    return ad.softmax_probabilities(ffnn(pair_rep, training=training, rng=rng).data)


@dataclass(frozen=True)
class TripletPrediction:
    """A decoded (target, opinion, sentiment) with its relation probability."""

    target: Span
    opinion: Span
    sentiment: str  # one of SENTIMENT_TAGS
    probability: float


def decode_triplets(pairs: list[tuple[Span, Span]],
                    relation_probs: np.ndarray) -> list[TripletPrediction]:
    """Keep pairs whose argmax relation is a sentiment class.

    Duplicate (target, opinion) pairs keep the higher-probability decode;
    output is ordered by (target, opinion) span positions. The result does
    not depend on the order in which pairs were scored.
    """
    if len(pairs) != relation_probs.shape[0]:
        raise ValueError(
            f"{len(pairs)} pairs but {relation_probs.shape[0]} probability rows"
        )
    best: dict[tuple[Span, Span], TripletPrediction] = {}
    for (target, opinion), probs in zip(pairs, relation_probs):
        label = int(np.argmax(probs))  # first max wins ties, per RELATION_CLASSES order
        if label == RELATION_INVALID:
            continue
        prediction = TripletPrediction(target, opinion, SENTIMENT_TAGS[label],
                                       float(probs[label]))
        key = (target, opinion)
        held = best.get(key)
        if held is None or prediction.probability > held.probability:
            best[key] = prediction
    return [best[key] for key in sorted(best)]
