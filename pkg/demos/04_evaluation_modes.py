#!/usr/bin/env python3
"""The exact-match metrics: mode breakdowns and term-extraction scoring."""

from spantriplet.evaluation import (EVAL_MODES, mention_prf_from_triplets,
                                    triplet_prf)
from spantriplet.data import GoldTriplet, Sentence
from spantriplet.triplet import TripletPrediction

# Hand-built gold and predictions over two sentences. Spans are inclusive
# (start, end) token index pairs.
gold = {
    0: {((1, 2), (4, 4), "POS"),    # multi-word target
        ((6, 6), (4, 4), "POS")},   # shared opinion
    1: {((0, 0), (2, 3), "NEG")},   # multi-word opinion
}
pred = {
    0: {((1, 2), (4, 4), "POS"),    # exact hit
        ((6, 6), (4, 4), "NEG")},   # right spans, wrong sentiment -> miss
    1: {((0, 0), (2, 3), "NEG"),    # exact hit
        ((0, 0), (2, 2), "NEG")},   # truncated opinion span -> false positive
}

print("mode-by-mode scores (filter applied to both sides):")
print(f"  {'mode':<20}{'P':>8}{'R':>8}{'F1':>8}{'tp':>5}{'fp':>5}{'fn':>5}")
for mode in EVAL_MODES:
    prf = triplet_prf(gold, pred, mode)
    print(f"  {mode:<20}{prf.precision:>8.3f}{prf.recall:>8.3f}{prf.f1:>8.3f}"
          f"{prf.tp:>5}{prf.fp:>5}{prf.fn:>5}")

print("\nsame, filtering the gold side only (predictions always count):")
for mode in ("single_word", "multi_word"):
    prf = triplet_prf(gold, pred, mode, filter_side="gold")
    print(f"  {mode:<20}{prf.precision:>8.3f}{prf.recall:>8.3f}{prf.f1:>8.3f}")

# Term extraction derived from the predicted triplets: spans only, so the
# sentiment mistake above no longer hurts.
sentences = [
    Sentence(0, "the wine list is great ; staff too .".split(),
             [GoldTriplet(t, o, s) for t, o, s in gold[0]]),
    Sentence(1, "service was too slow .".split(),
             [GoldTriplet(t, o, s) for t, o, s in gold[1]]),
]
predictions = {sid: [TripletPrediction(t, o, s, 0.9) for t, o, s in pred[sid]]
               for sid in pred}
for task in ("ATE", "OTE"):
    prf = mention_prf_from_triplets(predictions, sentences, task)
    print(f"\n{task} from predicted triplets: P={prf.precision:.3f} "
          f"R={prf.recall:.3f} F1={prf.f1:.3f}")
