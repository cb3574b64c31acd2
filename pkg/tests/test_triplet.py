import numpy as np
import pytest

from spantriplet import triplet as tr
from spantriplet.autodiff import softmax_probabilities

from fdcheck import max_gradient_error


class TestPairDistance:
    def test_adjacent_spans(self):
        assert tr.pair_distance((0, 1), (2, 2)) == 1
        assert tr.pair_distance_bucket((0, 1), (2, 2)) == 1

    def test_overlapping_spans(self):
        assert tr.pair_distance((2, 4), (3, 3)) == 1

    def test_far_pair_lands_in_top_bucket(self):
        assert tr.pair_distance((0, 0), (70, 70)) == 70
        assert tr.pair_distance_bucket((0, 0), (70, 70)) == 9

    def test_symmetric_roles_can_touch(self):
        assert tr.pair_distance((0, 1), (1, 2)) == 0


class TestRelationScores:
    def test_zero_logits_are_uniform(self):
        probs = softmax_probabilities(np.zeros(4))
        np.testing.assert_allclose(probs, np.full(4, 0.25), atol=1e-15)
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_saturated_positive(self):
        probs = softmax_probabilities(np.array([20.0, -5.0, -5.0, -5.0]))
        assert probs[0] > 0.9999

    def test_gradients_match_finite_differences(self):
        from spantriplet import autodiff as ad
        from spantriplet.autodiff import FeedForward, Tensor

        rng = np.random.default_rng(0)
        ffnn = FeedForward.create("relation", 9, 4, hidden_dim=5, hidden_layers=2,
                                  dropout_p=0.0, rng=rng)
        x = Tensor(rng.normal(size=9))
        err = max_gradient_error(lambda: ad.softmax_nll(ffnn(x), 2),
                                 ffnn.parameters())
        assert err < 1e-5


class TestPairRepresentation:
    def test_layout_is_target_opinion_distance(self):
        from spantriplet.autodiff import Parameter, Tensor

        t_rep = Tensor([1.0, 2.0])
        o_rep = Tensor([3.0, 4.0])
        table = Parameter(np.arange(30.0).reshape(10, 3), name="distance")
        vec = tr.pair_representation(t_rep, o_rep, (0, 1), (2, 2), table)
        bucket = tr.pair_distance_bucket((0, 1), (2, 2))
        np.testing.assert_array_equal(vec.data,
                                      [1.0, 2.0, 3.0, 4.0, *table.data[bucket]])

    def test_without_distance_table(self):
        from spantriplet.autodiff import Tensor

        vec = tr.pair_representation(Tensor([1.0]), Tensor([2.0]), (0, 0), (1, 1),
                                     None)
        np.testing.assert_array_equal(vec.data, [1.0, 2.0])

    def test_model_pair_assembly_matches_per_pair_path(self):
        # The model builds all pair vectors with batched gathers; every row
        # must equal the one-pair construction fed through the same scorer.
        from spantriplet import autodiff as ad
        from spantriplet.data import make_fixture
        from spantriplet.encoder import Vocabulary
        from spantriplet.model import ModelConfig, SpanModel

        fixture = make_fixture(np.random.default_rng(0), 4)
        vocab = Vocabulary.build(s.tokens for s in fixture)
        model = SpanModel(ModelConfig(embedding_dim=5, lstm_hidden=3, ffnn_hidden=4,
                                      width_dim=2, distance_dim=3, lstm_dropout=0.0,
                                      ffnn_dropout=0.0), vocab, seed=0)
        out = model.forward(fixture[0].tokens)
        for pair_ix, (t, o) in enumerate(out.pairs):
            vec = tr.pair_representation(
                ad.row(out.span_reps, t.index), ad.row(out.span_reps, o.index),
                t.span, o.span, model.distance_table)
            logits = model.relation_ffnn(vec)
            np.testing.assert_allclose(out.relation_logits.data[pair_ix],
                                       logits.data, atol=1e-12)

    def test_relation_scores_helper_sums_to_one(self):
        from spantriplet.autodiff import FeedForward, Tensor

        rng = np.random.default_rng(3)
        ffnn = FeedForward.create("relation", 6, 4, hidden_dim=4, hidden_layers=2,
                                  dropout_p=0.0, rng=rng)
        probs = tr.relation_scores(ffnn, Tensor(rng.normal(size=6)))
        assert abs(probs.sum() - 1.0) < 1e-12


def probs_for(label_index, confidence=0.9):
    rest = (1.0 - confidence) / 3.0
    probs = np.full(4, rest)
    probs[label_index] = confidence
    return probs


class TestDecodeTriplets:
    def test_all_invalid_is_empty(self):
        pairs = [((0, 0), (1, 1)), ((0, 0), (2, 2))]
        probs = np.stack([probs_for(3), probs_for(3)])
        assert tr.decode_triplets(pairs, probs) == []

    def test_single_positive_pair(self):
        pairs = [((0, 1), (3, 3))]
        probs = probs_for(0)[None, :]
        out = tr.decode_triplets(pairs, probs)
        assert out == [tr.TripletPrediction((0, 1), (3, 3), "POS", 0.9)]

    def test_matches_brute_force_argmax_oracle(self):
        rng = np.random.default_rng(1)
        targets = [(0, 0), (1, 2), (4, 4)]
        opinions = [(2, 2), (3, 3), (5, 6)]
        pairs = [(t, o) for t in targets for o in opinions]
        raw = rng.random((9, 4))
        probs = raw / raw.sum(axis=1, keepdims=True)
        decoded = tr.decode_triplets(pairs, probs)

        expected = []
        for (t, o), p in zip(pairs, probs):
            best = 0
            for c in range(1, 4):
                if p[c] > p[best]:
                    best = c
            if best != 3:
                expected.append(tr.TripletPrediction(t, o, tr.SENTIMENT_TAGS[best],
                                                     float(p[best])))
        expected.sort(key=lambda pred: (pred.target, pred.opinion))
        assert decoded == expected

    def test_order_invariance(self):
        rng = np.random.default_rng(2)
        pairs = [((i, i), (j, j)) for i in range(3) for j in range(3, 6)]
        raw = rng.random((len(pairs), 4))
        probs = raw / raw.sum(axis=1, keepdims=True)
        baseline = tr.decode_triplets(pairs, probs)
        perm = rng.permutation(len(pairs))
        shuffled = tr.decode_triplets([pairs[i] for i in perm], probs[perm])
        assert shuffled == baseline

    def test_logit_shift_leaves_decoded_label_unchanged(self):
        logits = np.array([1.0, 0.5, -0.2, 0.9])
        base = softmax_probabilities(logits)[None, :]
        shifted = softmax_probabilities(logits + 123.0)[None, :]
        pair = [((0, 0), (1, 1))]
        assert (tr.decode_triplets(pair, base)[0].sentiment
                == tr.decode_triplets(pair, shifted)[0].sentiment)

    def test_duplicate_pairs_keep_higher_probability(self):
        pair = ((0, 0), (1, 1))
        probs = np.stack([probs_for(0, 0.6), probs_for(1, 0.8)])
        out = tr.decode_triplets([pair, pair], probs)
        assert out == [tr.TripletPrediction(pair[0], pair[1], "NEG", 0.8)]

    def test_argmax_tie_breaks_by_fixed_class_order(self):
        pair = [((0, 0), (1, 1))]
        probs = np.array([[0.3, 0.3, 0.2, 0.2]])
        assert tr.decode_triplets(pair, probs)[0].sentiment == "POS"
        probs = np.array([[0.2, 0.3, 0.3, 0.2]])
        assert tr.decode_triplets(pair, probs)[0].sentiment == "NEG"

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            tr.decode_triplets([((0, 0), (1, 1))], np.zeros((2, 4)))
