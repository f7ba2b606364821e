import itertools

import numpy as np
import pytest

from helpers import E_DIM, termwise_reference_score, random_features, random_params
from weaksal.exceptions import DegenerateInput, DimensionMismatch, NonSubmodularError
from weaksal.model import (
    ModelParams,
    infer,
    infer_h,
    joint_feature,
    labeling_loss,
    loss_augmented_infer,
    score_labeling,
)


def all_labelings(n):
    return [np.array(bits, dtype=bool)
            for bits in itertools.product([0, 1], repeat=n)]


class TestJointFeature:
    def test_all_zero_labeling_layout(self):
        rng = np.random.default_rng(0)
        feats = random_features(rng, 4)
        vec = joint_feature(feats, 0, np.zeros(4, dtype=bool))
        e = E_DIM
        assert np.array_equal(vec[:e], feats.global_desc)
        assert np.all(vec[e:2 * e] == 0)                       # class-1 global
        assert np.allclose(vec[2 * e:2 * e + 35],
                           feats.regional.bg.sum(axis=0))
        assert np.all(vec[2 * e + 35:2 * e + 70] == 0)         # class-1 regional
        assert vec[2 * e + 70] == 0                            # fg prior count
        assert vec[2 * e + 72] == 4                            # bg prior count
        assert vec[-1] == 0                                    # no disagreement

    def test_score_equals_inner_product(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            feats = random_features(rng, n)
            w = random_params(rng)
            y = int(rng.integers(2))
            h = rng.random(n) < 0.5
            lhs = float(w.to_vector() @ joint_feature(feats, y, h))
            assert lhs == pytest.approx(score_labeling(w, feats, y, h), abs=1e-9)

    def test_matches_term_by_term_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            feats = random_features(rng, n)
            w = random_params(rng)
            y = int(rng.integers(2))
            h = rng.random(n) < 0.5
            lhs = float(w.to_vector() @ joint_feature(feats, y, h))
            assert lhs == pytest.approx(termwise_reference_score(w, feats, y, h), abs=1e-9)

    def test_single_flip_score_delta(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            feats = random_features(rng, n)
            w = random_params(rng)
            y = int(rng.integers(2))
            h = rng.random(n) < 0.5
            j = int(rng.integers(n))
            h[j] = False
            flipped = h.copy()
            flipped[j] = True
            got = (score_labeling(w, feats, y, flipped)
                   - score_labeling(w, feats, y, h))
            nbrs, weights = feats.graph.neighbor_weights(j)
            expect = (float(w.w_regional[y] @ (feats.regional.fg[j]
                                               - feats.regional.bg[j]))
                      + w.fg_prior[y] - w.bg_prior[y]
                      - w.pairwise * float(np.sum(
                          weights * (1 - 2 * h[nbrs].astype(float)))))
            assert got == pytest.approx(expect, abs=1e-9)

    def test_wrong_length_labeling(self):
        rng = np.random.default_rng(4)
        feats = random_features(rng, 4)
        with pytest.raises(DimensionMismatch):
            joint_feature(feats, 0, np.zeros(3, dtype=bool))


class TestInferH:
    def test_uniform_unary_dominance(self):
        rng = np.random.default_rng(5)
        feats = random_features(rng, 5)
        w = ModelParams.zeros(E_DIM)
        w.fg_prior[:] = 1.0
        w.bg_prior[:] = 0.0
        h, _ = infer_h(w, feats, 1)
        assert h.all()

    def test_zero_params_all_background(self):
        rng = np.random.default_rng(6)
        feats = random_features(rng, 5)
        w = ModelParams.zeros(E_DIM)
        h, score = infer_h(w, feats, 0)
        assert not h.any()
        assert score == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            feats = random_features(rng, n)
            w = random_params(rng)
            y = int(rng.integers(2))
            h, score = infer_h(w, feats, y)
            best = max(float(w.to_vector() @ joint_feature(feats, y, hh))
                       for hh in all_labelings(n))
            assert score == pytest.approx(best, abs=1e-9)

    def test_dominates_random_labelings(self):
        rng = np.random.default_rng(8)
        feats = random_features(rng, 12)
        w = random_params(rng)
        _, score = infer_h(w, feats, 1)
        for _ in range(1000):
            h = rng.random(12) < 0.5
            assert score >= score_labeling(w, feats, 1, h) - 1e-9

    def test_rejects_negative_pairwise(self):
        rng = np.random.default_rng(9)
        feats = random_features(rng, 4)
        w = random_params(rng)
        w.pairwise = -0.5
        with pytest.raises(NonSubmodularError):
            infer_h(w, feats, 0)


class TestInfer:
    def test_argmax_and_tie_break(self):
        rng = np.random.default_rng(10)
        feats = random_features(rng, 4)
        w = ModelParams.zeros(E_DIM)
        w.w_global[0] = 0.0
        y_star, h_star, scores = infer(w, feats)
        assert scores == (0.0, 0.0)
        assert y_star == 0                      # exact tie resolves to 0

        w.w_global[1] = feats.global_desc       # positive dot product
        y_star, _, scores = infer(w, feats)
        assert scores[1] > scores[0]
        assert y_star == 1

    def test_matches_joint_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(2, 8))
            feats = random_features(rng, n)
            w = random_params(rng)
            _, _, scores = infer(w, feats)
            best = max(float(w.to_vector() @ joint_feature(feats, y, hh))
                       for y in (0, 1) for hh in all_labelings(n))
            assert max(scores) == pytest.approx(best, abs=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        feats = random_features(rng, 6)
        w = random_params(rng)
        runs = [infer(w, feats) for _ in range(3)]
        for y, h, s in runs[1:]:
            assert y == runs[0][0]
            assert np.array_equal(h, runs[0][1])
            assert s == runs[0][2]


class TestLabelingLoss:
    def test_correct_and_empty_is_zero(self):
        areas = np.array([10, 20, 30])
        border = np.array([True, False, True])
        assert labeling_loss(0, 0, [0, 0, 0], areas, border) == 0.0
        assert labeling_loss(1, 1, [0, 0, 0], areas, border) == 0.0

    def test_background_image_full_penalty(self):
        areas = np.array([7, 11, 13])
        border = np.array([True, False, False])
        assert labeling_loss(0, 1, [1, 1, 1], areas, border) == pytest.approx(2.0)
        assert labeling_loss(0, 0, [1, 1, 1], areas, border) == pytest.approx(1.0)

    def test_salient_image_half_border_area(self):
        # regions: two border (areas 10, 10), two interior
        areas = np.array([10, 10, 5, 5])
        border = np.array([True, True, False, False])
        h = [1, 0, 1, 1]
        assert labeling_loss(1, 1, h, areas, border) == pytest.approx(0.5)

    def test_range(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            n = int(rng.integers(1, 8))
            areas = rng.integers(1, 20, size=n)
            border = rng.random(n) < 0.5
            border[0] = True
            h = rng.random(n) < 0.5
            val = labeling_loss(int(rng.integers(2)), int(rng.integers(2)),
                                h, areas, border)
            assert 0.0 <= val <= 2.0

    def test_empty_border_degenerate(self):
        with pytest.raises(DegenerateInput):
            labeling_loss(1, 1, [1], np.array([5]), np.array([False]))


class TestLossAugmentedInfer:
    def test_zero_weights_background_truth(self):
        rng = np.random.default_rng(14)
        feats = random_features(rng, 5)
        w = ModelParams.zeros(E_DIM)
        (h0, v0), _ = loss_augmented_infer(w, feats, y_true=0)
        assert h0.all()                          # penalty rewards everything on
        assert v0 == pytest.approx(1.0)

    def test_zero_weights_salient_truth(self):
        rng = np.random.default_rng(15)
        feats = random_features(rng, 6)
        w = ModelParams.zeros(E_DIM)
        _, (h1, v1) = loss_augmented_infer(w, feats, y_true=1)
        assert np.array_equal(h1, feats.is_border)
        assert v1 == pytest.approx(1.0)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(16)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            feats = random_features(rng, n)
            w = random_params(rng)
            y_true = int(rng.integers(2))
            results = loss_augmented_infer(w, feats, y_true)
            for y in (0, 1):
                _, value = results[y]
                best = max(score_labeling(w, feats, y, hh)
                           + labeling_loss(y_true, y, hh, feats.areas,
                                           feats.is_border)
                           for hh in all_labelings(n))
                assert value == pytest.approx(best, abs=1e-9)

    def test_dominates_random_labelings(self):
        rng = np.random.default_rng(17)
        feats = random_features(rng, 12)
        w = random_params(rng)
        y_true = 1
        results = loss_augmented_infer(w, feats, y_true)
        for y in (0, 1):
            _, value = results[y]
            for _ in range(1000):
                h = rng.random(12) < 0.5
                other = (score_labeling(w, feats, y, h)
                         + labeling_loss(y_true, y, h, feats.areas,
                                         feats.is_border))
                assert value >= other - 1e-9

    def test_hinge_nonnegative(self):
        rng = np.random.default_rng(18)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            feats = random_features(rng, n)
            w = random_params(rng)
            y_true = int(rng.integers(2))
            results = loss_augmented_infer(w, feats, y_true)
            _, fit_score = infer_h(w, feats, y_true)
            hinge = max(v for _, v in results) - fit_score
            assert hinge >= -1e-9


class TestModelParams:
    def test_vector_round_trip(self):
        rng = np.random.default_rng(19)
        w = random_params(rng)
        back = ModelParams.from_vector(w.to_vector(), E_DIM)
        assert np.array_equal(back.w_global, w.w_global)
        assert np.array_equal(back.w_regional, w.w_regional)
        assert np.array_equal(back.fg_prior, w.fg_prior)
        assert np.array_equal(back.bg_prior, w.bg_prior)
        assert back.pairwise == w.pairwise

    def test_length_check(self):
        with pytest.raises(DimensionMismatch):
            ModelParams.from_vector(np.zeros(10), E_DIM)

    def test_param_count(self):
        w = ModelParams.zeros(E_DIM)
        assert w.n_params == 2 * (E_DIM + 35 + 2) + 1
        assert len(w.to_vector()) == w.n_params
