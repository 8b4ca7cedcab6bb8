import logging
import math

import numpy as np
import pytest

from reviewgen import autodiff as ad
from reviewgen.autodiff import ContractViolation, Tensor
from reviewgen.corpus import PAD_RATING
from reviewgen.model import tensorize
from reviewgen.objective import (
    ClassifierParams, classifier_loss, classify_batch, classify_rating, combined_loss,
    example_loss, generation_loss, predict, pretrain_classifier, stratified_split,
)
from tiny import tiny_classifier, tiny_corpus, tiny_model


class TestGenerationLoss:
    def test_hand_example(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        loss = generation_loss(Tensor(np.log(probs)), [0, 0])
        assert loss.data == pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-12)

    def test_uniform_is_log_vocab(self):
        V = 37
        loss = generation_loss(Tensor(np.zeros((6, V))), np.arange(6))
        assert loss.data == pytest.approx(math.log(V), abs=1e-12)

    def test_mask_averages_unmasked_steps(self):
        probs = np.array([[0.5, 0.5], [0.1, 0.9], [0.25, 0.75]])
        loss = generation_loss(Tensor(np.log(probs)), [0, 0, 0], mask=[1, 0, 1])
        assert loss.data == pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-12)

    def test_all_masked_rejected(self):
        with pytest.raises(ContractViolation):
            generation_loss(Tensor(np.zeros((2, 3))), [0, 1], mask=[0, 0])


class TestCombinedLoss:
    def test_arithmetic(self):
        parts = combined_loss(Tensor(np.array(2.0)), Tensor(np.array(1.0)), 0.8)
        assert float(parts.total.data) == pytest.approx(1.8, abs=1e-12)

    def test_lambda_one_is_generation_only(self):
        parts = combined_loss(Tensor(np.array(2.5)), Tensor(np.array(7.0)), 1.0)
        assert float(parts.total.data) == 2.5

    def test_lambda_zero_is_classifier_only(self):
        parts = combined_loss(Tensor(np.array(2.5)), Tensor(np.array(7.0)), 0.0)
        assert float(parts.total.data) == 7.0

    def test_missing_classifier_term(self):
        parts = combined_loss(Tensor(np.array(3.0)), None, 0.5)
        assert parts.cls_loss is None and float(parts.total.data) == 1.5

    @pytest.mark.parametrize("lam", [-0.1, 1.5])
    def test_lambda_out_of_range(self, lam):
        with pytest.raises(ContractViolation):
            combined_loss(Tensor(np.array(1.0)), None, lam)


class TestClassifier:
    def test_zero_params_predict_lowest_rating(self):
        params = ClassifierParams(10, 4, 4, rng=None)
        logits = classify_rating([4, 5, 6], params)
        assert not logits.data.any()
        assert predict(params, [[4, 5, 6], [7]]).tolist() == [1, 1]

    def test_one_hot_distributions_equal_hard_ids(self, rng):
        params = ClassifierParams(12, 5, 6, rng)
        ids = [4, 9, 2, 11]
        onehot = np.eye(12)[ids]
        with ad.no_grad():
            soft = classify_rating(Tensor(onehot), params).data
            hard = classify_rating(ids, params).data
        assert np.array_equal(soft, hard)

    def test_batch_matches_single(self, rng):
        params = ClassifierParams(12, 5, 6, rng)
        ids = np.array([[4, 5, 6, 0], [7, 8, 0, 0]])
        mask = ids != 0
        with ad.no_grad():
            batch = classify_batch(ids, mask, params).data
            for b in range(2):
                single = classify_rating(ids[b][mask[b]], params).data
                np.testing.assert_allclose(batch[b], single, rtol=0, atol=1e-14)

    def test_classifier_loss_is_neg_log_prob(self, rng):
        logits = Tensor(rng.normal(size=5))
        expected = np.log(np.exp(logits.data).sum()) - logits.data[2]
        assert float(classifier_loss(logits, 3).data) == pytest.approx(expected, abs=1e-12)

    def test_pad_rating_has_no_classifier_loss(self, rng):
        with pytest.raises(ContractViolation):
            classifier_loss(Tensor(rng.normal(size=5)), PAD_RATING)

    def test_empty_answer_rejected(self, rng):
        with pytest.raises(ContractViolation):
            classify_rating([], ClassifierParams(5, 2, 2, rng))


class TestExampleLoss:
    def test_pad_rating_gives_no_classifier_gradient(self):
        vocab, exs = tiny_corpus()
        model, cls = tiny_model(vocab), tiny_classifier(vocab)
        cls.set_trainable(True)
        arrays = tensorize(exs[0], vocab, rating=PAD_RATING)
        with ad.Tape():
            parts = example_loss(model, arrays, cls, 0.8)
            ad.backward(parts.total)
        assert parts.cls_loss is None
        assert all(not t.grad.any() for t in cls.named_tensors().values())
        assert any(t.grad.any() for t in model.named_tensors().values())

    def test_real_rating_reaches_classifier(self):
        vocab, exs = tiny_corpus()
        model, cls = tiny_model(vocab), tiny_classifier(vocab)
        cls.set_trainable(True)
        with ad.Tape():
            parts = example_loss(model, tensorize(exs[0], vocab), cls, 0.8)
            ad.backward(parts.total)
        assert parts.cls_loss is not None
        assert any(t.grad.any() for t in cls.named_tensors().values())
        assert float(parts.total.data) == pytest.approx(0.8 * parts.gen_loss + 0.2 * parts.cls_loss)

    def test_lambda_one_skips_classifier(self):
        vocab, exs = tiny_corpus()
        parts = example_loss(tiny_model(vocab), tensorize(exs[0], vocab), tiny_classifier(vocab), 1.0)
        assert parts.cls_loss is None and float(parts.total.data) == parts.gen_loss


class TestPretraining:
    def test_stratified_split_keeps_proportions(self, rng):
        labels = np.array([1] * 50 + [5] * 30)
        tr, held = stratified_split(labels, 0.1, rng)
        assert sorted(np.concatenate([tr, held]).tolist()) == list(range(80))
        assert np.sum(labels[held] == 1) == 5 and np.sum(labels[held] == 5) == 3

    def test_single_class_warns(self, rng, caplog):
        params = ClassifierParams(8, 3, 3, rng)
        with caplog.at_level(logging.WARNING, logger="reviewgen.objective"):
            rep = pretrain_classifier([[4, 5]] * 20, [3] * 20, params, epochs=1)
        assert "single rating class" in caplog.text
        assert rep.majority_accuracy == 1.0

    def test_learns_separable_tokens(self, rng):
        seqs = [[4, int(rng.integers(6, 9))] for _ in range(60)] + [[5, int(rng.integers(6, 9))] for _ in range(60)]
        ratings = [1] * 60 + [5] * 60
        params = ClassifierParams(9, 8, 8, rng)
        rep = pretrain_classifier(seqs, ratings, params, epochs=30, lr=3e-2, seed=0)
        assert rep.accuracy == 1.0
        assert rep.majority_accuracy == 0.5
        assert rep.train_losses[-1] < rep.train_losses[0]
