import itertools

import numpy as np
import pytest

from gradcheck import FD_TOL, gradient_error
from reviewgen import autodiff as ad
from reviewgen.autodiff import ContractViolation, Tensor
from reviewgen.corpus import BOS_ID, EOS_ID, PAD_RATING
from reviewgen.decoder import (
    DecoderParams, Hypothesis, beam_pool, beam_search, decode_step, greedy_search, initial_state,
    output_logits, teacher_forced_logits,
)
from reviewgen.encoder import (
    EncoderParams, bidirectional_attention, encode, encode_reviews, flatten_valid, rating_gate,
    snippet_attention,
)
from reviewgen.model import ReviewAnswerModel

D = 6
V = 11


def _enc(rng, scale=0.3):
    return EncoderParams(V, D, D, rng, scale)


def _context(rng, l_r=3, l_s=5):
    ids = rng.integers(4, V, size=(l_r, l_s))
    mask = np.ones((l_r, l_s), dtype=bool)
    for i in range(l_r):
        mask[i, int(rng.integers(1, l_s + 1)):] = False
    return np.where(mask, ids, 0), mask


class TestEncodeReviews:
    def test_zero_params_give_zero(self, rng):
        ids, mask = _context(rng)
        H = encode_reviews(ids, mask, EncoderParams(V, D, D, None))
        assert not H.data.any()

    def test_shape_of_single_padded_review(self, rng):
        ids = np.zeros((1, 20), dtype=np.int64)
        ids[0, :7] = rng.integers(4, V, size=7)
        mask = ids != 0
        assert encode_reviews(ids, mask, _enc(rng)).shape == (1, 20, D)

    def test_padding_is_zero(self, rng):
        ids, mask = _context(rng)
        H = encode_reviews(ids, mask, _enc(rng)).data
        assert not H[~mask].any()

    def test_direction_matters(self, rng):
        p = _enc(rng)
        ids = rng.integers(4, V, size=(1, 6))
        mask = np.ones_like(ids, dtype=bool)
        a = encode_reviews(ids, mask, p).data[0]
        b = encode_reviews(ids[:, ::-1], mask, p).data[0][::-1]
        assert not np.allclose(a, b)

    def test_reviews_encoded_independently(self, rng):
        p = _enc(rng)
        ids, mask = _context(rng)
        full = encode_reviews(ids, mask, p).data
        alone = encode_reviews(ids[1:2], mask[1:2], p).data
        np.testing.assert_allclose(full[1], alone[0], atol=1e-14)

    def test_out_of_range_id(self, rng):
        with pytest.raises(ContractViolation):
            encode_reviews(np.array([[V]]), np.array([[True]]), _enc(rng))

    def test_flatten_is_review_major(self, rng):
        ids, mask = _context(rng)
        H = encode_reviews(ids, mask, _enc(rng))
        np.testing.assert_array_equal(flatten_valid(H, mask).data, H.data[mask])


class TestSnippetAttention:
    def test_zero_scorer_gives_uniform_attention(self, rng):
        H, S = Tensor(rng.normal(size=(4, D))), Tensor(rng.normal(size=(3, D)))
        _, _, a_H, a_S = bidirectional_attention(H, S, Tensor(np.zeros(3 * D)))
        np.testing.assert_allclose(a_H.data, 1 / 3)
        np.testing.assert_allclose(a_S.data, 1 / 4)

    def test_single_snippet_token(self, rng):
        H, S = Tensor(rng.normal(size=(4, D))), Tensor(rng.normal(size=(1, D)))
        H_att, _, a_H, _ = bidirectional_attention(H, S, Tensor(rng.normal(size=3 * D)))
        assert np.all(a_H.data == 1.0)
        np.testing.assert_array_equal(H_att.data, np.repeat(S.data, 4, axis=0))

    def test_literal_form_is_identity(self, rng):
        H, S = Tensor(rng.normal(size=(9, D))), Tensor(rng.normal(size=(4, D)))
        H_att, S_att, _, _ = bidirectional_attention(H, S, Tensor(rng.normal(size=3 * D)), literal=True)
        assert np.array_equal(H_att.data, H.data)
        assert np.array_equal(S_att.data, S.data)

    def test_attention_rows_sum_to_one(self, rng):
        H, S = Tensor(rng.normal(size=(7, D))), Tensor(rng.normal(size=(3, D)))
        _, _, a_H, a_S = bidirectional_attention(H, S, Tensor(rng.normal(size=3 * D) * 3))
        np.testing.assert_allclose(a_H.data.sum(-1), 1.0, atol=1e-9)
        np.testing.assert_allclose(a_S.data.sum(-1), 1.0, atol=1e-9)

    def test_no_snippets_bypass(self, rng):
        H = Tensor(rng.normal(size=(5, D)))
        assert snippet_attention(H, None, _enc(rng)) is H
        assert snippet_attention(H, Tensor(np.zeros((0, D))), _enc(rng)) is H

    def test_gate_is_scalar_per_token(self, rng):
        p = _enc(rng)
        H, S = Tensor(rng.normal(size=(5, D))), Tensor(rng.normal(size=(2, D)))
        out = snippet_attention(H, S, p).data
        ratio = out / H.data
        np.testing.assert_allclose(ratio, ratio[:, :1].repeat(D, axis=1), rtol=1e-10)

    def test_gradients_wrt_projection_vectors(self, rng):
        for _ in range(20):
            p = _enc(rng, 0.5)
            H, S = Tensor(rng.normal(size=(5, D))), Tensor(rng.normal(size=(3, D)))
            err = gradient_error(lambda x: snippet_attention(H, S, p), [p.v_alpha1, p.v_alpha2], rng)
            assert err < FD_TOL


class TestRatingGate:
    def test_zero_vector_gives_zero(self, rng):
        p = _enc(rng)
        p.v_beta1.data[:] = 0
        assert not rating_gate(5, [1, 3, 5], p).data.any()

    def test_identical_ratings_identical_rows(self, rng):
        out = rating_gate(4, [2, 5, 2], _enc(rng)).data
        assert np.array_equal(out[0], out[2])

    def test_pad_query_uses_row_zero(self, rng):
        p = _enc(rng)
        R = p.rating_embedding.data
        expected = ((R[[3, 1]] * R[PAD_RATING]) @ p.v_beta1.data)[:, None] * R[[3, 1]]
        np.testing.assert_allclose(rating_gate(PAD_RATING, [3, 1], p).data, expected, atol=1e-15)


class TestEncode:
    def test_review_permutation_equivariance(self, rng):
        p = _enc(rng)
        ids, mask = _context(rng, l_r=4)
        snip = rng.integers(4, V, size=3)
        ratings = np.array([1, 5, 3, 2])
        perm = np.array([2, 0, 3, 1])
        a = encode(p, ids, mask, snip, ratings, 5)
        b = encode(p, ids[perm], mask[perm], snip, ratings[perm], 5)
        np.testing.assert_allclose(a.H_tilde_S[perm], b.H_tilde_S, atol=1e-12)
        np.testing.assert_allclose(a.ratings.data[perm], b.ratings.data, atol=1e-15)

    def test_requires_a_valid_token(self, rng):
        with pytest.raises(ContractViolation):
            encode(_enc(rng), np.zeros((1, 3), dtype=int), np.zeros((1, 3), bool), [], [1], 1)


def _ctx(rng, dec_scale=0.3):
    p = _enc(rng)
    ids, mask = _context(rng)
    ctx = encode(p, ids, mask, rng.integers(4, V, size=2), np.array([1, 4, 5]), 4)
    return ctx, DecoderParams(V, D, D, rng, dec_scale), p.token_embedding


class TestDecoder:
    def test_zero_params_uniform(self, rng):
        ctx, _, emb = _ctx(rng)
        h, lp = decode_step(initial_state(ctx, DecoderParams(V, D, D, None)), BOS_ID, ctx,
                            DecoderParams(V, D, D, None), emb)
        np.testing.assert_allclose(lp.data, -np.log(V))

    def test_single_context_token(self, rng):
        p = _enc(rng)
        ids = np.array([[5, 0, 0]])
        ctx = encode(p, ids, ids != 0, [], [3], 3)
        dec = DecoderParams(V, D, D, rng, 0.3)
        _, a_H, _ = output_logits(Tensor(rng.normal(size=(2, D))), ctx, dec)
        assert np.all(a_H.data == 1.0)

    def test_log_probs_normalized(self, rng):
        ctx, dec, emb = _ctx(rng, 1.0)
        h = initial_state(ctx, dec)
        for tok in (BOS_ID, 5, 7):
            h, lp = decode_step(h, tok, ctx, dec, emb)
            assert abs(np.exp(lp.data).sum() - 1) < 1e-9

    def test_attention_sums_to_one(self, rng):
        ctx, dec, _ = _ctx(rng, 1.0)
        _, a_H, a_R = output_logits(Tensor(rng.normal(size=(4, D))), ctx, dec)
        np.testing.assert_allclose(a_H.data.sum(-1), 1, atol=1e-9)
        np.testing.assert_allclose(a_R.data.sum(-1), 1, atol=1e-9)

    def test_teacher_forcing_matches_stepwise(self, rng):
        ctx, dec, emb = _ctx(rng)
        inputs = [BOS_ID, 5, 9, 4]
        tf = teacher_forced_logits(ctx, inputs, dec, emb).data
        h = initial_state(ctx, dec)
        for t, tok in enumerate(inputs):
            h, lp = decode_step(h, tok, ctx, dec, emb)
            np.testing.assert_allclose(lp.data, ad.log_softmax_array(tf[t]), atol=1e-12)

    def test_deterministic(self, rng):
        ctx, dec, emb = _ctx(rng)
        h = initial_state(ctx, dec)
        a = decode_step(h, 5, ctx, dec, emb)[1].data
        b = decode_step(h, 5, ctx, dec, emb)[1].data
        assert np.array_equal(a, b)

    def test_gradients_of_scorers_and_projection(self, rng):
        for _ in range(10):
            ctx, dec, emb = _ctx(rng, 0.5)
            with ad.no_grad():
                tokens = Tensor(ctx.tokens.data.copy())
                ratings = Tensor(ctx.ratings.data.copy())
            ctx.tokens, ctx.ratings = tokens, ratings
            params = [dec.w_H, dec.w_R, dec.W]
            err = gradient_error(lambda x: teacher_forced_logits(ctx, [BOS_ID, 6, 7], dec, emb),
                                 params, rng)
            assert err < FD_TOL


def _toy_step(rng, v=3, d=4):
    """A random recurrent scorer over ``v`` tokens (token v-1 acts as EOS)."""
    W = rng.normal(size=(d + v, d))
    U = rng.normal(size=(d, v)) * 2

    def step(state, token):
        x = np.zeros(v)
        x[token % v] = 1.0
        h = np.tanh(np.concatenate([state, x]) @ W)
        return h, ad.log_softmax_array(h @ U)

    return step, rng.normal(size=d)


def _exhaustive(step, state0, eos, max_len, v):
    best = None
    for length in range(1, max_len + 1):
        for seq in itertools.product(range(v), repeat=length):
            if eos in seq[:-1] or (length < max_len and seq[-1] != eos):
                continue
            s, lp, prev = state0, 0.0, BOS_ID
            for w in seq:
                s, l = step(s, prev)
                lp += l[w]
                prev = w
            hyp = Hypothesis(seq, lp, True)
            if best is None or (-hyp.normalized(), seq) < (-best.normalized(), best.tokens):
                best = hyp
    return best


class TestSearch:
    def test_beam_one_is_greedy(self, rng):
        for _ in range(50):
            step, s0 = _toy_step(rng, v=5)
            assert beam_search(step, s0, BOS_ID, 4, 1, 6).tokens == greedy_search(step, s0, BOS_ID, 4, 6).tokens

    def test_beam_dominates_greedy(self, rng):
        for _ in range(50):
            step, s0 = _toy_step(rng, v=5)
            best = max(h.log_prob for h in beam_pool(step, s0, BOS_ID, 4, 5, 6))
            assert best >= greedy_search(step, s0, BOS_ID, 4, 6).log_prob

    def test_exhaustive_on_toy_vocabulary(self, rng):
        for _ in range(30):
            step, s0 = _toy_step(rng, v=3)
            got = beam_search(step, s0, BOS_ID, 2, 5, 2)
            want = _exhaustive(step, s0, 2, 2, 3)
            assert got.tokens == want.tokens

    def test_eos_first_gives_empty_surface(self):
        def step(state, token):
            lp = np.full(4, -10.0)
            lp[EOS_ID] = -0.001
            return state, lp

        hyp = greedy_search(step, None, BOS_ID, EOS_ID, 15)
        assert hyp.surface(EOS_ID) == ()

    def test_length_cap(self):
        def step(state, token):
            return state, np.log(np.array([0.1, 0.6, 0.2, 0.1]))

        assert greedy_search(step, None, BOS_ID, EOS_ID, 3).tokens == (1, 1, 1)

    def test_log_prob_non_increasing(self, rng):
        step, s0 = _toy_step(rng, v=5)
        hyp = beam_search(step, s0, BOS_ID, 4, 5, 6)
        s, prev, total = s0, BOS_ID, 0.0
        for w in hyp.tokens:
            s, lp = step(s, prev)
            new = total + lp[w]
            assert new <= total
            total, prev = new, w
        assert np.isclose(total, hyp.log_prob)

    def test_greedy_ties_break_to_lowest_id(self):
        def step(state, token):
            return state, np.log(np.array([0.1, 0.1, 0.4, 0.4]))

        assert greedy_search(step, None, BOS_ID, EOS_ID, 2).tokens == (2, 2)


class TestModel:
    def test_variants_differ_in_paths(self, rng):
        from reviewgen.corpus import Review, Vocabulary
        from reviewgen.model import query_arrays

        vocab = Vocabulary(["the", "zipper", "is", "good", "bad"])
        reviews = [Review("A", ("the", "zipper", "is", "good"), 5), Review("A", ("bad",), 1)]
        arrays = query_arrays(reviews, [("zipper",)], vocab, 5, "A")
        full = ReviewAnswerModel(len(vocab), D, D, np.random.default_rng(0), variant="full")
        assert full.encode(arrays).ratings is not None
        nr = ReviewAnswerModel(len(vocab), D, D, np.random.default_rng(0), variant="norating")
        assert nr.encode(arrays).ratings is None
        s2s = ReviewAnswerModel(len(vocab), D, D, np.random.default_rng(0), variant="seq2seq")
        ctx = s2s.encode(arrays)
        H = flatten_valid(encode_reviews(arrays.context_ids, arrays.mask, s2s.encoder), arrays.mask)
        assert np.array_equal(ctx.tokens.data, H.data)
        with pytest.raises(ValueError):
            ReviewAnswerModel(len(vocab), D, D, variant="nope")

    def test_emb_must_equal_hidden(self):
        with pytest.raises(ContractViolation):
            EncoderParams(V, 4, 6)
