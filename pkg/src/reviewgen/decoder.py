"""GRU decoder attending over encoded contexts, plus greedy and beam decoding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, GRUParams, Tensor
from .encoder import EncodedContext


class DecoderParams:
    def __init__(self, vocab_size: int, emb: int = 512, hidden: int = 512,
                 rng: np.random.Generator | None = None, init_scale: float = 0.08):
        self.vocab_size, self.emb, self.hidden = vocab_size, emb, hidden

        def u(*shape):
            if rng is None:
                return np.zeros(shape)
            return rng.uniform(-init_scale, init_scale, size=shape)

        self.gru = GRUParams(emb, hidden, rng, init_scale)
        self.W_init = Tensor(u(hidden, hidden), requires_grad=True)
        self.b_init = Tensor(np.zeros(hidden), requires_grad=True)
        self.w_H = Tensor(u(2 * hidden), requires_grad=True)
        self.b_H = Tensor(np.zeros(1), requires_grad=True)
        self.w_R = Tensor(u(2 * hidden), requires_grad=True)
        self.b_R = Tensor(np.zeros(1), requires_grad=True)
        self.W = Tensor(u(3 * hidden, vocab_size), requires_grad=True)
        self.b = Tensor(np.zeros(vocab_size), requires_grad=True)

    def named_tensors(self, prefix: str = "decoder") -> dict:
        out = {f"{prefix}.gru.{n}": t for n, t in self.gru.tensors().items()}
        for n in ("W_init", "b_init", "w_H", "b_H", "w_R", "b_R", "W", "b"):
            out[f"{prefix}.{n}"] = getattr(self, n)
        return out


def initial_state(ctx: EncodedContext, params: DecoderParams) -> Tensor:
    """h₀ = tanh(W_init · mean(H̃_S) + b_init)."""
    pooled = ad.mean(ctx.tokens, axis=0)
    return ad.tanh(ad.add(ad.matmul(pooled, params.W_init), params.b_init))


def _attend(keys: Tensor, states: Tensor, w: Tensor, b: Tensor):
    """score[t, p] = w·[key_p; h_t] + b; returns (weights [T, P], context [T, d])."""
    d = keys.shape[1]
    key_part = ad.reshape(ad.matmul(keys, w[0:d]), (1, -1))
    state_part = ad.reshape(ad.matmul(states, w[d:2 * d]), (-1, 1))
    alpha = ad.softmax(ad.add(ad.add(key_part, state_part), b))
    return alpha, ad.matmul(alpha, keys)


def output_logits(states: Tensor, ctx: EncodedContext, params: DecoderParams):
    """Vocabulary logits for decoder states ``[T, d]``; also returns both attentions."""
    if ctx.tokens.shape[0] == 0:
        raise ContractViolation("decoder needs at least one valid context token")
    alpha_H, c_H = _attend(ctx.tokens, states, params.w_H, params.b_H)
    if ctx.ratings is not None:
        alpha_R, c_R = _attend(ctx.ratings, states, params.w_R, params.b_R)
    else:
        alpha_R, c_R = None, Tensor(np.zeros(states.shape))
    feats = ad.concat([states, c_H, c_R], axis=-1)
    return ad.add(ad.matmul(feats, params.W), params.b), alpha_H, alpha_R


def teacher_forced_logits(ctx: EncodedContext, input_ids, params: DecoderParams,
                          embedding: Tensor) -> Tensor:
    """Logits ``[T, V]`` when step t is fed the gold token t−1 (``input_ids[t]``)."""
    input_ids = np.asarray(input_ids, dtype=np.int64).reshape(-1, 1)
    h0 = ad.reshape(initial_state(ctx, params), (1, -1))
    xs = ad.embedding_lookup(embedding, input_ids)
    states = ad.reshape(ad.gru_sequence(xs, h0, params.gru), (len(input_ids), -1))
    logits, _, _ = output_logits(states, ctx, params)
    return logits


def decode_step(h_prev: Tensor, y_prev: int, ctx: EncodedContext, params: DecoderParams,
                embedding: Tensor):
    """One decoding step: returns (h [d], log_probs [V])."""
    x = ad.embedding_lookup(embedding, np.array([y_prev]))
    h = ad.gru_cell(x, ad.reshape(h_prev, (1, -1)), params.gru)
    logits, _, _ = output_logits(h, ctx, params)
    return ad.reshape(h, (-1,)), ad.reshape(ad.log_softmax(logits), (-1,))


def make_step_fn(ctx: EncodedContext, params: DecoderParams, embedding: Tensor) -> Callable:
    """Numpy-level ``(state, token) -> (state, log_probs)`` for search routines."""

    def step(state, token):
        with ad.no_grad():
            h, lp = decode_step(Tensor(state), int(token), ctx, params, embedding)
        return h.data, lp.data

    return step


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    log_prob: float
    terminated: bool

    def surface(self, eos: int) -> tuple:
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == eos else self.tokens

    def normalized(self) -> float:
        return self.log_prob / max(1, len(self.tokens))


def greedy_search(step: Callable, state0, bos: int, eos: int, max_len: int) -> Hypothesis:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tokens: list = []
    logp = 0.0
    state, prev = state0, bos
    while True:
        state, lp = step(state, prev)
        w = int(np.argmax(lp))
        tokens.append(w)
        logp += float(lp[w])
        prev = w
        if w == eos or len(tokens) == max_len:
            return Hypothesis(tuple(tokens), logp, True)


def beam_pool(step: Callable, state0, bos: int, eos: int, beam: int, max_len: int) -> list:
    """Final hypothesis pool of a beam search over summed log-probabilities.

    Terminated hypotheses stay in the pool and compete with live ones; the
    greedy path is added at the end, so the pool's best summed
    log-probability is never below the greedy one.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    alive = [(Hypothesis((), 0.0, False), state0)]
    finished: list = []
    for _ in range(max_len):
        cands = []
        for hyp, state in alive:
            new_state, lp = step(state, hyp.tokens[-1] if hyp.tokens else bos)
            for w in np.argsort(-lp, kind="stable")[:beam]:
                w = int(w)
                toks = hyp.tokens + (w,)
                done = w == eos or len(toks) == max_len
                cands.append((Hypothesis(toks, hyp.log_prob + float(lp[w]), done), new_state))
        pool = finished + cands
        pool.sort(key=lambda hs: (-hs[0].log_prob, hs[0].tokens))
        pool = pool[:beam]
        finished = [hs for hs in pool if hs[0].terminated]
        alive = [hs for hs in pool if not hs[0].terminated]
        if not alive:
            break
    final = [hs[0] for hs in finished]
    greedy = greedy_search(step, state0, bos, eos, max_len)
    if greedy not in final:
        final.append(greedy)
    return final


def beam_search(step: Callable, state0, bos: int, eos: int, beam: int, max_len: int) -> Hypothesis:
    """Best hypothesis of :func:`beam_pool` by length-normalized log-probability.

    Ties go to the lexicographically smallest token ids.
    """
    pool = beam_pool(step, state0, bos, eos, beam, max_len)
    return min(pool, key=lambda h: (-h.normalized(), h.tokens))
