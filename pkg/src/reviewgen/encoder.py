"""Review/snippet/rating encoder: BiGRU contexts, snippet attention and rating gating."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, GRUParams, Tensor

N_RATING_SYMBOLS = 6  # PAD_RATING (row 0) + stars 1..5


class EncoderParams:
    def __init__(self, vocab_size: int, emb: int = 512, hidden: int = 512,
                 rng: np.random.Generator | None = None, init_scale: float = 0.08):
        if emb != hidden:
            raise ContractViolation(
                f"snippet attention mixes token contexts with embeddings: emb={emb} != hidden={hidden}"
            )
        self.vocab_size, self.emb, self.hidden = vocab_size, emb, hidden

        def u(*shape):
            if rng is None:
                return np.zeros(shape)
            return rng.uniform(-init_scale, init_scale, size=shape)

        self.token_embedding = Tensor(u(vocab_size, emb), requires_grad=True)
        self.rating_embedding = Tensor(u(N_RATING_SYMBOLS, emb), requires_grad=True)
        self.fwd = GRUParams(emb, hidden, rng, init_scale)
        self.bwd = GRUParams(emb, hidden, rng, init_scale)
        self.v_alpha1 = Tensor(u(3 * hidden), requires_grad=True)
        self.v_alpha2 = Tensor(u(4 * hidden), requires_grad=True)
        self.v_beta1 = Tensor(u(emb), requires_grad=True)

    def named_tensors(self, prefix: str = "encoder") -> dict:
        out = {
            f"{prefix}.token_embedding": self.token_embedding,
            f"{prefix}.rating_embedding": self.rating_embedding,
        }
        for d, gru in (("fwd", self.fwd), ("bwd", self.bwd)):
            for n, t in gru.tensors().items():
                out[f"{prefix}.{d}.{n}"] = t
        out[f"{prefix}.v_alpha1"] = self.v_alpha1
        out[f"{prefix}.v_alpha2"] = self.v_alpha2
        out[f"{prefix}.v_beta1"] = self.v_beta1
        return out


def encode_reviews(ids: np.ndarray, mask: np.ndarray, params: EncoderParams) -> Tensor:
    """Per-token H = forward GRU state + backward GRU state, one review per row.

    ``ids``/``mask`` are ``[l_r, l_s]``; padded positions come out as zeros.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or ids.shape != mask.shape:
        raise ContractViolation(f"encode_reviews: ids {ids.shape} / mask {mask.shape} must be equal 2-D")
    l_r, l_s = ids.shape
    fmask = mask.T.astype(np.float64)
    xs = ad.embedding_lookup(params.token_embedding, ids.T)
    h0 = Tensor(np.zeros((l_r, params.hidden)))
    fwd = ad.gru_sequence(xs, h0, params.fwd, fmask)
    bwd = ad.gru_sequence(xs, h0, params.bwd, fmask, reverse=True)
    H = ad.mul(ad.add(fwd, bwd), fmask[:, :, None])
    return ad.transpose(H, (1, 0, 2))


def flatten_valid(H: Tensor, mask: np.ndarray) -> Tensor:
    """Rows of ``H[l_r, l_s, d]`` at valid positions, review-major order."""
    l_r, l_s, d = H.shape
    flat = ad.reshape(H, (l_r * l_s, d))
    return ad.embedding_lookup(flat, np.flatnonzero(np.asarray(mask, dtype=bool).reshape(-1)))


def attention_scores(H: Tensor, S: Tensor, v_alpha1: Tensor) -> Tensor:
    """A[i, j] = v·[H_i; S_j; H_i⊙S_j], computed without materializing [N, m, 3d]."""
    d = H.shape[1]
    va, vb, vc = v_alpha1[0:d], v_alpha1[d:2 * d], v_alpha1[2 * d:3 * d]
    left = ad.reshape(ad.matmul(H, va), (-1, 1))
    right = ad.reshape(ad.matmul(S, vb), (1, -1))
    cross = ad.matmul(ad.mul(H, vc), ad.transpose(S))
    return ad.add(ad.add(left, right), cross)


def bidirectional_attention(H: Tensor, S: Tensor, v_alpha1: Tensor, literal: bool = False):
    """Returns (H_att, S_att, a_H, a_S).

    Default: each review token attends over snippet tokens and vice versa.
    ``literal=True`` weights each vector by its own attention mass instead,
    which collapses to the identity; kept to pin down that degeneracy.
    """
    A = attention_scores(H, S, v_alpha1)
    a_H = ad.softmax(A)
    a_S = ad.softmax(ad.transpose(A))
    if literal:
        H_att = ad.mul(ad.sum_(a_H, axis=-1, keepdims=True), H)
        S_att = ad.mul(ad.sum_(a_S, axis=-1, keepdims=True), S)
    else:
        H_att = ad.matmul(a_H, S)
        S_att = ad.matmul(a_S, H)
    return H_att, S_att, a_H, a_S


def snippet_attention(H: Tensor, S: Tensor | None, params: EncoderParams,
                      literal: bool = False) -> Tensor:
    """Snippet-conditioned review contexts: a scalar gate per token times H_i.

    ``H`` is ``[N, d]`` (valid tokens only), ``S`` is ``[m, d]``.  With no
    snippets (``m == 0``) the contexts pass through unchanged.
    """
    if S is None or S.shape[0] == 0:
        return H
    d = H.shape[1]
    H_att, S_att, _, _ = bidirectional_attention(H, S, params.v_alpha1, literal)
    s_bar = ad.mean(S_att, axis=0)
    v = params.v_alpha2
    gate = ad.add(
        ad.add(ad.matmul(H, v[0:d]), ad.matmul(H_att, v[d:2 * d])),
        ad.add(ad.matmul(ad.mul(H, H_att), v[2 * d:3 * d]), ad.matmul(ad.mul(H, s_bar), v[3 * d:4 * d])),
    )
    return ad.mul(ad.reshape(gate, (-1, 1)), H)


def rating_gate(r_query: int, ratings, params: EncoderParams) -> Tensor:
    """R̃_t = (v·(emb(r_query) ⊙ emb(rating_t))) · emb(rating_t)."""
    ratings = np.asarray(ratings, dtype=np.int64)
    R = ad.embedding_lookup(params.rating_embedding, ratings)
    q = ad.embedding_lookup(params.rating_embedding, np.array([r_query]))
    gate = ad.matmul(ad.mul(R, q), params.v_beta1)
    return ad.mul(ad.reshape(gate, (-1, 1)), R)


@dataclass
class EncodedContext:
    tokens: Tensor           # H̃_S at valid positions, [N, d]
    ratings: Tensor | None   # R̃, [l_r, d]; None when the rating path is disabled
    token_mask: np.ndarray   # [l_r, l_s]

    @property
    def H_tilde_S(self) -> np.ndarray:
        """Dense ``[l_r, l_s, d]`` view with zeros at padding."""
        l_r, l_s = self.token_mask.shape
        out = np.zeros((l_r * l_s, self.tokens.shape[1]))
        out[np.flatnonzero(self.token_mask.reshape(-1))] = self.tokens.data
        return out.reshape(l_r, l_s, -1)


def encode(
    params: EncoderParams,
    context_ids: np.ndarray,
    mask: np.ndarray,
    snippet_ids,
    context_ratings,
    r_query: int,
    use_snippets: bool = True,
    use_rating: bool = True,
    literal: bool = False,
) -> EncodedContext:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractViolation("encode: context has no valid tokens")
    H = flatten_valid(encode_reviews(context_ids, mask, params), mask)
    snippet_ids = np.asarray(snippet_ids, dtype=np.int64).reshape(-1)
    if use_snippets and snippet_ids.size:
        S = ad.embedding_lookup(params.token_embedding, snippet_ids)
        tokens = snippet_attention(H, S, params, literal)
    else:
        tokens = H
    ratings = rating_gate(r_query, context_ratings, params) if use_rating else None
    return EncodedContext(tokens, ratings, mask)
