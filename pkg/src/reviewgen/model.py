"""The full generator: encoder + decoder, tensorized examples, model variants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import BOS_ID, EOS_ID, PAD_ID, PAD_RATING, TrainingExample, Vocabulary
from .decoder import (
    DecoderParams, Hypothesis, beam_search, greedy_search, initial_state, make_step_fn,
    teacher_forced_logits,
)
from .encoder import EncodedContext, EncoderParams, encode

# variant -> (use_snippets, use_rating)
VARIANTS = {
    "full": (True, True),
    "norating": (True, False),
    "seq2seq": (False, False),
}


@dataclass
class ExampleArrays:
    context_ids: np.ndarray   # [l_r, l_s]
    mask: np.ndarray          # [l_r, l_s] bool
    context_ratings: np.ndarray
    snippet_ids: np.ndarray   # concatenated snippet tokens
    rating: int               # query rating symbol (PAD_RATING allowed)
    input_ids: np.ndarray     # BOS + target
    target_ids: np.ndarray    # target + EOS


def tensorize(ex: TrainingExample, vocab: Vocabulary, rating: int | None = None) -> ExampleArrays:
    """Pad the context to its longest review and id-encode everything."""
    ctx = ex.context
    if not ctx:
        raise ValueError(f"example for item {ex.item_id!r} has an empty context")
    l_s = max(len(r.tokens) for r in ctx)
    ids = np.full((len(ctx), l_s), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(ctx), l_s), dtype=bool)
    for i, r in enumerate(ctx):
        ids[i, :len(r.tokens)] = vocab.encode(r.tokens)
        mask[i, :len(r.tokens)] = True
    snippet = [t for s in ex.snippets for t in s]
    target = vocab.encode(ex.target.tokens)
    return ExampleArrays(
        context_ids=ids,
        mask=mask,
        context_ratings=np.array([r.rating for r in ctx], dtype=np.int64),
        snippet_ids=np.array(vocab.encode(snippet), dtype=np.int64),
        rating=ex.rating if rating is None else rating,
        input_ids=np.array([BOS_ID] + target, dtype=np.int64),
        target_ids=np.array(target + [EOS_ID], dtype=np.int64),
    )


class ReviewAnswerModel:
    """Snippet- and rating-conditioned review generator.

    ``variant`` selects the ablations: ``full``, ``norating`` (rating path
    zeroed) or ``seq2seq`` (decoder attends over raw review contexts only).
    """

    def __init__(self, vocab_size: int, emb: int = 512, hidden: int = 512,
                 rng: np.random.Generator | None = None, init_scale: float = 0.08,
                 variant: str = "full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        self.variant = variant
        self.use_snippets, self.use_rating = VARIANTS[variant]
        self.encoder = EncoderParams(vocab_size, emb, hidden, rng, init_scale)
        self.decoder = DecoderParams(vocab_size, emb, hidden, rng, init_scale)

    @property
    def vocab_size(self) -> int:
        return self.encoder.vocab_size

    def named_tensors(self) -> dict:
        out = self.encoder.named_tensors()
        out.update(self.decoder.named_tensors())
        return out

    def encode(self, arrays: ExampleArrays, literal: bool = False) -> EncodedContext:
        return encode(
            self.encoder, arrays.context_ids, arrays.mask, arrays.snippet_ids,
            arrays.context_ratings, arrays.rating,
            use_snippets=self.use_snippets, use_rating=self.use_rating, literal=literal,
        )

    def logits(self, arrays: ExampleArrays) -> ad.Tensor:
        """Teacher-forced logits ``[T, V]`` aligned with ``arrays.target_ids``."""
        ctx = self.encode(arrays)
        return teacher_forced_logits(ctx, arrays.input_ids, self.decoder, self.encoder.token_embedding)

    def search_problem(self, arrays: ExampleArrays):
        """``(step, state0)`` for the search routines in :mod:`reviewgen.decoder`."""
        with ad.no_grad():
            ctx = self.encode(arrays)
            h0 = initial_state(ctx, self.decoder).data
        return make_step_fn(ctx, self.decoder, self.encoder.token_embedding), h0

    def greedy(self, arrays: ExampleArrays, max_len: int = 15) -> list:
        step, h0 = self.search_problem(arrays)
        return list(greedy_search(step, h0, BOS_ID, EOS_ID, max_len).surface(EOS_ID))

    def beam(self, arrays: ExampleArrays, beam: int = 5, max_len: int = 15) -> Hypothesis:
        step, h0 = self.search_problem(arrays)
        return beam_search(step, h0, BOS_ID, EOS_ID, beam, max_len)

    def generate(self, arrays: ExampleArrays, beam: int = 5, max_len: int = 15) -> list:
        """Surface token ids of the best beam hypothesis."""
        return list(self.beam(arrays, beam, max_len).surface(EOS_ID))


def query_arrays(reviews, snippets, vocab: Vocabulary, rating: int | None,
                 item_id: str = "") -> ExampleArrays:
    """Arrays for inference: all given reviews as context, no target."""
    from .corpus import Review

    ex = TrainingExample(item_id, tuple(reviews), Review(item_id, ("<unk>",), 1),
                         tuple(tuple(s) for s in snippets),
                         PAD_RATING if rating is None else rating)
    return tensorize(ex, vocab)
