import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewgen.corpus import (
    BOS_ID, EOS_ID, MAX_LEN, MAX_REVIEWS, PAD_ID, PAD_RATING, UNK_ID, ItemBundle, Review,
    ShardHeader, Vocabulary, build_examples, build_vocab, detokenize, ingest, ingest_with_stats,
    read_shard, split_items, tokenize, write_shard,
)
from reviewgen.snippets import SnippetExtractor


def _write(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write((r if isinstance(r, str) else json.dumps(r)) + "\n")
    return path


def _bundle(item, n, rng=None, length=5):
    rng = rng or np.random.default_rng(0)
    words = ["the", "zipper", "is", "good", "bad", "fabric", "soft"]
    revs = tuple(
        Review(item, tuple(rng.choice(words, size=length)), int(rng.integers(1, 6))) for _ in range(n)
    )
    return ItemBundle(item, revs)


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Great fit!") == ["great", "fit", "!"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_collapse(self):
        assert tokenize("A  A") == ["a", "a"]

    def test_contraction_kept(self):
        assert tokenize("Don't buy") == ["don't", "buy"]

    def test_detokenize_attaches_punctuation(self):
        assert detokenize(["great", "fit", "!"]) == "great fit!"

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=60))
    def test_idempotent_on_joined_tokens(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks


class TestIngest:
    def test_min_reviews_filter(self, tmp_path):
        recs = []
        for item, n in (("A", 25), ("B", 19), ("C", 20)):
            recs += [{"asin": item, "overall": 5.0, "reviewText": "nice"}] * n
        bundles = ingest(_write(tmp_path / "r.jsonl", recs), min_reviews=20)
        assert [b.item_id for b in bundles] == ["A", "C"]

    def test_min_reviews_one_keeps_everything(self, tmp_path):
        recs = [{"asin": "A", "overall": 1, "reviewText": "bad"},
                {"asin": "B", "overall": 2, "reviewText": "meh"}]
        assert len(ingest(_write(tmp_path / "r.jsonl", recs), min_reviews=1)) == 2

    def test_all_records_missing_rating(self, tmp_path):
        recs = [{"asin": "A", "reviewText": "x"}] * 4
        bundles, stats = ingest_with_stats(_write(tmp_path / "r.jsonl", recs), min_reviews=1)
        assert bundles == []
        assert stats.warnings == 4

    def test_bad_records_counted(self, tmp_path):
        recs = [
            {"asin": "A", "overall": 6, "reviewText": "x"},
            {"asin": "A", "overall": 3, "reviewText": "   "},
            "{not json",
            {"asin": "A", "overall": 4, "reviewText": "fine", "extra": 1},
        ]
        bundles, stats = ingest_with_stats(_write(tmp_path / "r.jsonl", recs), min_reviews=1)
        assert (stats.skipped_rating, stats.skipped_empty, stats.skipped_missing) == (1, 1, 1)
        assert bundles[0].reviews[0].tokens == ("fine",)

    def test_order_preserved(self, tmp_path):
        recs = [{"asin": "A", "overall": 3, "reviewText": f"w{i}"} for i in range(5)]
        bundle = ingest(_write(tmp_path / "r.jsonl", recs), min_reviews=1)[0]
        assert [r.tokens[0] for r in bundle.reviews] == [f"w{i}" for i in range(5)]

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            ingest(tmp_path / "missing.jsonl")

    def test_review_rating_invariant(self):
        with pytest.raises(ValueError):
            Review("A", ("x",), 0)


class TestVocabulary:
    def test_specials_lowest_ids(self):
        v = Vocabulary()
        assert (v.token_to_id["<pad>"], v.token_to_id["<unk>"], v.token_to_id["<bos>"],
                v.token_to_id["<eos>"]) == (PAD_ID, UNK_ID, BOS_ID, EOS_ID)

    def test_min_freq(self):
        v = build_vocab([ItemBundle("A", (Review("A", ("a", "a", "b"), 5),))], min_freq=2)
        assert v.id_to_token[4:] == ["a"]

    def test_cap_consumed_by_specials(self):
        v = build_vocab([ItemBundle("A", (Review("A", ("a",), 5),))], min_freq=1, max_size=4)
        assert len(v) == 4

    def test_lexicographic_tiebreak(self):
        toks = ("y", "x") * 3
        v = build_vocab([ItemBundle("A", (Review("A", toks, 5),))], min_freq=1, max_size=5)
        assert v.id_to_token[4:] == ["x"]

    def test_empty_corpus(self):
        assert len(build_vocab([], min_freq=1)) == 4

    def test_unknown_maps_to_unk(self):
        v = Vocabulary(["a"])
        assert v.encode(["a", "zzz"]) == [4, UNK_ID]

    def test_save_load_round_trip(self, tmp_path):
        v = Vocabulary(["b", "a"])
        v.save(tmp_path / "v.json")
        w = Vocabulary.load(tmp_path / "v.json")
        assert w.id_to_token == v.id_to_token and w.content_hash() == v.content_hash()


class TestExamples:
    def test_leave_one_out(self):
        b = _bundle("A", 3)
        exs = build_examples(b, SnippetExtractor())
        assert len(exs) == 3
        for i, ex in enumerate(exs):
            assert len(ex.context) == 2
            assert ex.target == b.reviews[i]
            assert ex.rating == b.reviews[i].rating

    def test_context_subsampled_to_max(self):
        exs = build_examples(_bundle("A", 30), SnippetExtractor(), max_reviews=20)
        assert all(len(ex.context) == 20 for ex in exs)

    def test_target_not_in_context_by_position(self):
        rng = np.random.default_rng(3)
        b = _bundle("A", 25, rng, length=12)
        for i, ex in enumerate(build_examples(b, SnippetExtractor())):
            others = [r for j, r in enumerate(b.reviews) if j != i]
            # context is an order-preserving subsequence of the other reviews
            it = iter(others)
            assert all(any(r == o for o in it) for r in ex.context)

    def test_truncation(self):
        exs = build_examples(_bundle("A", 4, length=35), SnippetExtractor())
        for ex in exs:
            assert len(ex.target.tokens) == MAX_LEN
            assert all(len(r.tokens) <= MAX_LEN for r in ex.context)
            assert sum(len(s) for s in ex.snippets) <= 20

    def test_empty_snippets_kept(self):
        exs = build_examples(_bundle("A", 3), lambda toks: [])
        assert all(ex.snippets == () for ex in exs)

    def test_needs_two_reviews(self):
        with pytest.raises(ValueError):
            build_examples(_bundle("A", 1), SnippetExtractor())

    def test_same_item_everywhere(self):
        for ex in build_examples(_bundle("Q", 5), SnippetExtractor()):
            assert all(r.item_id == ex.target.item_id == "Q" for r in ex.context)

    def test_limits(self):
        assert MAX_REVIEWS == 20 and MAX_LEN == 20 and PAD_RATING == 0


class TestShards:
    def test_round_trip_and_byte_identical(self, tmp_path):
        bundles = [_bundle(f"I{i}", 22, np.random.default_rng(i), 8) for i in range(3)]
        exs = [ex for b in bundles for ex in build_examples(b, SnippetExtractor(), seed=7)]
        v = build_vocab(bundles, min_freq=1)
        write_shard(tmp_path / "a.jsonl", exs, ShardHeader(v.content_hash(), 7))
        exs2 = [ex for b in bundles for ex in build_examples(b, SnippetExtractor(), seed=7)]
        write_shard(tmp_path / "b.jsonl", exs2, ShardHeader(v.content_hash(), 7))
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        header, back = read_shard(tmp_path / "a.jsonl")
        assert back == exs
        assert header["tokenizer"] and header["vocab_hash"] == v.content_hash()
        assert header["limits"] == {"max_reviews": 20, "max_len": 20}

    def test_different_seed_changes_subsample(self):
        b = _bundle("A", 30, length=6)
        a = build_examples(b, SnippetExtractor(), seed=1)
        c = build_examples(b, SnippetExtractor(), seed=2)
        assert any(x.context != y.context for x, y in zip(a, c))

    def test_split_is_by_item(self):
        bundles = [_bundle(f"I{i}", 2) for i in range(40)]
        train, valid, test = split_items(bundles, seed=0)
        ids = [{b.item_id for b in part} for part in (train, valid, test)]
        assert sum(len(s) for s in ids) == 40
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
        assert len(valid) == 2 and len(test) == 2
