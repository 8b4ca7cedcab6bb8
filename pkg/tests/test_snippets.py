from hypothesis import given, settings
from hypothesis import strategies as st

from reviewgen.snippets import (
    ADJ, NOUN, OTHER, PosLexicon, SnippetExtractor, default_lexicon, extract_snippets, tag,
)

LEX = PosLexicon(
    {"sound": NOUN, "quality": NOUN, "amazing": ADJ, "good": ADJ, "zipper": NOUN, "strap": NOUN},
    (("ly", OTHER), ("ness", NOUN), ("ful", ADJ), ("fulness", OTHER)),
)
WORDS = ["the", "sound", "quality", "amazing", "good", "zipper", "strap", "is", "and", "softness"]


class TestTagger:
    def test_direct_lookup(self):
        assert tag(["sound", "quality"], LEX) == [NOUN, NOUN]

    def test_suffix_fallback(self):
        assert tag(["amazingly"], LEX) == [OTHER]

    def test_default_other(self):
        assert tag(["qwxz"], LEX) == [OTHER]

    def test_longest_suffix_wins(self):
        assert tag(["usefulness"], LEX) == [OTHER]
        assert tag(["careful"], LEX) == [ADJ]

    def test_exact_word_beats_suffix(self):
        lex = PosLexicon({"only": ADJ}, (("ly", OTHER),))
        assert tag(["only"], lex) == [ADJ]

    def test_bundled_lexicon_loads(self):
        lex = default_lexicon()
        assert lex.lookup("zipper") == NOUN
        assert lex.lookup("comfortable") == ADJ


class TestExtract:
    def test_noun_noun_chunk(self):
        toks = "the sound quality is amazing".split()
        assert extract_snippets(toks, LEX) == [("sound", "quality")]

    def test_no_nouns(self):
        assert extract_snippets(["the", "is", "and"], LEX) == []

    def test_dedup_keeps_first(self):
        toks = "good zipper and good zipper".split()
        assert extract_snippets(toks, LEX) == [("good", "zipper")]

    def test_trailing_adjective_not_included(self):
        assert extract_snippets(["zipper", "good"], LEX) == [("zipper",)]

    def test_max_snippets(self):
        toks = "zipper and strap and sound and quality".split()
        assert extract_snippets(toks, LEX, max_snippets=2) == [("zipper",), ("strap",)]

    def test_total_token_budget(self):
        toks = "sound quality and zipper strap and good sound".split()
        out = extract_snippets(toks, LEX, max_total_tokens=3)
        assert out == [("sound", "quality")]  # later chunks no longer fit the budget
        out = extract_snippets(toks, LEX, max_total_tokens=4)
        assert out == [("sound", "quality"), ("zipper", "strap")]

    def test_bundled_extractor_on_question(self):
        assert SnippetExtractor()("how is the fabric quality ?".split()) == [("fabric", "quality")]

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.sampled_from(WORDS), max_size=30), st.integers(1, 6))
    def test_invariants(self, toks, k):
        out = extract_snippets(toks, LEX, max_snippets=k)
        assert len(out) <= k
        assert len(set(out)) == len(out)
        assert sum(len(s) for s in out) <= 20
        # snippets are disjoint spans appearing in order
        pos = 0
        for s in out:
            assert 1 <= len(s) <= 20
            tags = tag(list(s), LEX)
            assert tags[-1] == NOUN and set(tags) <= {ADJ, NOUN}
            while tuple(toks[pos:pos + len(s)]) != s:
                pos += 1
                assert pos < len(toks)
            pos += len(s)
        assert extract_snippets(toks, LEX, max_snippets=k) == out
