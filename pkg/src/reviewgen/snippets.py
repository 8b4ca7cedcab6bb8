"""Noun-phrase aspect snippets via a lexicon tagger and an (ADJ|NOUN)* NOUN chunker."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

NOUN, ADJ, VERB, OTHER = "NOUN", "ADJ", "VERB", "OTHER"
TAGS = (NOUN, ADJ, VERB, OTHER)

MAX_SNIPPETS = 5
MAX_SNIPPET_TOKENS = 20


@dataclass(frozen=True)
class PosLexicon:
    word_to_tag: dict
    suffix_rules: tuple  # (suffix, tag) pairs, file order

    def lookup(self, token: str) -> str:
        tag = self.word_to_tag.get(token)
        if tag is not None:
            return tag
        best = None
        for suffix, stag in self.suffix_rules:
            if token.endswith(suffix) and len(token) > len(suffix):
                if best is None or len(suffix) > len(best[0]):
                    best = (suffix, stag)
        return best[1] if best else OTHER

    @classmethod
    def from_files(cls, words_path, suffixes_path) -> "PosLexicon":
        return cls(_read_tsv(Path(words_path).read_text("utf-8"), dict),
                   tuple(_read_tsv(Path(suffixes_path).read_text("utf-8"), list)))


def _read_tsv(text: str, container):
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, tag = line.split("\t")
        if tag not in TAGS:
            raise ValueError(f"line {n}: unknown tag {tag!r}")
        pairs.append((key.lstrip("-"), tag))
    return container(pairs)


_default: PosLexicon | None = None


def default_lexicon() -> PosLexicon:
    """The lexicon bundled in ``reviewgen/data``."""
    global _default
    if _default is None:
        data = resources.files("reviewgen") / "data"
        _default = PosLexicon(
            _read_tsv((data / "lexicon_words.tsv").read_text("utf-8"), dict),
            tuple(_read_tsv((data / "lexicon_suffixes.tsv").read_text("utf-8"), list)),
        )
    return _default


def tag(tokens: Sequence[str], lexicon: PosLexicon) -> list[str]:
    return [lexicon.lookup(t) for t in tokens]


def extract_snippets(
    tokens: Sequence[str],
    lexicon: PosLexicon | None = None,
    max_snippets: int = MAX_SNIPPETS,
    max_total_tokens: int = MAX_SNIPPET_TOKENS,
) -> list[tuple]:
    """Maximal left-to-right (ADJ|NOUN)* NOUN chunks, deduplicated, in text order.

    A chunk that would push the concatenated snippet length past
    ``max_total_tokens`` is skipped.
    """
    if max_snippets < 1:
        raise ValueError("max_snippets must be >= 1")
    lexicon = lexicon or default_lexicon()
    tags = tag(tokens, lexicon)
    out: list[tuple] = []
    seen = set()
    budget = max_total_tokens
    i, n = 0, len(tokens)
    while i < n and len(out) < max_snippets:
        if tags[i] not in (ADJ, NOUN):
            i += 1
            continue
        j = i
        last_noun = -1
        while j < n and tags[j] in (ADJ, NOUN):
            if tags[j] == NOUN:
                last_noun = j
            j += 1
        if last_noun >= 0:
            chunk = tuple(tokens[i:last_noun + 1])[:MAX_SNIPPET_TOKENS]
            if chunk not in seen and len(chunk) <= budget:
                seen.add(chunk)
                out.append(chunk)
                budget -= len(chunk)
        i = j
    return out


class SnippetExtractor:
    """Callable wrapper with fixed settings, for ``corpus.build_examples``."""

    def __init__(self, lexicon: PosLexicon | None = None, max_snippets: int = MAX_SNIPPETS,
                 max_total_tokens: int = MAX_SNIPPET_TOKENS):
        self.lexicon = lexicon or default_lexicon()
        self.max_snippets = max_snippets
        self.max_total_tokens = max_total_tokens

    def __call__(self, tokens: Sequence[str]) -> list[tuple]:
        return extract_snippets(tokens, self.lexicon, self.max_snippets, self.max_total_tokens)
