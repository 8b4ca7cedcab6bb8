"""Review ingestion, tokenization, vocabularies and leave-one-out examples."""
from __future__ import annotations

import hashlib
import json
import logging
import re
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

TOKENIZER_VERSION = "rule-v1"
SHARD_FORMAT = "reviewgen.shard"
SHARD_VERSION = 1

# Rating symbols: 1..5 are stars, 0 means "no rating preference".  The value
# doubles as the row index into the rating embedding table.
PAD_RATING = 0
STAR_RATINGS = (1, 2, 3, 4, 5)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

MAX_REVIEWS = 20
MAX_LEN = 20

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split punctuation into its own tokens.

    >>> tokenize("Great fit!")
    ['great', 'fit', '!']
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if out and (tok[0].isalnum() or tok in "(\"'$"):
            out += " "
        out += tok
    return out


@dataclass(frozen=True)
class Review:
    item_id: str
    tokens: tuple
    rating: int

    def __post_init__(self):
        if self.rating not in STAR_RATINGS:
            raise ValueError(f"rating must be in 1..5, got {self.rating!r}")

    def to_json(self) -> dict:
        return {"tokens": list(self.tokens), "rating": self.rating}


@dataclass(frozen=True)
class ItemBundle:
    item_id: str
    reviews: tuple

    def to_json(self) -> dict:
        return {"item_id": self.item_id, "reviews": [r.to_json() for r in self.reviews]}

    @classmethod
    def from_json(cls, rec: dict) -> "ItemBundle":
        iid = rec["item_id"]
        return cls(iid, tuple(Review(iid, tuple(r["tokens"]), r["rating"]) for r in rec["reviews"]))


@dataclass(frozen=True)
class TrainingExample:
    item_id: str
    context: tuple
    target: Review
    snippets: tuple
    rating: int

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "context": [r.to_json() for r in self.context],
            "target": self.target.to_json(),
            "snippets": [list(s) for s in self.snippets],
            "rating": self.rating,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "TrainingExample":
        iid = rec["item_id"]

        def rev(r):
            return Review(iid, tuple(r["tokens"]), r["rating"])

        return cls(
            iid,
            tuple(rev(r) for r in rec["context"]),
            rev(rec["target"]),
            tuple(tuple(s) for s in rec["snippets"]),
            rec["rating"],
        )


@dataclass
class IngestStats:
    records: int = 0
    skipped_missing: int = 0
    skipped_rating: int = 0
    skipped_empty: int = 0
    dropped_items: int = 0

    @property
    def warnings(self) -> int:
        return self.skipped_missing + self.skipped_rating + self.skipped_empty


def _parse_rating(value) -> int | None:
    try:
        f = float(value)
    except (TypeError, ValueError):
        return None
    if not f.is_integer() or int(f) not in STAR_RATINGS:
        return None
    return int(f)


def _json_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None


def ingest_records(records: Iterable, min_reviews: int = 20) -> tuple[list[ItemBundle], IngestStats]:
    """Group already-parsed record dicts by item; ``None`` counts as a malformed record."""
    if min_reviews < 1:
        raise ValueError("min_reviews must be >= 1")
    stats = IngestStats()
    grouped: dict[str, list[Review]] = {}
    for rec in records:
        stats.records += 1
        try:
            text, item = rec["reviewText"], rec["asin"]
            raw_rating = rec["overall"]
        except (KeyError, TypeError):
            stats.skipped_missing += 1
            continue
        rating = _parse_rating(raw_rating)
        if rating is None:
            stats.skipped_rating += 1
            continue
        tokens = tokenize(str(text))
        if not tokens:
            stats.skipped_empty += 1
            continue
        grouped.setdefault(str(item), []).append(Review(str(item), tuple(tokens), rating))
    if stats.warnings:
        log.warning(
            "skipped %d of %d records (missing field %d, bad rating %d, empty text %d)",
            stats.warnings, stats.records, stats.skipped_missing,
            stats.skipped_rating, stats.skipped_empty,
        )
    bundles = []
    for item, reviews in grouped.items():
        if len(reviews) >= min_reviews:
            bundles.append(ItemBundle(item, tuple(reviews)))
        else:
            stats.dropped_items += 1
    return bundles, stats


def ingest_with_stats(path, min_reviews: int = 20) -> tuple[list[ItemBundle], IngestStats]:
    return ingest_records(_json_lines(path), min_reviews)


def ingest(path, min_reviews: int = 20) -> list[ItemBundle]:
    """Group valid records of a line-delimited review file by item.

    Items with fewer than ``min_reviews`` valid reviews are dropped.  Review
    order within an item follows the file.
    """
    return ingest_with_stats(path, min_reviews)[0]


class Vocabulary:
    """Token/id mapping with the four specials at ids 0..3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.id_to_token: list[str] = list(SPECIALS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIALS)}
        for tok in tokens:
            if tok in self.token_to_id:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.token_to_id[tok] = len(self.id_to_token)
            self.id_to_token.append(tok)

    pad_id, unk_id, bos_id, eos_id = PAD_ID, UNK_ID, BOS_ID, EOS_ID

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, tok: str) -> bool:
        return tok in self.token_to_id

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids if i >= len(SPECIALS) or i == UNK_ID]

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.id_to_token).encode("utf-8")).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"tokens": self.id_to_token[len(SPECIALS):], "hash": self.content_hash()}

    @classmethod
    def from_json(cls, rec: dict) -> "Vocabulary":
        vocab = cls(rec["tokens"])
        if "hash" in rec and rec["hash"] != vocab.content_hash():
            raise ValueError("vocabulary hash mismatch")
        return vocab

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(bundles: Iterable[ItemBundle], min_freq: int = 5, max_size: int = 30000) -> Vocabulary:
    """Frequency-ranked vocabulary; ties broken lexicographically."""
    if min_freq < 1 or max_size < len(SPECIALS):
        raise ValueError(f"need min_freq >= 1 and max_size >= {len(SPECIALS)}")
    counts: Counter = Counter()
    for b in bundles:
        for r in b.reviews:
            counts.update(r.tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(kept[: max_size - len(SPECIALS)])


def _truncate(review: Review, max_len: int) -> Review:
    if len(review.tokens) <= max_len:
        return review
    return Review(review.item_id, review.tokens[:max_len], review.rating)


def bundle_rng(seed: int, item_id: str) -> np.random.Generator:
    """Per-item generator so results do not depend on processing order."""
    return np.random.default_rng([seed, zlib.crc32(item_id.encode("utf-8"))])


def build_examples(
    bundle: ItemBundle,
    extractor: Callable[[Sequence[str]], list],
    max_reviews: int = MAX_REVIEWS,
    max_len: int = MAX_LEN,
    seed: int = 0,
) -> list[TrainingExample]:
    """One leave-one-out example per review of ``bundle``."""
    reviews = [_truncate(r, max_len) for r in bundle.reviews]
    if len(reviews) < 2:
        raise ValueError(f"item {bundle.item_id!r} needs at least 2 reviews")
    rng = bundle_rng(seed, bundle.item_id)
    out = []
    for i, target in enumerate(reviews):
        others = reviews[:i] + reviews[i + 1:]
        if len(others) > max_reviews:
            keep = np.sort(rng.choice(len(others), size=max_reviews, replace=False))
            others = [others[k] for k in keep]
        snippets = tuple(tuple(s) for s in extractor(target.tokens))
        out.append(TrainingExample(bundle.item_id, tuple(others), target, snippets, target.rating))
    return out


def split_items(bundles: Sequence[ItemBundle], seed: int = 0,
                valid_frac: float = 0.05, test_frac: float = 0.05):
    """Partition bundles by item into (train, valid, test)."""
    n = len(bundles)
    order = np.random.default_rng(seed).permutation(n)
    n_valid = int(round(n * valid_frac))
    n_test = int(round(n * test_frac))
    if n >= 3:
        n_valid, n_test = max(1, n_valid), max(1, n_test)
    test = [bundles[i] for i in sorted(order[:n_test])]
    valid = [bundles[i] for i in sorted(order[n_test:n_test + n_valid])]
    train = [bundles[i] for i in sorted(order[n_test + n_valid:])]
    return train, valid, test


@dataclass
class ShardHeader:
    vocab_hash: str
    seed: int
    limits: dict = field(default_factory=lambda: {"max_reviews": MAX_REVIEWS, "max_len": MAX_LEN})
    tokenizer: str = TOKENIZER_VERSION
    count: int = 0

    def to_json(self) -> dict:
        return {
            "format": SHARD_FORMAT,
            "version": SHARD_VERSION,
            "tokenizer": self.tokenizer,
            "vocab_hash": self.vocab_hash,
            "seed": self.seed,
            "limits": self.limits,
            "count": self.count,
        }


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_shard(path, examples: Sequence[TrainingExample], header: ShardHeader) -> None:
    header.count = len(examples)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header.to_json()) + "\n")
        for ex in examples:
            fh.write(_dumps(ex.to_json()) + "\n")


def read_shard(path) -> tuple[dict, list[TrainingExample]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SHARD_FORMAT or header.get("version") != SHARD_VERSION:
            raise ValueError(f"{path}: not a version-{SHARD_VERSION} example shard")
        examples = [TrainingExample.from_json(json.loads(line)) for line in fh if line.strip()]
    if len(examples) != header["count"]:
        raise ValueError(f"{path}: header promises {header['count']} examples, found {len(examples)}")
    return header, examples


def write_items(path, bundles: Sequence[ItemBundle]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in bundles:
            fh.write(_dumps(b.to_json()) + "\n")


def read_items(path) -> dict[str, ItemBundle]:
    with open(path, encoding="utf-8") as fh:
        bundles = [ItemBundle.from_json(json.loads(line)) for line in fh if line.strip()]
    return {b.item_id: b for b in bundles}
