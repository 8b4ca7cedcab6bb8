"""BLEU-1..4, METEOR and ROUGE-L over token sequences.

Every score is on a 0-100 scale.  BLEU is a corpus statistic built from
per-example n-gram counts; METEOR and ROUGE-L are averaged over examples.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import ContractViolation
from .kernels import lcs_length

BLEU_EPS = 1e-9
ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9  # F_mean = PR / (αP + (1-α)R) = 10PR / (R + 9P)
METEOR_GAMMA = 0.5
METEOR_THETA = 3.0
MAX_ORDER = 4


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuStats:
    """Clipped n-gram matches and candidate n-gram totals for orders 1..4."""

    matches: tuple
    totals: tuple
    cand_len: int
    ref_len: int


def bleu_stats(candidate: Sequence, reference: Sequence) -> BleuStats:
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        c, r = ngrams(candidate, n), ngrams(reference, n)
        matches.append(sum(min(k, r[g]) for g, k in c.items()))
        totals.append(max(0, len(candidate) - n + 1))
    return BleuStats(tuple(matches), tuple(totals), len(candidate), len(reference))


def bleu_from_stats(stats: Sequence[BleuStats], n: int) -> float:
    """Cumulative corpus BLEU-n from summed per-example statistics."""
    if not 1 <= n <= MAX_ORDER:
        raise ContractViolation(f"BLEU order must be in 1..{MAX_ORDER}, got {n}")
    if len(stats) == 0:
        raise ContractViolation("BLEU needs at least one candidate")
    cand_len = sum(s.cand_len for s in stats)
    ref_len = sum(s.ref_len for s in stats)
    if cand_len == 0:
        return 0.0
    log_p = 0.0
    for k in range(n):
        m = sum(s.matches[k] for s in stats)
        t = sum(s.totals[k] for s in stats)
        # zero counts (including orders the candidates are too short for) get the ε floor
        p = m / t if m > 0 else BLEU_EPS / max(t, 1)
        log_p += np.log(p)
    bp = min(1.0, float(np.exp(1.0 - ref_len / cand_len)))
    return 100.0 * bp * float(np.exp(log_p / n))


def bleu_n(candidates: Sequence[Sequence], references: Sequence[Sequence], n: int) -> float:
    """Corpus-level cumulative BLEU-n with one reference per candidate."""
    if len(candidates) != len(references):
        raise ContractViolation(f"{len(candidates)} candidates but {len(references)} references")
    return bleu_from_stats([bleu_stats(c, r) for c, r in zip(candidates, references)], n)


def rouge_l(candidate: Sequence, reference: Sequence, beta: float = ROUGE_BETA) -> float:
    """LCS F-measure; 0 when either side is empty."""
    if len(candidate) == 0 or len(reference) == 0:
        return 0.0
    ids: dict = {}
    lcs = lcs_length([ids.setdefault(t, len(ids)) for t in candidate],
                     [ids.setdefault(t, len(ids)) for t in reference])
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    b2 = beta * beta
    return 100.0 * (1.0 + b2) * p * r / (r + b2 * p)


_SUFFIXES = ("ingly", "edly", "ness", "ment", "ing", "ies", "ied", "ers", "est",
             "ly", "ed", "es", "er", "s")


def stem(token: str) -> str:
    """Crude suffix stripper; keeps at least three characters of stem."""
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            base = token[: -len(suf)]
            if suf in ("ies", "ied"):
                base += "y"
            return base
    return token


def _match_stage(candidate, reference, cand_used, ref_used, key) -> list:
    pairs = []
    for i, tok in enumerate(candidate):
        if cand_used[i]:
            continue
        k = key(tok)
        for j, rtok in enumerate(reference):
            if not ref_used[j] and key(rtok) == k:
                cand_used[i] = ref_used[j] = True
                pairs.append((i, j))
                break
    return pairs


def meteor_alignment(candidate: Sequence, reference: Sequence) -> list:
    """(candidate index, reference index) pairs: exact matches first, then stems."""
    cu, ru = [False] * len(candidate), [False] * len(reference)
    pairs = _match_stage(candidate, reference, cu, ru, lambda t: t)
    pairs += _match_stage(candidate, reference, cu, ru, lambda t: stem(str(t)))
    return sorted(pairs)


def count_chunks(pairs: Sequence) -> int:
    """Number of runs that are contiguous and in order on both sides."""
    chunks = 0
    prev = None
    for i, j in sorted(pairs):
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(candidate: Sequence, reference: Sequence) -> float:
    if len(candidate) == 0 or len(reference) == 0:
        return 0.0
    pairs = meteor_alignment(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (count_chunks(pairs) / m) ** METEOR_THETA
    return 100.0 * f_mean * (1.0 - penalty)


METRICS = ("bleu1", "bleu2", "bleu3", "bleu4", "meteor", "rougeL")


@dataclass
class ExampleScore:
    """Per-example statistics; corpus scores are recomputed from these."""

    bleu: BleuStats
    meteor: float
    rouge_l: float
    failed: bool = False

    def to_json(self) -> dict:
        return {
            "bleu_matches": list(self.bleu.matches),
            "bleu_totals": list(self.bleu.totals),
            "cand_len": self.bleu.cand_len,
            "ref_len": self.bleu.ref_len,
            "meteor": self.meteor,
            "rougeL": self.rouge_l,
            "failed": self.failed,
        }


def score_example(candidate: Sequence, reference: Sequence, failed: bool = False) -> ExampleScore:
    return ExampleScore(bleu_stats(candidate, reference), meteor(candidate, reference),
                        rouge_l(candidate, reference), failed)


def corpus_scores(examples: Sequence[ExampleScore]) -> dict:
    """All six metrics from per-example records."""
    if len(examples) == 0:
        raise ContractViolation("cannot score an empty corpus")
    stats = [e.bleu for e in examples]
    out = {f"bleu{n}": bleu_from_stats(stats, n) for n in range(1, MAX_ORDER + 1)}
    out["meteor"] = float(np.mean([e.meteor for e in examples]))
    out["rougeL"] = float(np.mean([e.rouge_l for e in examples]))
    return out
