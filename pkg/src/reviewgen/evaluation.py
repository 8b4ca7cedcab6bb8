"""Retrieval baselines and the multi-system comparison harness."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import ContractViolation
from .corpus import PAD_RATING, Review, TrainingExample, Vocabulary
from .metrics import METRICS, ExampleScore, corpus_scores, score_example

log = logging.getLogger(__name__)

# canonical row order of the comparison table
SYSTEM_ORDER = ("random", "nn-rating", "seq2seq", "ours", "ours-norating")
SYSTEM_LABELS = {
    "random": "Random",
    "nn-rating": "NN-rating",
    "seq2seq": "Seq2seq",
    "ours": "Ours",
    "ours-norating": "Ours w/o rating",
}
METRIC_LABELS = {
    "bleu1": "BLEU-1", "bleu2": "BLEU-2", "bleu3": "BLEU-3", "bleu4": "BLEU-4",
    "meteor": "METEOR", "rougeL": "ROUGE-L",
}


def baseline_random(pool: Sequence[Review], seed) -> tuple:
    """Tokens of one review drawn uniformly from ``pool``.

    ``seed`` is an int or a ``numpy.random.Generator`` (advanced in place).
    """
    if len(pool) == 0:
        raise ContractViolation("baseline_random: empty candidate pool")
    rng = np.random.default_rng(seed)
    return tuple(pool[int(rng.integers(len(pool)))].tokens)


def baseline_nn_rating(pool: Sequence[Review], target_rating: int | None, seed) -> tuple:
    """Uniform draw among same-rating reviews; the whole pool when none match.

    A missing target rating (``None`` or ``PAD_RATING``) behaves exactly like
    :func:`baseline_random`.
    """
    if len(pool) == 0:
        raise ContractViolation("baseline_nn_rating: empty candidate pool")
    if target_rating is not None and target_rating != PAD_RATING:
        same = [r for r in pool if r.rating == target_rating]
        if same:
            return baseline_random(same, seed)
    return baseline_random(pool, seed)


System = Callable[[TrainingExample], Sequence[str]]


def random_system(seed: int = 0) -> System:
    rng = np.random.default_rng(seed)
    return lambda ex: baseline_random(ex.context, rng)


def nn_rating_system(seed: int = 0) -> System:
    rng = np.random.default_rng(seed)
    return lambda ex: baseline_nn_rating(ex.context, ex.rating, rng)


def model_system(model, vocab: Vocabulary, beam: int = 5, max_len: int = 15) -> System:
    """Beam-decode each example's context, snippets and rating with ``model``."""
    from .model import query_arrays

    def generate(ex: TrainingExample):
        arrays = query_arrays(ex.context, ex.snippets, vocab, ex.rating, ex.item_id)
        return vocab.decode(model.generate(arrays, beam=beam, max_len=max_len))

    return generate


@dataclass
class EvalReport:
    scores: dict                                  # system -> metric -> score
    examples: dict = field(default_factory=dict)  # system -> [ExampleScore]
    failures: dict = field(default_factory=dict)  # system -> count
    outputs: dict = field(default_factory=dict)   # system -> [candidate tokens]

    @property
    def systems(self) -> list:
        known = [s for s in SYSTEM_ORDER if s in self.scores]
        return known + sorted(s for s in self.scores if s not in SYSTEM_ORDER)

    def recompute(self) -> dict:
        return {s: corpus_scores(self.examples[s]) for s in self.systems}

    def table(self) -> str:
        labels = [SYSTEM_LABELS.get(s, s) for s in self.systems]
        width = max([len("System")] + [len(x) for x in labels])
        head = "System".ljust(width) + "".join(f"{METRIC_LABELS[m]:>10}" for m in METRICS)
        lines = [head, "-" * len(head)]
        for sys_name, label in zip(self.systems, labels):
            row = label.ljust(width) + "".join(f"{self.scores[sys_name][m]:>10.3f}" for m in METRICS)
            if self.failures.get(sys_name):
                row += f"  ({self.failures[sys_name]} failed)"
            lines.append(row)
        return "\n".join(lines)

    def records(self) -> list:
        """One JSON-serializable record per (system, metric)."""
        out = []
        for s in self.systems:
            for m in METRICS:
                out.append({"system": s, "metric": m, "score": self.scores[s][m],
                            "n": len(self.examples.get(s, ())), "failures": self.failures.get(s, 0)})
        return out

    def write_records(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def evaluate_systems(examples: Sequence[TrainingExample], systems: Mapping[str, System]) -> EvalReport:
    """Score every system against each example's held-out review.

    Systems receive the example with its target removed.  An exception from
    a system scores that example as an empty candidate and is counted.
    """
    if len(examples) == 0:
        raise ContractViolation("evaluate_systems: no examples")
    report = EvalReport(scores={})
    for name, fn in systems.items():
        per, outs, failed = [], [], 0
        for ex in examples:
            ref = tuple(ex.target.tokens)
            try:
                cand = tuple(fn(replace(ex, target=None)))
                ok = True
            except Exception as err:  # noqa: BLE001 - any system failure is scored, not raised
                log.warning("system %s failed on item %s: %s", name, ex.item_id, err)
                cand, ok = (), False
                failed += 1
            per.append(score_example(cand, ref, failed=not ok))
            outs.append(list(cand))
        report.examples[name] = per
        report.outputs[name] = outs
        report.failures[name] = failed
        report.scores[name] = corpus_scores(per)
    return report

