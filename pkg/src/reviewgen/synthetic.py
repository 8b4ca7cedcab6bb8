"""Deterministic synthetic review corpora in the Amazon record format.

Used for the bundled toy corpus and for offline training checks.  Review text
is assembled from small templates whose sentiment words depend on the star
rating, so rating information is recoverable from text.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

PRODUCTS = {
    "shirt": ("fabric", "collar", "sleeves", "fit", "color", "buttons"),
    "dress": ("fabric", "length", "fit", "color", "zipper", "lining"),
    "boots": ("sole", "heel", "leather", "fit", "laces", "insole"),
    "watch": ("band", "face", "strap", "buckle", "battery", "clasp"),
    "bag": ("strap", "zipper", "pockets", "leather", "lining", "handle"),
    "jacket": ("zipper", "hood", "pockets", "fabric", "sleeves", "lining"),
    "sneakers": ("sole", "laces", "insole", "fit", "color", "toe"),
    "scarf": ("fabric", "color", "length", "pattern", "wool", "texture"),
    "jeans": ("denim", "waist", "length", "fit", "pockets", "stitching"),
    "hat": ("brim", "band", "fabric", "color", "size", "shape"),
}

POSITIVE = ("excellent", "great", "soft", "perfect", "comfortable", "beautiful", "sturdy")
NEGATIVE = ("terrible", "awful", "cheap", "flimsy", "scratchy", "poor", "ugly")
NEUTRAL = ("okay", "decent", "average", "fine")

CLOSING = {
    5: ("love this {p} !", "highly recommend this {p} .", "best {p} i own ."),
    4: ("nice {p} overall .", "would buy this {p} again ."),
    3: ("the {p} is okay for the price .", "not bad but not great ."),
    2: ("not happy with this {p} .", "the {p} was disappointing ."),
    1: ("returned the {p} .", "do not buy this {p} !", "worst {p} ever ."),
}


def _adjectives(rating: int):
    if rating >= 4:
        return POSITIVE
    if rating <= 2:
        return NEGATIVE
    return NEUTRAL


def review_text(product: str, rating: int, rng: np.random.Generator) -> str:
    aspects = PRODUCTS[product]
    adjs = _adjectives(rating)
    n_clauses = int(rng.integers(1, 3))
    picks = rng.choice(len(aspects), size=n_clauses, replace=False)
    clauses = []
    for k in picks:
        adj = adjs[int(rng.integers(len(adjs)))]
        clauses.append(f"the {aspects[k]} is {adj}")
    closing = CLOSING[rating][int(rng.integers(len(CLOSING[rating])))].format(p=product)
    return " and ".join(clauses) + " . " + closing


def generate_records(
    n_items: int,
    reviews_per_item: tuple = (20, 26),
    ratings: tuple = (1, 2, 3, 4, 5),
    seed: int = 0,
    prefix: str = "B0TOY",
) -> list[dict]:
    """Records with ``asin``/``overall``/``reviewText`` fields, items interleaved."""
    rng = np.random.default_rng(seed)
    products = sorted(PRODUCTS)
    items = []
    for i in range(n_items):
        product = products[i % len(products)]
        n = int(rng.integers(reviews_per_item[0], reviews_per_item[1] + 1))
        revs = []
        for _ in range(n):
            rating = int(ratings[int(rng.integers(len(ratings)))])
            revs.append({"asin": f"{prefix}{i:04d}", "overall": float(rating),
                         "reviewText": review_text(product, rating, rng)})
        items.append(revs)
    records = []
    for j in range(max(len(r) for r in items)):
        for revs in items:
            if j < len(revs):
                records.append(revs[j])
    return records


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def toy_corpus_records() -> list[dict]:
    """The 50-item corpus shipped as ``reviewgen/data/toy_reviews.jsonl``."""
    return generate_records(50, seed=20200521)


def toy_corpus_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("reviewgen") / "data" / "toy_reviews.jsonl"))
