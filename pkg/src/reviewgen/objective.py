"""Training objective: generation NLL, auxiliary rating classifier, λ-combination."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, GRUParams, Tensor
from .corpus import PAD_RATING

log = logging.getLogger(__name__)

N_CLASSES = 5  # class c <-> rating c + 1


class ClassifierParams:
    """GRU sentiment classifier over token embeddings, five rating logits."""

    def __init__(self, vocab_size: int, emb: int = 256, hidden: int = 256,
                 rng: np.random.Generator | None = None, init_scale: float = 0.08,
                 shared_embedding: Tensor | None = None):
        def u(*shape):
            if rng is None:
                return np.zeros(shape)
            return rng.uniform(-init_scale, init_scale, size=shape)

        self.shares_embedding = shared_embedding is not None
        if shared_embedding is not None:
            emb = shared_embedding.shape[1]
            self.embedding = shared_embedding
        else:
            self.embedding = Tensor(u(vocab_size, emb), requires_grad=True)
        self.vocab_size, self.emb, self.hidden = vocab_size, emb, hidden
        self.gru = GRUParams(emb, hidden, rng, init_scale)
        self.W_out = Tensor(u(hidden, N_CLASSES), requires_grad=True)
        self.b_out = Tensor(np.zeros(N_CLASSES), requires_grad=True)

    def named_tensors(self, prefix: str = "classifier") -> dict:
        out = {} if self.shares_embedding else {f"{prefix}.embedding": self.embedding}
        out.update({f"{prefix}.gru.{n}": t for n, t in self.gru.tensors().items()})
        out[f"{prefix}.W_out"] = self.W_out
        out[f"{prefix}.b_out"] = self.b_out
        return out

    def set_trainable(self, flag: bool) -> None:
        for t in self.named_tensors().values():
            t.requires_grad = flag
            t.grad = np.zeros_like(t.data) if flag else None


def _run(xs: Tensor, params: ClassifierParams, mask: np.ndarray | None = None) -> Tensor:
    """GRU over ``xs[T, B, emb]``; final state -> ``[B, 5]`` logits."""
    h0 = Tensor(np.zeros((xs.shape[1], params.hidden)))
    states = ad.gru_sequence(xs, h0, params.gru, mask)
    return ad.add(ad.matmul(states[states.shape[0] - 1], params.W_out), params.b_out)


def classify_rating(answer, params: ClassifierParams) -> Tensor:
    """Rating logits ``[5]`` for one answer.

    ``answer`` is either a sequence of token ids (hard input) or a
    ``[T, V]`` Tensor of per-step token distributions, which enter as
    expected embeddings Σ_w p(w)·emb(w).
    """
    if isinstance(answer, Tensor):
        if answer.ndim != 2 or answer.shape[0] == 0:
            raise ContractViolation(f"classify_rating: need [T, V] distributions, got {answer.shape}")
        xs = ad.reshape(ad.matmul(answer, params.embedding), (answer.shape[0], 1, -1))
    else:
        ids = np.asarray(answer, dtype=np.int64).reshape(-1)
        if ids.size == 0:
            raise ContractViolation("classify_rating: empty answer")
        xs = ad.embedding_lookup(params.embedding, ids.reshape(-1, 1))
    return ad.reshape(_run(xs, params), (N_CLASSES,))


def classify_batch(ids: np.ndarray, mask: np.ndarray, params: ClassifierParams) -> Tensor:
    """Rating logits ``[B, 5]`` for padded hard-id sequences."""
    ids = np.asarray(ids, dtype=np.int64)
    xs = ad.embedding_lookup(params.embedding, ids.T)
    return _run(xs, params, np.asarray(mask, dtype=np.float64).T)


def generation_loss(log_probs: Tensor, target_ids, mask=None) -> Tensor:
    """Mean over unmasked steps of −log p(target_t).

    Rows of ``log_probs`` are renormalized, so raw logits are accepted too.
    """
    target_ids = np.asarray(target_ids, dtype=np.int64)
    T = target_ids.shape[0]
    m = np.ones(T) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.sum() == 0:
        raise ContractViolation("generation_loss: every step is masked")
    nll = ad.cross_entropy(log_probs, target_ids)
    return ad.scale(ad.sum_(ad.mul(nll, m)), 1.0 / m.sum())


def classifier_loss(logits: Tensor, rating: int) -> Tensor:
    """Cross entropy against a one-hot rating, i.e. −log p_rating."""
    if rating == PAD_RATING:
        raise ContractViolation("classifier_loss is undefined for PAD_RATING")
    return ad.cross_entropy(logits, rating - 1)


@dataclass
class LossBreakdown:
    gen_loss: float
    cls_loss: float | None
    total: Tensor
    lam: float


def combined_loss(gen: Tensor, cls: Tensor | None, lam: float) -> LossBreakdown:
    """total = λ·gen + (1−λ)·cls, or λ·gen when the classifier term is absent."""
    if not 0.0 <= lam <= 1.0:
        raise ContractViolation(f"lambda must be in [0, 1], got {lam}")
    total = ad.scale(gen, lam)
    if cls is not None:
        total = ad.add(total, ad.scale(cls, 1.0 - lam))
    return LossBreakdown(
        float(gen.data), None if cls is None else float(cls.data), total, lam
    )


def example_loss(model, arrays, classifier: ClassifierParams | None, lam: float) -> LossBreakdown:
    """Joint loss for one tensorized example (teacher forced).

    The classifier sees the decoder's per-step softmax distributions.  No
    classifier term is formed for PAD_RATING queries or when λ = 1.
    """
    logits = model.logits(arrays)
    gen = generation_loss(logits, arrays.target_ids)
    cls = None
    if classifier is not None and arrays.rating != PAD_RATING and lam < 1.0:
        cls = classifier_loss(classify_rating(ad.softmax(logits), classifier), arrays.rating)
    return combined_loss(gen, cls, lam)


# ---------------------------------------------------------------------------
# pretraining


@dataclass
class PretrainReport:
    accuracy: float
    majority_accuracy: float
    train_losses: list = field(default_factory=list)
    n_train: int = 0
    n_heldout: int = 0


def stratified_split(labels, heldout_frac: float, rng: np.random.Generator):
    """Index arrays (train, heldout) with per-class proportions preserved."""
    labels = np.asarray(labels)
    train, held = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(len(idx) * heldout_frac))
        held.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(held, dtype=np.int64))


def _pad(seqs, max_len: int):
    L = min(max_len, max(len(s) for s in seqs))
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        s = list(s)[:L]
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def predict(params: ClassifierParams, seqs, batch_size: int = 64, max_len: int = 20) -> np.ndarray:
    """Predicted ratings (1..5) for hard-id sequences; ties go to the lower rating."""
    out = []
    with ad.no_grad():
        for s in range(0, len(seqs), batch_size):
            ids, mask = _pad(seqs[s:s + batch_size], max_len)
            out.append(np.argmax(classify_batch(ids, mask, params).data, axis=1) + 1)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def pretrain_classifier(
    seqs,
    ratings,
    params: ClassifierParams,
    epochs: int = 5,
    lr: float = 1e-3,
    batch_size: int = 32,
    heldout_frac: float = 0.1,
    seed: int = 0,
    max_len: int = 20,
) -> PretrainReport:
    """Fit the classifier on (token ids, rating) pairs with Adam; report held-out accuracy."""
    from .trainer import Adam

    ratings = np.asarray(ratings, dtype=np.int64)
    if len(np.unique(ratings)) < 2:
        log.warning("classifier corpus has a single rating class; the classifier is degenerate")
    rng = np.random.default_rng(seed)
    tr, held = stratified_split(ratings, heldout_frac, rng)
    named = params.named_tensors()
    opt = Adam(named, lr=lr)
    report = PretrainReport(0.0, 0.0, n_train=len(tr), n_heldout=len(held))
    for _ in range(epochs):
        order = rng.permutation(tr)
        total, n = 0.0, 0
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            ids, mask = _pad([seqs[i] for i in idx], max_len)
            for t in named.values():
                t.zero_grad()
            with ad.Tape():
                loss = ad.mean(ad.cross_entropy(classify_batch(ids, mask, params), ratings[idx] - 1))
                ad.backward(loss)
            opt.step({k: t.grad for k, t in named.items()})
            total += float(loss.data) * len(idx)
            n += len(idx)
        report.train_losses.append(total / max(1, n))
    eval_idx = held if len(held) else tr
    pred = predict(params, [seqs[i] for i in eval_idx], max_len=max_len)
    gold = ratings[eval_idx]
    report.accuracy = float(np.mean(pred == gold)) if len(gold) else 0.0
    majority = np.bincount(ratings[tr]).argmax() if len(tr) else 1
    report.majority_accuracy = float(np.mean(gold == majority)) if len(gold) else 0.0
    return report
