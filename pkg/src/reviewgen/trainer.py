"""Joint training loop: Adam, element-wise gradient clamping, checkpoints."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .config import TrainConfig
from .corpus import PAD_RATING, TrainingExample, Vocabulary
from .model import ReviewAnswerModel, tensorize
from .objective import ClassifierParams, example_loss, generation_loss

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def adam_step(param, grad, m, v, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(param, m, v)``."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _adam_inplace(param, grad, m, v, t, lr, beta1, beta2, eps) -> None:
    # same operation order as adam_step, so results are bit-identical
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    step = lr * (m / (1.0 - beta1 ** t))
    step /= np.sqrt(v / (1.0 - beta2 ** t)) + eps
    param -= step


class Adam:
    """Adam over a name -> Tensor map; frozen tensors (requires_grad False) are skipped."""

    def __init__(self, named: dict, lr: float = 0.0002, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.named = named
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in named.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in named.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        for k, p in self.named.items():
            g = grads.get(k)
            if g is None or not p.requires_grad:
                continue
            _adam_inplace(p.data, g, self.m[k], self.v[k], self.t,
                          self.lr, self.beta1, self.beta2, self.eps)

    def state_tensors(self) -> dict:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        return out

    def load_state_tensors(self, tensors: dict, t: int) -> None:
        self.t = t
        for k in self.m:
            self.m[k] = tensors[f"adam.m.{k}"].copy()
            self.v[k] = tensors[f"adam.v.{k}"].copy()


def clip_gradients(grads: dict, lo: float = -5.0, hi: float = 5.0):
    """Clamp every component into [lo, hi]; returns (clipped, fraction clamped)."""
    clipped, n, hit = {}, 0, 0
    for k, g in grads.items():
        c = np.clip(g, lo, hi)
        hit += int(np.count_nonzero(c != g))
        n += g.size
        clipped[k] = c
    return clipped, (hit / n if n else 0.0)


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    epoch_valid: list = field(default_factory=list)
    best_epoch: int = -1
    best_valid: float = math.inf
    steps: int = 0


class Trainer:
    """Owns the model, optional classifier, optimizer and step schedule.

    The example order and PAD-rating substitutions of epoch ``e`` are drawn
    from a generator seeded with ``(seed, e)``, so a run can resume at any
    step from the parameters and optimizer moments alone.
    """

    def __init__(self, model: ReviewAnswerModel, config: TrainConfig, vocab: Vocabulary,
                 classifier: ClassifierParams | None = None, log_path=None):
        self.model = model
        self.config = config
        self.vocab = vocab
        self.classifier = classifier
        if classifier is not None:
            classifier.set_trainable(not config.freeze_classifier)
        self.named = dict(model.named_tensors())
        if classifier is not None and not config.freeze_classifier:
            self.named.update(classifier.named_tensors())
        self.optimizer = Adam(self.named, lr=config.learning_rate)
        self.step_count = 0
        self.result = TrainResult()
        self._best: dict | None = None
        self._bad_epochs = 0
        self.log_path = Path(log_path) if log_path else None
        if self.log_path and self.log_path.exists():
            self.log_path.unlink()

    # -- schedule -------------------------------------------------------
    def epoch_plan(self, n: int, epoch: int):
        rng = np.random.default_rng([self.config.seed, epoch])
        order = rng.permutation(n)
        pad = rng.random(n) < self.config.pad_rating_prob
        return order, pad

    def steps_per_epoch(self, n: int) -> int:
        return max(1, math.ceil(n / self.config.batch_size))

    # -- core step ------------------------------------------------------
    def _zero_grads(self) -> None:
        for t in self.named.values():
            t.zero_grad()

    def batch_gradients(self, arrays_list: Sequence) -> tuple[dict, dict]:
        """Mean gradients and losses over a batch, reduced in list order."""
        self._zero_grads()
        gen_sum, cls_sum, cls_n, tot_sum = 0.0, 0.0, 0, 0.0
        for arrays in arrays_list:
            with ad.Tape():
                parts = example_loss(self.model, arrays, self.classifier, self.config.lam)
                ad.backward(parts.total)
            gen_sum += parts.gen_loss
            tot_sum += float(parts.total.data)
            if parts.cls_loss is not None:
                cls_sum += parts.cls_loss
                cls_n += 1
        B = len(arrays_list)
        grads = {k: t.grad / B for k, t in self.named.items() if t.requires_grad}
        losses = {
            "gen_loss": gen_sum / B,
            "cls_loss": cls_sum / cls_n if cls_n else None,
            "total": tot_sum / B,
        }
        return grads, losses

    def apply(self, grads: dict) -> float:
        clipped, frac = clip_gradients(grads, *self.config.clip_range)
        self.optimizer.step(clipped)
        return frac

    def train_step(self, arrays_list: Sequence) -> dict:
        grads, losses = self.batch_gradients(arrays_list)
        if not all(math.isfinite(v) for v in (losses["gen_loss"], losses["total"])):
            raise TrainingError(f"non-finite loss at step {self.step_count + 1}: {losses}")
        frac = self.apply(grads)
        self.step_count += 1
        rec = {"step": self.step_count, **losses, "clip_frac": frac}
        self._log(rec)
        return rec

    # -- evaluation -----------------------------------------------------
    def validation_loss(self, examples: Sequence[TrainingExample]) -> float:
        if not examples:
            return math.nan
        total = 0.0
        with ad.no_grad():
            for ex in examples:
                arrays = tensorize(ex, self.vocab)
                total += float(generation_loss(self.model.logits(arrays), arrays.target_ids).data)
        return total / len(examples)

    # -- loop -----------------------------------------------------------
    def fit(self, train: Sequence[TrainingExample], valid: Sequence[TrainingExample] = (),
            out_dir=None, max_steps: int | None = None) -> TrainResult:
        """Train until the epoch budget, early stopping, or ``max_steps``.

        On normal completion the best-validation weights are loaded back into
        the model; a ``max_steps`` interruption leaves the current weights.
        """
        cfg = self.config
        n = len(train)
        if n == 0:
            raise TrainingError("empty training set")
        spe = self.steps_per_epoch(n)
        out = Path(out_dir) if out_dir else None
        if out:
            out.mkdir(parents=True, exist_ok=True)
        interrupted = False
        while True:
            epoch, b = divmod(self.step_count, spe)
            if epoch >= cfg.epochs:
                break
            if max_steps is not None and self.step_count >= max_steps:
                interrupted = True
                break
            order, pad = self.epoch_plan(n, epoch)
            idx = sorted(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            batch = [
                tensorize(train[i], self.vocab, PAD_RATING if pad[i] else None) for i in idx
            ]
            rec = self.train_step(batch)
            rec["epoch"] = epoch
            self.result.history.append(rec)
            if b == spe - 1 and self._end_epoch(epoch, valid, out):
                break
        self.result.steps = self.step_count
        if out:
            self.save_state(out / "last.ckpt")
        if self._best is not None and not interrupted:
            checkpoint.assign(self.model.named_tensors(), self._best)
        return self.result

    def _end_epoch(self, epoch: int, valid, out) -> bool:
        """Validation bookkeeping; returns True when early stopping triggers."""
        vloss = self.validation_loss(valid) if valid else self.result.history[-1]["gen_loss"]
        self.result.epoch_valid.append(vloss)
        samples = []
        for ex in list(valid)[:2]:
            ids = self.model.greedy(tensorize(ex, self.vocab), self.config.max_decode_len)
            samples.append(" ".join(self.vocab.decode(ids)))
        self._log({"epoch": epoch, "valid_gen_loss": vloss, "samples": samples})
        if vloss <= self.result.best_valid:
            self.result.best_valid, self.result.best_epoch = vloss, epoch
            self._best = {k: t.data.copy() for k, t in self.model.named_tensors().items()}
            self._bad_epochs = 0
            if out:
                self.save_model(out / "best.ckpt")
        else:
            self._bad_epochs += 1
        return self._bad_epochs >= self.config.patience

    def _log(self, rec: dict) -> None:
        if self.log_path:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # -- persistence ----------------------------------------------------
    def _meta(self) -> dict:
        return {
            "kind": "train_state",
            "config": self.config.to_dict(),
            "vocab_hash": self.vocab.content_hash(),
            "variant": self.model.variant,
            "vocab_size": self.model.vocab_size,
            "step": self.step_count,
            "rng": {"scheme": "per-epoch", "seed": self.config.seed},
            "best_valid": None if math.isinf(self.result.best_valid) else self.result.best_valid,
            "best_epoch": self.result.best_epoch,
            "epoch_valid": self.result.epoch_valid,
            "bad_epochs": self._bad_epochs,
        }

    def save_model(self, path) -> None:
        save_model(path, self.model, self.config, self.vocab)

    def save_state(self, path) -> None:
        """Full-precision state (weights + moments) for bit-exact resumption."""
        tensors = {k: t.data for k, t in self.named.items()}
        tensors.update(self.optimizer.state_tensors())
        if self._best is not None:
            tensors.update({f"best.{k}": v for k, v in self._best.items()})
        checkpoint.save(path, tensors, self._meta(), dtype="<f8")

    def load_state(self, path) -> None:
        tensors, meta = checkpoint.load(path)
        if meta.get("vocab_hash") != self.vocab.content_hash():
            raise checkpoint.CheckpointError("checkpoint was trained with a different vocabulary")
        checkpoint.assign(self.named, tensors)
        self.optimizer.load_state_tensors(tensors, meta["step"])
        self.step_count = meta["step"]
        best = {k[5:]: v for k, v in tensors.items() if k.startswith("best.")}
        self._best = best or None
        self.result.best_valid = meta["best_valid"] if meta["best_valid"] is not None else math.inf
        self.result.best_epoch = meta["best_epoch"]
        self.result.epoch_valid = list(meta["epoch_valid"])
        self._bad_epochs = meta["bad_epochs"]


def save_model(path, model: ReviewAnswerModel, config: TrainConfig, vocab: Vocabulary) -> None:
    meta = {
        "kind": "model",
        "config": config.to_dict(),
        "vocab_hash": vocab.content_hash(),
        "variant": model.variant,
        "vocab_size": model.vocab_size,
    }
    checkpoint.save(path, {k: t.data for k, t in model.named_tensors().items()}, meta)


def load_model(path, vocab: Vocabulary | None = None) -> tuple[ReviewAnswerModel, TrainConfig]:
    tensors, meta = checkpoint.load(path)
    if vocab is not None and meta.get("vocab_hash") != vocab.content_hash():
        raise checkpoint.CheckpointError(
            f"{path}: vocabulary hash {meta.get('vocab_hash')} does not match {vocab.content_hash()}"
        )
    cfg = TrainConfig.from_dict(meta["config"])
    model = ReviewAnswerModel(meta["vocab_size"], cfg.emb, cfg.hidden, variant=meta["variant"])
    checkpoint.assign(model.named_tensors(), tensors)
    return model, cfg


def save_classifier(path, params: ClassifierParams, vocab: Vocabulary, report=None) -> None:
    meta = {
        "kind": "classifier",
        "vocab_hash": vocab.content_hash(),
        "vocab_size": params.vocab_size,
        "emb": params.emb,
        "hidden": params.hidden,
        "report": None if report is None else {
            "accuracy": report.accuracy, "majority_accuracy": report.majority_accuracy,
        },
    }
    checkpoint.save(path, {k: t.data for k, t in params.named_tensors().items()}, meta)


def load_classifier(path, vocab: Vocabulary | None = None) -> ClassifierParams:
    tensors, meta = checkpoint.load(path)
    if vocab is not None and meta.get("vocab_hash") != vocab.content_hash():
        raise checkpoint.CheckpointError(f"{path}: classifier vocabulary does not match")
    params = ClassifierParams(meta["vocab_size"], meta["emb"], meta["hidden"])
    checkpoint.assign(params.named_tensors(), tensors)
    return params
