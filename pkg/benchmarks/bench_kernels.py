"""Compiled vs pure-Python kernels, in isolation and inside a training step.

    python benchmarks/bench_kernels.py [--width 128] [--repeat 5]

The end-to-end numbers come from subprocesses so that each one imports the
package with a single backend (``REVIEWGEN_PURE_PYTHON`` decides).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from reviewgen import _kernels_py

try:
    from reviewgen import _kernels as compiled
except ImportError:
    compiled = None

STEP_SNIPPET = """
import time
import numpy as np
from reviewgen import kernels, synthetic
from reviewgen.config import TrainConfig
from reviewgen.corpus import build_examples, build_vocab, ingest_records
from reviewgen.model import ReviewAnswerModel, tensorize
from reviewgen.snippets import SnippetExtractor
from reviewgen.trainer import Trainer

bundles, _ = ingest_records(synthetic.generate_records(2, seed=0), min_reviews=2)
vocab = build_vocab(bundles, min_freq=1)
exs = build_examples(bundles[0], SnippetExtractor())[:{batch}]
d = {width}
model = ReviewAnswerModel(len(vocab), d, d, np.random.default_rng(0))
trainer = Trainer(model, TrainConfig(hidden=d, emb=d, lam=1.0), vocab)
batch = [tensorize(ex, vocab) for ex in exs]
trainer.train_step(batch)
best = float("inf")
for _ in range({repeat}):
    t = time.perf_counter()
    trainer.train_step(batch)
    best = min(best, time.perf_counter() - t)
print(kernels.BACKEND, best)
"""


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_rows(width, repeat):
    rng = np.random.default_rng(0)
    B = 20
    z = 1 / (1 + np.exp(-rng.normal(size=(B, width))))
    h, pre, g = (rng.normal(size=(B, width)) for _ in range(3))
    hc = np.tanh(pre)
    mask = np.ones(B)
    a = rng.integers(0, 30, size=25).tolist()
    b = rng.integers(0, 30, size=25).tolist()
    cases = {
        "lcs_length (25x25)": lambda m: m.lcs_length(a, b),
        f"gru_combine_forward ({B}x{width})": lambda m: m.gru_combine_forward(z, h, pre, mask),
        f"gru_combine_backward ({B}x{width})": lambda m: m.gru_combine_backward(g, mask, z, h, hc),
        f"gru_reset_backward ({B}x{width})": lambda m: m.gru_reset_backward(g, h, z),
    }
    rows = []
    for name, call in cases.items():
        py = _best(lambda: call(_kernels_py), repeat, 200)
        cy = _best(lambda: call(compiled), repeat, 200) if compiled else float("nan")
        rows.append((name, py, cy))
    return rows


def step_time(pure: bool, width, repeat, batch=8):
    env = dict(os.environ)
    env.pop("REVIEWGEN_PURE_PYTHON", None)
    if pure:
        env["REVIEWGEN_PURE_PYTHON"] = "1"
    code = STEP_SNIPPET.format(width=width, repeat=repeat, batch=batch)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    print(f"{'kernel':<34}{'python (us)':>14}{'compiled (us)':>15}{'speedup':>10}")
    for name, py, cy in kernel_rows(args.width, args.repeat):
        print(f"{name:<34}{py * 1e6:>14.2f}{cy * 1e6:>15.2f}{py / cy:>9.1f}x")
    print()
    for pure in (True, False):
        backend, sec = step_time(pure, args.width, args.repeat)
        print(f"train step, 8 examples, width {args.width}, {backend:<7} backend: {sec * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
