"""Benchmark: compiled vs pure-numpy LSTM kernels, and a full training step.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gedkit import _kernels as kernels
from gedkit import corpus, model
from gedkit.model import ModelConfig, backward, batch_sentences, compute_loss, forward


def time_call(fn, repeats):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernel(T, B, H, repeats):
    rng = np.random.default_rng(0)
    pre = rng.normal(size=(T, B, 4 * H))
    u = rng.normal(size=(H, 4 * H)) * 0.3
    h0 = np.zeros((B, H))
    c0 = np.zeros((B, H))
    outs = kernels.lstm_forward(pre, u, h0, c0)
    dh = rng.normal(size=(T, B, H))

    fwd = time_call(lambda: kernels.lstm_forward(pre, u, h0, c0), repeats)
    bwd = time_call(lambda: kernels.lstm_backward(u, *outs, h0, c0, dh), repeats)
    return fwd, bwd


def bench_train_step(repeats):
    rng = np.random.default_rng(1)
    words = [f"w{i}" for i in range(200)]
    anns = []
    for i in range(32):
        n = int(rng.integers(8, 24))
        toks = [words[int(rng.integers(len(words)))] for _ in range(n)]
        anns.append(corpus.make_annotated(f"b{i}", toks, []))
    vocab = corpus.build_vocab([a.sentence for a in anns])
    enc = [corpus.encode(a.sentence, vocab) for a in anns]
    batch = batch_sentences(enc)
    params = model.init_params(ModelConfig(), vocab, seed=0)  # paper-scale dims

    def step():
        acts = forward(batch, params, training=True, seed=3)
        loss = compute_loss(acts, batch.gold, batch.word_ids, 0.1)
        backward(acts, batch.gold, batch.word_ids, 0.1, params)
        return loss

    return time_call(step, repeats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled backend missing; run `python setup.py build_ext --inplace`")

    shapes = [
        ("word-LSTM paper dims", 24, 32, 300),
        ("char-LSTM paper dims", 12, 640, 100),
        ("tiny test dims", 5, 3, 8),
    ]
    print(f"\n{'kernel shape':26} {'backend':9} {'forward':>12} {'backward':>12}")
    for label, T, B, H in shapes:
        for name in backends:
            kernels.set_backend(name)
            fwd, bwd = bench_kernel(T, B, H, args.repeats)
            print(f"{label:26} {name:9} {fwd * 1e3:10.2f}ms {bwd * 1e3:10.2f}ms")

    print(f"\n{'full train step (B=32, paper dims)':38} {'backend':9} {'seconds':>10}")
    for name in backends:
        kernels.set_backend(name)
        sec = bench_train_step(max(1, args.repeats // 2))
        print(f"{'':38} {name:9} {sec:10.3f}")


if __name__ == "__main__":
    main()
