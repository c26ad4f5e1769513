"""Benchmark the jitted kernels against their pure-numpy fallbacks.

The fallback is the same source executed uncompiled (``fn.py_func``), which
is what MIGRATE_DISABLE_NUMBA=1 selects at import time. Usage:

    python benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from migrate import kernels
from migrate.grpo import ClipConfig, make_group, update_policy
from migrate.harness import default_config, run_any
from migrate.policy import Vocabulary, init_params


def timeit(fn, *args, repeats=200):
    fn(*args)  # warm up (and JIT-compile on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def row(name, compiled, fallback):
    speedup = fallback / compiled if compiled > 0 else float("inf")
    print(f"{name:<28} jit {compiled * 1e6:>9.1f} us   pure {fallback * 1e6:>9.1f} us "
          f"  speedup {speedup:>5.1f}x")


def bench_kernels(repeats: int) -> None:
    rng = np.random.default_rng(0)
    V, P, max_len = 28, 4, 13
    F = 2 + V + P
    W = rng.normal(scale=0.4, size=(F, V))
    end = V - 1

    uniforms = rng.random(max_len)
    args = (W, V, P, max_len, end, 0, 1.0, uniforms)
    row("sample_tokens", timeit(kernels.sample_tokens, *args, repeats=repeats),
        timeit(kernels.sample_tokens.py_func, *args, repeats=repeats))

    tokens = rng.integers(0, V, size=max_len)
    args = (W, V, P, max_len, end, 0, tokens)
    row("sequence_logprobs", timeit(kernels.sequence_logprobs, *args, repeats=repeats),
        timeit(kernels.sequence_logprobs.py_func, *args, repeats=repeats))

    base = rng.integers(0, V, size=max_len)
    gate_u, tok_u = rng.random(max_len), rng.random(max_len)
    args = (W, V, P, max_len, end, 1, 1.0, base, gate_u, tok_u, 0.25)
    row("mutate_tokens", timeit(kernels.mutate_tokens, *args, repeats=repeats),
        timeit(kernels.mutate_tokens.py_func, *args, repeats=repeats))

    n, length = 5, 10
    tokens_flat = rng.integers(0, V, size=n * length)
    offsets = np.arange(0, n * length + 1, length, dtype=np.int64)
    adv = rng.normal(size=n)
    old = kernels.sequence_logprobs(W, V, P, max_len, end, 0, tokens_flat[:length])
    old_flat = np.concatenate([old] * n) + rng.normal(scale=0.1, size=n * length)
    args = (W, V, P, max_len, end, tokens_flat, offsets, adv, old_flat, 0.2, 0.28)
    row("grpo_token_terms", timeit(kernels.grpo_token_terms, *args, repeats=repeats),
        timeit(kernels.grpo_token_terms.py_func, *args, repeats=repeats))


def bench_update(repeats: int) -> None:
    rng = np.random.default_rng(1)
    vocab = Vocabulary(tuple(f"t{i}" for i in range(27)) + ("</s>",), end_token=27)
    params = init_params(vocab, max_len=13)
    params = params.with_weights(rng.normal(scale=0.3, size=params.W.shape))
    from migrate.completion import Completion

    comps = [Completion(tokens=tuple(int(t) for t in rng.integers(0, 28, size=10)),
                        provenance="online", text=str(i), score=float(rng.random()))
             for i in range(5)]
    group = make_group(params, comps)
    clip = ClipConfig()

    def step():
        update_policy(params, group, clip, lr=0.3, mu=2)

    start = time.perf_counter()
    for _ in range(repeats):
        step()
    per = (time.perf_counter() - start) / repeats
    print(f"{'update_policy (mu=2)':<28} {per * 1e6:>9.1f} us per call")


def bench_full_run() -> None:
    cfg = default_config("words", "migrate", seed=0)
    run_any(cfg)  # warm
    start = time.perf_counter()
    trace = run_any(cfg)
    print(f"{'full word-search run':<28} {time.perf_counter() - start:>9.2f} s "
          f"({trace.summary.total_evaluations} evaluations)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    print(f"numba active: {kernels.USING_NUMBA}")
    if not kernels.USING_NUMBA:
        print("numba disabled or unavailable; compiled and pure timings will match\n")
    bench_kernels(args.repeats)
    bench_update(args.repeats)
    bench_full_run()


if __name__ == "__main__":
    main()
