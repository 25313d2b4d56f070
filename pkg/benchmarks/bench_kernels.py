"""Compare the compiled kernels against the pure-Python fallback.

Times the three hot paths (EM training, matching, span extraction) on
synthetic inputs sized like a real campaign, checks both backends agree
exactly, and prints the speedups.

    python3 benchmarks/bench_kernels.py --sentences 2000 --size 32
"""

import argparse
import random
import time

from codemix.kernels import (
    available_backends,
    extract_spans,
    ibm1_probs,
    max_weight_matching,
)


def make_bitext(rng, n_sentences, vocab, length):
    sentences = []
    for _ in range(n_sentences):
        src = rng.sample(range(vocab), length)
        tgt = [w + vocab for w in src]
        rng.shuffle(tgt)
        sentences.append((src, tgt))
    return sentences


def make_weights(rng, n):
    return [[rng.random() for _ in range(n)] for _ in range(n)]


def make_links(rng, n, density=0.2):
    return frozenset(
        (i, j) for i in range(n) for j in range(n) if rng.random() < density
    )


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def report(name, runs, repeats):
    timings = {}
    outputs = {}
    for backend in runs:
        timings[backend], outputs[backend] = best_of(runs[backend], repeats)
    line = f"{name:<22}"
    for backend, elapsed in timings.items():
        line += f" {backend}: {elapsed * 1000:9.2f} ms"
    if len(timings) == 2:
        line += f"   speedup: {timings['pure'] / timings['compiled']:5.1f}x"
        assert outputs["pure"] == outputs["compiled"], f"{name}: backends disagree"
    print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sentences", type=int, default=2000)
    parser.add_argument("--vocab", type=int, default=500)
    parser.add_argument("--length", type=int, default=8)
    parser.add_argument("--iterations", type=int, default=5)
    parser.add_argument("--size", type=int, default=32, help="matching matrix side")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = dict(sorted(available_backends().items()))
    print(f"backends: {', '.join(backends)}")
    if list(backends) == ["pure"]:
        print("compiled extension not built; timing the fallback only")

    rng = random.Random(0)
    bitext = make_bitext(rng, args.sentences, args.vocab, args.length)
    weights = make_weights(rng, args.size)
    links = make_links(rng, args.size)

    report(
        f"ibm1 {args.sentences}x{args.length}",
        {
            name: (lambda mod=mod: ibm1_probs(bitext, args.iterations, backend=mod))
            for name, mod in backends.items()
        },
        args.repeats,
    )
    report(
        f"matching {args.size}x{args.size}",
        {
            name: (lambda mod=mod: max_weight_matching(weights, backend=mod))
            for name, mod in backends.items()
        },
        args.repeats,
    )
    report(
        f"spans {args.size}x{args.size}",
        {
            name: (lambda mod=mod: extract_spans(links, args.size, args.size, 4, backend=mod))
            for name, mod in backends.items()
        },
        args.repeats,
    )


if __name__ == "__main__":
    main()
