"""Compiled kernels against the numpy / pure-Python reference.

    python benchmarks/bench_kernels.py [--repeat 5]

Times the two kernels directly, then encodes the bundled corpus with a cold
word cache once per backend in a subprocess (``TWEET2NEWS_PURE_PYTHON`` is
read at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tweet2news.kernels import reference

try:
    from tweet2news.kernels import _ckernels as compiled
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

ENCODE = """
import sys, timeit
from tweet2news.corpus import bundled
from tweet2news.tokenizer import train_bpe
lines = bundled("news.txt") + bundled("tweets.txt")
vocab = train_bpe(lines, 2000)

def cold():
    vocab._cache.clear()
    for s in lines:
        vocab.encode(s)

print(min(timeit.repeat(cold, number=1, repeat=int(sys.argv[1]))))
"""


def gru_inputs(B=8, S=40, H=64, seed=0):
    rng = np.random.default_rng(seed)
    mask = (np.arange(S)[None, :] < rng.integers(S // 2, S + 1, size=B)[:, None]).astype(np.float64)
    return rng.normal(size=(B, S, 3 * H)), mask, rng.normal(0, 0.1, size=(H, 3 * H)), rng.normal(size=3 * H)


def bpe_inputs(n_symbols=60, n_merges=1500, n_words=2000, seed=0):
    rng = np.random.default_rng(seed)
    merges, nxt = [], n_symbols
    for _ in range(n_merges):
        a, b = (int(x) for x in rng.integers(0, nxt, size=2))
        merges.append((a, b, nxt))
        nxt += 1
    words = [rng.integers(0, n_symbols, size=int(rng.integers(2, 12))).tolist() for _ in range(n_words)]
    return merges, words


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def row(name, slow, fast):
    print(f"{name:<24}{slow * 1e3:>12.2f}{fast * 1e3:>12.2f}{slow / fast:>9.1f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    # per-step Python overhead dominates the reference at small H; BLAS wins it back as H grows
    for H in (16, 32, 64):
        xp, mask, wh, bh = gru_inputs(H=H)
        h, cache_r = reference.gru_forward(xp, mask, wh, bh)
        _, cache_c = compiled.gru_forward(xp, mask, wh, bh)
        dh = np.ones_like(h)
        row(f"gru_forward H{H}", best(lambda: reference.gru_forward(xp, mask, wh, bh), args.repeat),
            best(lambda: compiled.gru_forward(xp, mask, wh, bh), args.repeat))
        row(f"gru_backward H{H}", best(lambda: reference.gru_backward(dh, mask, wh, cache_r), args.repeat),
            best(lambda: compiled.gru_backward(dh, mask, wh, cache_c), args.repeat))

    merges, words = bpe_inputs()
    py, cy = reference.BpeMerger(merges), compiled.BpeMerger(merges)
    row("bpe segment 2000 words", best(lambda: [py.segment(w) for w in words], args.repeat),
        best(lambda: [cy.segment(w) for w in words], args.repeat))

    # the word cache is cleared each pass, so every distinct word reaches the segmenter
    times = {}
    for backend, flag in (("python", "1"), ("cython", "0")):
        env = {**os.environ, "TWEET2NEWS_PURE_PYTHON": flag}
        out = subprocess.run([sys.executable, "-c", ENCODE, str(args.repeat)], env=env,
                             capture_output=True, text=True, check=True)
        times[backend] = float(out.stdout)
    row("encode corpus, cold", times["python"], times["cython"])


if __name__ == "__main__":
    main()
