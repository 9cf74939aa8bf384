"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--corpus data/shakespeare_1mb.txt] [--bytes 300000]

Times BPE training, BPE encoding and the embedding-gradient scatter with each
backend swapped into ``ipalm.kernels`` and checks that both give identical
results.
"""
import argparse
import contextlib
import time
from pathlib import Path

import numpy as np

from ipalm import kernels
from ipalm.tokenizer import Tokenizer, bpe_train

ROOT = Path(__file__).resolve().parents[1]


@contextlib.contextmanager
def backend(impl):
    saved = {name: getattr(kernels, name) for name in ("scatter_add_rows", "merge_pair", "MergeTable")}
    for name in saved:
        setattr(kernels, name, getattr(impl, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def best_of(fn, repeat):
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", default=str(ROOT / "data" / "shakespeare_1mb.txt"))
    ap.add_argument("--bytes", type=int, default=300_000, help="corpus prefix used for training")
    ap.add_argument("--vocab", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if kernels.native is None:
        print("compiled kernels are not built; only the fallback is available")
        return 1
    text = Path(args.corpus).read_bytes()[: args.bytes]
    rng = np.random.default_rng(0)
    ids = rng.integers(0, args.vocab, size=16 * 64)
    grads = rng.standard_normal((ids.size, 64))

    rows = []
    results = {}
    for name, impl in (("native", kernels.native), ("fallback", kernels.fallback)):
        with backend(impl):
            t_train, tok = best_of(lambda: bpe_train(text, args.vocab), 1)
            fresh = Tokenizer(tok.merges)
            t_enc, enc = best_of(lambda: fresh.encode(text), args.repeat)

            def scatter():
                out = np.zeros((args.vocab, 64))
                kernels.scatter_add_rows(out, ids, grads)
                return out

            t_sc, sc = best_of(scatter, args.repeat * 10)
        results[name] = (tok.merges, enc, sc)
        rows.append((name, t_train, t_enc, t_sc * 1e3))

    same = (results["native"][0] == results["fallback"][0] and results["native"][1] == results["fallback"][1]
            and np.allclose(results["native"][2], results["fallback"][2], rtol=0, atol=1e-12))
    print(f"corpus {len(text)} bytes, vocab {args.vocab}")
    print(f"{'backend':<10}{'bpe train s':>14}{'encode s':>12}{'scatter ms':>13}")
    for name, a, b, c in rows:
        print(f"{name:<10}{a:>14.2f}{b:>12.3f}{c:>13.3f}")
    (_, a0, b0, c0), (_, a1, b1, c1) = rows
    print(f"{'speedup':<10}{a1 / a0:>13.1f}x{b1 / b0:>11.1f}x{c1 / c0:>12.1f}x")
    print(f"identical results: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
