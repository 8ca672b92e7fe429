"""Compiled versus pure-Python tree growth.

    python benchmarks/bench_sampler.py [--draws 2000] [--n 51] [--seed 0]

Both backends consume the same uniform stream, so each timing pair also
checks that they return identical trees.
"""

import argparse
import time

import numpy as np

from gwldp import _backend
from gwldp.model import bundled_model
from gwldp.sampler import RandomSource, _acceptance, _grow_sized, sample_sizes


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def conditioned(model, n, draws, seed, kernels):
    rng, q = RandomSource(seed), _acceptance(model, n)
    return [tuple(map(np.ndarray.tolist, _grow_sized(model, n, rng, None, q, kernels))) for _ in range(draws)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=2000)
    ap.add_argument("--n", type=int, default=51)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .`")

    cases = [
        ("unconditioned sizes, binary, cap 10^4", "binary",
         lambda m, k: sample_sizes(m, RandomSource(args.seed), args.draws * 10, 10**4, k).tolist()),
        (f"conditioned n={args.n}, binary", "binary",
         lambda m, k: conditioned(m, args.n, args.draws, args.seed, k)),
        (f"conditioned n={args.n}, mixed", "mixed",
         lambda m, k: conditioned(m, args.n, args.draws, args.seed, k)),
    ]
    print(f"{'case':42s} {'python s':>9s} {'cython s':>9s} {'speedup':>8s}  identical")
    for title, name, run in cases:
        model = bundled_model(name)
        tp, op = timed(lambda: run(model, _backend.python))
        tc, oc = timed(lambda: run(model, _backend.compiled))
        print(f"{title:42s} {tp:9.3f} {tc:9.3f} {tp / tc:7.1f}x  {op == oc}")


if __name__ == "__main__":
    main()
