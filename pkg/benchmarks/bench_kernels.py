"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends are imported directly, so the environment variable that
forces the fallback does not matter here.
"""
import argparse
import time

import numpy as np

from graphus import _pykernels
from graphus.csbm import CsbmParams, sample
from graphus.exact import ExactPosterior, LabelState, node_potentials

try:
    from graphus import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def enumeration_case(n, C, seed=0):
    params = CsbmParams.homogeneous(n, C, 3.0, 2.0, 1.0, means_seed=seed)
    g = sample(params, seed)
    post = ExactPosterior(params, g, LabelState.from_observed(g.labels, [], C))
    return post.unary, post.pair


def sweep_case(n, C, seed=0):
    params = CsbmParams.homogeneous(n, C, 4.0, 2.0, 1.0, means_seed=seed)
    g = sample(params, seed)
    unary, L1, L0 = node_potentials(params, g)
    gamma = np.full((n, C), 1.0 / C)
    adj = g.adjacency
    args = (np.arange(n, dtype=np.int64), adj.indptr.astype(np.int32), adj.indices.astype(np.int32),
            np.ascontiguousarray(L1), np.ascontiguousarray(L0), unary)
    return gamma, args


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])

    print(f"{'kernel':<28}{'backend':<10}{'seconds':>10}{'speedup':>10}")
    for n, C in [(10, 3), (12, 3), (14, 3), (10, 4)]:
        unary, pair = enumeration_case(n, C)
        base = None
        for name, mod in backends:
            t = best_of(lambda: mod.enumerate_log_marginals(unary, pair), args.repeat)
            base = base or t
            print(f"{f'enumerate n={n} C={C}':<28}{name:<10}{t:>10.4f}{base / t:>9.1f}x")
    for n, C in [(100, 7), (1000, 4)]:
        gamma0, sweep_args = sweep_case(n, C)
        base = None
        for name, mod in backends:
            def run():
                gamma = gamma0.copy()
                for _ in range(10):
                    mod.mean_field_sweep(gamma, gamma.sum(axis=0), *sweep_args)
            t = best_of(run, args.repeat)
            base = base or t
            print(f"{f'10 sweeps n={n} C={C}':<28}{name:<10}{t:>10.4f}{base / t:>9.1f}x")


if __name__ == "__main__":
    main()
