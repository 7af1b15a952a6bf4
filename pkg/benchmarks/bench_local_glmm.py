"""Benchmark the local-model quadrature kernels: compiled vs pure numpy.

Times the full per-bin fitting stage (the pipeline's hot loop) and the raw
objective/gradient call under every importable backend, and cross-checks
that both produce the same numbers.

    python3 benchmarks/bench_local_glmm.py --n-subjects 100 --grid 200 --width 6
"""
import argparse
import time

import numpy as np

from fgfpca import _kernels
from fgfpca._kernels import available_backends
from fgfpca.binning import build_bins
from fgfpca.families import FAMILY_CODES
from fgfpca.local_glmm import LocalGlmmOptions, _gh_nodes, fit_all_bins
from fgfpca.simulate import SimScenario, generate

KERNEL_FUNCS = ("agq_nll_grad", "agq_loglik", "posterior_modes")


def bind(module):
    for name in KERNEL_FUNCS:
        setattr(_kernels, name, getattr(module, name))


def time_stage(data, bins, repeats):
    opts = LocalGlmmOptions()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        est = fit_all_bins(data, bins, opts)
        best = min(best, time.perf_counter() - t0)
    return best, est


def time_kernel(y, counts, repeats):
    gh_x, gh_logw = _gh_nodes(10)
    n_calls = 200
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(n_calls):
            _kernels.agq_nll_grad(-0.3, -0.5, y, counts, 7.0, FAMILY_CODES["binomial"], gh_x, gh_logw)
        best = min(best, (time.perf_counter() - t0) / n_calls)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-subjects", type=int, default=100)
    ap.add_argument("--grid", type=int, default=200)
    ap.add_argument("--width", type=int, default=6)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    data, _ = generate(SimScenario(N=args.n_subjects, J=args.grid, seed=42))
    bins = build_bins(args.grid, args.width, overlap=True, cyclic=True)

    rng = np.random.default_rng(0)
    y = np.arange(8.0)
    counts = rng.multinomial(args.n_subjects, np.full(8, 1 / 8)).astype(float)

    backends = available_backends()
    print(f"backends found: {', '.join(backends)}   (active default: {_kernels.BACKEND})")
    print(f"stage workload: N={args.n_subjects}, J={args.grid}, width={args.width}, "
          f"{len(bins.bins)} bins, best of {args.repeats}\n")

    original = {name: getattr(_kernels, name) for name in KERNEL_FUNCS}
    stage_times, kernel_times, etas = {}, {}, {}
    try:
        for name, module in backends.items():
            bind(module)
            stage_times[name], est = time_stage(data, bins, args.repeats)
            kernel_times[name] = time_kernel(y, counts, args.repeats)
            etas[name] = est.eta
    finally:
        for fname, func in original.items():
            setattr(_kernels, fname, func)

    print(f"{'backend':<10} {'stage (s)':>12} {'nll+grad (us)':>16}")
    for name in backends:
        print(f"{name:<10} {stage_times[name]:>12.4f} {kernel_times[name] * 1e6:>16.1f}")

    if len(backends) == 2:
        speedup = stage_times["python"] / stage_times["cython"]
        diff = float(np.max(np.abs(etas["python"] - etas["cython"])))
        print(f"\ncython speedup: {speedup:.1f}x on the stage, "
              f"{kernel_times['python'] / kernel_times['cython']:.1f}x on the raw kernel")
        print(f"max |eta| disagreement between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
