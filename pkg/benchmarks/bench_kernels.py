"""Time the compiled and numpy kernel backends on the same inputs.

Usage::

    python benchmarks/bench_kernels.py [--sizes 100000 1000000] [--repeat 5]

Reports the best-of-``repeat`` wall time per kernel and size, the speedup
of the compiled backend, and an end-to-end sensitivity band with each
backend swapped in.  Outputs of the two backends are checked for agreement.
"""
import argparse
import math
import timeit

import numpy as np

from controlsim import kernels
from controlsim.distmodel import BetaPValue, PValue, PValueChannel, Scenario, TargetProblem, TwoPoint
from controlsim.evaluate import sensitivity_band
from controlsim.genctl import SeedSpec
from controlsim.procedures import PThresholdTest
from controlsim.relevance import AbsLogLR

A, B = 0.02, 1.35
TAUS = np.array([0.1, 0.5, 1.0, 1.5, 2.0, math.inf])


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        p = rng.beta(A, B, n).clip(1e-300, 1 - 1e-16)
        dist = np.abs(rng.normal(size=n))
        loss = (rng.random(n) < 0.3).astype(float)
        ref_lr = kernels.BACKENDS["python"].folded_log_lr(p, A, B)
        ref_acc = kernels.BACKENDS["python"].tolerance_accumulate(dist, loss, TAUS)
        for name, mod in kernels.BACKENDS.items():
            assert np.allclose(mod.folded_log_lr(p, A, B), ref_lr, rtol=1e-12, atol=1e-12)
            got = mod.tolerance_accumulate(dist, loss, TAUS)
            assert all(np.allclose(g, r) for g, r in zip(got, ref_acc))
            t_lr = _best(lambda: mod.folded_log_lr(p, A, B), repeat)
            t_acc = _best(lambda: mod.tolerance_accumulate(dist, loss, TAUS), repeat)
            rows.append((n, name, t_lr, t_acc))
    return rows


def bench_band(count, repeat):
    s = Scenario(TwoPoint(0, 1, 0.5), BetaPValue(A, B), PValueChannel(), 1)
    family = [TwoPoint(0, 1, w) for w in (0.5, 0.0, 1.0)]
    target = TargetProblem(PValue(0.049))
    out = {}
    saved = kernels.tolerance_accumulate
    try:
        for name, mod in kernels.BACKENDS.items():
            kernels.tolerance_accumulate = mod.tolerance_accumulate

            def run():
                return sensitivity_band(s, PThresholdTest(0.05), AbsLogLR(A, B), TAUS, family, target, count, SeedSpec(1))

            out[name] = (_best(run, repeat), run().estimates)
    finally:
        kernels.tolerance_accumulate = saved
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100_000, 1_000_000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--band-count", type=int, default=500_000)
    args = ap.parse_args()

    print(f"active backend: {kernels.BACKEND}; available: {', '.join(kernels.BACKENDS)}")
    rows = bench_kernels(args.sizes, args.repeat)
    print(f"{'n':>9}  {'backend':>8}  {'folded_log_lr s':>16}  {'tolerance_acc s':>16}")
    for n, name, t_lr, t_acc in rows:
        print(f"{n:>9}  {name:>8}  {t_lr:>16.5f}  {t_acc:>16.5f}")
    if "cython" in kernels.BACKENDS:
        by = {(n, name): (a, b) for n, name, a, b in rows}
        for n in args.sizes:
            py, cy = by[n, "python"], by[n, "cython"]
            print(f"speedup n={n}: folded_log_lr x{py[0] / cy[0]:.2f}, tolerance_accumulate x{py[1] / cy[1]:.2f}")

    band = bench_band(args.band_count, max(1, args.repeat // 2))
    for name, (t, _) in band.items():
        print(f"band ({args.band_count} controls x 3 priors x {len(TAUS)} taus) with {name} accumulate: {t:.3f} s")
    if len(band) == 2:
        a, b = (v[1] for v in band.values())
        print(f"band estimates agree across backends: {bool(np.allclose(a, b, equal_nan=True))}")


if __name__ == "__main__":
    main()
