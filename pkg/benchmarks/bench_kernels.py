"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each workload runs on both backends; outputs are checked for equality
before timings are reported.
"""

import argparse
import time

from clustersend.analysis import _flags, permutation_masks
from clustersend.kernels import _pykernels

try:
    from clustersend.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def workloads():
    m1, m2 = permutation_masks(7, 3), permutation_masks(7, 3)
    yield "histogram n=7 (7!^2 pairs)", "faulty_position_histogram", (m1, m2, 7)
    yield "pcs sampler 2e5 trials n=7 f=3", "sample_pcs_steps", (_flags(7, 3), _flags(7, 3), 200_000, 1, 10 ** 6)
    yield "plcs sampler 2e5 trials n=13", "sample_plcs_steps", (_flags(13, 4), _flags(13, 4), 200_000, 1)


def best_of(fn, args, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'workload':34} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for label, name, call_args in workloads():
        py_t, py_out = best_of(getattr(_pykernels, name), call_args, args.repeat)
        if _ckernels is None:
            print(f"{label:34} {py_t:10.4f} {'n/a':>10} {'n/a':>8}")
            continue
        c_t, c_out = best_of(getattr(_ckernels, name), call_args, args.repeat)
        if list(c_out) != list(py_out):
            raise SystemExit(f"{label}: backends disagree")
        print(f"{label:34} {py_t:10.4f} {c_t:10.4f} {py_t / c_t:7.1f}x")


if __name__ == "__main__":
    main()
