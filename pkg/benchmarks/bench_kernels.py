"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-``repeat`` time per call for each
implementation and the speedup. Exits with an error if the extension is not
built.
"""
import argparse
import timeit

import numpy as np

from condmodes import _pykernels

try:
    from condmodes import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    counts = np.sort(rng.multinomial(800, rng.dirichlet(np.ones(81))))[::-1].astype(np.float64)
    ordered = np.ascontiguousarray(counts)
    small = np.ascontiguousarray(np.array([40.0, 31.0, 5.0]))
    u = rng.random(40)
    return {
        "log_betainc_upper": lambda k: k.log_betainc_upper(0.2, 120.0, 680.0),
        "trunc_beta_ppf": lambda k: k.trunc_beta_ppf(0.37, 41.0, 30.0, 1 / 9),
        "log_block_evidence (ell=2, m=9)": lambda k: k.log_block_evidence(small[:2], 80.0, 2, 9),
        "log_block_evidence_path (ell<=40, m=81)": lambda k: k.log_block_evidence_path(ordered[:40], 800.0, 81, 40),
        "sample_stick_fractions (ell=40, m=81)": lambda k: k.sample_stick_fractions(ordered, 800.0, 40, 81, u),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run: pip install -e . --no-build-isolation")
    print(f"{'kernel':42s} {'python (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for name, fn in _cases().items():
        times = {}
        for label, mod in (("python", _pykernels), ("cython", _ckernels)):
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            times[label] = min(timer.repeat(args.repeat, number)) / number * 1e6
        print(f"{name:42s} {times['python']:12.2f} {times['cython']:12.2f} {times['python'] / times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
