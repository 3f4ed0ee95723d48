"""Compare the compiled kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads match the library's real call sites: NSDF over one second of
16 kHz audio (736-sample window, 160-sample hop, lags up to 89), and a
12-harmonic additive bank over one second of samples.
"""

import argparse
import timeit

import numpy as np

from gaussian_ems import _kernels_py

try:
    from gaussian_ems import _ckernels
except ImportError:
    _ckernels = None


def workloads(seconds):
    rng = np.random.default_rng(0)
    n = int(16000 * seconds)
    x = rng.standard_normal(n)
    starts = np.arange(0, n - 736 + 1, 160, dtype=np.int64)
    phase = np.cumsum(np.full(n, 2 * np.pi * 440 / 16000))
    amps = 0.7 ** np.arange(12)
    return {
        "nsdf_frames": lambda m: m.nsdf_frames(x, starts, 736, 8, 89),
        "additive": lambda m: m.additive(phase, amps),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seconds", type=float, default=1.0, help="audio length per call")
    args = parser.parse_args()

    backends = {"numpy": _kernels_py}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the NumPy fallback only")

    print(f"{'kernel':<14}{'backend':<9}{'best ms':>10}{'speedup':>9}")
    for name, call in workloads(args.seconds).items():
        base = None
        for label, mod in backends.items():
            number = 20
            best = min(timeit.repeat(lambda: call(mod), number=number, repeat=args.repeat)) / number
            base = base or best
            print(f"{name:<14}{label:<9}{best * 1e3:>10.3f}{base / best:>8.2f}x")


if __name__ == "__main__":
    main()
