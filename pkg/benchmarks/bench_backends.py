"""Timings for the compiled kernels versus the NumPy fallback.

Run from the repository root:

    python benchmarks/bench_backends.py

The kernel-level comparisons call both implementations directly; the
end-to-end row re-runs ``cluster_frame`` in a subprocess with
``SEGTRACK_PUREPY=1`` so the backend choice happens at import time, the
same way it does for users.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time

import numpy as np

from segtrack import _numpy_kernels

try:
    from segtrack import _speedups
except ImportError:
    _speedups = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, numpy_s, cython_s):
    speedup = f"{numpy_s / cython_s:6.1f}x" if cython_s else "      -"
    cy = f"{cython_s * 1e3:10.2f}" if cython_s else "         -"
    print(f"{name:<28} {numpy_s * 1e3:10.2f} {cy} {speedup}")


def bench_kernels(rng):
    print(f"{'kernel':<28} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")

    n = 4000
    rows = np.sort(rng.integers(0, 512, size=n)).astype(np.float64)
    cols = rng.integers(0, 512, size=n).astype(np.float64)
    row(
        f"medoid_argmin ({n} px)",
        timeit(lambda: _numpy_kernels.medoid_argmin(rows, cols)),
        timeit(lambda: _speedups.medoid_argmin(rows, cols)) if _speedups else None,
    )

    ex = rng.uniform(size=200_000)
    ey = rng.uniform(size=200_000)
    row(
        "kernel_scores (200k px)",
        timeit(lambda: _numpy_kernels.kernel_scores(0.5, 0.5, 0.01, 0.02, ex, ey)),
        timeit(lambda: _speedups.kernel_scores(0.5, 0.5, 0.01, 0.02, ex, ey))
        if _speedups else None,
    )

    m = 500_000
    vrows = rng.integers(0, 1024, size=m)
    vcols = rng.integers(0, 1024, size=m)
    seed = rng.uniform(size=m)
    row(
        "accumulate_votes (500k)",
        timeit(lambda: _numpy_kernels.accumulate_votes(vrows, vcols, seed, 1024, 1024)),
        timeit(lambda: _speedups.accumulate_votes(vrows, vcols, seed, 1024, 1024))
        if _speedups else None,
    )


_CLUSTER_SNIPPET = """
import time
import numpy as np
from segtrack import _backend
from segtrack.clustering import cluster_frame
from segtrack.synth import SynthConfig, generate_sequence, ideal_predictions

seq = generate_sequence(SynthConfig(h=1024, w=1024, n_cells=500, frames=1, seed=0))
pred = ideal_predictions(seq.labels[0], seq.labels[0], {})
args = (pred.seg_t.offsets, pred.seg_t.bandwidths, pred.seg_t.seediness)
cluster_frame(*args)  # warm up
t0 = time.perf_counter()
out = cluster_frame(*args)
print(f"{_backend.BACKEND_NAME} {time.perf_counter() - t0:.3f}")
assert out.labels.instance_ids().size == 500
"""


def bench_cluster_frame():
    print()
    print("cluster_frame, 1024x1024 frame, 500 cells:")
    for purepy in ("0", "1"):
        out = subprocess.run(
            [sys.executable, "-c", _CLUSTER_SNIPPET],
            env={**os.environ, "SEGTRACK_PUREPY": purepy},
            capture_output=True, text=True, check=True,
        ).stdout.strip()
        name, seconds = out.split()
        print(f"  {name:<8} {float(seconds) * 1e3:10.2f} ms")


def main():
    rng = np.random.default_rng(0)
    if _speedups is None:
        print("compiled backend not available; numpy timings only\n")
    bench_kernels(rng)
    bench_cluster_frame()


if __name__ == "__main__":
    main()
