#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is fixed at import time by SHARPLAB_BACKEND, so each timing runs
in a child interpreter.  The MLP path is intentionally absent: its cost is
BLAS matmuls, which numba would not improve.

Usage: python benchmarks/bench_backends.py [--steps N]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
import sharplab
from sharplab import quadratic as q

steps = int(sys.argv[1])
results = {"backend": sharplab.BACKEND}

ens1 = q.make_1d_gaussian_means(1000, seed=1)
t0 = time.perf_counter()
run = q.sgd_run(ens1, 0.5, q.BatchMode("with", 1), steps, theta0=np.array([0.5]), seed=0)
results["sgd_1d_n1000"] = time.perf_counter() - t0

ens2 = q.make_random_psd_ensemble(64, 10, 10, 0.1, seed=2)
t0 = time.perf_counter()
run2 = q.sgd_run(ens2, 0.02, q.BatchMode("with", 4), steps, record_every=4, seed=0)
results["sgd_d10_n64_b4"] = time.perf_counter() - t0

t0 = time.perf_counter()
q.stationary_stats(ens2, run2)
results["stationary_scalars"] = time.perf_counter() - t0

results["check"] = float(run.thetas[-1, 0] + run2.thetas[-1].sum())
print(json.dumps(results))
"""


def run_backend(backend: str, steps: int) -> dict:
    env = dict(os.environ, SHARPLAB_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(steps)],
        capture_output=True, text=True, env=env, check=True,
    )
    # numba compilation happens on the first call; run twice and keep the warm one
    warm = subprocess.run(
        [sys.executable, "-c", CHILD, str(steps)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(warm.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=200_000)
    args = parser.parse_args()

    rows = [run_backend(b, args.steps) for b in ("numpy", "numba")]
    keys = ["sgd_1d_n1000", "sgd_d10_n64_b4", "stationary_scalars"]
    if abs(rows[0]["check"] - rows[1]["check"]) > 1e-6 * (1 + abs(rows[0]["check"])):
        print("WARNING: backends disagree beyond reassociation error", file=sys.stderr)

    width = max(len(k) for k in keys)
    print(f"{args.steps} steps per run")
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        print(f"{k:<{width}}  {a:>9.3f}s  {b:>9.3f}s  {a / b:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
