#!/usr/bin/env python3
"""Time the compiled kernels against the pure NumPy fallback.

Run from the repository root:

    python3 bench/bench_kernels.py

One invocation prints both columns: the script re-executes itself in a
subprocess with SPECLAB_FORCE_FALLBACK=1 to collect the fallback numbers,
then checks that the two backends drew bit-identical disorder.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

N_REALIZATIONS = 4096
N_SITES = 64
N_MATRICES = 256
MATRIX_SIZE = 64
REPEATS = 5


def measure() -> dict:
    from speclab import kernels

    best_disorder = np.inf
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        draws = kernels.disorder_matrix(12345, 0, N_REALIZATIONS, N_SITES)
        best_disorder = min(best_disorder, time.perf_counter() - t0)

    rng = np.random.default_rng(0)
    h0 = rng.standard_normal((MATRIX_SIZE, MATRIX_SIZE))
    h0 = h0 + h0.T
    diags = rng.uniform(0.0, 1.0, size=(N_MATRICES, MATRIX_SIZE))
    best_eig = np.inf
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        evals = kernels.batch_eigvalsh(h0, diags)
        best_eig = min(best_eig, time.perf_counter() - t0)

    return {
        "backend": kernels.backend(),
        "disorder_s": best_disorder,
        "eig_s": best_eig,
        "disorder_sum": repr(float(draws.sum())),
        "eig_sum": float(evals.sum()),
    }


def main() -> int:
    mine = measure()
    env = dict(os.environ, SPECLAB_FORCE_FALLBACK="1", SPECLAB_BENCH_CHILD="1")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    other = json.loads(out.stdout)

    # the disorder streams must agree bitwise across backends
    if mine["disorder_sum"] != other["disorder_sum"]:
        print("ERROR: backends drew different disorder", file=sys.stderr)
        return 1
    if abs(mine["eig_sum"] - other["eig_sum"]) > 1e-9 * abs(mine["eig_sum"]):
        print("ERROR: backend eigenvalue sums disagree", file=sys.stderr)
        return 1

    print(f"disorder: {N_REALIZATIONS} realizations x {N_SITES} sites")
    print(f"eigh:     one {MATRIX_SIZE}x{MATRIX_SIZE} base + {N_MATRICES} diagonals")
    print(f"{'kernel':<10} {mine['backend']:>12} {other['backend']:>12} {'speedup':>9}")
    for key, label in (("disorder_s", "disorder"), ("eig_s", "eigh")):
        a, b = mine[key], other[key]
        print(f"{label:<10} {a * 1e3:>10.2f}ms {b * 1e3:>10.2f}ms {b / a:>8.2f}x")
    return 0


if __name__ == "__main__":
    if os.environ.get("SPECLAB_BENCH_CHILD"):
        print(json.dumps(measure()))
        sys.exit(0)
    sys.exit(main())
