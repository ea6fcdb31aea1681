#!/usr/bin/env python3
"""Benchmark the Schur-accumulation kernels (compiled vs NumPy fallback).

Builds synthetic workloads shaped like the solver's real ones: many
same-size LMI blocks whose expanded coefficient entries hit a dense scaling
matrix. The large configuration mirrors one interior-point iteration of the
day-ahead market experiment (90 blocks of size 73, ~1350 entries each,
~700 variables).

Usage: python benchmarks/bench_schur.py [--repeats N]
"""
import argparse
import time

import numpy as np

from drcvar import kernels
from drcvar.kernels import _schur_np

COMPILED = None
if kernels.HAVE_COMPILED:
    from drcvar.kernels import _schur_cy as COMPILED


def make_workload(rng, k_total, size, entries, blocks):
    work = []
    for _ in range(blocks):
        var = np.sort(rng.integers(0, k_total, entries)).astype(np.int32)
        p = rng.integers(0, size, entries).astype(np.int32)
        q = rng.integers(0, size, entries).astype(np.int32)
        v = rng.standard_normal(entries)
        base = rng.standard_normal((size, size))
        u = np.ascontiguousarray(base @ base.T + size * np.eye(size))
        work.append((u, var, p, q, v))
    return work


def run(impl, work, k_total, repeats):
    times = []
    for _ in range(repeats):
        h = np.zeros((k_total, k_total))
        t0 = time.perf_counter()
        for u, var, p, q, v in work:
            impl(h, u, var, p, q, v)
        times.append(time.perf_counter() - t0)
    return min(times), h


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    configs = [
        ("small  (K=34,  s=10, T=120,  20 blocks)", 34, 10, 120, 20),
        ("medium (K=200, s=30, T=500,  40 blocks)", 200, 30, 500, 40),
        ("large  (K=694, s=73, T=1350, 90 blocks)", 694, 73, 1350, 90),
    ]
    rng = np.random.default_rng(0)
    print(f"compiled kernel available: {kernels.HAVE_COMPILED}")
    header = f"{'config':44s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, k_total, size, entries, blocks in configs:
        work = make_workload(rng, k_total, size, entries, blocks)
        t_np, h_np = run(_schur_np.schur_accumulate, work, k_total,
                         args.repeats)
        if COMPILED is not None:
            t_cy, h_cy = run(COMPILED.schur_accumulate, work, k_total,
                             args.repeats)
            err = float(np.max(np.abs(h_cy - h_np)))
            rel = err / max(1.0, float(np.max(np.abs(h_np))))
            assert rel < 1e-12, f"kernel mismatch: {rel}"
            print(f"{name:44s} {t_np*1e3:9.2f}ms {t_cy*1e3:9.2f}ms "
                  f"{t_np/t_cy:7.2f}x")
        else:
            print(f"{name:44s} {t_np*1e3:9.2f}ms {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
