"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--docs 15000] [--points 15000]
"""
import argparse

from mprbench import kernels
from mprbench.bench import format_rows, run_benchmark

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--docs", type=int, default=15000)
    ap.add_argument("--points", type=int, default=15000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    print(format_rows(run_benchmark(n_docs=args.docs, n_points=args.points, repeat=args.repeat)))
