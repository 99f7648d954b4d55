"""Compiled vs pure-Python kernels on graph-sampling and PR-sweep workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Both backends are imported directly, so one process times both. Outputs are
compared before timing; a mismatch aborts the run.
"""

import argparse
import sys
import timeit

import numpy as np

from graphids import _pykernels

try:
    from graphids import _ckernels
except ImportError:
    _ckernels = None


def sampling_case(n_nodes, mean_deg, fanout, seed=0):
    rng = np.random.default_rng(seed)
    deg = rng.poisson(mean_deg, n_nodes).astype(np.int64)
    deg[: max(1, n_nodes // 100)] *= 50  # a few hubs, as with servers and scanners
    indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    nodes = rng.permutation(n_nodes).astype(np.int64)
    keys = rng.random(int(deg.sum()))
    return (indptr, nodes, np.int64(fanout), keys)


def counts_case(n, seed=0):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.random(n), 4)  # ties exercise the distinct-threshold grouping
    labels = (rng.random(n) < 0.05).astype(np.int64)
    order = np.argsort(-scores, kind="stable")
    return (np.ascontiguousarray(scores[order]), np.ascontiguousarray(labels[order]))


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def bench(name, fn_name, args, repeat):
    py = getattr(_pykernels, fn_name)
    row = {"case": name}
    t_py = min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat))
    row["python_ms"] = t_py * 1e3
    if _ckernels is not None:
        c = getattr(_ckernels, fn_name)
        if not same(py(*args), c(*args)):
            sys.exit(f"{name}: backends disagree")
        t_c = min(timeit.repeat(lambda: c(*args), number=1, repeat=repeat))
        row["cython_ms"] = t_c * 1e3
        row["speedup"] = t_py / t_c
    return row


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small sizes only")
    args = ap.parse_args()

    sizes = [(2_000, 20, 32), (20_000, 20, 32)] if args.quick else \
        [(2_000, 20, 32), (20_000, 20, 32), (100_000, 30, 10), (100_000, 30, 32_768)]
    rows = []
    for n, deg, fan in sizes:
        rows.append(bench(f"sample_segments n={n} deg~{deg} fanout={fan}", "sample_segments",
                          sampling_case(n, deg, fan), args.repeat))
    for n in ([10_000, 100_000] if args.quick else [10_000, 100_000, 1_000_000]):
        rows.append(bench(f"descending_counts n={n}", "descending_counts", counts_case(n),
                          args.repeat))

    if _ckernels is None:
        print("compiled extension not built; timing the Python backend only")
    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python ms':>10}  {'cython ms':>10}  {'speedup':>8}")
    for r in rows:
        c = f"{r['cython_ms']:10.2f}  {r['speedup']:7.1f}x" if "cython_ms" in r else f"{'-':>10}  {'-':>8}"
        print(f"{r['case']:<{width}}  {r['python_ms']:10.2f}  {c}")


if __name__ == "__main__":
    main()
