"""Time each hot kernel under the numpy fallback and the compiled extension.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Outputs are checked for agreement before timings are reported.
"""
import argparse
import json
import time

import numpy as np

from mbrl import kernels


def _cases(rng):
    S, A, H = 20, 5, 20
    P = rng.dirichlet(np.ones(S), size=(S, A))
    probs = rng.dirichlet(np.ones(A), size=(H, S))
    n = 20000
    u_s, u_a = rng.random((n, H)), rng.random((n, H))
    M, N = 16, 64
    P_stack = rng.dirichlet(np.ones(S), size=(M, S, A))
    r = rng.random((S, A)) / H
    acts = rng.integers(0, A, size=(N, H, S))
    table = rng.random((12, 12)) * 0.3
    return {
        "sample_paths (n=20000, H=20, S=20)": lambda: kernels.sample_paths(P, probs, 0, u_s, u_a),
        "evaluate_policies (M=16, N=64, H=20)": lambda: kernels.evaluate_policies(P_stack, r, acts),
        "eluder_subsets (12 points x 12 fns)": lambda: kernels.eluder_subsets(table, 0.1, 1),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-12)


def run(repeat=5, seed=0):
    cases = _cases(np.random.default_rng(seed))
    backends = kernels.available_backends()
    previous = kernels.BACKEND
    results = []
    try:
        for name, fn in cases.items():
            row = {"kernel": name}
            outputs = {}
            for backend in backends:
                kernels.use_backend(backend)
                outputs[backend] = fn()
                times = []
                for _ in range(repeat):
                    t0 = time.perf_counter()
                    fn()
                    times.append(time.perf_counter() - t0)
                row[backend] = min(times)
            if len(outputs) == 2:
                row["agree"] = _same(outputs["python"], outputs["cython"])
                row["speedup"] = row["python"] / row["cython"]
            results.append(row)
    finally:
        kernels.use_backend(previous)
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()
    results = run(args.repeat)
    print(f"{'kernel':40s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s} agree")
    for row in results:
        cy = row.get("cython", float("nan"))
        print(f"{row['kernel']:40s} {row['python']:11.5f} {cy:11.5f} {row.get('speedup', float('nan')):8.1f} "
              f"{row.get('agree', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
