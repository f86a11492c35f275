"""Time the compiled coordinate-descent kernel against the pure-Python one.

Both backends implement cd_lasso_gram with identical semantics; this script
checks they agree on every problem and reports median wall times. Run:

    python3 benchmarks/bench_lasso.py --sizes 25,100,400 --repeats 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cgplingam import _cd_numpy

try:
    from cgplingam import _cd_fast
except ImportError:
    _cd_fast = None


def make_problem(n: int, rng: np.random.Generator):
    """Gram pair of a random overdetermined l1 regression."""
    design = rng.normal(size=(4 * n, n))
    target = rng.normal(size=4 * n)
    gram = design.T @ design
    corr = design.T @ target
    lam = 0.1 * np.abs(corr).max()
    return gram, corr, lam


def time_kernel(kernel, gram, corr, lam, repeats: int):
    best = []
    w_out = None
    for _ in range(repeats):
        w = np.zeros(gram.shape[0])
        t0 = time.perf_counter()
        n_iter, _ = kernel.cd_lasso_gram(gram, corr, lam, 1e-8, 10_000, w)
        best.append(time.perf_counter() - t0)
        w_out = w
    return float(np.median(best)), n_iter, w_out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="25,100,225,400",
                        help="comma-separated coordinate counts")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    if _cd_fast is None:
        print("compiled kernel unavailable; timing the python backend only")

    header = f"{'n':>6} {'python (ms)':>12}"
    if _cd_fast is not None:
        header += f" {'compiled (ms)':>14} {'speedup':>8} {'max |dw|':>10}"
    print(header)

    for n in sizes:
        gram, corr, lam = make_problem(n, rng)
        t_py, iters_py, w_py = time_kernel(_cd_numpy, gram, corr, lam,
                                           args.repeats)
        line = f"{n:>6} {1e3 * t_py:>12.3f}"
        if _cd_fast is not None:
            t_c, iters_c, w_c = time_kernel(_cd_fast, gram, corr, lam,
                                            args.repeats)
            if iters_c != iters_py:
                print(f"backend iteration mismatch at n={n}: "
                      f"{iters_c} vs {iters_py}")
                return 1
            gap = float(np.abs(w_c - w_py).max())
            line += f" {1e3 * t_c:>14.3f} {t_py / t_c:>8.1f} {gap:>10.2e}"
            if gap > 1e-12:
                print(f"backend solution mismatch at n={n}: {gap:.3e}")
                return 1
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
