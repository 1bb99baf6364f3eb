"""Time the compiled kernels against the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--levels 8 12 16] [--repeat 5]``
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from rothe_wavelet import kernels
from rothe_wavelet import wavelets as W


def cases(J: int, rng):
    x = rng.standard_normal((1 << J) - 1)
    tables = W._scale_tables(J)
    sparse_vals = x * (rng.random(x.size) < 0.05)
    mask = sparse_vals != 0
    tol = 0.5 * float(np.linalg.norm(sparse_vals))
    return {
        "lift_forward": lambda impl: impl.lift_forward(x, J, *tables),
        "lift_inverse": lambda impl: impl.lift_inverse(x, J, *tables),
        "lift_transpose": lambda impl: impl.lift_transpose(x, J, *tables),
        "subtree_energy": lambda impl: impl.subtree_energy(x, J),
        "tree_closure": lambda impl: impl.tree_closure(mask, J),
        "greedy_tree": lambda impl: impl.greedy_tree(sparse_vals, J, tol),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, nargs="+", default=[8, 12, 16])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'J':>4}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for J in args.levels:
        for name, fn in cases(J, rng).items():
            times = {}
            for b, impl in backends.items():
                number = 1 if (b == "python" and J >= 14) else 3
                t = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat))
                times[b] = t / number
            speed = (f"{times['python'] / times['compiled']:9.1f}x"
                     if "compiled" in times else "")
            print(f"{name:<16}{J:>4}" + "".join(f"{times[b] * 1e3:12.3f}ms" for b in backends)
                  + f"{speed:>10}")


if __name__ == "__main__":
    main()
