"""Timings of the JIT kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel pair is
checked for agreement first; the numba column is blank when numba is not
installed or ``POLMULT_DISABLE_JIT`` is set.
"""

import argparse
import time

import numpy as np

from polmult import kernels
from polmult.angular import Spin, _d_terms
from polmult.multipoles import decompose
from polmult.quasi import quasi_grid, sphere_grid
from polmult.states import su2_coherent


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size):
    x = np.cos(np.linspace(0.0, np.pi, 2000 * size))
    terms = _d_terms(24)
    c, s = np.cos(0.4), -np.sin(0.4)
    return [
        ("legendre_table l<=60", kernels.legendre_table_numba, kernels.legendre_table_numpy, (60, x)),
        ("assoc_legendre_table l<=40", kernels.assoc_legendre_table_numba, kernels.assoc_legendre_table_numpy, (40, x[:500 * size])),
        ("wigner_d_accumulate 2j=24", kernels.wigner_d_accumulate_numba, kernels.wigner_d_accumulate_numpy, (*terms, c, s, 25)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--size", type=int, default=1, help="problem size multiplier")
    args = parser.parse_args(argv)

    kernels.warmup()
    print(f"numba available: {kernels.HAS_NUMBA}")
    print(f"{'kernel':<30}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max diff':>12}")
    for name, jit_fn, np_fn, fargs in cases(args.size):
        ref = np_fn(*fargs)
        t_np = best_of(lambda: np_fn(*fargs), args.repeat)
        if kernels.HAS_NUMBA:
            diff = float(np.abs(jit_fn(*fargs) - ref).max())
            t_jit = best_of(lambda: jit_fn(*fargs), args.repeat)
            print(f"{name:<30}{1e3 * t_np:>12.3f}{1e3 * t_jit:>12.3f}{t_np / t_jit:>10.1f}{diff:>12.1e}")
        else:
            print(f"{name:<30}{1e3 * t_np:>12.3f}{'':>12}{'':>10}{'':>12}")

    # end-to-end: Q function of a large coherent block on a fine grid
    table = decompose(su2_coherent(Spin(40), 1.0, 2.0))
    grid = sphere_grid(160)
    t = best_of(lambda: quasi_grid(table, Spin(40), -1, grid), args.repeat)
    print(f"{'quasi_grid 2S=40, B=160':<30}{'':>12}{1e3 * t:>12.3f}  (dispatching path)")


if __name__ == "__main__":
    main()
