"""Compare the numba and pure-numpy implementations of the many-body kernels.

    python3 benchmarks/bench_kernels.py --sizes 8 10 12 --repeat 5

Each kernel is called once to trigger compilation before timing; the
reported time is the best of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dressedspin import kernels


def _best(fn, repeat):
    fn()  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _inputs(n, rng):
    J = rng.standard_normal((n, n))
    J = J + J.T
    np.fill_diagonal(J, 0.0)
    h = rng.standard_normal(n)
    psi = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return J, h, psi


def run(sizes, repeat, seed=0):
    if kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        J, h, psi = _inputs(n, rng)
        diag = kernels.numpy_impl.diagonal_energies(n, J, h)
        cases = {
            "diagonal_energies": lambda impl: impl.diagonal_energies(n, J, h),
            "flipflop_coo": lambda impl: impl.flipflop_coo(n, J),
            "xxz_matvec": lambda impl: impl.xxz_matvec(psi, n, diag, J),
        }
        if n <= 9:
            dim = 2**n
            W = np.abs(rng.standard_normal((dim, dim))) ** 2
            E = np.sort(rng.standard_normal(dim))
            tg = np.linspace(0.0, 5.0, 20)
            cases["spectral_correlation"] = lambda impl: impl.spectral_correlation(W, E, tg)
        for name, call in cases.items():
            t_np = _best(lambda: call(kernels.numpy_impl), repeat)
            t_nb = _best(lambda: call(kernels.numba_impl), repeat)
            rows.append((name, n, t_np, t_nb))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(f"{'kernel':<22}{'N':>4}{'numpy [ms]':>14}{'numba [ms]':>14}{'speed-up':>10}")
    for name, n, t_np, t_nb in run(args.sizes, args.repeat, args.seed):
        print(f"{name:<22}{n:>4}{1e3 * t_np:>14.3f}{1e3 * t_nb:>14.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
