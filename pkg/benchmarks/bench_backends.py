"""Compare the numba and pure-numpy backends on the hot kernels.

Usage::

    python3 benchmarks/bench_backends.py [--sizes 1000,2000,5000] [--repeat 3] [--csv out.csv]

For each size the script times the kernel row sums (order 2 and 4), the
projection row sums and the partition map on a Y3 draw, checks that the two
backends agree, and prints one row per (kernel, n).  Setting
WUNT_DISABLE_NUMBA=1 only changes the *default* backend; this script always
runs both explicitly.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from wunt._backend import HAVE_NUMBA, get_backend
from wunt.density import ProjectionBasis
from wunt.sim import generate_y3_y4
from wunt.transformer import QUARTIC, fit_transformer


def _best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, seed):
    ds = generate_y3_y4("y3", n, seed)
    t = fit_transformer("joint", ds)
    u = np.ascontiguousarray(t.transform(ds.covariates))
    uc = np.ascontiguousarray(u[ds.control])
    ut = np.ascontiguousarray(u[ds.treated])
    inv_h = np.full(ds.d, 1.0 / (n ** (-2.0 / (ds.d + 4))))
    basis = ProjectionBasis(3**ds.d, ds.d)
    x = np.ascontiguousarray(t.rescale.apply(ds.covariates))
    p = t.partition

    def kernel2(mod):
        return mod.kernel_row_sums(uc, ut, inv_h, 2)

    def kernel4(mod):
        return mod.kernel_row_sums(uc, ut, inv_h, 4)

    def projection(mod):
        coef = mod.column_sums(mod.basis_matrix(ut, basis.index, 0))
        return mod.basis_row_sums(uc, basis.index, 0, coef)

    def partition(mod):
        return mod.partition_transform(x, p.breaks, p.offsets, p.n_cells, QUARTIC.code)[0]

    return {"kernel-order2": kernel2, "kernel-order4": kernel4, "projection": projection, "partition": partition}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,2000,5000")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None, help="also write the table to this CSV")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    nb, npy = get_backend("numba"), get_backend("numpy")
    sizes = [int(s) for s in args.sizes.split(",")]
    # compile once outside the timings
    for fn in cases(200, args.seed).values():
        fn(nb)
    rows = []
    for n in sizes:
        for name, fn in cases(n, args.seed).items():
            t_nb, a = _best_of(lambda: fn(nb), args.repeat)
            t_np, b = _best_of(lambda: fn(npy), args.repeat)
            scale = max(1.0, float(np.max(np.abs(b))))
            rows.append(
                {
                    "kernel": name,
                    "n": n,
                    "numba_s": t_nb,
                    "numpy_s": t_np,
                    "speedup": t_np / t_nb if t_nb > 0 else float("inf"),
                    "max_abs_diff": float(np.max(np.abs(a - b))) / scale,
                }
            )
    head = f"{'kernel':<15}{'n':>7}{'numba s':>12}{'numpy s':>12}{'speedup':>9}{'max rel diff':>14}"
    print(head)
    for r in rows:
        print(f"{r['kernel']:<15}{r['n']:>7}{r['numba_s']:>12.5f}{r['numpy_s']:>12.5f}{r['speedup']:>9.1f}{r['max_abs_diff']:>14.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
