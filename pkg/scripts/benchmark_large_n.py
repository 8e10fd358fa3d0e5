"""Wall time and memory of assembly and both solvers on grid clouds."""
import argparse
import time
import tracemalloc

import numpy as np

from mesocloud.assembly import assemble, solve_direct, solve_fixed_point
from mesocloud.geometry import CloudGridSpec, DomainSpec, make_grid_cloud
from mesocloud.kernels import SourceSpec


def timed(fn, *args, **kw):
    tracemalloc.start()
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    dt = time.perf_counter() - t0
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return out, dt, peak / 2**20


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[5, 8, 10, 12])
    ap.add_argument("--matrix-free", action="store_true", help="skip the dense matrix and LU")
    args = ap.parse_args()

    domain, source = DomainSpec.ball(7.0), SourceSpec(2.0)
    print(f"{'N':>6s} {'assemble s':>11s} {'direct s':>9s} {'MiB':>7s} {'fixed s':>8s} {'iters':>6s} {'mismatch':>9s}")
    for m in args.m:
        cloud = make_grid_cloud(CloudGridSpec(m))
        sys, t_asm, mem_asm = timed(assemble, cloud, domain, source, matrix_free=args.matrix_free)
        fp, t_fp, _ = timed(solve_fixed_point, sys, tol=1e-13)
        if args.matrix_free:
            print(f"{len(cloud):6d} {t_asm:11.2f} {'-':>9s} {mem_asm:7.0f} {t_fp:8.2f} {fp.iterations:6d} {'-':>9s}")
            continue
        sol, t_dir, mem_dir = timed(solve_direct, sys)
        mismatch = np.abs(fp.coeffs - sol.coeffs).max() / np.abs(sol.coeffs).max()
        print(f"{len(cloud):6d} {t_asm:11.2f} {t_dir:9.2f} {max(mem_asm, mem_dir):7.0f} {t_fp:8.2f} "
              f"{fp.iterations:6d} {mismatch:9.1e}")


if __name__ == "__main__":
    main()
