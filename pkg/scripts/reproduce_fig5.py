"""Correction u_N - v along the cube edge line for the m^3 grid clouds.

Writes a single CSV with one correction column per m.
"""
import argparse
import csv
import math
import os

from mesocloud.assembly import assemble, solve_direct
from mesocloud.config import fig5_config, parse_config
from mesocloud.field import sample_line
from mesocloud.geometry import alpha_for


def profile(m: int, n: int):
    run = parse_config(fig5_config(m, n))
    sol = solve_direct(assemble(run.cloud, run.domain, run.source))
    s = sample_line(run.line["p0"], run.line["p1"], n, run.cloud, run.domain, run.source, sol)
    return s.points[:, 0], s.correction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[2, 5, 10])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--out", default="results/fig5")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    columns = {}
    for m in args.m:
        x, corr = profile(m, args.n)
        columns[m] = corr
        print(f"m={m:3d}  N={m**3:5d}  alpha={alpha_for(m, math.pi / 25):.6f}  "
              f"min={corr.min():+.5e}  max={corr.max():+.5e}  ends=({corr[0]:+.5e}, {corr[-1]:+.5e})")

    path = os.path.join(args.out, "fig5_profiles.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["x1"] + [f"m{m}" for m in args.m])
        for i, t in enumerate(x):
            w.writerow([format(t, ".17g")] + [format(columns[m][i], ".17g") for m in args.m])
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
