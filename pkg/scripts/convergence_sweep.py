"""Error of the dipole approximation as all radii shrink at fixed centres."""
import argparse

import numpy as np

from mesocloud.geometry import Cloud, DomainSpec, fibonacci_sphere
from mesocloud.kernels import SourceSpec
from mesocloud.oracle import radius_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scales", type=float, nargs="+", default=[1.0, 0.7, 0.5, 0.35, 0.25])
    ap.add_argument("--shell", type=float, default=1.0, help="radius of the evaluation sphere")
    args = ap.parse_args()

    cloud = Cloud.from_arrays([[2.5, 0, 0], [2.5, 1.0, 0.5]], [0.25, 0.2])
    pts = np.array([2.5, 0.5, 0.25]) + args.shell * fibonacci_sphere(300)
    dist = np.linalg.norm(pts[:, None] - cloud.centers[None], axis=2)
    pts = pts[np.all(dist >= 2 * cloud.radii, axis=1)]

    out = radius_sweep(cloud, DomainSpec.free_space(), SourceSpec(1.0), args.scales, pts)
    print(f"{'scale':>8s} {'max_rel':>12s} {'l2_rel':>12s} {'oracle res':>12s}")
    for row in out["rows"]:
        print(f"{row['scale']:8.3f} {row['max_rel']:12.4e} {row['l2_rel']:12.4e} {row['oracle_residual']:12.2e}")
    print(f"fitted order: {out['order']:.3f}  ({len(pts)} evaluation points)")


if __name__ == "__main__":
    main()
