"""Reference solutions by the method of fundamental solutions (MFS).

The reference field is ``u_ref = v + sum_s q_s G(x, y_s)`` with point sources
``y_s`` on a concentric sphere inside every void and ``G`` the Green's
function of the unperturbed domain, so the outer Dirichlet condition (or the
decay at infinity) holds by construction. The charges are fitted by least
squares to the homogeneous Neumann condition on the void surfaces.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedWarning, OracleNotConverged, OracleTooLarge
from .field import eval_uN
from .geometry import Cloud, DomainSpec, fibonacci_sphere
from .kernels import _as_points, grad_v, grad_x_green, green, v_eval

MAX_UNKNOWNS = 50_000
SPECTRUM_CUTOFF = 1e-12


@dataclass(frozen=True)
class MfsConfig:
    # 64 sources at depth 0.5 stall near 1e-3 flux residual even for one void
    sources_per_void: int = 144
    source_depth: float = 0.3
    collocation_per_void: Optional[int] = None  # default: twice the sources
    max_residual: float = 1e-6

    def __post_init__(self):
        if self.collocation_per_void is None:
            object.__setattr__(self, "collocation_per_void", 2 * self.sources_per_void)
        if self.collocation_per_void < self.sources_per_void:
            raise ValueError("need at least as many collocation points as sources per void")
        if not 0.0 < self.source_depth < 1.0:
            raise ValueError("source_depth must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    cloud: Cloud
    domain: DomainSpec
    source: object
    source_points: np.ndarray
    charges: np.ndarray
    residual: float
    rank: int

    def _sum(self, pts: np.ndarray, kernel) -> np.ndarray:
        out = None
        step = max(1, (1 << 20) // max(len(self.charges), 1))
        for start in range(0, len(pts), step):
            p = pts[start:start + step]
            k = kernel(p[:, None, :], self.source_points[None, :, :], self.domain)
            part = np.tensordot(k, self.charges, axes=([1], [0]))
            out = part if out is None else np.concatenate([out, part])
        return out

    def evaluate(self, x) -> np.ndarray:
        x = _as_points(x)
        pts = x.reshape(-1, 3)
        u = v_eval(pts, self.source, self.domain)
        if len(self.charges):
            u = u + self._sum(pts, green)
        return u.reshape(x.shape[:-1])

    def gradient(self, x) -> np.ndarray:
        x = _as_points(x)
        pts = x.reshape(-1, 3)
        g = grad_v(pts, self.source, self.domain)
        if len(self.charges):
            g = g + self._sum(pts, grad_x_green)
        return g.reshape(x.shape)


def _surface_flux_residual(ref: ReferenceSolution, n_check: int) -> float:
    """max |du_ref/dn| over a check lattice, relative to max |dv/dn| there."""
    nrm = fibonacci_sphere(n_check)
    worst, scale = 0.0, 0.0
    for c, r in zip(ref.cloud.centers, ref.cloud.radii):
        pts = c + r * nrm
        worst = max(worst, float(np.abs(np.einsum("pi,pi->p", ref.gradient(pts), nrm)).max()))
        scale = max(scale, float(np.abs(np.einsum("pi,pi->p", grad_v(pts, ref.source, ref.domain), nrm)).max()))
    return worst / scale if scale > 0 else worst


def solve_reference(cloud: Cloud, domain: DomainSpec, source, cfg: MfsConfig = MfsConfig()) -> ReferenceSolution:
    n = len(cloud)
    n_src, n_col = cfg.sources_per_void, cfg.collocation_per_void
    if n * n_src > MAX_UNKNOWNS:
        raise OracleTooLarge(f"{n} voids x {n_src} sources exceeds the {MAX_UNKNOWNS} unknown limit")
    if n == 0:
        return ReferenceSolution(cloud, domain, source, np.zeros((0, 3)), np.zeros(0), 0.0, 0)

    src_dirs = fibonacci_sphere(n_src)
    col_dirs = fibonacci_sphere(n_col)
    y = (cloud.centers[:, None, :] + cfg.source_depth * cloud.radii[:, None, None] * src_dirs).reshape(-1, 3)
    x = (cloud.centers[:, None, :] + cloud.radii[:, None, None] * col_dirs).reshape(-1, 3)
    normals = np.tile(col_dirs, (n, 1))

    A = np.einsum("psi,pi->ps", grad_x_green(x[:, None, :], y[None, :, :], domain), normals)
    b = -np.einsum("pi,pi->p", grad_v(x, source, domain), normals)
    col_scale = np.linalg.norm(A, axis=0)
    q, _, rank, _ = sla.lstsq(A / col_scale, b, cond=SPECTRUM_CUTOFF, lapack_driver="gelsy")
    if rank < A.shape[1]:
        warnings.warn(f"MFS matrix numerically rank deficient ({rank} of {A.shape[1]}); "
                      "truncated spectrum used", IllConditionedWarning, stacklevel=2)
    ref = ReferenceSolution(cloud, domain, source, y, q / col_scale, 0.0, int(rank))
    residual = _surface_flux_residual(ref, n_col + 17)
    ref = ReferenceSolution(cloud, domain, source, y, ref.charges, residual, int(rank))
    if residual > cfg.max_residual:
        raise OracleNotConverged(residual, cfg.max_residual)
    return ref


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Deviation of ``approx`` from ``reference`` at a set of points.

    ``max_rel = max|approx - reference| / max|reference|``; ``l2_rel`` is the
    same ratio with discrete 2-norms. ``max_abs`` is symmetric in the two
    arguments, so swapping them only changes the normalisation.
    """

    max_rel: float
    l2_rel: float
    max_abs: float
    n_points: int
    oracle_residual: Optional[float]
    points: np.ndarray
    approx: np.ndarray
    reference: np.ndarray

    def to_dict(self) -> dict:
        return {
            "max_rel": self.max_rel,
            "l2_rel": self.l2_rel,
            "max_abs": self.max_abs,
            "n_points": self.n_points,
            "oracle_residual": self.oracle_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def pointwise_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["x", "y", "z", "u_N", "u_ref", "abs_err"])
        for p, a, r in zip(self.points, self.approx, self.reference):
            w.writerow([format(float(t), ".17g") for t in (*p, a, r, abs(a - r))])
        return buf.getvalue()


def compare_values(approx, reference, points=None, oracle_residual=None) -> ErrorReport:
    approx = np.asarray(approx, dtype=float).ravel()
    reference = np.asarray(reference, dtype=float).ravel()
    diff = approx - reference
    max_abs = float(np.abs(diff).max()) if diff.size else 0.0
    ref_max = float(np.abs(reference).max()) if diff.size else 0.0
    ref_l2 = float(np.linalg.norm(reference))
    max_rel = max_abs / ref_max if ref_max > 0 else max_abs
    l2_rel = float(np.linalg.norm(diff)) / ref_l2 if ref_l2 > 0 else float(np.linalg.norm(diff))
    pts = np.zeros((len(approx), 3)) if points is None else np.asarray(points)
    return ErrorReport(max_rel, l2_rel, max_abs, int(diff.size), oracle_residual, pts, approx, reference)


def _check_bulk(points: np.ndarray, cloud: Cloud):
    if len(cloud) == 0:
        return
    dist = np.linalg.norm(points[:, None, :] - cloud.centers[None], axis=2)
    if np.any(dist < 2.0 * cloud.radii * (1.0 - 1e-12)):
        raise ValueError("comparison points must stay at least one radius away from every void surface")


def compare(sol, ref: ReferenceSolution, eval_points, require_bulk: bool = True) -> ErrorReport:
    """Compare the dipole approximation with the reference at ``eval_points``."""
    pts = np.asarray(_as_points(eval_points)).reshape(-1, 3)
    if require_bulk:
        _check_bulk(pts, ref.cloud)
    approx = eval_uN(pts, ref.cloud, ref.domain, ref.source, sol)
    return compare_values(approx, ref.evaluate(pts), pts, ref.residual)


def bulk_plane_points(cloud: Cloud, domain: DomainSpec, n: int = 41, axis: int = 2, level: float = 0.0,
                      extent: Optional[Sequence[float]] = None) -> np.ndarray:
    """Grid points on a coordinate plane, inside the domain and clear of the voids.

    A point is kept when it lies at least one radius from every void surface.
    ``extent = (lo, hi)`` for the two free axes defaults to ``[-R, R]`` for a
    ball and to the cloud's ``omega_bounds`` in free space.
    """
    free = [k for k in range(3) if k != axis]
    if extent is None:
        if domain.is_ball:
            extent = (-domain.R, domain.R)
        else:
            box = cloud.omega_bounds
            extent = (float(box[0][free].min()), float(box[1][free].max()))
    t = np.linspace(extent[0], extent[1], n)
    a, b = np.meshgrid(t, t, indexing="ij")
    pts = np.zeros((a.size, 3))
    pts[:, free[0]], pts[:, free[1]], pts[:, axis] = a.ravel(), b.ravel(), level
    keep = np.ones(len(pts), dtype=bool)
    if domain.is_ball:
        keep &= np.linalg.norm(pts, axis=1) <= domain.R * (1.0 - 1e-9)
    if len(cloud):
        dist = np.linalg.norm(pts[:, None, :] - cloud.centers[None], axis=2)
        keep &= np.all(dist >= 2.0 * cloud.radii, axis=1)
    return pts[keep]


def fit_order(scales, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(scale)``."""
    slope, _ = np.polyfit(np.log(np.asarray(scales, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)
    return float(slope)


def radius_sweep(cloud: Cloud, domain: DomainSpec, source, scales, eval_points,
                 cfg: MfsConfig = MfsConfig(), solver=None) -> dict:
    """Approximation error against the oracle as all radii are scaled by ``s``.

    ``eval_points`` stay fixed; they must be valid for the largest radii.
    """
    from .assembly import assemble, solve_direct

    solver = solver or solve_direct
    rows = []
    for s in scales:
        c = cloud.scaled_radii(s)
        sol = solver(assemble(c, domain, source))
        ref = solve_reference(c, domain, source, cfg)
        rep = compare(sol, ref, eval_points)
        rows.append({"scale": float(s), "max_rel": rep.max_rel, "l2_rel": rep.l2_rel,
                     "oracle_residual": ref.residual})
    order = fit_order([r["scale"] for r in rows], [r["max_rel"] for r in rows]) if len(rows) > 1 else math.nan
    return {"rows": rows, "order": order}
