"""The 3N x 3N dipole-coefficient system ``(I + S Q) C = -theta``.

``S`` collects the mixed Hessians of the domain's Green's function between
distinct void centres (zero diagonal blocks), ``Q`` is block diagonal with the
polarization matrices, and ``theta`` stacks the gradient of the unperturbed
solution at the centres.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    CoincidentPoints,
    InvalidGeometry,
    NotConverged,
    SingularSystem,
    SourceOverlapsCloud,
)
from .geometry import COINCIDENCE_RTOL, Cloud, DomainSpec, validate_cloud
from .kernels import _T_from_separation, grad_v, mixed_hessian_H

log = logging.getLogger(__name__)

MATRIX_FREE_THRESHOLD = 2000
# Rows of 3x3 blocks evaluated at once; bounds temporaries to ~ROW_CHUNK * N * 9 doubles.
ROW_CHUNK = 128


@dataclass(frozen=True, eq=False)
class InteractionSystem:
    cloud: Cloud
    domain: DomainSpec
    source: object
    theta: np.ndarray
    q_blocks: np.ndarray
    S: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_voids(self) -> int:
        return len(self.cloud)

    @property
    def matrix_free(self) -> bool:
        return self.S is None

    @property
    def Q(self) -> np.ndarray:
        if self.n_voids == 0:
            return np.zeros((0, 0))
        return sla.block_diag(*self.q_blocks)

    def dense_S(self) -> np.ndarray:
        if self.S is not None:
            return self.S
        return _dense_from_blocks(self.cloud.centers, self.domain)

    def apply_SQ(self, c: np.ndarray) -> np.ndarray:
        """``S Q c`` without materialising ``S`` when in matrix-free mode."""
        n = self.n_voids
        w = np.einsum("jab,jb->ja", self.q_blocks, np.asarray(c).reshape(n, 3))
        if self.S is not None:
            return self.S @ w.ravel()
        out = np.empty((n, 3))
        for rows in _row_chunks(n):
            out[rows] = np.einsum("ijab,jb->ia", _interaction_blocks(self.cloud.centers, rows, self.domain), w)
        return out.ravel()

    def system_matrix(self) -> np.ndarray:
        """Dense ``I + S Q``."""
        n = self.n_voids
        S = self.dense_S().reshape(3 * n, n, 3)
        SQ = np.einsum("pjb,jbc->pjc", S, self.q_blocks).reshape(3 * n, 3 * n)
        SQ[np.diag_indices_from(SQ)] += 1.0
        return SQ


def _row_chunks(n: int):
    for start in range(0, n, ROW_CHUNK):
        yield slice(start, min(start + ROW_CHUNK, n))


def _interaction_blocks(centers: np.ndarray, rows: slice, domain: DomainSpec) -> np.ndarray:
    """Blocks ``B[i, j] = frakT(O_i, O_j)`` for ``i`` in ``rows``; zero when ``i == j``."""
    n = len(centers)
    oi = centers[rows][:, None, :]
    oj = centers[None, :, :]
    r = oi - oj
    dist = np.sqrt(np.einsum("ijk,ijk->ij", r, r))
    diag = np.arange(n)[rows][:, None] == np.arange(n)[None, :]
    dist = np.where(diag, 1.0, dist)
    scale = domain.R if domain.is_ball else max(float(np.abs(centers).max()), 1.0)
    if np.any(dist <= COINCIDENCE_RTOL * scale):
        raise CoincidentPoints("two voids share a centre")
    blocks = _T_from_separation(r, dist)
    if domain.is_ball:
        blocks -= mixed_hessian_H(np.broadcast_to(oi, r.shape), np.broadcast_to(oj, r.shape), domain.R)
    blocks[diag] = 0.0
    return blocks


def _dense_from_blocks(centers: np.ndarray, domain: DomainSpec) -> np.ndarray:
    n = len(centers)
    S = np.empty((3 * n, 3 * n))
    S4 = S.reshape(n, 3, n, 3)
    for rows in _row_chunks(n):
        S4[rows] = _interaction_blocks(centers, rows, domain).transpose(0, 2, 1, 3)
    return S


def assemble(cloud: Cloud, domain: DomainSpec, source, matrix_free_threshold: int = MATRIX_FREE_THRESHOLD,
             matrix_free: Optional[bool] = None) -> InteractionSystem:
    report = validate_cloud(cloud, domain)
    if report.errors:
        raise InvalidGeometry("; ".join(v.message for v in report.errors))
    n = len(cloud)
    if n and source.support_radius > 0:
        gap = np.linalg.norm(cloud.centers, axis=1) - cloud.radii - source.support_radius
        if np.any(gap <= 0):
            bad = np.flatnonzero(gap <= 0).tolist()
            raise SourceOverlapsCloud(f"source support |x| < {source.support_radius} meets voids {bad}")
    theta = grad_v(cloud.centers, source, domain).reshape(-1) if n else np.zeros(0)
    q_blocks = np.array([v.polarization.matrix for v in cloud.voids]).reshape(n, 3, 3)
    if matrix_free is None:
        matrix_free = n > matrix_free_threshold
    S = None if matrix_free else _dense_from_blocks(cloud.centers, domain)
    return InteractionSystem(cloud, domain, source, theta, q_blocks, S)


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DipoleSolution:
    coeffs: np.ndarray
    residual_norm: float
    lambda_max: float
    wellposed_ratio: float
    coeff_bound_ratio: Optional[float]
    lambda_min: float = 0.0
    method: str = "direct"
    iterations: int = 0

    @property
    def n_voids(self) -> int:
        return len(self.coeffs)

    def to_dict(self) -> dict:
        return {
            "coeffs": np.asarray(self.coeffs).tolist(),
            "residual_norm": float(self.residual_norm),
            "lambda_max": float(self.lambda_max),
            "wellposed_ratio": float(self.wellposed_ratio),
            "coeff_bound_ratio": None if self.coeff_bound_ratio is None else float(self.coeff_bound_ratio),
            "lambda_min": float(self.lambda_min),
            "method": self.method,
            "iterations": int(self.iterations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "DipoleSolution":
        return cls(
            coeffs=np.asarray(data["coeffs"], dtype=float).reshape(-1, 3),
            residual_norm=data["residual_norm"],
            lambda_max=data["lambda_max"],
            wellposed_ratio=data["wellposed_ratio"],
            coeff_bound_ratio=data.get("coeff_bound_ratio"),
            lambda_min=data.get("lambda_min", 0.0),
            method=data.get("method", "direct"),
            iterations=data.get("iterations", 0),
        )


def grad_v_norm_sq(cloud: Cloud, domain: DomainSpec, source, resolution: int = 64,
                   mc_samples: int = 1_000_000, max_aspect: float = 8.0) -> float:
    """``||grad v||^2`` over ``omega_bounds`` (clipped to the domain).

    Midpoint rule on a ``resolution^3`` grid; boxes more elongated than
    ``max_aspect`` fall back to seeded Monte Carlo.
    """
    if cloud.omega_bounds is None:
        return 0.0
    lo, hi = cloud.omega_bounds
    sides = hi - lo
    volume = float(np.prod(sides))
    if sides.max() / sides.min() > max_aspect:
        pts = np.random.default_rng(0).uniform(lo, hi, size=(mc_samples, 3))
        weight = volume / mc_samples
    else:
        axes = [lo[k] + (np.arange(resolution) + 0.5) * sides[k] / resolution for k in range(3)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        weight = volume / resolution**3
    if domain.is_ball:
        pts = pts[np.linalg.norm(pts, axis=1) < domain.R]
    total = 0.0
    for start in range(0, len(pts), 1 << 18):
        g = grad_v(pts[start:start + (1 << 18)], source, domain)
        total += float(np.einsum("ij,ij->", g, g))
    return total * weight


def _finish(sys: InteractionSystem, coeffs: np.ndarray, residual: float, method: str, iterations: int,
            quadrature: int) -> DipoleSolution:
    n = sys.n_voids
    cloud = sys.cloud
    if n == 0:
        lam_max = lam_min = 0.0
    elif _all_isotropic(sys.q_blocks):
        lam_max = 2.0 * math.pi * float(cloud.radii.max()) ** 3
        lam_min = 2.0 * math.pi * float(cloud.radii.min()) ** 3
    else:
        eig = np.linalg.eigvalsh(-sys.q_blocks)
        lam_max, lam_min = float(eig.max()), float(eig.min())
    d = cloud.d
    wellposed = lam_max / d**3 if math.isfinite(d) else 0.0
    bound = None
    if math.isfinite(d):
        norm_sq = grad_v_norm_sq(cloud, sys.domain, sys.source, resolution=quadrature)
        if norm_sq > 0:
            bound = float(np.sum(coeffs**2)) * d**3 / norm_sq
    return DipoleSolution(coeffs.reshape(n, 3), float(residual), lam_max, wellposed, bound, lam_min, method,
                          iterations)


def _all_isotropic(q_blocks: np.ndarray) -> bool:
    diag = q_blocks[:, 0, 0][:, None, None] * np.eye(3)
    return bool(np.array_equal(q_blocks, diag))


def _relative_residual(sys: InteractionSystem, c: np.ndarray) -> float:
    r = c + sys.apply_SQ(c) + sys.theta
    scale = np.linalg.norm(sys.theta)
    return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def solve_direct(sys: InteractionSystem, quadrature: int = 64) -> DipoleSolution:
    """Dense LU solve of ``(I + S Q) C = -theta``."""
    n = sys.n_voids
    if n == 0:
        return _finish(sys, np.zeros(0), 0.0, "direct", 0, quadrature)
    A = sys.system_matrix()
    anorm = np.linalg.norm(A, 1)
    lu, piv = sla.lu_factor(A, check_finite=True)
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    if not rcond > 10 * np.finfo(float).eps:
        raise SingularSystem(math.inf if rcond == 0 else 1.0 / rcond)
    c = sla.lu_solve((lu, piv), -sys.theta)
    return _finish(sys, c, _relative_residual(sys, c), "direct", 1, quadrature)


def solve_fixed_point(sys: InteractionSystem, tol: float = 1e-12, max_iter: int = 1000,
                      quadrature: int = 64) -> DipoleSolution:
    """Neumann-series iteration ``C <- -theta - S Q C`` starting from ``-theta``.

    Stops once successive iterates differ by at most ``tol * |theta|``; the
    difference is exactly the residual of the previous iterate.
    """
    n = sys.n_voids
    if n == 0:
        return _finish(sys, np.zeros(0), 0.0, "fixed_point", 0, quadrature)
    scale = np.linalg.norm(sys.theta) or 1.0
    c = -sys.theta
    res = math.inf
    for it in range(1, max_iter + 1):
        c_next = -sys.theta - sys.apply_SQ(c)
        res = float(np.linalg.norm(c_next - c)) / scale
        c = c_next
        if not math.isfinite(res) or res > 1e8:
            raise NotConverged(it, res)
        if res <= tol:
            return _finish(sys, c, _relative_residual(sys, c), "fixed_point", it, quadrature)
    raise NotConverged(max_iter, res)


def solve(sys: InteractionSystem, method: str = "direct", tol: float = 1e-12, max_iter: int = 1000,
          quadrature: int = 64) -> DipoleSolution:
    if method == "direct":
        return solve_direct(sys, quadrature=quadrature)
    if method == "fixed_point":
        return solve_fixed_point(sys, tol=tol, max_iter=max_iter, quadrature=quadrature)
    raise ValueError(f"unknown solver method {method!r}")


def diagnostics_report(sol: DipoleSolution, cloud: Cloud) -> dict:
    """Well-posedness and coefficient-size indicators; informational only."""
    eps, d = cloud.eps, cloud.d
    out = {
        "n_voids": len(cloud),
        "eps": eps,
        "d": d if math.isfinite(d) else None,
        "lambda_max": sol.lambda_max,
        "lambda_min": sol.lambda_min,
        "wellposed_ratio": sol.wellposed_ratio,
        "coeff_bound_ratio": sol.coeff_bound_ratio,
        "A1_ratio": sol.lambda_max / eps**3 if eps > 0 else None,
        "A2_ratio": sol.lambda_min / eps**3 if eps > 0 else None,
        "residual_norm": sol.residual_norm,
    }
    if not math.isfinite(d):
        out["coeff_bound_note"] = "not applicable: fewer than two voids, d = inf"
    return out


def format_report(report: dict) -> str:
    lines = []
    for key in sorted(report):
        val = report[key]
        lines.append(f"{key:>18s}: {val:.6g}" if isinstance(val, float) else f"{key:>18s}: {val}")
    return "\n".join(lines)
