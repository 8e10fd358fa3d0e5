"""Evaluation of the dipole approximation ``u_N`` and its samplings."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsideVoid
from .geometry import Cloud, DomainSpec, fibonacci_sphere
from .kernels import BOUNDARY_RTOL, _as_points, grad_v, grad_y_H, mixed_hessian_H, v_eval

# Points closer than radius + MASK_MARGIN to a void centre are excluded from samplings.
MASK_MARGIN = 1e-9
# Upper bound on points * voids handled in one vectorised block.
BLOCK = 1 << 20


def _point_chunks(n_points: int, n_voids: int):
    step = max(1, BLOCK // max(n_voids, 1))
    for start in range(0, n_points, step):
        yield slice(start, min(start + step, n_points))


def _correction(points: np.ndarray, cloud: Cloud, domain: DomainSpec, coeffs: np.ndarray,
                with_gradient: bool = False):
    """Sum over voids of ``C_k . (D_k(x) - Q_k grad_y H(x, O_k))`` and optionally its gradient."""
    n = len(cloud)
    values = np.zeros(len(points))
    grads = np.zeros((len(points), 3)) if with_gradient else None
    if n == 0 or len(points) == 0:
        return values, grads
    centers, r3 = cloud.centers, cloud.radii**3
    q_blocks = np.array([v.polarization.matrix for v in cloud.voids])
    w = np.einsum("kab,kb->ka", q_blocks, coeffs)
    for sl in _point_chunks(len(points), n):
        r = points[sl, None, :] - centers[None, :, :]
        dist = np.sqrt(np.einsum("pki,pki->pk", r, r))
        cr = np.einsum("pki,ki->pk", r, coeffs)
        values[sl] = np.einsum("pk,pk->p", -0.5 * r3 / dist**3, cr)
        if domain.is_ball:
            x = np.broadcast_to(points[sl, None, :], r.shape)
            o = np.broadcast_to(centers[None, :, :], r.shape)
            values[sl] -= np.einsum("pki,ki->p", grad_y_H(x, o, domain.R), w)
        if with_gradient:
            inv3 = 1.0 / dist**3
            g = coeffs[None] * inv3[..., None] - 3.0 * cr[..., None] * r * (inv3 / dist**2)[..., None]
            grads[sl] = np.einsum("k,pki->pi", -0.5 * r3, g)
            if domain.is_ball:
                grads[sl] -= np.einsum("pkab,kb->pa", mixed_hessian_H(x, o, domain.R), w)
    return values, grads


def _check_outside_voids(points: np.ndarray, cloud: Cloud):
    if len(cloud) == 0:
        return
    for sl in _point_chunks(len(points), len(cloud)):
        r = points[sl, None, :] - cloud.centers[None]
        dist = np.sqrt(np.einsum("pki,pki->pk", r, r))
        if np.any(dist < cloud.radii * (1.0 - BOUNDARY_RTOL)):
            raise InsideVoid("evaluation point lies inside a void")


def eval_uN(x, cloud: Cloud, domain: DomainSpec, source, sol):
    """The asymptotic approximation ``u_N`` at ``x`` (shape ``(..., 3)``)."""
    x = _as_points(x)
    pts = x.reshape(-1, 3)
    v = v_eval(pts, source, domain)
    _check_outside_voids(pts, cloud)
    corr, _ = _correction(pts, cloud, domain, np.asarray(sol.coeffs).reshape(-1, 3))
    return (v + corr).reshape(x.shape[:-1])


def correction(x, cloud: Cloud, domain: DomainSpec, sol):
    """``u_N - v`` at ``x``."""
    x = _as_points(x)
    pts = x.reshape(-1, 3)
    _check_outside_voids(pts, cloud)
    corr, _ = _correction(pts, cloud, domain, np.asarray(sol.coeffs).reshape(-1, 3))
    return corr.reshape(x.shape[:-1])


def grad_uN(x, cloud: Cloud, domain: DomainSpec, source, sol):
    x = _as_points(x)
    pts = x.reshape(-1, 3)
    _check_outside_voids(pts, cloud)
    _, g = _correction(pts, cloud, domain, np.asarray(sol.coeffs).reshape(-1, 3), with_gradient=True)
    return (grad_v(pts, source, domain) + g).reshape(x.shape)


# ---------------------------------------------------------------------------
# Samplings
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass(frozen=True, eq=False)
class FieldSamples:
    """Values of ``u_N``, ``v`` and ``u_N - v`` at a list of points.

    ``mask`` is True where a point was excluded (inside or touching a void, or
    outside the domain); the value arrays hold NaN there.
    """

    points: np.ndarray
    u_N: np.ndarray
    v: np.ndarray
    correction: np.ndarray
    mask: np.ndarray
    shape: tuple = field(default=())

    def __len__(self):
        return len(self.points)

    def rows(self):
        for p, u, v, c, m in zip(self.points, self.u_N, self.v, self.correction, self.mask):
            vals = ["", "", ""] if m else [_fmt(u), _fmt(v), _fmt(c)]
            yield [_fmt(p[0]), _fmt(p[1]), _fmt(p[2]), *vals, "1" if m else "0"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["x", "y", "z", "u_N", "v", "correction", "mask"])
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        def clean(a):
            return [None if m else float(t) for t, m in zip(a, self.mask)]

        return {
            "points": self.points.tolist(),
            "u_N": clean(self.u_N),
            "v": clean(self.v),
            "correction": clean(self.correction),
            "mask": [bool(m) for m in self.mask],
            "shape": list(self.shape),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def excluded_mask(points: np.ndarray, cloud: Cloud, domain: DomainSpec) -> np.ndarray:
    mask = np.zeros(len(points), dtype=bool)
    if domain.is_ball:
        mask |= np.linalg.norm(points, axis=1) > domain.R
    for sl in _point_chunks(len(points), len(cloud)):
        if len(cloud) == 0:
            break
        r = points[sl, None, :] - cloud.centers[None]
        dist = np.sqrt(np.einsum("pki,pki->pk", r, r))
        mask[sl] |= np.any(dist <= cloud.radii + MASK_MARGIN, axis=1)
    return mask


def sample_points(points, cloud: Cloud, domain: DomainSpec, source, sol, shape: tuple = ()) -> FieldSamples:
    points = np.array(_as_points(points).reshape(-1, 3))
    mask = excluded_mask(points, cloud, domain)
    keep = ~mask
    u = np.full(len(points), np.nan)
    v = np.full(len(points), np.nan)
    c = np.full(len(points), np.nan)
    if keep.any():
        v[keep] = v_eval(points[keep], source, domain)
        corr, _ = _correction(points[keep], cloud, domain, np.asarray(sol.coeffs).reshape(-1, 3))
        u[keep] = v[keep] + corr
        # recomputed so that correction == u_N - v holds bit for bit
        c[keep] = u[keep] - v[keep]
    return FieldSamples(points, u, v, c, mask, tuple(shape) or (len(points),))


def sample_line(p0, p1, n: int, cloud: Cloud, domain: DomainSpec, source, sol) -> FieldSamples:
    if n < 2:
        raise ValueError("a line sampling needs n >= 2 points")
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    return sample_points(p0 + t * (p1 - p0), cloud, domain, source, sol)


_AXES = {"x": 0, "y": 1, "z": 2}


def grid_points(box, resolution, plane: Optional[tuple] = None):
    """Node coordinates of a uniform grid over ``box = (lo, hi)``.

    With ``plane=("z", 0.0)`` (any axis name) only the slice at that
    coordinate is generated and ``resolution`` refers to the two free axes.
    Returns ``(points, shape)``.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if plane is None:
        res = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
        axes = [np.linspace(lo[k], hi[k], res[k]) for k in range(3)]
    else:
        axis = _AXES[plane[0]] if isinstance(plane[0], str) else int(plane[0])
        free = [k for k in range(3) if k != axis]
        res = (resolution,) * 2 if np.isscalar(resolution) else tuple(resolution)
        axes = [None, None, None]
        axes[axis] = np.array([float(plane[1])])
        for k, nk in zip(free, res):
            axes[k] = np.linspace(lo[k], hi[k], nk)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    shape = tuple(a.size for a in axes) if plane is None else tuple(axes[k].size for k in free)
    return pts.reshape(-1, 3), shape


def sample_grid(box, resolution, cloud: Cloud, domain: DomainSpec, source, sol,
                plane: Optional[tuple] = None) -> FieldSamples:
    pts, shape = grid_points(box, resolution, plane)
    return sample_points(pts, cloud, domain, source, sol, shape)


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryResiduals:
    flux_max: np.ndarray  # per void, max |du_N/dn| on the surface
    flux_l2: np.ndarray  # per void, surface L2 norm of du_N/dn
    outer_max: Optional[float]  # max |u_N| on |x| = R (ball only)

    def to_dict(self) -> dict:
        return {
            "flux_max": self.flux_max.tolist(),
            "flux_l2": self.flux_l2.tolist(),
            "max_flux": float(self.flux_max.max()) if len(self.flux_max) else 0.0,
            "outer_max": self.outer_max,
        }


def boundary_residuals(cloud: Cloud, domain: DomainSpec, source, sol, n_points: int = 200,
                       n_outer: int = 2000) -> BoundaryResiduals:
    """Neumann flux of ``u_N`` on every void surface and its Dirichlet trace on ``|x| = R``."""
    nrm = fibonacci_sphere(n_points)
    n = len(cloud)
    fmax, fl2 = np.zeros(n), np.zeros(n)
    for j, void in enumerate(cloud.voids):
        pts = np.asarray(void.center) + void.radius * nrm
        flux = np.einsum("pi,pi->p", grad_uN(pts, cloud, domain, source, sol), nrm)
        fmax[j] = np.abs(flux).max()
        fl2[j] = math.sqrt(4.0 * math.pi * void.radius**2 * np.mean(flux**2))
    outer = None
    if domain.is_ball:
        pts = domain.R * fibonacci_sphere(n_outer)
        outer = float(np.abs(eval_uN(pts, cloud, domain, source, sol)).max())
    return BoundaryResiduals(fmax, fl2, outer)
