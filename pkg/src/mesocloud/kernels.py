"""Closed-form ingredients of the dipole approximation.

All functions broadcast over leading axes: points are arrays of shape
``(..., 3)``; scalars come back with shape ``(...)``, vectors ``(..., 3)`` and
matrices ``(..., 3, 3)``.

The regular part of the ball Green's function is evaluated in the symmetric
form ``H = R / (4 pi sqrt(|x|^2 |y|^2 - 2 R^2 x.y + R^4))``, which equals
``R / (4 pi |y| |x - y*|)`` with ``y* = R^2 y / |y|^2`` and avoids forming the
image point explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CenterImage, CoincidentPoints, InsideVoid, InvalidGeometry, OutsideDomain
from .geometry import FREE_SPACE, DomainSpec, Void

FOUR_PI = 4.0 * math.pi
# Relative thresholds for degenerate geometry.
COINCIDENCE_RTOL = 1e-12
BOUNDARY_RTOL = 1e-12


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise ValueError(f"points must have a trailing axis of length 3, got shape {x.shape}")
    return x


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", x, x))


def _separation(x, y, scale=None):
    """``x - y`` and its length, refusing (near-)coincident pairs."""
    x, y = _as_points(x), _as_points(y)
    r = x - y
    dist = _norm(r)
    if scale is None:
        scale = np.maximum(np.maximum(_norm(x), _norm(y)), 1.0)
    if np.any(dist <= COINCIDENCE_RTOL * scale):
        raise CoincidentPoints("kernel evaluated at coincident points")
    return r, dist


def _check_inside(x: np.ndarray, domain: DomainSpec) -> np.ndarray:
    nx = _norm(x)
    if domain.is_ball and np.any(nx > domain.R * (1.0 + BOUNDARY_RTOL)):
        raise OutsideDomain(f"point outside the ball |x| <= {domain.R}")
    return nx


# ---------------------------------------------------------------------------
# Unperturbed solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """Uniform source ``f = amplitude`` on the ball ``|x| < rho`` centred at the origin."""

    rho: float
    amplitude: float = 6.0

    def __post_init__(self):
        if not (float(self.rho) > 0 and math.isfinite(self.rho)):
            raise InvalidGeometry(f"source radius must be positive, got {self.rho!r}")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "amplitude", float(self.amplitude))

    @property
    def support_radius(self) -> float:
        return self.rho

    def scaled(self, factor: float) -> "SourceSpec":
        return SourceSpec(self.rho, self.amplitude * factor)

    def value(self, x, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
        x = _as_points(x)
        nx = _check_inside(x, domain)
        rho, k = self.rho, self.amplitude / 6.0
        inv_R = 1.0 / domain.R if domain.is_ball else 0.0
        inside = rho * rho * (3.0 - 2.0 * rho * inv_R) - nx * nx
        with np.errstate(divide="ignore"):
            outside = 2.0 * rho**3 * (1.0 / nx - inv_R)
        return k * np.where(nx < rho, inside, outside)

    def gradient(self, x, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
        x = _as_points(x)
        nx = _check_inside(x, domain)[..., None]
        k = self.amplitude / 6.0
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = -2.0 * self.rho**3 * x / nx**3
        return k * np.where(nx < self.rho, -2.0 * x, outside)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "amplitude": self.amplitude}


@dataclass(frozen=True)
class LinearBackground:
    """Source-free background ``v(x) = g . x``; the exact one-void test case."""

    gradient_vector: tuple

    def __post_init__(self):
        g = tuple(float(t) for t in self.gradient_vector)
        if len(g) != 3:
            raise ValueError("background gradient must be a 3-vector")
        object.__setattr__(self, "gradient_vector", g)

    @property
    def support_radius(self) -> float:
        return 0.0

    def scaled(self, factor: float) -> "LinearBackground":
        return LinearBackground(tuple(factor * t for t in self.gradient_vector))

    def value(self, x, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
        x = _as_points(x)
        _check_inside(x, domain)
        return x @ np.asarray(self.gradient_vector)

    def gradient(self, x, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
        x = _as_points(x)
        _check_inside(x, domain)
        return np.broadcast_to(np.asarray(self.gradient_vector), x.shape).copy()

    def to_dict(self) -> dict:
        return {"gradient": list(self.gradient_vector)}


def v_eval(x, source, domain: DomainSpec = FREE_SPACE):
    return source.value(x, domain)


def grad_v(x, source, domain: DomainSpec = FREE_SPACE):
    return source.gradient(x, domain)


# ---------------------------------------------------------------------------
# Green's functions
# ---------------------------------------------------------------------------


def _check_center(y: np.ndarray, R: float) -> np.ndarray:
    ny = _norm(y)
    if np.any(ny <= COINCIDENCE_RTOL * R):
        raise CenterImage("image point undefined for y at the ball centre; offset the point")
    return ny


def _image_denominator(x, y, R):
    """``D = |x|^2|y|^2 - 2 R^2 x.y + R^4``; H is ``R / (4 pi sqrt(D))``."""
    xx = np.einsum("...i,...i->...", x, x)
    yy = np.einsum("...i,...i->...", y, y)
    xy = np.einsum("...i,...i->...", x, y)
    D = xx * yy - 2.0 * R * R * xy + R**4
    if np.any(D <= (COINCIDENCE_RTOL * R * R) ** 2):
        raise CoincidentPoints("x coincides with the image of y")
    return D, xx, yy


def regular_part_H(x, y, R: float) -> np.ndarray:
    x, y = _as_points(x), _as_points(y)
    _check_center(y, R)
    D, _, _ = _image_denominator(x, y, R)
    return R / (FOUR_PI * np.sqrt(D))


def grad_y_H(x, y, R: float) -> np.ndarray:
    """Gradient of the ball regular part ``H(x, y)`` with respect to ``y``."""
    x, y = _as_points(x), _as_points(y)
    _check_center(y, R)
    D, xx, _ = _image_denominator(x, y, R)
    dD = 2.0 * (xx[..., None] * y - R * R * x)
    return (-0.5 * R / FOUR_PI) * D[..., None] ** -1.5 * dD


def grad_x_H(x, y, R: float) -> np.ndarray:
    x, y = _as_points(x), _as_points(y)
    _check_center(y, R)
    D, _, yy = _image_denominator(x, y, R)
    dD = 2.0 * (yy[..., None] * x - R * R * y)
    return (-0.5 * R / FOUR_PI) * D[..., None] ** -1.5 * dD


def mixed_hessian_H(x, y, R: float) -> np.ndarray:
    """``M[..., a, b] = d^2 H / dx_a dy_b`` for the ball regular part."""
    x, y = _as_points(x), _as_points(y)
    _check_center(y, R)
    D, xx, yy = _image_denominator(x, y, R)
    k = R / FOUR_PI
    dx = 2.0 * (yy[..., None] * x - R * R * y)
    dy = 2.0 * (xx[..., None] * y - R * R * x)
    dxdy = 4.0 * x[..., :, None] * y[..., None, :] - 2.0 * R * R * np.eye(3)
    D = D[..., None, None]
    return 0.75 * k * D**-2.5 * dx[..., :, None] * dy[..., None, :] - 0.5 * k * D**-1.5 * dxdy


def green(x, y, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
    x, y = _as_points(x), _as_points(y)
    scale = domain.R if domain.is_ball else None
    _, dist = _separation(x, y, scale)
    g = 1.0 / (FOUR_PI * dist)
    if domain.is_ball:
        g = g - regular_part_H(x, y, domain.R)
    return g


def grad_x_green(x, y, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
    x, y = _as_points(x), _as_points(y)
    scale = domain.R if domain.is_ball else None
    r, dist = _separation(x, y, scale)
    g = -r / (FOUR_PI * dist[..., None] ** 3)
    if domain.is_ball:
        g = g - grad_x_H(x, y, domain.R)
    return g


def kernel_T(x, y) -> np.ndarray:
    """Mixed Hessian of the free-space kernel ``1 / (4 pi |x - y|)``."""
    r, dist = _separation(x, y)
    return _T_from_separation(r, dist)


def _T_from_separation(r: np.ndarray, dist: np.ndarray) -> np.ndarray:
    rhat = r / dist[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    return (np.eye(3) - 3.0 * outer) / (FOUR_PI * dist[..., None, None] ** 3)


def kernel_frakT(x, y, domain: DomainSpec = FREE_SPACE) -> np.ndarray:
    """Mixed Hessian ``d^2 G / dx_a dy_b`` of the domain's Green's function."""
    if not domain.is_ball:
        return kernel_T(x, y)
    r, dist = _separation(x, y, domain.R)
    return _T_from_separation(r, dist) - mixed_hessian_H(x, y, domain.R)


# ---------------------------------------------------------------------------
# Voids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolarizationMatrix:
    """Symmetric negative definite 3x3 matrix describing a void's dipole response."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("polarization matrix must be 3x3")
        if not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
            raise ValueError("polarization matrix must be symmetric")
        if np.linalg.eigvalsh(m).max() >= 0.0:
            raise ValueError("polarization matrix must be negative definite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``-Q`` in ascending order."""
        return np.linalg.eigvalsh(-self.matrix)

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])


def polarization_sphere(radius: float) -> PolarizationMatrix:
    if not radius > 0:
        raise InvalidGeometry(f"radius must be positive, got {radius!r}")
    return PolarizationMatrix(-2.0 * math.pi * radius**3 * np.eye(3))


def dipole_field_sphere(x, void: Void) -> np.ndarray:
    """The three dipole fields of a spherical void, stacked on the last axis.

    Exact exterior solution with unit-normal Neumann data:
    ``-(rho^3 / 2) (x - O) / |x - O|^3``.
    """
    x = _as_points(x)
    r = x - np.asarray(void.center)
    dist = _norm(r)
    if np.any(dist < void.radius * (1.0 - BOUNDARY_RTOL)):
        raise InsideVoid(f"point inside void centred at {void.center}")
    return -0.5 * void.radius**3 * r / dist[..., None] ** 3


def dipole_jacobian_sphere(x, void: Void) -> np.ndarray:
    """``J[..., i, a] = d D_i / d x_a``; equals ``Q T(x, O)`` for a sphere."""
    x = _as_points(x)
    r = x - np.asarray(void.center)
    dist = _norm(r)
    if np.any(dist < void.radius * (1.0 - BOUNDARY_RTOL)):
        raise InsideVoid(f"point inside void centred at {void.center}")
    return -2.0 * math.pi * void.radius**3 * _T_from_separation(r, dist)
