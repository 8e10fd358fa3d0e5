"""Void clouds: construction, derived scales and admissibility checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidGeometry, NonPositiveRadicand

# Relative distance below which two centres are treated as the same point.
COINCIDENCE_RTOL = 1e-12


@dataclass(frozen=True)
class Void:
    """A spherical perforation."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(t) for t in self.center)
        if len(c) != 3 or not all(math.isfinite(t) for t in c):
            raise InvalidGeometry(f"void centre must be a finite 3-vector, got {self.center!r}")
        r = float(self.radius)
        if not (r > 0 and math.isfinite(r)):
            raise InvalidGeometry(f"void radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def polarization(self):
        from .kernels import polarization_sphere

        return polarization_sphere(self.radius)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "Void":
        return cls(tuple(data["center"]), data["radius"])


@dataclass(frozen=True)
class Cloud:
    """An ordered collection of voids together with its characteristic scales.

    ``eps`` is the largest void diameter and ``d`` half the smallest distance
    between two centres (``inf`` for fewer than two voids). ``omega_bounds``
    is the box ``omega`` when one is given, otherwise the bounding box of the
    voids inflated by ``2 d`` (by ``eps`` when there is a single void), as a
    ``(2, 3)`` array of lower/upper corners.
    """

    voids: tuple
    omega: Optional[tuple] = field(default=None, repr=False, compare=False)
    eps: float = field(init=False)
    d: float = field(init=False)
    omega_bounds: Optional[np.ndarray] = field(init=False, repr=False, compare=False)
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        voids = tuple(v if isinstance(v, Void) else Void(**v) for v in self.voids)
        object.__setattr__(self, "voids", voids)
        n = len(voids)
        centers = np.array([v.center for v in voids], dtype=float).reshape(n, 3)
        radii = np.array([v.radius for v in voids], dtype=float)
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

        eps = 2.0 * float(radii.max()) if n else 0.0
        d = 0.5 * min_center_distance(centers) if n >= 2 else math.inf
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "d", d)

        if self.omega is not None:
            bounds = np.array(self.omega, dtype=float).reshape(2, 3)
            bounds.setflags(write=False)
        elif n:
            pad = 2.0 * d if n >= 2 else eps
            lo = (centers - radii[:, None]).min(axis=0) - pad
            hi = (centers + radii[:, None]).max(axis=0) + pad
            bounds = np.stack([lo, hi])
            bounds.setflags(write=False)
        else:
            bounds = None
        object.__setattr__(self, "omega_bounds", bounds)

    def __len__(self):
        return len(self.voids)

    @classmethod
    def from_arrays(cls, centers, radii, omega=None) -> "Cloud":
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
        return cls(tuple(Void(tuple(c), r) for c, r in zip(centers, radii)), omega)

    def scaled_radii(self, s: float) -> "Cloud":
        """Same centres, every radius multiplied by ``s``."""
        return Cloud.from_arrays(self.centers, self.radii * s, self.omega)

    def permuted(self, order) -> "Cloud":
        return Cloud(tuple(self.voids[i] for i in order), self.omega)

    def to_list(self) -> list:
        return [v.to_dict() for v in self.voids]

    @classmethod
    def from_list(cls, data: Sequence[dict]) -> "Cloud":
        return cls(tuple(Void.from_dict(item) for item in data))


def min_center_distance(centers: np.ndarray) -> float:
    centers = np.asarray(centers, dtype=float)
    if len(centers) < 2:
        return math.inf
    dist, _ = cKDTree(centers).query(centers, k=2)
    return float(dist[:, 1].min())


@dataclass(frozen=True)
class DomainSpec:
    """Unperturbed domain: free space (``R is None``) or the ball ``|x| < R``."""

    R: Optional[float] = None

    def __post_init__(self):
        if self.R is not None:
            R = float(self.R)
            if not (R > 0 and math.isfinite(R)):
                raise InvalidGeometry(f"ball radius must be positive, got {self.R!r}")
            object.__setattr__(self, "R", R)

    @classmethod
    def free_space(cls) -> "DomainSpec":
        return cls(None)

    @classmethod
    def ball(cls, R: float) -> "DomainSpec":
        return cls(R)

    @property
    def is_ball(self) -> bool:
        return self.R is not None

    def to_dict(self) -> dict:
        return {"type": "ball", "R": self.R} if self.is_ball else {"type": "free_space"}


FREE_SPACE = DomainSpec()


# ---------------------------------------------------------------------------
# Non-uniform cube cloud
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CloudGridSpec:
    m: int
    center: tuple = (3.0, 0.0, 0.0)
    side: float = 1.0 / math.sqrt(3.0)
    beta: float = math.pi / 25.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidGeometry(f"grid size m must be an integer >= 2, got {self.m!r}")
        if not self.side > 0:
            raise InvalidGeometry(f"cube side must be positive, got {self.side!r}")
        if not 0 < self.beta < 1:
            raise InvalidGeometry(f"volume fraction must lie in (0, 1), got {self.beta!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "center", tuple(float(t) for t in self.center))


def _cube_root_positive(radicand: float) -> float:
    if not radicand > 0:
        raise NonPositiveRadicand(radicand)
    return radicand ** (1.0 / 3.0)


def alpha_for(m: int, beta: float) -> float:
    """Scale factor of the ``p < q`` radii keeping the void volume fraction at ``beta``."""
    if m < 2:
        raise InvalidGeometry(f"m must be >= 2, got {m}")
    radicand = 16.0 * m / (m - 1) * (3.0 * beta / (4.0 * math.pi) - (125.0 + 32.0 * (m - 1)) / (8000.0 * m))
    return _cube_root_positive(radicand)


def alpha_infinity(beta: float) -> float:
    """Limit of :func:`alpha_for` as ``m`` grows without bound."""
    radicand = 12.0 * beta / math.pi - 8.0 / 125.0
    # beta = 2 pi / 375 is the exact zero; absorb its rounding error.
    if abs(radicand) <= 4.0 * np.finfo(float).eps:
        return 0.0
    return _cube_root_positive(radicand)


def grid_centers(spec: CloudGridSpec) -> np.ndarray:
    """Centres ordered with ``p`` (x index) slowest, then ``q``, then ``r``."""
    h = spec.side / spec.m
    offs = (2.0 * np.arange(1, spec.m + 1) - 1.0) * h / 2.0 - spec.side / 2.0
    p, q, r = np.meshgrid(offs, offs, offs, indexing="ij")
    return np.stack([p.ravel(), q.ravel(), r.ravel()], axis=1) + np.asarray(spec.center)


def make_grid_cloud(spec: CloudGridSpec) -> Cloud:
    m = spec.m
    h = spec.side / m
    alpha = alpha_for(m, spec.beta)
    if alpha >= 1.0:
        raise InvalidGeometry(f"alpha = {alpha:.6g} >= 1: beta={spec.beta} too large for m={m}")
    idx = np.arange(1, m + 1)
    p, q, _ = np.meshgrid(idx, idx, idx, indexing="ij")
    p, q = p.ravel(), q.ravel()
    radii = np.where(p > q, h / 5.0, np.where(p < q, alpha * h / 2.0, h / 4.0))
    center = np.asarray(spec.center)
    cube = (tuple(center - spec.side / 2.0), tuple(center + spec.side / 2.0))
    return Cloud.from_arrays(grid_centers(spec), radii, omega=cube)


# Table of the 18-void example: centre and radius as a fraction of R.
TABLE1_ROWS = (
    ((-50, 0, 0), 0.0417),
    ((-50, 0, 22), 0.0333),
    ((-50, 22, 0), 0.0292),
    ((-50, 0, -22), 0.0375),
    ((-50, -22, 0), 0.0458),
    ((-50, 22, 22), 0.0292),
    ((-50, 22, -22), 0.025),
    ((-50, -22, 22), 0.0375),
    ((-50, -22, -22), 0.0375),
    ((-72, 0, 0), 0.0417),
    ((-72, 0, 22), 0.0458),
    ((-72, 22, 0), 0.0292),
    ((-72, 0, -22), 0.0375),
    ((-72, -22, 0), 0.0417),
    ((-72, 22, 22), 0.0333),
    ((-72, 22, -22), 0.05),
    ((-72, -22, 22), 0.0333),
    ((-72, -22, -22), 0.0375),
)
TABLE1_R = 120.0


def make_table1_cloud() -> tuple:
    """The 18-void parallelepiped cloud inside the ball of radius 120."""
    voids = tuple(Void(c, ratio * TABLE1_R) for c, ratio in TABLE1_ROWS)
    return Cloud(voids), DomainSpec.ball(TABLE1_R)


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # coincident | overlap | outside_domain | mesoscale
    severity: str  # error | warning
    message: str
    indices: tuple = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "severity": self.severity, "message": self.message,
                "indices": list(self.indices)}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def errors(self) -> list:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def admissible(self) -> bool:
        return not self.errors

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict:
        return {"admissible": self.admissible, "violations": [v.to_dict() for v in self.violations]}


def validate_cloud(cloud: Cloud, domain: DomainSpec = FREE_SPACE, mesoscale_c: float = 1.0) -> ValidationReport:
    """Report geometric problems with ``cloud`` inside ``domain``.

    Overlapping or coincident voids and voids not strictly inside the ball are
    errors. ``eps >= mesoscale_c * d`` is only a warning: the dipole system is
    still evaluable, just outside the regime where it is known to be accurate.
    """
    out = []
    centers, radii = cloud.centers, cloud.radii
    n = len(cloud)
    if n >= 2:
        scale = max(float(np.abs(centers).max()), float(radii.max()), 1e-300)
        tree = cKDTree(centers)
        for i, j in sorted(tree.query_pairs(2.0 * float(radii.max()))):
            dist = float(np.linalg.norm(centers[i] - centers[j]))
            if dist <= COINCIDENCE_RTOL * scale:
                out.append(Violation("coincident", "error", f"voids {i} and {j} share a centre", (i, j)))
            elif dist <= radii[i] + radii[j]:
                out.append(Violation(
                    "overlap", "error",
                    f"voids {i} and {j} intersect: centre distance {dist:.6g} <= {radii[i] + radii[j]:.6g}",
                    (i, j)))
    if domain.is_ball:
        reach = np.linalg.norm(centers, axis=1) + radii
        for i in np.flatnonzero(reach >= domain.R):
            out.append(Violation(
                "outside_domain", "error",
                f"void {i} reaches |x| = {reach[i]:.6g} >= R = {domain.R:.6g}", (int(i),)))
    if n >= 2 and cloud.eps >= mesoscale_c * cloud.d:
        out.append(Violation(
            "mesoscale", "warning",
            f"eps = {cloud.eps:.6g} >= {mesoscale_c:g} * d = {mesoscale_c * cloud.d:.6g}"))
    return ValidationReport(tuple(out))


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` nearly equal-area unit vectors on the sphere (deterministic)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
