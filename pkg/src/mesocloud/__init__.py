"""Dipole approximation for Poisson problems in domains with many small spherical voids."""
from .assembly import DipoleSolution, InteractionSystem, assemble, diagnostics_report, solve, solve_direct, solve_fixed_point
from .errors import MesocloudError
from .field import boundary_residuals, correction, eval_uN, grad_uN, sample_grid, sample_line
from .geometry import (
    FREE_SPACE,
    Cloud,
    CloudGridSpec,
    DomainSpec,
    Void,
    alpha_for,
    alpha_infinity,
    make_grid_cloud,
    make_table1_cloud,
    validate_cloud,
)
from .kernels import LinearBackground, SourceSpec, green, kernel_frakT, kernel_T, v_eval
from .oracle import MfsConfig, compare, solve_reference

__version__ = "0.1.0"
