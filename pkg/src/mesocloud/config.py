"""Run configuration: JSON file format, schema and parsing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .geometry import (
    TABLE1_R,
    Cloud,
    CloudGridSpec,
    DomainSpec,
    make_grid_cloud,
    make_table1_cloud,
)
from .kernels import LinearBackground, SourceSpec
from .oracle import MfsConfig

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mesocloud run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["source", "cloud"],
    "properties": {
        "domain": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["type"],
                 "properties": {"type": {"const": "free_space"}}},
                {"type": "object", "additionalProperties": False, "required": ["type", "R"],
                 "properties": {"type": {"const": "ball"}, "R": _pos}},
            ]
        },
        "source": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["rho"],
                 "properties": {"rho": _pos, "amplitude": {"type": "number"}}},
                {"type": "object", "additionalProperties": False, "required": ["gradient"],
                 "properties": {"gradient": _vec3}},
            ]
        },
        "cloud": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "voids": {
                    "type": "array",
                    "items": {"type": "object", "additionalProperties": False, "required": ["center", "radius"],
                              "properties": {"center": _vec3, "radius": _pos}},
                },
                "grid": {
                    "type": "object", "additionalProperties": False, "required": ["m"],
                    "properties": {"m": {"type": "integer", "minimum": 2}, "center": _vec3, "side": _pos,
                                   "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                },
                "table1": {"const": True},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "method": {"enum": ["direct", "fixed_point"]},
                "tol": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
                "matrix_free_threshold": {"type": "integer", "minimum": 0},
                "quadrature": {"type": "integer", "minimum": 2},
            },
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "line": {"type": "object", "additionalProperties": False, "required": ["p0", "p1", "n"],
                         "properties": {"p0": _vec3, "p1": _vec3, "n": {"type": "integer", "minimum": 2}}},
                "grid": {
                    "type": "object", "additionalProperties": False, "required": ["lo", "hi", "resolution"],
                    "properties": {
                        "lo": _vec3, "hi": _vec3,
                        "resolution": {"oneOf": [{"type": "integer", "minimum": 2},
                                                 {"type": "array", "items": {"type": "integer", "minimum": 2},
                                                  "minItems": 2, "maxItems": 3}]},
                        "plane": {"type": "object", "additionalProperties": False, "required": ["axis", "value"],
                                  "properties": {"axis": {"enum": ["x", "y", "z"]}, "value": {"type": "number"}}},
                    },
                },
            },
        },
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "sources_per_void": {"type": "integer", "minimum": 1},
                "source_depth": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "collocation_per_void": {"type": "integer", "minimum": 1},
                "max_residual": _pos,
                "threshold": _pos,
                "plane": {"type": "object", "additionalProperties": False,
                          "properties": {"n": {"type": "integer", "minimum": 2},
                                         "axis": {"enum": ["x", "y", "z"]}, "level": {"type": "number"}}},
                "points": {"type": "array", "items": _vec3},
                "sweep": {"type": "object", "additionalProperties": False, "required": ["scales"],
                          "properties": {"scales": {"type": "array", "items": _pos, "minItems": 2}}},
            },
        },
    },
}


_num_or_null = {"type": ["number", "null"]}

SOLUTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mesocloud dipole solution",
    "type": "object",
    "required": ["coeffs", "residual_norm", "lambda_max", "wellposed_ratio", "coeff_bound_ratio"],
    "properties": {
        "coeffs": {"type": "array", "items": _vec3},
        "residual_norm": {"type": "number", "minimum": 0},
        "lambda_max": {"type": "number", "minimum": 0},
        "lambda_min": {"type": "number", "minimum": 0},
        "wellposed_ratio": {"type": "number", "minimum": 0},
        "coeff_bound_ratio": _num_or_null,
        "method": {"enum": ["direct", "fixed_point"]},
        "iterations": {"type": "integer", "minimum": 0},
    },
}

ERROR_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mesocloud oracle comparison",
    "type": "object",
    "required": ["max_rel", "l2_rel", "n_points", "oracle_residual"],
    "properties": {
        "max_rel": {"type": "number", "minimum": 0},
        "l2_rel": {"type": "number", "minimum": 0},
        "max_abs": {"type": "number", "minimum": 0},
        "n_points": {"type": "integer", "minimum": 0},
        "oracle_residual": _num_or_null,
        "threshold": {"type": "number"},
        "sweep": {"type": "object", "required": ["rows", "order"]},
    },
}


def schema_errors(data, schema) -> list:
    """Messages for every violation of ``schema``; empty when ``data`` conforms."""
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(data), key=lambda e: list(e.path))
    return [f"{_path(e)}: {e.message}" for e in errors]


class ConfigError(ValueError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def _path(err) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"
    tol: float = 1e-12
    max_iter: int = 1000
    matrix_free_threshold: int = 2000
    quadrature: int = 64


@dataclass(frozen=True)
class OracleConfig:
    mfs: MfsConfig = MfsConfig()
    threshold: float = 0.03
    plane_n: int = 41
    plane_axis: str = "z"
    plane_level: float = 0.0
    points: Optional[list] = None
    sweep_scales: Optional[list] = None


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    source: object
    cloud: Cloud
    cloud_kind: str
    grid: Optional[CloudGridSpec] = None
    solver: SolverConfig = SolverConfig()
    out_dir: Optional[str] = None
    line: Optional[dict] = None
    grid_output: Optional[dict] = None
    oracle: OracleConfig = OracleConfig()
    raw: dict = field(default_factory=dict, repr=False, compare=False)


def parse_config(data: dict) -> RunConfig:
    """Validate ``data`` against :data:`CONFIG_SCHEMA` and build a :class:`RunConfig`."""
    if isinstance(data, dict) and isinstance(data.get("cloud"), dict):
        given = [k for k in ("voids", "grid", "table1") if k in data["cloud"]]
        if len(given) > 1:
            raise ConfigError([f"$.cloud: exactly one of voids, grid, table1 is allowed, got {', '.join(given)}"])
    errors = schema_errors(data, CONFIG_SCHEMA)
    if errors:
        raise ConfigError(errors)

    cloud_data = data["cloud"]
    grid = None
    if "voids" in cloud_data:
        kind, cloud = "voids", Cloud.from_list(cloud_data["voids"])
        table_domain = None
    elif "grid" in cloud_data:
        g = cloud_data["grid"]
        grid = CloudGridSpec(g["m"], tuple(g.get("center", (3.0, 0.0, 0.0))), g.get("side", 1.0 / math.sqrt(3.0)),
                             g.get("beta", math.pi / 25.0))
        kind, cloud = "grid", make_grid_cloud(grid)
        table_domain = None
    else:
        kind = "table1"
        cloud, table_domain = make_table1_cloud()

    dom = data.get("domain")
    if dom is None:
        if table_domain is None:
            raise ConfigError(["$.domain: required unless the cloud is table1"])
        domain = table_domain
    else:
        domain = DomainSpec.ball(dom["R"]) if dom["type"] == "ball" else DomainSpec.free_space()
    if kind == "table1" and domain != DomainSpec.ball(TABLE1_R):
        raise ConfigError([f"$.domain: the table1 cloud is defined for a ball of radius {TABLE1_R:g}"])

    src = data["source"]
    source = LinearBackground(tuple(src["gradient"])) if "gradient" in src else SourceSpec(src["rho"],
                                                                                            src.get("amplitude", 6.0))
    solver = SolverConfig(**data.get("solver", {}))
    outputs = data.get("outputs", {})
    o = data.get("oracle", {})
    mfs_keys = ("sources_per_void", "source_depth", "collocation_per_void", "max_residual")
    plane = o.get("plane", {})
    oracle = OracleConfig(
        mfs=MfsConfig(**{k: o[k] for k in mfs_keys if k in o}),
        threshold=o.get("threshold", 0.03),
        plane_n=plane.get("n", 41),
        plane_axis=plane.get("axis", "z"),
        plane_level=plane.get("level", 0.0),
        points=o.get("points"),
        sweep_scales=o.get("sweep", {}).get("scales"),
    )
    return RunConfig(domain, source, cloud, kind, grid, solver, outputs.get("dir"), outputs.get("line"),
                     outputs.get("grid"), oracle, data)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON ({exc})"]) from exc
    return parse_config(data)


def table1_config(sources_per_void: int = 144, source_depth: float = 0.3) -> dict:
    """Configuration of the 18-void comparison (ball R = 120, source radius 30)."""
    return {
        "domain": {"type": "ball", "R": TABLE1_R},
        "source": {"rho": 30.0, "amplitude": 6.0},
        "cloud": {"table1": True},
        "outputs": {"grid": {"lo": [-120, -120, 0], "hi": [120, 120, 0], "resolution": [121, 121],
                             "plane": {"axis": "z", "value": 0.0}}},
        "oracle": {"sources_per_void": sources_per_void, "source_depth": source_depth, "threshold": 0.03},
    }


def fig5_config(m: int, n: int = 1000) -> dict:
    """The cube cloud of ``m**3`` voids in the ball R = 7 with source radius 2, sampled along the cube edge."""
    off = -1.0 / (2.0 * math.sqrt(3.0))
    return {
        "domain": {"type": "ball", "R": 7.0},
        "source": {"rho": 2.0, "amplitude": 6.0},
        "cloud": {"grid": {"m": m, "center": [3.0, 0.0, 0.0], "side": 1.0 / math.sqrt(3.0), "beta": math.pi / 25.0}},
        "outputs": {"line": {"p0": [2.0, off, off], "p1": [4.0, off, off], "n": n}},
    }
