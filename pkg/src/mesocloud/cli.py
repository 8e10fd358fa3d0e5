"""``mesocloud`` command line interface.

Exit codes: 0 success, 1 oracle comparison above threshold, 2 configuration
or admissibility error, 3 solver failure, 4 oracle failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from typing import Optional

import numpy as np

from . import __version__
from .assembly import assemble, diagnostics_report, solve
from .config import ConfigError, RunConfig, fig5_config, load_config, parse_config, table1_config
from .errors import (
    InvalidGeometry,
    MesocloudError,
    NotConverged,
    OracleNotConverged,
    OracleTooLarge,
    SingularSystem,
    SourceOverlapsCloud,
)
from .field import boundary_residuals, sample_grid, sample_line
from .geometry import alpha_for, validate_cloud
from .oracle import bulk_plane_points, compare, radius_sweep, solve_reference

log = logging.getLogger("mesocloud")

EXIT_OK, EXIT_ABOVE_THRESHOLD, EXIT_CONFIG, EXIT_SOLVER, EXIT_ORACLE = 0, 1, 2, 3, 4


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _prepare_out(out: Optional[str]) -> str:
    out = out or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CommandFailed(EXIT_CONFIG, f"cannot create output directory {out!r}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise CommandFailed(EXIT_CONFIG, f"output directory {out!r} is not writable")
    return out


def _write_meta(out: str, extra: dict) -> None:
    meta = {"version": __version__, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **extra}
    write_atomic(os.path.join(out, "run_meta.json"), dump_json(meta))


def _load(path_or_dict) -> RunConfig:
    try:
        if isinstance(path_or_dict, dict):
            return parse_config(path_or_dict)
        return load_config(path_or_dict)
    except ConfigError as exc:
        raise CommandFailed(EXIT_CONFIG, "invalid configuration:\n  " + "\n  ".join(exc.messages)) from exc
    except OSError as exc:
        raise CommandFailed(EXIT_CONFIG, f"cannot read configuration: {exc}") from exc
    except (InvalidGeometry, ValueError) as exc:
        raise CommandFailed(EXIT_CONFIG, f"invalid configuration: {exc}") from exc


def _solve(cfg: RunConfig):
    report = validate_cloud(cfg.cloud, cfg.domain)
    for w in report.warnings:
        log.warning("%s", w.message)
    if report.errors:
        raise CommandFailed(EXIT_CONFIG, "inadmissible cloud:\n  " + "\n  ".join(v.message for v in report.errors))
    try:
        system = assemble(cfg.cloud, cfg.domain, cfg.source, cfg.solver.matrix_free_threshold)
    except (SourceOverlapsCloud, InvalidGeometry) as exc:
        raise CommandFailed(EXIT_CONFIG, str(exc)) from exc
    try:
        sol = solve(system, cfg.solver.method, cfg.solver.tol, cfg.solver.max_iter, cfg.solver.quadrature)
    except (SingularSystem, NotConverged) as exc:
        raise CommandFailed(EXIT_SOLVER, str(exc)) from exc
    return sol


def _run_meta(cfg: RunConfig) -> dict:
    meta = {"n_voids": len(cfg.cloud), "cloud": cfg.cloud_kind}
    if cfg.grid is not None:
        meta["alpha"] = alpha_for(cfg.grid.m, cfg.grid.beta)
    return meta


def _fixed_digits(obj):
    """Round-trip JSON floats; NaN/inf become null."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _fixed_digits(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_fixed_digits(v) for v in obj]
    return obj


def cmd_solve(config, out: Optional[str] = None) -> int:
    cfg = _load(config)
    out = _prepare_out(out or cfg.out_dir)
    sol = _solve(cfg)
    write_atomic(os.path.join(out, "solution.json"), dump_json(_fixed_digits(sol.to_dict())))
    diag = diagnostics_report(sol, cfg.cloud)
    diag["boundary"] = boundary_residuals(cfg.cloud, cfg.domain, cfg.source, sol).to_dict()
    write_atomic(os.path.join(out, "diagnostics.json"), dump_json(_fixed_digits(diag)))
    if cfg.line:
        s = sample_line(cfg.line["p0"], cfg.line["p1"], cfg.line["n"], cfg.cloud, cfg.domain, cfg.source, sol)
        write_atomic(os.path.join(out, "line.csv"), s.to_csv())
    if cfg.grid_output:
        g = cfg.grid_output
        plane = (g["plane"]["axis"], g["plane"]["value"]) if "plane" in g else None
        s = sample_grid((g["lo"], g["hi"]), g["resolution"], cfg.cloud, cfg.domain, cfg.source, sol, plane)
        write_atomic(os.path.join(out, "grid.csv"), s.to_csv())
    meta = _run_meta(cfg)
    meta["oracle"] = "unvalidated against oracle"
    _write_meta(out, meta)
    log.info("solved %d voids, residual %.3e", len(cfg.cloud), sol.residual_norm)
    return EXIT_OK


def cmd_validate(config) -> int:
    cfg = _load(config)
    report = validate_cloud(cfg.cloud, cfg.domain)
    print(dump_json(report.to_dict()), end="")
    return EXIT_OK if report.admissible else EXIT_CONFIG


def cmd_reproduce_fig5(m: int, out: Optional[str] = None, n: int = 1000) -> int:
    if not 2 <= m <= 10:
        raise CommandFailed(EXIT_CONFIG, f"m must lie in 2..10, got {m}")
    cfg = _load(fig5_config(m, n))
    out = _prepare_out(out)
    alpha = alpha_for(m, cfg.grid.beta)
    log.info("grid cloud m=%d (N=%d), beta=%.6g, alpha=%.10g", m, m**3, cfg.grid.beta, alpha)
    sol = _solve(cfg)
    line = cfg.line
    s = sample_line(line["p0"], line["p1"], line["n"], cfg.cloud, cfg.domain, cfg.source, sol)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["x1", "correction"])
    for p, c, masked in zip(s.points, s.correction, s.mask):
        w.writerow([format(float(p[0]), ".17g"), "" if masked else format(float(c), ".17g")])
    write_atomic(os.path.join(out, f"fig5_m{m}.csv"), buf.getvalue())
    meta = _run_meta(cfg)
    meta.update({"oracle": "unvalidated against oracle", "residual_norm": sol.residual_norm})
    _write_meta(out, meta)
    print(f"m={m} N={m**3} alpha={alpha:.10g} -> {os.path.join(out, f'fig5_m{m}.csv')}")
    return EXIT_OK


def _oracle_report(cfg: RunConfig, sol) -> tuple:
    try:
        ref = solve_reference(cfg.cloud, cfg.domain, cfg.source, cfg.oracle.mfs)
    except (OracleNotConverged, OracleTooLarge) as exc:
        raise CommandFailed(EXIT_ORACLE, str(exc)) from exc
    if cfg.oracle.points is not None:
        pts = np.asarray(cfg.oracle.points, dtype=float)
    else:
        axis = "xyz".index(cfg.oracle.plane_axis)
        pts = bulk_plane_points(cfg.cloud, cfg.domain, cfg.oracle.plane_n, axis, cfg.oracle.plane_level)
    try:
        rep = compare(sol, ref, pts)
    except ValueError as exc:
        raise CommandFailed(EXIT_CONFIG, str(exc)) from exc
    return ref, rep, pts


def cmd_compare_oracle(config, out: Optional[str] = None) -> int:
    cfg = _load(config)
    out = _prepare_out(out or cfg.out_dir)
    sol = _solve(cfg)
    ref, rep, pts = _oracle_report(cfg, sol)
    result = rep.to_dict()
    result["threshold"] = cfg.oracle.threshold
    if cfg.oracle.sweep_scales:
        try:
            result["sweep"] = radius_sweep(cfg.cloud, cfg.domain, cfg.source, cfg.oracle.sweep_scales, pts,
                                           cfg.oracle.mfs)
        except (OracleNotConverged, OracleTooLarge) as exc:
            raise CommandFailed(EXIT_ORACLE, str(exc)) from exc
        for row in result["sweep"]["rows"]:
            print(f"scale={row['scale']:<8g} max_rel={row['max_rel']:.6e}")
        print(f"fitted order: {result['sweep']['order']:.4f}")
    write_atomic(os.path.join(out, "error_report.json"), dump_json(_fixed_digits(result)))
    write_atomic(os.path.join(out, "pointwise.csv"), rep.pointwise_csv())
    _write_meta(out, _run_meta(cfg))
    print(f"max_rel={rep.max_rel:.6e} l2_rel={rep.l2_rel:.6e} n_points={rep.n_points} "
          f"oracle_residual={ref.residual:.3e} threshold={cfg.oracle.threshold}")
    return EXIT_OK if rep.max_rel <= cfg.oracle.threshold else EXIT_ABOVE_THRESHOLD


def cmd_reproduce_table1(out: Optional[str] = None, config=None) -> int:
    cfg = _load(config if config is not None else table1_config())
    out = _prepare_out(out or cfg.out_dir)
    sol = _solve(cfg)
    write_atomic(os.path.join(out, "solution.json"), dump_json(_fixed_digits(sol.to_dict())))
    ref, rep, _ = _oracle_report(cfg, sol)
    g = cfg.grid_output
    if g:
        plane = (g["plane"]["axis"], g["plane"]["value"]) if "plane" in g else None
        s = sample_grid((g["lo"], g["hi"]), g["resolution"], cfg.cloud, cfg.domain, cfg.source, sol, plane)
        u_ref = np.full(len(s.points), np.nan)
        keep = ~s.mask
        u_ref[keep] = ref.evaluate(s.points[keep])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["x", "y", "z", "u_N", "u_ref", "mask"])
        for p, u, r, masked in zip(s.points, s.u_N, u_ref, s.mask):
            vals = ["", ""] if masked else [format(float(u), ".17g"), format(float(r), ".17g")]
            w.writerow([format(float(t), ".17g") for t in p] + vals + ["1" if masked else "0"])
        write_atomic(os.path.join(out, "slice.csv"), buf.getvalue())
    result = rep.to_dict()
    result["threshold"] = cfg.oracle.threshold
    write_atomic(os.path.join(out, "error_report.json"), dump_json(_fixed_digits(result)))
    _write_meta(out, _run_meta(cfg))
    print(f"table1: max_rel={rep.max_rel:.6e} l2_rel={rep.l2_rel:.6e} n_points={rep.n_points} "
          f"oracle_residual={ref.residual:.3e}")
    return EXIT_OK if rep.max_rel <= cfg.oracle.threshold else EXIT_ABOVE_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesocloud", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="JSON run configuration")
        else:
            p.add_argument("config", nargs="?", help="optional JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="limit BLAS threads")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        return p

    common(sub.add_parser("solve", help="solve the dipole system and write the solution"))
    common(sub.add_parser("validate", help="check cloud admissibility"))
    p = common(sub.add_parser("reproduce-fig5", help="correction along the cube edge line"), config_required=False)
    p.add_argument("--m", type=int, default=10, help="voids per cube edge (N = m^3)")
    p.add_argument("--n", type=int, default=1000, help="number of line samples")
    common(sub.add_parser("reproduce-table1", help="18-void cloud versus the MFS reference"),
           config_required=False)
    common(sub.add_parser("compare-oracle", help="compare with the MFS reference solver"))
    return parser


def _dispatch(args) -> int:
    if args.command == "solve":
        return cmd_solve(args.config, args.out)
    if args.command == "validate":
        return cmd_validate(args.config)
    if args.command == "reproduce-fig5":
        if args.config:
            log.warning("reproduce-fig5 uses its built-in configuration; %s ignored", args.config)
        return cmd_reproduce_fig5(args.m, args.out, args.n)
    if args.command == "reproduce-table1":
        return cmd_reproduce_table1(args.out, args.config)
    if args.command == "compare-oracle":
        return cmd_compare_oracle(args.config, args.out)
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    limiter = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    try:
        with limiter:
            return _dispatch(args)
    except CommandFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except MesocloudError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
