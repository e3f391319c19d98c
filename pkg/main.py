"""
fractal-helmholtz command line
==============================
    python main.py <command> --config run.json [--out DIR] [--threads N] [--verbose]

Commands: geom, mesh, operators, scatter, optimize, validate.
Exit codes: 0 all checks passed, 1 a check failed, 2 bad configuration,
3 numerical failure.
"""

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from boundary_operators import build_operators, calderon_residuals
from config import LabSettings, RunConfig, build_impedance, build_incident, build_mesh, build_obstacle, load_run_config
from errors import ConfigError, HelmholtzLabError
from exporters import (
    write_far_field_csv,
    write_json,
    write_mesh_vtk,
    write_operator_csvs,
    write_optimisation_trace_csv,
)
from fem import cached_dtn
from geometry import DomainSpec, similarity_dimension, validate_domain, write_polyline_csv
from impedance_opt import build_objective, optimize, verify_optimum
from mesh import mesh_metrics, ring_polygon_defect
from models import BoundaryConditionKind, PowerReport
from runlog import get_logger, set_verbosity
from scattering import far_field, far_field_power, optical_theorem_residual, radiated_power, scattered_field
from specfun import order_limit
from validation import ValidationSuite

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# residual(h/2) <= factor * residual(h), unless both sit at rounding level
REFINEMENT_FACTOR = 0.6
ROUNDING_FLOOR = 1e-9
RELATIONS = ("kv_vkstar", "wk_kstarw", "k2_vw", "kstar2_wv")

logger = get_logger("cli")


def _run_header(cfg: RunConfig, command: str) -> dict:
    return {"run_id": cfg.run_id, "command": command, "config": cfg.model_dump(mode="json")}


# COMMANDS


def cmd_geom(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    h = cfg.discretisation.h
    obstacle = build_obstacle(cfg.geometry, h, settings)
    report = validate_domain(DomainSpec(obstacle, cfg.geometry.ball_radius, cfg.physics.k), mesh_size=h)
    write_polyline_csv(obstacle, out / "obstacle.csv")
    summary = _run_header(cfg, "geom")
    summary.update({
        "geometry_id": obstacle.geometry_id(),
        "n_segments": obstacle.n_segments,
        "perimeter": obstacle.perimeter,
        "area": obstacle.signed_area,
        "similarity_dimension": similarity_dimension(cfg.geometry.kind),
        "domain": report.to_summary(),
    })
    write_json(summary, out / "geometry.json")
    return EXIT_OK if report.passes else EXIT_CHECK_FAILED


def cmd_mesh(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    mesh = build_mesh(cfg, settings=settings)
    metrics = mesh_metrics(mesh)
    write_mesh_vtk(mesh, out / "mesh.vtk")
    summary = _run_header(cfg, "mesh")
    summary.update({
        "metrics": metrics.model_dump(mode="json"),
        "n_triangles": metrics.n_triangles,
        "ring_area_defect": ring_polygon_defect(metrics.n_ring),
    })
    write_json(summary, out / "mesh.json")
    logger.log(f"mesh {metrics.mesh_id}: {metrics.n_nodes} nodes, {metrics.n_triangles} triangles", "SUCCESS")
    return EXIT_OK


def refinement_decreases(coarse: float, fine: float) -> bool:
    if coarse < ROUNDING_FLOOR and fine < ROUNDING_FLOOR:
        return True
    return fine <= REFINEMENT_FACTOR * coarse


def cmd_operators(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    k = cfg.physics.k
    sizes = [cfg.discretisation.h] + list(cfg.operators.refinements)
    reports = []
    for i, h in enumerate(sizes):
        mesh = build_mesh(cfg, h=h, settings=settings)
        dtn = cached_dtn(mesh, k, cfg.discretisation.mode_cutoff)
        ops = build_operators(k, mesh, dtn)
        residuals = calderon_residuals(ops)
        if i == 0:
            write_operator_csvs(ops, out / "operators")
        entry = residuals.model_dump(mode="json")
        entry["jump_relations"] = ops.jump_relation_defects()
        entry["n_interface"] = ops.n
        reports.append(entry)
        logger.log(f"h = {h:g}: max Calderon residual {residuals.max_residual:.3e}")

    finite = all(math.isfinite(r[name]) for r in reports for name in RELATIONS)
    decreasing = [
        all(refinement_decreases(coarse[name], fine[name]) for name in RELATIONS)
        for coarse, fine in zip(reports, reports[1:])
    ]

    passed = finite and all(decreasing)
    summary = _run_header(cfg, "operators")
    summary.update({
        "residuals": reports,
        "all_finite": finite,
        "refinement_decreasing": decreasing,
        "passed": passed,
    })
    write_json(summary, out / "calderon_residuals.json")
    if passed:
        logger.log("✅ CALDERON CHECKS PASSED", "SUCCESS")
    else:
        logger.log("❌ CALDERON CHECKS FAILED", "ERROR")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_scatter(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    k = cfg.physics.k
    mesh = build_mesh(cfg, settings=settings)
    dtn = cached_dtn(mesh, k, cfg.discretisation.mode_cutoff)
    incident = build_incident(cfg)
    bc = cfg.physics.bc
    L = build_impedance(cfg) if bc == BoundaryConditionKind.ROBIN else None

    us = scattered_field(incident, bc, mesh, L=L, dtn=dtn)
    ff = far_field(
        us, k, cfg.discretisation.n_angles, route=cfg.scatter.route, dtn=dtn, condition_limit=settings.condition_limit
    )
    Q = far_field_power(ff, cfg.scatter.theta_intervals)

    write_far_field_csv(ff, out / "far_field.csv")
    write_mesh_vtk(mesh, out / "scattered.vtk", point_data={"us": us.full()})
    power = PowerReport(
        Q=Q,
        theta_intervals=cfg.scatter.theta_intervals_deg,
        route=ff.route,
        k=k,
        geometry_id=ff.geometry_id,
    )
    summary = _run_header(cfg, "scatter")
    summary.update({
        "power": power.model_dump(mode="json"),
        "total_power": far_field_power(ff, [(0.0, 2.0 * math.pi)]),
        "radiated_power": radiated_power(us, dtn),
        "optical_theorem_residual": optical_theorem_residual(ff, incident),
        "mesh_id": mesh.mesh_id,
        "dtn_id": dtn.dtn_id,
    })
    write_json(summary, out / "power.json")
    logger.log(f"Q = {Q:.6g} through {cfg.scatter.theta_intervals_deg} deg ({ff.route.value})", "SUCCESS")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    k = cfg.physics.k
    mesh = build_mesh(cfg, settings=settings)
    dtn = cached_dtn(mesh, k, cfg.discretisation.mode_cutoff)
    objective = build_objective(
        cfg.optimiser.impedance_class,
        mesh,
        build_incident(cfg),
        cfg.scatter.theta_intervals,
        n_angles=cfg.discretisation.n_angles,
        dtn=dtn,
    )
    optimiser_settings = cfg.optimiser.settings.model_copy(update={"threads": threads})
    result = optimize(objective, optimiser_settings, verbose=logger.verbose)

    optimum = verify_optimum(objective, result)
    is_maximum = all(step.Q <= result.best_Q for step in result.trace)
    passed = optimum.dissipative and is_maximum

    summary = _run_header(cfg, "optimize")
    summary.update({
        "result": result.to_dict(),
        "mesh_id": mesh.mesh_id,
        "optimum_feasibility": optimum.model_dump(mode="json"),
        "n_rejected": len(result.rejected),
        "passed": passed,
    })
    write_json(summary, out / "optimisation.json")
    write_optimisation_trace_csv(result, out / "optimisation_trace.csv")
    if not passed:
        logger.log("❌ optimum failed its feasibility re-check", "ERROR")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_validate(cfg: RunConfig, out: Path, settings: LabSettings, threads: int) -> int:
    summary = ValidationSuite(cfg, settings).run()
    report = _run_header(cfg, "validate")
    report.update(summary.to_dict())
    write_json(report, out / "validation.json")
    return EXIT_OK if summary.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "geom": cmd_geom,
    "mesh": cmd_mesh,
    "operators": cmd_operators,
    "scatter": cmd_scatter,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="fractal-helmholtz",
        description="Helmholtz transmission and impedance scattering on prefractal obstacles",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: output/<run_id>)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for the optimiser grid phase")
    parser.add_argument("--verbose", action="store_true", help="echo the run log to the terminal")
    parser.add_argument("--debug", action="store_true", help=argparse.SUPPRESS)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    set_verbosity(args.verbose, args.debug)

    try:
        settings = LabSettings.from_env()
        cfg = load_run_config(args.config)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
        threads = args.threads if args.threads is not None else max(cfg.optimiser.settings.threads, settings.threads)
        out = Path(args.out) if args.out else Path("output") / cfg.run_id
        out.mkdir(parents=True, exist_ok=True)
        logger.log(f"{args.command}: run {cfg.run_id} -> {out}", "TEST")
        with order_limit(settings.max_order):
            return COMMANDS[args.command](cfg, out, settings, threads)
    except (ConfigError, ValidationError) as e:
        logger.log(f"configuration error: {e}", "ERROR")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HelmholtzLabError as e:
        logger.log(f"{type(e).__name__}: {e}", "ERROR")
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
