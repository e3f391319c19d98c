"""
Command line: exit codes, written files and run-to-run determinism
"""

import json
from pathlib import Path

import pytest

from main import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main, refinement_decreases

CONFIG_DIR = Path(__file__).parent / "configs"

SMALL_DISK = {"kind": "polygon", "level": 0, "base": "disk", "radius": 1.0, "ball_radius": 3.0}


def _config(tmp_path: Path, name: str, data: dict) -> str:
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps({"run_id": name, **data}))
    return str(path)


def _run(command: str, config: str, out: Path, *extra: str) -> int:
    return main([command, "--config", config, "--out", str(out), *extra])


def test_geom_writes_the_obstacle(tmp_path):
    config = _config(tmp_path, "koch2", {"geometry": {"kind": "koch", "level": 2, "base": "square", "ball_radius": 2.0}})
    out = tmp_path / "geom"
    assert _run("geom", config, out) == EXIT_OK
    rows = (out / "obstacle.csv").read_text().splitlines()
    assert rows[0] == "x,y"
    assert len(rows) == 1 + 64
    summary = json.loads((out / "geometry.json").read_text())
    assert summary["n_segments"] == 64
    assert summary["domain"]["passes"] is True
    assert summary["run_id"] == "koch2"
    assert summary["command"] == "geom"
    assert summary["config"]["geometry"]["level"] == 2


def test_geom_reports_a_failed_domain_check(tmp_path):
    config = _config(tmp_path, "tight", {"geometry": {"base": "square", "ball_radius": 0.75}, "discretisation": {"h": 0.1}})
    assert _run("geom", config, tmp_path / "out") == EXIT_CHECK_FAILED


def test_missing_config_is_a_configuration_error(tmp_path):
    assert _run("geom", str(tmp_path / "absent.json"), tmp_path / "out") == EXIT_CONFIG


def test_bad_config_is_a_configuration_error(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{")
    assert _run("geom", str(bad_json), tmp_path / "out") == EXIT_CONFIG
    unknown = _config(tmp_path, "unknown", {"physics": {"wavenumber": 2.0}})
    assert _run("geom", unknown, tmp_path / "out") == EXIT_CONFIG
    assert main(["geom", "--config", unknown, "--threads", "0"]) == EXIT_CONFIG


def test_unknown_command_exits_through_argparse(tmp_path):
    with pytest.raises(SystemExit):
        main(["solve", "--config", str(tmp_path / "x.json")])


def test_numerical_failure(tmp_path):
    # mesh size larger than half the shortest edge
    config = _config(tmp_path, "coarse", {"geometry": {"base": "square", "ball_radius": 2.0}, "discretisation": {"h": 0.6}})
    assert _run("mesh", config, tmp_path / "out") == EXIT_NUMERICAL


def test_mesh_command(tmp_path):
    config = _config(tmp_path, "mesh", {"geometry": {"base": "square", "ball_radius": 2.0}, "discretisation": {"h": 0.2}})
    out = tmp_path / "mesh"
    assert _run("mesh", config, out) == EXIT_OK
    assert (out / "mesh.vtk").read_text().startswith("# vtk DataFile Version 3.0")
    summary = json.loads((out / "mesh.json").read_text())
    assert summary["n_triangles"] > 0
    assert summary["metrics"]["min_angle"] >= 20.0 - 1e-9


def test_operators_command(tmp_path):
    config = _config(tmp_path, "ops", {
        "geometry": {"base": "square", "ball_radius": 2.0},
        "discretisation": {"h": 0.2},
        "operators": {"refinements": [0.1]},
    })
    out = tmp_path / "ops"
    assert _run("operators", config, out) == EXIT_OK
    for name in ("K", "Kstar", "V", "W"):
        assert (out / "operators" / f"{name}.csv").exists()
    report = json.loads((out / "calderon_residuals.json").read_text())
    assert report["passed"] is True
    assert len(report["residuals"]) == 2


def test_refinement_rule():
    assert refinement_decreases(1e-3, 5e-4)
    assert not refinement_decreases(1e-3, 9e-4)
    assert refinement_decreases(1e-12, 5e-12)


def test_robin_with_zero_impedance_writes_the_neumann_far_field(tmp_path):
    shared = {
        "geometry": {"kind": "koch", "level": 1, "base": "square", "ball_radius": 2.0},
        "discretisation": {"h": 0.1, "n_angles": 90},
        "scatter": {"theta_intervals_deg": [[30.0, 60.0]]},
    }
    neumann = _config(tmp_path, "neumann", {**shared, "physics": {"k": 2.0, "bc": "neumann"}})
    robin = _config(tmp_path, "robin", {**shared, "physics": {"k": 2.0, "bc": "robin", "impedance": {"re": 0.0, "im": 0.0}}})
    assert _run("scatter", neumann, tmp_path / "n") == EXIT_OK
    assert _run("scatter", robin, tmp_path / "r") == EXIT_OK
    assert (tmp_path / "n" / "far_field.csv").read_bytes() == (tmp_path / "r" / "far_field.csv").read_bytes()
    power = json.loads((tmp_path / "r" / "power.json").read_text())
    assert power["power"]["Q"] >= 0.0
    assert power["power"]["theta_intervals"] == [[30.0, 60.0]]
    assert (tmp_path / "r" / "scattered.vtk").exists()


def test_optimize_is_reproducible(tmp_path):
    config = _config(tmp_path, "opt", {
        "geometry": SMALL_DISK,
        "discretisation": {"h": 0.1, "n_angles": 90},
        "physics": {"k": 2.0},
        "scatter": {"theta_intervals_deg": [[30.0, 60.0]]},
        "optimiser": {
            "impedance_class": {"re_bounds": [-0.5, 0.5], "im_bounds": [0.0, 2.0]},
            "settings": {"grid_points": 3, "max_evaluations": 20},
        },
    })
    assert _run("optimize", config, tmp_path / "a") == EXIT_OK
    assert _run("optimize", config, tmp_path / "b", "--threads", "2") == EXIT_OK
    first = (tmp_path / "a" / "optimisation.json").read_bytes()
    assert first == (tmp_path / "b" / "optimisation.json").read_bytes()
    trace = (tmp_path / "a" / "optimisation_trace.csv").read_text().splitlines()
    assert trace[0].startswith("index,phase,p_0,p_1,Q")


def test_optimize_records_rejected_steps_and_passes_on_a_feasible_optimum(tmp_path):
    config = _config(tmp_path, "active", {
        "geometry": SMALL_DISK,
        "discretisation": {"h": 0.1, "n_angles": 90},
        "physics": {"k": 2.0},
        "scatter": {"theta_intervals_deg": [[30.0, 60.0]]},
        "optimiser": {
            "impedance_class": {"re_bounds": [-0.5, 0.5], "im_bounds": [-1.0, 2.0]},
            "settings": {"grid_points": 3, "max_evaluations": 20},
        },
    })
    out = tmp_path / "active"
    assert _run("optimize", config, out) == EXIT_OK
    summary = json.loads((out / "optimisation.json").read_text())
    assert summary["n_rejected"] > 0
    assert summary["passed"] is True
    assert summary["optimum_feasibility"]["dissipative"] is True
    assert all(step["Q"] is None for step in summary["result"]["rejected"])
    trace = (out / "optimisation_trace.csv").read_text().splitlines()
    assert any(row.endswith(",False") for row in trace[1:])
    assert len(trace) - 1 == summary["result"]["n_evaluations"]


def _density_scatter_config(tmp_path: Path) -> str:
    return _config(tmp_path, "density", {
        "geometry": SMALL_DISK,
        "discretisation": {"h": 0.2, "n_angles": 90},
        "physics": {"k": 2.0},
        "scatter": {"route": "density"},
    })


def test_condition_limit_comes_from_the_environment(tmp_path, monkeypatch):
    config = _density_scatter_config(tmp_path)
    assert _run("scatter", config, tmp_path / "default") == EXIT_OK
    monkeypatch.setenv("HELMLAB_CONDITION_LIMIT", "1.5")
    assert _run("scatter", config, tmp_path / "limited") == EXIT_NUMERICAL


def test_order_cap_comes_from_the_environment(tmp_path, monkeypatch):
    config = _density_scatter_config(tmp_path)
    monkeypatch.setenv("HELMLAB_MAX_ORDER", "10")
    assert _run("scatter", config, tmp_path / "capped") == EXIT_NUMERICAL


def test_validate_on_a_coarse_disk(tmp_path):
    config = _config(tmp_path, "coarse_validate", {
        "seed": 3,
        "geometry": SMALL_DISK,
        "discretisation": {"h": 0.1},
        "physics": {"k": 2.0},
        "validation": {
            "trace_tolerance": 0.2,
            "far_field_tolerance": 0.2,
            "power_tolerance": 0.3,
            "spectrum_tolerance": 0.2,
            "spectrum_modes": 2,
            "n_random": 10,
        },
    })
    out = tmp_path / "validate"
    assert _run("validate", config, out) == EXIT_OK
    report = json.loads((out / "validation.json").read_text())
    assert report["passed"] is True
    assert report["n_failed"] == 0


def test_validate_needs_a_disk(tmp_path):
    config = _config(tmp_path, "square", {"geometry": {"base": "square", "ball_radius": 2.0}, "discretisation": {"h": 0.2}})
    assert _run("validate", config, tmp_path / "out") == EXIT_CONFIG


@pytest.mark.slow
def test_bundled_validation_passes(tmp_path):
    assert _run("validate", str(CONFIG_DIR / "disk_validate.json"), tmp_path / "validate") == EXIT_OK
