"""
Output writers: CSV headers, VTK layout and byte-stable JSON
"""

import numpy as np
import pandas as pd
import pytest

from boundary_operators import build_operators
from conftest import DISK
from exporters import (
    operator_frame,
    read_operator_csv,
    write_far_field_csv,
    write_field_vtk,
    write_json,
    write_mesh_vtk,
    write_operator_csvs,
    write_optimisation_trace_csv,
)
from fem import cached_dtn
from mie import mie_coefficients, mie_far_field
from models import BoundaryConditionKind, OptimisationResult, OptimisationStep


def test_far_field_csv(tmp_path):
    ff = mie_far_field(mie_coefficients(BoundaryConditionKind.DIRICHLET, DISK.radius, DISK.k), 72)
    path = write_far_field_csv(ff, tmp_path / "out" / "far_field.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "theta,re,im,abs2"
    assert len(lines) == 73
    frame = pd.read_csv(path)
    assert np.allclose(frame["re"].to_numpy(), ff.values.real, rtol=1e-14, atol=0.0)
    assert np.allclose(frame["abs2"].to_numpy(), np.abs(ff.values) ** 2, rtol=1e-14, atol=0.0)


def test_mesh_vtk_layout(tmp_path, square_mesh):
    text = write_mesh_vtk(square_mesh, tmp_path / "mesh.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    assert f"POINTS {square_mesh.n_nodes} double" in text
    n_tri = len(square_mesh.triangles)
    assert f"CELLS {n_tri} {4 * n_tri}" in text
    assert f"CELL_DATA {n_tri}" in text
    assert "SCALARS region int 1" in text
    assert "POINT_DATA" not in text


def test_field_vtk_splits_complex_values(tmp_path, square_mesh):
    values = np.exp(1j * square_mesh.nodes[:, 0])
    text = write_field_vtk(square_mesh, {"us": values, "level": np.ones(square_mesh.n_nodes)}, tmp_path / "f.vtk").read_text()
    for label in ("SCALARS us_re double 1", "SCALARS us_im double 1", "SCALARS us_abs double 1", "SCALARS level double 1"):
        assert label in text
    with pytest.raises(ValueError):
        write_field_vtk(square_mesh, {"short": np.ones(3)}, tmp_path / "bad.vtk")


def test_operator_csvs(tmp_path, disk_mesh):
    ops = build_operators(DISK.k, disk_mesh, cached_dtn(disk_mesh, DISK.k))
    written = write_operator_csvs(ops, tmp_path / "operators")
    assert sorted(written) == ["K", "Kstar", "V", "W"]
    header = written["V"].read_text().splitlines()[0]
    assert header.startswith("re_0,im_0,re_1,im_1")
    assert np.allclose(read_operator_csv(written["V"]), ops.V, rtol=1e-14, atol=0.0)


def test_operator_frame_interleaves():
    frame = operator_frame(np.array([[1 + 2j, 3 - 4j]]))
    assert list(frame.columns) == ["re_0", "im_0", "re_1", "im_1"]
    assert frame.iloc[0].tolist() == [1.0, 2.0, 3.0, -4.0]


def test_optimisation_trace_csv(tmp_path):
    steps = [
        OptimisationStep(index=0, phase="grid", params=[0.0, 1.0], Q=0.25,
                         dissipativity_margin=0.1, coercivity_norm=1.0, accepted=True),
        OptimisationStep(index=1, phase="refine", params=[0.1, 1.1], Q=0.3,
                         dissipativity_margin=0.11, coercivity_norm=1.1, accepted=True),
    ]
    result = OptimisationResult(
        impedance_class={"kind": "constant_box"},
        best_params=[0.1, 1.1],
        best_impedance=[(0.1, 1.1)],
        best_Q=0.3,
        grid_best_Q=0.25,
        trace=steps,
        termination_reason="converged",
        n_evaluations=2,
    )
    path = write_optimisation_trace_csv(result, tmp_path / "trace.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "index,phase,p_0,p_1,Q,dissipativity_margin,coercivity_norm,accepted"
    assert lines[1].startswith("0,grid,0,1,0.25,")
    assert len(lines) == 3


def test_optimisation_trace_csv_flags_rejected_steps(tmp_path):
    accepted = OptimisationStep(index=0, phase="grid", params=[0.0, 1.0], Q=0.25,
                                dissipativity_margin=0.1, coercivity_norm=1.0, accepted=True)
    rejected = OptimisationStep(index=1, phase="grid", params=[0.0, -1.0], Q=None,
                                dissipativity_margin=-0.1, coercivity_norm=1.0, accepted=False)
    result = OptimisationResult(
        impedance_class={"kind": "constant_box"},
        best_params=[0.0, 1.0],
        best_impedance=[(0.0, 1.0)],
        best_Q=0.25,
        grid_best_Q=0.25,
        trace=[accepted],
        rejected=[rejected],
        termination_reason="converged",
        n_evaluations=2,
    )
    assert [step.index for step in result.steps] == [0, 1]
    lines = write_optimisation_trace_csv(result, tmp_path / "trace.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[2].startswith("1,grid,0,-1,,")
    assert lines[2].endswith(",False")
    with pytest.raises(ValueError):
        OptimisationResult(**{**result.model_dump(), "trace": [accepted, rejected], "rejected": []})


def test_json_is_sorted_and_byte_stable(tmp_path):
    data = {"b": 1.0 / 3.0, "a": [1, 2], "z": 1 + 2j}
    first = write_json(data, tmp_path / "one.json").read_bytes()
    second = write_json(dict(reversed(list(data.items()))), tmp_path / "two.json").read_bytes()
    assert first == second
    text = first.decode()
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"') < text.index('"z"')
    assert '"(1+2j)"' in text
