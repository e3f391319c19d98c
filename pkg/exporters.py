"""
Output files
============
Everything a run writes: legacy VTK meshes, CSV tables through pandas and
JSON reports. Floats are written with 17 significant digits and nothing
run-dependent (timestamps, ids) enters a file, so identical runs give
identical bytes.
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from boundary_operators import BoundaryOperatorSet
from mesh import TransmissionMesh
from models import OptimisationResult
from runlog import get_logger
from scattering import FarField

FLOAT_FORMAT = "%.17g"

logger = get_logger("exporters")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _ensure_parent(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# VTK


def write_mesh_vtk(
    mesh: TransmissionMesh,
    path: Union[str, Path],
    point_data: Optional[Mapping[str, np.ndarray]] = None,
) -> Path:
    """
    Legacy ASCII unstructured grid. Cell data carries the region tag; complex
    point data is split into <name>_re, <name>_im and <name>_abs.
    """
    path = _ensure_parent(path)
    n_tri = len(mesh.triangles)
    lines = [
        "# vtk DataFile Version 3.0",
        f"transmission mesh {mesh.mesh_id}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {n_tri} {4 * n_tri}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {n_tri}")
    lines += ["5"] * n_tri
    lines += [f"CELL_DATA {n_tri}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(tag)) for tag in mesh.regions]

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name in sorted(point_data):
            values = np.asarray(point_data[name])
            if values.shape != (mesh.n_nodes,):
                raise ValueError(f"point data {name!r} has shape {values.shape}, mesh has {mesh.n_nodes} nodes")
            parts = {"re": values.real, "im": values.imag, "abs": np.abs(values)} if np.iscomplexobj(values) else {"": values}
            for suffix, column in parts.items():
                label = f"{name}_{suffix}" if suffix else name
                lines += [f"SCALARS {label} double 1", "LOOKUP_TABLE default"]
                lines += [_fmt(v) for v in column]

    path.write_text("\n".join(lines) + "\n")
    logger.log(f"mesh written to {path} ({mesh.n_nodes} nodes, {n_tri} triangles)")
    return path


def write_field_vtk(mesh: TransmissionMesh, values_by_name: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
    return write_mesh_vtk(mesh, path, point_data=values_by_name)


# CSV


def write_far_field_csv(ff: FarField, path: Union[str, Path]) -> Path:
    """theta,re,im,abs2 on the uniform angle grid"""
    path = _ensure_parent(path)
    ff.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.log(f"far field ({ff.route.value}, {ff.n} angles) written to {path}")
    return path


def operator_frame(matrix: np.ndarray) -> pd.DataFrame:
    """One row per matrix row, columns re_0,im_0,re_1,im_1,..."""
    matrix = np.asarray(matrix, dtype=complex)
    n_cols = matrix.shape[1]
    interleaved = np.empty((matrix.shape[0], 2 * n_cols))
    interleaved[:, 0::2] = matrix.real
    interleaved[:, 1::2] = matrix.imag
    columns = [f"{part}_{j}" for j in range(n_cols) for part in ("re", "im")]
    return pd.DataFrame(interleaved, columns=columns)


def read_operator_csv(path: Union[str, Path]) -> np.ndarray:
    values = pd.read_csv(path).to_numpy(dtype=float)
    return values[:, 0::2] + 1j * values[:, 1::2]


def write_operator_csvs(ops: BoundaryOperatorSet, directory: Union[str, Path]) -> Dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = {}
    for name in ("K", "Kstar", "V", "W"):
        path = directory / f"{name}.csv"
        operator_frame(getattr(ops, name)).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        written[name] = path
    logger.log(f"operators K, Kstar, V, W ({ops.n} x {ops.n}) written to {directory}")
    return written


def write_optimisation_trace_csv(result: OptimisationResult, path: Union[str, Path]) -> Path:
    path = _ensure_parent(path)
    n_params = len(result.best_params)
    rows = []
    for step in result.steps:
        row = {"index": step.index, "phase": step.phase}
        row.update({f"p_{i}": value for i, value in enumerate(step.params)})
        row.update({
            "Q": step.Q,
            "dissipativity_margin": step.dissipativity_margin,
            "coercivity_norm": step.coercivity_norm,
            "accepted": step.accepted,
        })
        rows.append(row)
    columns = ["index", "phase"] + [f"p_{i}" for i in range(n_params)] + [
        "Q", "dissipativity_margin", "coercivity_norm", "accepted",
    ]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


# JSON


def write_json(data: Any, path: Union[str, Path]) -> Path:
    path = _ensure_parent(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    logger.log(f"report written to {path}")
    return path
