"""Legacy VTK and CSV output."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import GridSpec


def export_vtk(values, spec: GridSpec, path, name: str = "temperature") -> Path:
    """ASCII legacy VTK structured points; scalars are written with 17
    significant digits so reading back reproduces the doubles exactly."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (spec.n_vertices,):
        raise ValueError(f"field has {v.size} values, grid has {spec.n_vertices} vertices")
    path = Path(path)
    nx, ny, nz = spec.vertex_dims
    lines = ["# vtk DataFile Version 3.0", f"matfree {name}", "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {nx} {ny} {nz}",
             "ORIGIN " + " ".join(repr(float(c)) for c in spec.bounds_min),
             "SPACING " + " ".join(repr(float(c)) for c in spec.spacing),
             f"POINT_DATA {spec.n_vertices}",
             f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    body = "\n".join(" ".join(f"{x:.17g}" for x in row) for row in v.reshape(-1, nx))
    try:
        path.write_text("\n".join(lines) + "\n" + body + "\n", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def read_vtk(path):
    """Returns ``(dims, origin, spacing, values)`` from a file written by :func:`export_vtk`."""
    path = Path(path)
    try:
        tokens = path.read_text(encoding="ascii").split("\n")
    except OSError as exc:
        raise OSError(f"cannot read VTK file {path}: {exc}") from exc
    head = {}
    i = 0
    while i < len(tokens) and not tokens[i].startswith("LOOKUP_TABLE"):
        parts = tokens[i].split()
        if parts:
            head[parts[0]] = parts[1:]
        i += 1
    dims = tuple(int(c) for c in head["DIMENSIONS"])
    origin = tuple(float(c) for c in head["ORIGIN"])
    spacing = tuple(float(c) for c in head["SPACING"])
    n = int(head["POINT_DATA"][0])
    values = np.array(" ".join(tokens[i + 1:]).split(), dtype=np.float64)
    if values.size != n:
        raise ValueError(f"{path}: expected {n} scalars, found {values.size}")
    return dims, origin, spacing, values


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_matrix_csv(path, A) -> Path:
    """Sparse matrix as (row, col, value) triplets."""
    coo = A.tocoo()
    rows = zip(coo.row.tolist(), coo.col.tolist(), (repr(float(v)) for v in coo.data))
    return write_csv(path, ["row", "col", "value"], rows)
