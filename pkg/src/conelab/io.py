"""Serialization of meshes, maps and fields, plus deterministic CSV output.

Documents are JSON.  Floats are written with ``repr``-exact decimal
expansions, so a save/load round trip reproduces every array bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import UNBOUNDED_BELOW, DomainMesh
from .energy import MapState
from .targets import target_from_dict

__all__ = [
    "MESH_FORMAT_VERSION",
    "mesh_to_dict",
    "mesh_from_dict",
    "save_mesh",
    "load_mesh",
    "map_to_dict",
    "map_from_dict",
    "save_map",
    "load_map",
    "write_csv",
    "energy_trace_rows",
    "density_rows",
    "hopf_lax_rows",
]

MESH_FORMAT_VERSION = 1


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def mesh_to_dict(mesh: DomainMesh) -> dict:
    doc = {
        "version": MESH_FORMAT_VERSION,
        "dimension": int(mesh.dimension),
        "curvature_bound": mesh.curvature_bound if mesh.curvature_bound == UNBOUNDED_BELOW else float(mesh.curvature_bound),
        "vertices": [[float(r), float(p)] for r, p in zip(mesh.r, mesh.phi)],
        "edges": [[int(i), int(j), float(w), float(ln)] for (i, j), w, ln in zip(mesh.edges, mesh.weights, mesh.lengths)],
        "measures": _floats(mesh.measure),
        "boundary": [int(v) for v in np.flatnonzero(mesh.boundary)],
        "spacing": float(mesh.spacing),
        "total_angle": None if mesh.total_angle is None else float(mesh.total_angle),
        "meta": mesh.meta,
    }
    if mesh.triangles is not None:
        doc["triangles"] = mesh.triangles.tolist()
    return doc


def mesh_from_dict(doc: dict) -> DomainMesh:
    if doc.get("version") != MESH_FORMAT_VERSION:
        raise ValueError(f"unsupported mesh format version {doc.get('version')!r}")
    verts = np.array(doc["vertices"], dtype=float).reshape(-1, 2)
    edges = np.array(doc["edges"], dtype=float).reshape(-1, 4)
    n = len(verts)
    boundary = np.zeros(n, dtype=bool)
    boundary[np.asarray(doc["boundary"], dtype=np.int64)] = True
    cb = doc["curvature_bound"]
    return DomainMesh(
        r=verts[:, 0], phi=verts[:, 1],
        edges=edges[:, :2].astype(np.int64), weights=edges[:, 2], lengths=edges[:, 3],
        measure=np.array(doc["measures"], dtype=float), boundary=boundary,
        curvature_bound=cb if cb == UNBOUNDED_BELOW else float(cb),
        dimension=int(doc["dimension"]), total_angle=doc.get("total_angle"),
        triangles=doc.get("triangles"), spacing=doc.get("spacing"), meta=dict(doc.get("meta", {})),
    )


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=None, separators=(",", ":"), allow_nan=False) + "\n")


def save_mesh(mesh: DomainMesh, path) -> None:
    _write_json(path, mesh_to_dict(mesh))


def load_mesh(path) -> DomainMesh:
    return mesh_from_dict(json.loads(Path(path).read_text()))


def map_to_dict(state: MapState) -> dict:
    return {
        "version": MESH_FORMAT_VERSION,
        "target": state.target.to_dict(),
        "values": state.values.tolist(),
    }


def map_from_dict(doc: dict, mesh: DomainMesh) -> MapState:
    return MapState(mesh, target_from_dict(doc["target"]), np.array(doc["values"], dtype=float))


def save_map(state: MapState, path) -> None:
    _write_json(path, map_to_dict(state))


def load_map(path, mesh: DomainMesh) -> MapState:
    return map_from_dict(json.loads(Path(path).read_text()), mesh)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write a CSV with a fixed header and ``repr`` floats; returns the row count."""
    count = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError("row length does not match header")
            wr.writerow([_cell(x) for x in row])
            count += 1
    return count


def energy_trace_rows(report) -> list:
    """Rows ``(iteration, energy, displacement)``; iteration 0 is the initial state."""
    rows = [(0, report.energy_trace[0], float("nan"))]
    for it, (e, d) in enumerate(zip(report.energy_trace[1:], report.displacement_trace), start=1):
        rows.append((it, e, d))
    return rows


def density_rows(mesh: DomainMesh, fld) -> list:
    """Rows ``(vertex_index, r, phi, density, tag)``."""
    idx = np.arange(mesh.n_vertices) if fld.vertices is None else fld.vertices
    return [(int(v), mesh.r[v], mesh.phi[v], d, fld.tag) for v, d in zip(idx, fld.density)]


def hopf_lax_rows(fld) -> list:
    """Rows ``(vertex, lambda, f, L, argmin_size)`` in vertex-major order."""
    sizes = fld.argmin_size()
    rows = []
    for i, v in enumerate(fld.vertices):
        for j, lam in enumerate(fld.lambda_grid):
            rows.append((int(v), lam, fld.values[i, j], fld.L[i, j], int(sizes[i, j])))
    return rows
