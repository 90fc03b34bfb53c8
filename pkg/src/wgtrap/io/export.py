"""Writers for JSON results, CSV tables and legacy VTK fields.

Every float is written with 17 significant digits, which makes results
re-read bit-identically.  Complex numbers become ``{"re": .., "im": ..}``.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from ..fem import FieldSolution

VTK_TRIANGLE = 5
VTK_QUADRATIC_TRIANGLE = 22


def fmt_float(x: float) -> str:
    return "%.17g" % x


def to_plain(obj):
    """Recursively convert numpy / complex / tuple values to JSON-ready ones."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON text with ``%.17g`` floats and sorted keys (deterministic)."""
    return _encode(to_plain(obj), indent, 0) + "\n"


def _encode(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v[k], indent, level + 1)}" for k in sorted(v)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, list):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list)) for x in v):
            return "[" + ", ".join(_encode(x, indent, level + 1) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _encode(x, indent, level + 1) for x in v) + "\n" + end + "]"
    if isinstance(v, float):
        return fmt_float(v) if math.isfinite(v) else "null"
    return json.dumps(v)


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path: str, header_line: Optional[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with an optional ``#`` comment line; floats as ``%.17g``."""
    with open(path, "w") as fh:
        if header_line:
            fh.write(f"# {header_line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt_float(x) if isinstance(x, (float, np.floating)) else str(x) for x in row) + "\n")


def _vtk_cells(cells: np.ndarray) -> int:
    return VTK_QUADRATIC_TRIANGLE if cells.shape[1] == 6 else VTK_TRIANGLE


def write_vtk(path: str, points: np.ndarray, cells: np.ndarray, values: Optional[np.ndarray] = None,
              title: str = "wgtrap field") -> None:
    """Legacy ASCII unstructured grid of (quadratic) triangles.

    ``values`` (complex, one per point) is written as the point scalars
    ``re_u``, ``im_u`` and ``abs_u``.
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=int)
    ctype = _vtk_cells(cells)
    npc = cells.shape[1]
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [f"{fmt_float(x)} {fmt_float(y)} 0" for x, y in points]
    lines.append(f"CELLS {len(cells)} {len(cells) * (npc + 1)}")
    lines += [f"{npc} " + " ".join(str(i) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    if values is not None:
        values = np.asarray(values, dtype=complex)
        lines.append(f"POINT_DATA {len(points)}")
        for name, arr in (("re_u", values.real), ("im_u", values.imag), ("abs_u", np.abs(values))):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [fmt_float(v) for v in arr]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def field_vtk(path: str, fld: FieldSolution, title: str = "wgtrap field") -> None:
    write_vtk(path, fld.dof_map.coords, fld.dof_map.cell_dofs, fld.values, title)


def mirrored_field_vtk(path: str, fld: FieldSolution, wall_x: float, title: str = "wgtrap mirrored field") -> None:
    """Field and its mirror image across the wall ``x = wall_x``.

    The half-guide solution extended evenly across its Neumann end wall,
    i.e. a field on the symmetric guide with two branches.  Nodes on the
    wall are shared.
    """
    pts = fld.dof_map.coords
    cells = fld.dof_map.cell_dofs
    on_wall = np.abs(pts[:, 0] - wall_x) <= 1e-9
    mirror_idx = np.full(len(pts), -1)
    off = np.flatnonzero(~on_wall)
    mirror_idx[off] = len(pts) + np.arange(len(off))
    mirror_idx[on_wall] = np.flatnonzero(on_wall)
    new_pts = np.column_stack([2.0 * wall_x - pts[off, 0], pts[off, 1]])
    # reflection reverses orientation: swap local vertices 1 and 2 (and the matching midpoints)
    perm = [0, 2, 1, 5, 4, 3] if cells.shape[1] == 6 else [0, 2, 1]
    new_cells = mirror_idx[cells[:, perm]]
    write_vtk(
        path,
        np.vstack([pts, new_pts]),
        np.vstack([cells, new_cells]),
        np.concatenate([fld.values, fld.values[off]]),
        title,
    )


def read_vtk_points(path: str):
    """Points, cells and complex point values of a file written by :func:`write_vtk`."""
    with open(path) as fh:
        toks = fh.read().split("\n")
    i = toks.index(next(t for t in toks if t.startswith("POINTS")))
    n = int(toks[i].split()[1])
    pts = np.array([[float(v) for v in t.split()[:2]] for t in toks[i + 1 : i + 1 + n]])
    j = i + 1 + n
    nc = int(toks[j].split()[1])
    cells = np.array([[int(v) for v in t.split()[1:]] for t in toks[j + 1 : j + 1 + nc]])
    vals = {}
    for name in ("re_u", "im_u"):
        key = f"SCALARS {name} double 1"
        if key in toks:
            s = toks.index(key) + 2
            vals[name] = np.array([float(v) for v in toks[s : s + n]])
    values = vals["re_u"] + 1j * vals["im_u"] if len(vals) == 2 else None
    return pts, cells, values
