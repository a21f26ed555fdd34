"""Legacy ASCII VTK export (unstructured grids) and CSV helpers.

Writers are timestamp-free so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .dual import primal
from .levelset import IN

VTK_TRIANGLE = 5
VTK_LINE = 3


def _write_header(fh, title):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\n")
    fh.write("DATASET UNSTRUCTURED_GRID\n")


def _write_points(fh, points):
    fh.write(f"POINTS {len(points)} double\n")
    for x, y in points:
        fh.write(f"{x:.17g} {y:.17g} 0\n")


def _write_cells(fh, cells, cell_type):
    total = sum(len(c) + 1 for c in cells)
    fh.write(f"CELLS {len(cells)} {total}\n")
    for c in cells:
        fh.write(" ".join(str(int(i)) for i in (len(c), *c)) + "\n")
    fh.write(f"CELL_TYPES {len(cells)}\n")
    for _ in cells:
        fh.write(f"{cell_type}\n")


def _write_data(fh, kind, n, fields):
    if not fields:
        return
    fh.write(f"{kind} {n}\n")
    for name, values in fields.items():
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in values:
            fh.write(f"{float(v):.17g}\n")


def write_mesh_vtk(path, mesh, point_data=None, cell_data=None,
                   title="cutform mesh"):
    """Background mesh with optional nodal and per-cell scalar fields."""
    with open(path, "w") as fh:
        _write_header(fh, title)
        _write_points(fh, mesh.vertices)
        _write_cells(fh, mesh.triangles, VTK_TRIANGLE)
        _write_data(fh, "POINT_DATA", mesh.n_vertices, point_data or {})
        _write_data(fh, "CELL_DATA", mesh.n_cells, cell_data or {})


def write_levelset_vtk(path, mesh, phi, extra_point_data=None):
    data = {"phi": phi.values}
    data.update(extra_point_data or {})
    write_mesh_vtk(path, mesh, point_data=data, title="level set")


def write_cut_vtk(path, mesh, cut, cell_fields=None,
                  title="cut subtriangulation"):
    """Sub-triangulation of the cut mesh with phase and parent-cell fields.

    ``cell_fields`` maps a name to a callable (background_cell, phase) ->
    value, evaluated per sub-triangle (and per whole uncut cell).
    """
    points, cells, phase, parent = [], [], [], []

    def add_tri(p0, p1, p2, ph, cell):
        base = len(points)
        points.extend([(primal(p0[0]), primal(p0[1])),
                       (primal(p1[0]), primal(p1[1])),
                       (primal(p2[0]), primal(p2[1]))])
        cells.append((base, base + 1, base + 2))
        phase.append(ph)
        parent.append(cell)

    for k in range(mesh.n_cells):
        if k in cut.cut_cells:
            for p0, p1, p2, ph in cut.cut_cells[k].subs:
                add_tri(p0, p1, p2, ph, k)
        else:
            p = mesh.vertices[mesh.triangles[k]]
            add_tri(p[0], p[1], p[2], int(cut.states[k]), k)

    data = {"phase": phase, "parent_cell": parent}
    for name, fn in (cell_fields or {}).items():
        data[name] = [fn(c, ph) for c, ph in zip(parent, phase)]
    with open(path, "w") as fh:
        _write_header(fh, title)
        _write_points(fh, points)
        _write_cells(fh, cells, VTK_TRIANGLE)
        _write_data(fh, "CELL_DATA", len(cells), data)


def write_interface_vtk(path, cut, title="interface"):
    """Interface segments as VTK line cells."""
    points, lines = [], []
    for k in sorted(cut.cut_cells):
        p0, p1 = cut.cut_cells[k].iface
        base = len(points)
        points.append((primal(p0[0]), primal(p0[1])))
        points.append((primal(p1[0]), primal(p1[1])))
        lines.append((base, base + 1))
    with open(path, "w") as fh:
        _write_header(fh, title)
        _write_points(fh, points)
        _write_cells(fh, lines, VTK_LINE)


def write_graph_colors_vtk(path, mesh, cut, graph, colors,
                           title="volume colors"):
    """Per-sub-cell colour field on the cut subtriangulation."""
    by_cell = {}
    for v in range(graph.n):
        by_cell.setdefault(int(graph.cell_of[v]), []).append(v)

    # order of vertices per cut cell matches the subs order used in
    # build_cut_graph; uncut cells have a single vertex
    points, cells, data = [], [], []
    for k in range(mesh.n_cells):
        vs = by_cell[k]
        if k in cut.cut_cells:
            subs = cut.cut_cells[k].subs
            for (p0, p1, p2, ph), v in zip(subs, vs):
                base = len(points)
                points.extend([(primal(p0[0]), primal(p0[1])),
                               (primal(p1[0]), primal(p1[1])),
                               (primal(p2[0]), primal(p2[1]))])
                cells.append((base, base + 1, base + 2))
                data.append(int(colors[v]))
        else:
            p = mesh.vertices[mesh.triangles[k]]
            base = len(points)
            points.extend([tuple(p[0]), tuple(p[1]), tuple(p[2])])
            cells.append((base, base + 1, base + 2))
            data.append(int(colors[vs[0]]))
    with open(path, "w") as fh:
        _write_header(fh, title)
        _write_points(fh, points)
        _write_cells(fh, cells, VTK_TRIANGLE)
        _write_data(fh, "CELL_DATA", len(cells), {"color": data})


_ = (np, IN)
