"""Nodal level sets, cell classification and the cut subtriangulation.

Cut geometry is computed in a generic scalar type: passing plain floats gives
the production geometry, passing seeded duals propagates derivatives of every
intersection vertex, sub-cell Jacobian and interface normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dual import gabs, ghypot, primal
from .errors import AssumptionViolation, NotCutError
from .mesh import Mesh2D

IN, OUT, CUT = 0, 1, 2

STATE_NAMES = {IN: "IN", OUT: "OUT", CUT: "CUT"}

SNAP_TOL = 1e-10


class LevelSet:
    """P1 level-set field given by one nodal value per mesh vertex.

    Values within ``snap_tol * max|phi|`` of zero are snapped to
    ``sign(phi) * snap_tol * max|phi|`` at construction (exact zeros snap to
    the negative side) so that the interface never passes through a node.
    """

    def __init__(self, mesh: Mesh2D, values, snap_tol: float = SNAP_TOL):
        values = np.array(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(
                f"expected {mesh.n_vertices} nodal values, got {values.shape}")
        scale = float(np.max(np.abs(values)))
        if scale == 0.0:
            raise ValueError("level set is identically zero")
        thr = snap_tol * scale
        small = np.abs(values) < thr
        if np.any(small):
            signs = np.where(values[small] > 0.0, 1.0, -1.0)  # zero snaps negative
            values[small] = signs * thr
        self.mesh = mesh
        self.values = values
        self.scale = scale
        self.snapped_nodes = np.flatnonzero(small)
        self.values.setflags(write=False)

    @classmethod
    def from_function(cls, mesh: Mesh2D, fn, snap_tol: float = SNAP_TOL):
        vals = np.array([fn(x, y) for x, y in mesh.vertices])
        return cls(mesh, vals, snap_tol=snap_tol)

    def __len__(self):
        return len(self.values)


def perturb(phi: LevelSet, node: int, t: float) -> LevelSet:
    """Copy of ``phi`` with ``values[node] += t`` (hat-function perturbation)."""
    if not 0 <= node < len(phi):
        raise IndexError(f"node {node} out of range")
    values = phi.values.copy()
    values[node] += t
    if values[node] == 0.0:
        raise AssumptionViolation(
            f"perturbation puts node {node} exactly on the interface")
    return LevelSet(phi.mesh, values)


def classify_cells(mesh: Mesh2D, values) -> np.ndarray:
    """Per-cell IN/OUT/CUT states from the signs of the nodal values."""
    values = np.asarray(values, dtype=float)
    zero = np.flatnonzero(values == 0.0)
    if len(zero):
        raise AssumptionViolation(
            f"level set vanishes exactly at node {int(zero[0])}")
    pos = values[mesh.triangles] > 0.0
    npos = pos.sum(axis=1)
    states = np.full(mesh.n_cells, CUT, dtype=np.int8)
    states[npos == 0] = IN
    states[npos == 3] = OUT
    return states


def edge_crossing(qa, qb, fa, fb):
    """Interface point on the segment qa-qb from level-set values fa, fb.

    Evaluated in the generic scalar of fa/fb so dual parts propagate. The
    caller is responsible for a canonical argument order (the formula is
    symmetric algebraically but not bitwise).
    """
    ra = gabs(fa)
    t = ra / (ra + gabs(fb))
    return (qa[0] + t * (qb[0] - qa[0]), qa[1] + t * (qb[1] - qa[1]))


@dataclass
class CutCellGeom:
    """Cut geometry of one background triangle, in a generic scalar."""

    cell: int
    corner_ids: tuple          # global vertex ids (a, b, c), CCW
    corners: tuple             # three (x, y) float pairs
    values: tuple              # three generic scalars
    lone: int                  # local index of the single-sign vertex
    subs: list                 # [(p0, p1, p2, phase)] tiling the parent
    iface: tuple               # (p_on_edge(lone,o1), p_on_edge(lone,o2))
    grad: tuple                # P1 gradient of phi on the cell (generic)
    normal: tuple              # outward unit normal grad/|grad| (generic)
    grad_norm: object          # |grad| (generic)

    def sub_area(self, phase):
        tot = 0.0
        for p0, p1, p2, ph in self.subs:
            if ph == phase:
                tot = tot + _tri_area(p0, p1, p2)
        return tot

    def iface_length(self):
        p, q = self.iface
        return ghypot(q[0] - p[0], q[1] - p[1])


def _tri_area(p0, p1, p2):
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1])
                  - (p2[0] - p0[0]) * (p1[1] - p0[1]))


def cut_triangle(corners, values, cell=-1, corner_ids=(0, 1, 2),
                 crossing=None) -> CutCellGeom:
    """Split a CCW triangle with mixed-sign values into sub-simplices.

    ``crossing(local_i, local_j)`` may override intersection-point
    construction (used to share points between neighbouring cells); the
    default computes them in the local corner order.
    """
    sv = [primal(v) for v in values]
    if any(v == 0.0 for v in sv):
        raise AssumptionViolation("cut_triangle: zero nodal value")
    neg = [i for i in range(3) if sv[i] < 0.0]
    if len(neg) == 0 or len(neg) == 3:
        raise NotCutError("all values have the same sign")
    lone = neg[0] if len(neg) == 1 else [i for i in range(3) if sv[i] > 0.0][0]
    o1, o2 = (lone + 1) % 3, (lone + 2) % 3

    if crossing is None:
        def crossing(i, j):
            return edge_crossing(corners[i], corners[j], values[i], values[j])

    v1 = crossing(lone, o1)
    v2 = crossing(lone, o2)

    lone_phase = IN if sv[lone] < 0.0 else OUT
    other_phase = OUT if lone_phase == IN else IN
    subs = [
        (corners[lone], v1, v2, lone_phase),
        (v1, corners[o1], corners[o2], other_phase),
        (v1, corners[o2], v2, other_phase),
    ]

    # P1 gradient from fixed corners and generic values
    (x0, y0), (x1, y1), (x2, y2) = corners
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    d1 = values[1] - values[0]
    d2 = values[2] - values[0]
    gx = (d1 * (y2 - y0) - d2 * (y1 - y0)) / det
    gy = (d2 * (x1 - x0) - d1 * (x2 - x0)) / det
    gnorm = ghypot(gx, gy)
    normal = (gx / gnorm, gy / gnorm)

    # orient the stored segment so rotating its direction by -90 degrees
    # agrees with the outward normal
    tx, ty = primal(v2[0]) - primal(v1[0]), primal(v2[1]) - primal(v1[1])
    if ty * primal(gx) - tx * primal(gy) < 0.0:
        v1, v2 = v2, v1
    return CutCellGeom(cell, tuple(corner_ids), tuple(corners), tuple(values),
                       lone, subs, (v1, v2), (gx, gy), normal, gnorm)


@dataclass
class CutTopology:
    """Cell states plus the cut geometry of every CUT cell."""

    mesh: Mesh2D
    states: np.ndarray                 # (n_cells,) int8
    cut_cells: dict                    # cell id -> CutCellGeom
    edge_crossings: dict = field(repr=False, default_factory=dict)

    @property
    def in_cells(self):
        return np.flatnonzero(self.states == IN)

    @property
    def out_cells(self):
        return np.flatnonzero(self.states == OUT)

    @property
    def band_nodes(self):
        """Vertices that belong to at least one CUT cell, sorted."""
        ids = set()
        for k in self.cut_cells:
            ids.update(int(n) for n in self.mesh.triangles[k])
        return np.array(sorted(ids), dtype=np.int64)

    def node_support(self):
        """node id -> sorted list of CUT cells containing it."""
        sup = {}
        for k in sorted(self.cut_cells):
            for n in self.mesh.triangles[k]:
                sup.setdefault(int(n), []).append(k)
        return sup

    def measure(self, phase):
        """Area of the IN or OUT phase (generic if built from duals)."""
        uncut = float(self.mesh.areas[self.states == phase].sum())
        tot = uncut
        for k in sorted(self.cut_cells):
            tot = tot + self.cut_cells[k].sub_area(phase)
        return tot

    def in_area(self):
        return self.measure(IN)

    def out_area(self):
        return self.measure(OUT)

    def interface_length(self):
        tot = 0.0
        for k in sorted(self.cut_cells):
            tot = tot + self.cut_cells[k].iface_length()
        return tot


def cut_cell_geometry(mesh: Mesh2D, cell: int, values3) -> CutCellGeom:
    """Cut one background cell; intersection points use the global edge order.

    Computing each crossing with the lower-indexed endpoint first makes the
    point bitwise identical from both incident cells, so a local rebuild (for
    one seeded node) reproduces the global construction exactly.
    """
    ids = tuple(int(n) for n in mesh.triangles[cell])
    corners = tuple((float(x), float(y)) for x, y in mesh.vertices[list(ids)])

    def crossing(li, lj):
        gi, gj = ids[li], ids[lj]
        if gi < gj:
            return edge_crossing(corners[li], corners[lj],
                                 values3[li], values3[lj])
        return edge_crossing(corners[lj], corners[li],
                             values3[lj], values3[li])

    return cut_triangle(corners, values3, cell=cell, corner_ids=ids,
                        crossing=crossing)


def build_cut(mesh: Mesh2D, phi) -> CutTopology:
    """Classify all cells and cut the CUT ones.

    ``phi`` is a LevelSet, an array of floats, or a sequence of dual scalars
    (one per vertex). Deterministic for fixed input.
    """
    if isinstance(phi, LevelSet):
        values = phi.values
    else:
        values = phi
    prim = np.array([primal(v) for v in values], dtype=float)
    states = classify_cells(mesh, prim)

    cut_cells = {}
    crossings = {}
    for k in np.flatnonzero(states == CUT):
        k = int(k)
        vals3 = [values[int(n)] for n in mesh.triangles[k]]
        geom = cut_cell_geometry(mesh, k, vals3)
        cut_cells[k] = geom
        ids = geom.corner_ids
        lone, o1, o2 = geom.lone, (geom.lone + 1) % 3, (geom.lone + 2) % 3
        for other, pt in ((o1, geom.subs[0][1]), (o2, geom.subs[0][2])):
            i, j = ids[lone], ids[other]
            key = (i, j) if i < j else (j, i)
            crossings.setdefault(key, pt)
    return CutTopology(mesh, states, cut_cells, crossings)


@dataclass
class AssumptionReport:
    """Result of probing the cut-stability assumptions. Informational only."""

    near_zero_nodes: np.ndarray
    unstable_cells: np.ndarray
    tol: float
    t_probe: float

    @property
    def ok(self):
        return len(self.near_zero_nodes) == 0 and len(self.unstable_cells) == 0

    def summary(self):
        return (f"near-zero nodes: {list(self.near_zero_nodes)}; "
                f"cells flipping under +-{self.t_probe:g}: "
                f"{list(self.unstable_cells)}")


def check_assumptions(mesh: Mesh2D, phi: LevelSet, t_probe: float,
                      tol: float = 1e-10) -> AssumptionReport:
    """Report nodes too close to the interface and cells whose cut status
    flips when any incident nodal value is perturbed by +-t_probe."""
    values = phi.values
    scale = phi.scale
    near = np.flatnonzero(np.abs(values) <= tol * scale)

    tri_vals = values[mesh.triangles]
    base = (tri_vals > 0.0).sum(axis=1)
    base_state = np.where(base == 0, IN, np.where(base == 3, OUT, CUT))
    unstable = np.zeros(mesh.n_cells, dtype=bool)
    for corner in range(3):
        for s in (t_probe, -t_probe):
            pert = tri_vals.copy()
            pert[:, corner] += s
            n = (pert > 0.0).sum(axis=1)
            st = np.where(n == 0, IN, np.where(n == 3, OUT, CUT))
            unstable |= st != base_state
    return AssumptionReport(near, np.flatnonzero(unstable), tol, t_probe)
