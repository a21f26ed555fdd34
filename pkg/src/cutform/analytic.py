"""Closed-form directional derivatives of volume, boundary and flux
functionals under nodal level-set perturbations.

These serve as machine-precision oracles for the dual-number gradients: both
routes differentiate the same piecewise-linear cut geometry, so they agree to
rounding whenever the quadrature is exact for the integrands involved.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCrossingError, DegenerateGradientError
from .functionals import DEFAULT_RULE
from .levelset import CUT, LevelSet, build_cut
from .mesh import Mesh2D


class FluxBoundaryAdvisory(UserWarning):
    """Flux derivative requested while the interface touches the box
    boundary; the closed-form result is advisory there."""


@dataclass
class CrossingSide:
    """Per-cell data at an interface/facet crossing."""

    cell: int
    normal: tuple       # interface normal within the cell
    conormal: tuple     # unit vector along the interface, outward from cell


@dataclass
class FacetCrossing:
    """Point where the interface crosses a mesh facet.

    ``n_s`` is the in-facet unit vector pointing out of the negative phase;
    ``dphi_s`` is |d phi / d n_s|, the slope of phi restricted to the facet.
    Interior crossings carry two sides, box-boundary crossings one.
    """

    point: tuple
    facet: tuple            # (i, j) global vertex pair, i < j
    n_s: tuple
    dphi_s: float
    hats: tuple             # hat values (w_i, w_j) at the point
    sides: list
    on_boundary: bool


def _barycentric(corners, p):
    (x0, y0), (x1, y1), (x2, y2) = corners
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((p[0] - x0) * (y2 - y0) - (p[1] - y0) * (x2 - x0)) / det
    l2 = ((p[1] - y0) * (x1 - x0) - (p[0] - x0) * (y1 - y0)) / det
    return (1.0 - l1 - l2, l1, l2)


def _interface_kernel(fvals_fn, mesh, cut, rule):
    """Assemble entries -sum_q w_q * fvals_fn(x_q, geom) * hat_m(x_q) / |grad|."""
    grad = np.zeros(mesh.n_vertices)
    for k in sorted(cut.cut_cells):
        geom = cut.cut_cells[k]
        gn = float(geom.grad_norm)
        if gn < 1e-14:
            raise DegenerateGradientError(f"vanishing gradient on cut cell {k}")
        p0, p1 = geom.iface
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        length = float(np.hypot(dx, dy))
        ids = geom.corner_ids
        for xi, w in zip(rule.seg_x, rule.seg_w):
            x = (p0[0] + xi * dx, p0[1] + xi * dy)
            bar = _barycentric(geom.corners, x)
            c = w * length * fvals_fn(x, geom) / gn
            for m in range(3):
                grad[ids[m]] -= c * bar[m]
    return grad


def exact_dJ1(f, mesh: Mesh2D, phi: LevelSet, rule=DEFAULT_RULE,
              cut=None) -> np.ndarray:
    """Directional derivatives of the volume integral of f over the negative
    phase: entry i is -int_Gamma f w_i / |d_n phi| ds."""
    if cut is None:
        cut = build_cut(mesh, phi)
    return _interface_kernel(lambda x, geom: f(x[0], x[1]), mesh, cut, rule)


def enumerate_crossings(mesh: Mesh2D, cut) -> list:
    """One FacetCrossing per facet intersected by the interface.

    Co-normals point along each adjacent cell's interface segment, outward
    from the cell at the crossing point (the 2D specialisation of rotating
    the interface normal by +-90 degrees with a fixed out-of-plane tangent).
    """
    # cut cells by edge key for side lookup
    cells_by_edge = {}
    for k, geom in cut.cut_cells.items():
        ids = geom.corner_ids
        lone, o1, o2 = geom.lone, (geom.lone + 1) % 3, (geom.lone + 2) % 3
        for other in (o1, o2):
            i, j = ids[lone], ids[other]
            key = (i, j) if i < j else (j, i)
            cells_by_edge.setdefault(key, []).append(k)

    values = None
    crossings = []
    for key in sorted(cut.edge_crossings):
        point = cut.edge_crossings[key]
        i, j = key
        qi, qj = mesh.vertices[i], mesh.vertices[j]
        length = float(np.hypot(*(qj - qi)))
        tangent = (qj - qi) / length

        sides = []
        for k in cells_by_edge[key]:
            geom = cut.cut_cells[k]
            p0, p1 = geom.iface
            if p0 == point:
                other_end = p1
            elif p1 == point:
                other_end = p0
            else:  # pragma: no cover - construction guarantees membership
                raise DegenerateCrossingError(
                    f"crossing {key} not an endpoint of cell {k}'s segment")
            mx, my = point[0] - other_end[0], point[1] - other_end[1]
            mn = float(np.hypot(mx, my))
            if mn < 1e-300:
                raise DegenerateCrossingError(
                    f"zero-length interface segment in cell {k}")
            sides.append(CrossingSide(k, geom.normal, (mx / mn, my / mn)))

        geom0 = cut.cut_cells[cells_by_edge[key][0]]
        local = list(geom0.corner_ids)
        fi = float(geom0.values[local.index(i)])
        fj = float(geom0.values[local.index(j)])
        slope = (fj - fi) / length
        if abs(slope) < 1e-14:
            raise DegenerateCrossingError(
                f"interface tangent to facet {key}")
        n_s = tuple(tangent if slope > 0 else -tangent)
        wi = abs(fj) / (abs(fi) + abs(fj))
        wj = abs(fi) / (abs(fi) + abs(fj))
        on_boundary = len(mesh.edge_cells[key]) == 1
        crossings.append(FacetCrossing(point, key, n_s, abs(slope),
                                       (wi, wj), sides, on_boundary))
    _ = values
    return crossings


def exact_dJ2(f, grad_f, mesh: Mesh2D, phi: LevelSet, rule=DEFAULT_RULE,
              cut=None, include_boundary_term: bool = True,
              one_sided_offset: float = 0.0) -> np.ndarray:
    """Directional derivatives of the boundary integral of f.

    Normal-derivative term over the interface plus the jump terms at interior
    facet crossings; interfaces ending on the box boundary contribute the
    single-sided facet term there (disable via ``include_boundary_term`` to
    observe the O(1) error it repairs). ``one_sided_offset`` shifts the f
    evaluation to ``point - eps*m_k`` for merely piecewise-smooth f.
    """
    if cut is None:
        cut = build_cut(mesh, phi)

    def dfdn(x, geom):
        gx, gy = grad_f(x[0], x[1])
        return gx * float(geom.normal[0]) + gy * float(geom.normal[1])

    grad = _interface_kernel(dfdn, mesh, cut, rule)

    for cr in enumerate_crossings(mesh, cut):
        if cr.on_boundary and not include_boundary_term:
            continue
        jump = np.zeros(2)
        for side in cr.sides:
            p = cr.point
            if one_sided_offset:
                p = (p[0] - one_sided_offset * side.conormal[0],
                     p[1] - one_sided_offset * side.conormal[1])
            fk = f(p[0], p[1])
            jump += fk * np.asarray(side.conormal)
        term = (cr.n_s[0] * jump[0] + cr.n_s[1] * jump[1]) / cr.dphi_s
        i, j = cr.facet
        grad[i] -= term * cr.hats[0]
        grad[j] -= term * cr.hats[1]
    return grad


def exact_dJ3(div_f, mesh: Mesh2D, phi: LevelSet, rule=DEFAULT_RULE,
              cut=None) -> np.ndarray:
    """Directional derivatives of the interface flux integral.

    Same kernel as the volume derivative with the divergence as integrand.
    Valid for closed interfaces; if the interface intersects the box boundary
    an advisory warning is attached and the result omits the (mathematically
    open) boundary contribution.
    """
    if cut is None:
        cut = build_cut(mesh, phi)
    boundary_keys = [key for key in cut.edge_crossings
                     if len(mesh.edge_cells[key]) == 1]
    if boundary_keys:
        warnings.warn(
            "interface touches the box boundary; the flux derivative there "
            "is advisory", FluxBoundaryAdvisory, stacklevel=2)
    return _interface_kernel(lambda x, geom: div_f(x[0], x[1]),
                             mesh, cut, rule)


def has_boundary_crossings(mesh: Mesh2D, cut) -> bool:
    return any(len(mesh.edge_cells[key]) == 1 for key in cut.edge_crossings)


_ = (CUT,)
