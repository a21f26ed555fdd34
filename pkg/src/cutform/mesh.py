"""Conforming 2D triangle background meshes and their facet skeletons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError


class Mesh2D:
    """Immutable triangle mesh: vertices, CCW triangles, tagged boundary.

    Construction validates positive signed areas, vertex index ranges and
    manifoldness (interior edges shared by exactly two cells). Downstream
    modules hold read-only references; arrays are write-protected.
    """

    def __init__(self, vertices, triangles, boundary_tags=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be (n, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (m, 3)")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle vertex index out of range")

        p = self.vertices[self.triangles]
        self.signed_areas = 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(self.signed_areas <= 0):
            bad = int(np.argmin(self.signed_areas))
            raise ValueError(f"triangle {bad} has non-positive area")
        self.areas = self.signed_areas.copy()
        self.centroids = p.mean(axis=1)

        # edge -> incident cells, edges keyed by sorted vertex pair
        edge_cells: dict[tuple[int, int], list[int]] = {}
        for k, tri in enumerate(self.triangles):
            a, b, c = (int(tri[0]), int(tri[1]), int(tri[2]))
            for i, j in ((a, b), (b, c), (c, a)):
                key = (i, j) if i < j else (j, i)
                edge_cells.setdefault(key, []).append(k)
        for key, cells in edge_cells.items():
            if len(cells) > 2:
                raise TopologyError(f"edge {key} shared by {len(cells)} cells")
        self.edge_cells = edge_cells

        self.boundary_facets = np.array(
            sorted(k for k, cells in edge_cells.items() if len(cells) == 1),
            dtype=np.int64).reshape(-1, 2)
        bcell = []
        for i, j in self.boundary_facets:
            bcell.append(edge_cells[(int(i), int(j))][0])
        self.boundary_cells = np.asarray(bcell, dtype=np.int64)

        self.boundary_tags = {}
        if boundary_tags:
            facet_index = {(int(i), int(j)): k
                           for k, (i, j) in enumerate(self.boundary_facets)}
            for tag, pairs in boundary_tags.items():
                idx = set()
                for i, j in pairs:
                    key = (i, j) if i < j else (j, i)
                    if key not in facet_index:
                        raise ValueError(f"tag {tag!r}: {key} is not a boundary facet")
                    idx.add(facet_index[key])
                self.boundary_tags[tag] = frozenset(idx)

        # node -> incident cells
        node_cells: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for k, tri in enumerate(self.triangles):
            for n in tri:
                node_cells[int(n)].append(k)
        self.node_cells = node_cells

        self.h_max = float(max(
            np.linalg.norm(self.vertices[i] - self.vertices[j])
            for i, j in edge_cells))
        edge_arr = np.array(list(edge_cells), dtype=np.int64)
        lens = np.linalg.norm(self.vertices[edge_arr[:, 0]]
                              - self.vertices[edge_arr[:, 1]], axis=1)
        self.h_min = float(lens.min())

        for arr in (self.vertices, self.triangles, self.signed_areas,
                    self.areas, self.centroids, self.boundary_facets,
                    self.boundary_cells):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.triangles)

    def total_area(self):
        return float(self.areas.sum())

    def tagged_boundary_facets(self, *tags):
        """Indices into boundary_facets for the union of the given tags."""
        idx = set()
        for tag in tags:
            if tag not in self.boundary_tags:
                raise KeyError(f"unknown boundary tag {tag!r}")
            idx |= set(self.boundary_tags[tag])
        return np.array(sorted(idx), dtype=np.int64)

    def select_boundary_facets(self, predicate):
        """Boundary facet indices whose midpoints satisfy ``predicate(x, y)``."""
        mids = 0.5 * (self.vertices[self.boundary_facets[:, 0]]
                      + self.vertices[self.boundary_facets[:, 1]])
        return np.array([k for k, (x, y) in enumerate(mids) if predicate(x, y)],
                        dtype=np.int64)

    def tagged_boundary_nodes(self, *tags):
        facets = self.tagged_boundary_facets(*tags)
        return np.unique(self.boundary_facets[facets].ravel())


@dataclass
class FacetSkeleton:
    """Interior-facet connectivity with left/right cells and oriented normals.

    ``normals[k]`` points from ``left_cells[k]`` into ``right_cells[k]``;
    ``h_f`` is the facet length.
    """

    facets: np.ndarray          # (ni, 2) vertex pairs, sorted per row
    left_cells: np.ndarray      # (ni,)
    right_cells: np.ndarray     # (ni,)
    normals: np.ndarray         # (ni, 2) unit, left -> right
    h_f: np.ndarray             # (ni,)
    boundary_facets: np.ndarray     # (nb, 2)
    boundary_cells: np.ndarray      # (nb,)
    boundary_normals: np.ndarray    # (nb, 2) outward
    boundary_h: np.ndarray          # (nb,)
    edge_lookup: dict = field(repr=False, default_factory=dict)

    @property
    def n_interior(self):
        return len(self.facets)


def build_skeleton(mesh: Mesh2D) -> FacetSkeleton:
    """Build the interior/boundary facet skeleton of a valid mesh."""
    interior, boundary = [], []
    for key in sorted(mesh.edge_cells):
        cells = mesh.edge_cells[key]
        if len(cells) == 2:
            interior.append((key, cells))
        elif len(cells) == 1:
            boundary.append((key, cells[0]))
        else:
            raise TopologyError(f"edge {key} shared by {len(cells)} cells")

    ni = len(interior)
    facets = np.zeros((ni, 2), dtype=np.int64)
    left = np.zeros(ni, dtype=np.int64)
    right = np.zeros(ni, dtype=np.int64)
    normals = np.zeros((ni, 2))
    h_f = np.zeros(ni)
    lookup = {}
    for k, ((i, j), (ca, cb)) in enumerate(interior):
        qi, qj = mesh.vertices[i], mesh.vertices[j]
        d = qj - qi
        length = float(np.hypot(d[0], d[1]))
        n = np.array([d[1], -d[0]]) / length
        if n @ (mesh.centroids[cb] - mesh.centroids[ca]) > 0:
            lc, rc = ca, cb
        else:
            lc, rc = cb, ca
        facets[k] = (i, j)
        left[k], right[k] = lc, rc
        normals[k] = n
        h_f[k] = length
        lookup[(i, j)] = ("interior", k)

    nb = len(boundary)
    bfacets = np.zeros((nb, 2), dtype=np.int64)
    bcells = np.zeros(nb, dtype=np.int64)
    bnormals = np.zeros((nb, 2))
    bh = np.zeros(nb)
    for k, ((i, j), c) in enumerate(boundary):
        qi, qj = mesh.vertices[i], mesh.vertices[j]
        d = qj - qi
        length = float(np.hypot(d[0], d[1]))
        n = np.array([d[1], -d[0]]) / length
        if n @ (mesh.centroids[c] - 0.5 * (qi + qj)) > 0:
            n = -n
        bfacets[k] = (i, j)
        bcells[k] = c
        bnormals[k] = n
        bh[k] = length
        lookup[(i, j)] = ("boundary", k)

    return FacetSkeleton(facets, left, right, normals, h_f,
                         bfacets, bcells, bnormals, bh, lookup)


def build_structured_mesh(nx: int, ny: int,
                          bbox=((0.0, 1.0), (0.0, 1.0))) -> Mesh2D:
    """Structured triangulation of a rectangle.

    Each of the nx*ny quads is split along its lower-left to upper-right
    diagonal (fixed split, so cut patterns are reproducible). Boundary facets
    are tagged ``left``/``right``/``bottom``/``top``.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    (x0, x1), (y0, y1) = bbox
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bbox {bbox}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(ix, iy):
        return iy * (nx + 1) + ix

    tris = []
    for iy in range(ny):
        for ix in range(nx):
            ll = vid(ix, iy)
            lr = vid(ix + 1, iy)
            ul = vid(ix, iy + 1)
            ur = vid(ix + 1, iy + 1)
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))

    tol = 1e-12 * float(np.hypot(x1 - x0, y1 - y0))
    tags = {"left": [], "right": [], "bottom": [], "top": []}
    for ix in range(nx):
        tags["bottom"].append((vid(ix, 0), vid(ix + 1, 0)))
        tags["top"].append((vid(ix, ny), vid(ix + 1, ny)))
    for iy in range(ny):
        tags["left"].append((vid(0, iy), vid(0, iy + 1)))
        tags["right"].append((vid(nx, iy), vid(nx, iy + 1)))

    mesh = Mesh2D(vertices, tris, tags)
    # sanity: tag predicates on coordinates agree with the index construction
    for tag, coord, val in (("left", 0, x0), ("right", 0, x1),
                            ("bottom", 1, y0), ("top", 1, y1)):
        for k in mesh.boundary_tags[tag]:
            i, j = mesh.boundary_facets[k]
            assert abs(mesh.vertices[i][coord] - val) <= tol
            assert abs(mesh.vertices[j][coord] - val) <= tol
    return mesh
