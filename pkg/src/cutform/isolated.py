"""Isolated-volume detection: conforming cut-cell connectivity graph, BFS
colouring of same-state volumes, a two-phase global colouring over simulated
in-memory partitions, and the per-cell indicator used by the FEM penalty."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import PartitionIntegrityError, TopologyError
from .levelset import CUT, IN, OUT
from .mesh import Mesh2D


@dataclass
class CutGraph:
    """Conforming connectivity graph of the cut mesh.

    Vertices are whole uncut cells plus the sub-triangles of CUT cells; two
    vertices are connected exactly when their cells share a (sub-)edge. In 2D
    the standard subtriangulation splits shared cut edges identically on both
    sides, so the graph is conforming by construction.
    """

    n: int
    adj: list                    # adjacency lists
    state: np.ndarray            # IN/OUT per vertex
    cell_of: np.ndarray          # background cell per vertex
    cell_vertices: dict          # background cell -> [vertex ids]
    boundary_edges: dict = field(default_factory=dict)
    # vertex -> set of boundary facet indices its cell-piece touches

    def vertices_touching(self, facet_indices) -> set:
        out = set()
        wanted = set(int(k) for k in facet_indices)
        for v, facets in self.boundary_edges.items():
            if facets & wanted:
                out.add(v)
        return out


@dataclass
class Colouring:
    """Colour per vertex (1-based, contiguous) and the state of each colour."""

    colors: np.ndarray
    state_of: list

    @property
    def n_colors(self):
        return len(self.state_of)


def _edge_key(a, b):
    return (a, b) if a <= b else (b, a)


def build_cut_graph(mesh: Mesh2D, cut) -> CutGraph:
    """Graph vertices and face-sharing adjacency from a CutTopology.

    Sub-edge endpoints are identified symbolically: background vertices by
    index, interface crossing points by their (sorted) edge key, so adjacency
    never depends on floating-point coordinates.
    """
    verts_state = []
    verts_cell = []
    cell_vertices = {}
    edge_owner = {}

    boundary_facet_of_edge = {}
    for k, (i, j) in enumerate(mesh.boundary_facets):
        boundary_facet_of_edge[_edge_key(int(i), int(j))] = k

    def add_vertex(cell, state):
        vid = len(verts_state)
        verts_state.append(state)
        verts_cell.append(cell)
        cell_vertices.setdefault(cell, []).append(vid)
        return vid

    def register(vid, node_ids):
        # node_ids: 3 symbolic corner ids of the (sub-)triangle
        for a in range(3):
            key = frozenset((node_ids[a], node_ids[(a + 1) % 3]))
            edge_owner.setdefault(key, []).append(vid)

    crossing_id = {key: ("x", key) for key in cut.edge_crossings}

    for cell in range(mesh.n_cells):
        state = cut.states[cell]
        ids = [int(n) for n in mesh.triangles[cell]]
        if state != CUT:
            vid = add_vertex(cell, int(state))
            register(vid, [("v", n) for n in ids])
            continue
        geom = cut.cut_cells[cell]
        lone, o1, o2 = geom.lone, (geom.lone + 1) % 3, (geom.lone + 2) % 3
        x1 = crossing_id[_edge_key(ids[lone], ids[o1])]
        x2 = crossing_id[_edge_key(ids[lone], ids[o2])]
        lone_sym = ("v", ids[lone])
        o1_sym = ("v", ids[o1])
        o2_sym = ("v", ids[o2])
        lone_state = IN if geom.subs[0][3] == IN else OUT
        other_state = OUT if lone_state == IN else IN
        # same corner layout as CutCellGeom.subs
        pieces = [((lone_sym, x1, x2), lone_state),
                  ((x1, o1_sym, o2_sym), other_state),
                  ((x1, o2_sym, x2), other_state)]
        for node_ids, st in pieces:
            vid = add_vertex(cell, st)
            register(vid, list(node_ids))

    n = len(verts_state)
    adj = [[] for _ in range(n)]
    boundary_edges = {}
    for key, owners in edge_owner.items():
        if len(owners) == 2:
            a, b = owners
            adj[a].append(b)
            adj[b].append(a)
        elif len(owners) == 1:
            # boundary sub-edge; attribute it to the box facet it lies on
            plain = [sym[1] for sym in key if sym[0] == "v"]
            crossings = [sym[1] for sym in key if sym[0] == "x"]
            if len(plain) == 2:
                fk = _edge_key(*plain)
            elif len(plain) == 1 and len(crossings) == 1:
                fk = crossings[0]
            else:
                fk = None
            if fk is not None and fk in boundary_facet_of_edge:
                boundary_edges.setdefault(owners[0], set()).add(
                    boundary_facet_of_edge[fk])
        else:
            raise TopologyError(
                f"sub-edge {key} shared by {len(owners)} pieces")
    for lst in adj:
        lst.sort()
    return CutGraph(n, adj, np.array(verts_state, dtype=np.int8),
                    np.array(verts_cell, dtype=np.int64), cell_vertices,
                    boundary_edges)


def colour_volume(v0: int, c: int, G: CutGraph, S, C) -> None:
    """Flood colour c from v0 through same-state neighbours (BFS).

    Vertices are coloured as they are enqueued; testing "not coloured" only
    at enqueue time would re-add frontier vertices once per incident edge and
    blow up on mesh-sized graphs.
    """
    queue = deque([v0])
    C[v0] = c
    while queue:
        v = queue.popleft()
        for u in G.adj[v]:
            if C[u] == 0 and S[u] == S[v]:
                C[u] = c
                queue.append(u)


def colour_graph(G: CutGraph) -> Colouring:
    """Scan vertices in index order; each uncoloured vertex opens a new
    colour and floods its same-state component."""
    C = np.zeros(G.n, dtype=np.int64)
    state_of = []
    nc = 0
    for v in range(G.n):
        if C[v] == 0:
            nc += 1
            state_of.append(int(G.state[v]))
            colour_volume(v, nc, G, G.state, C)
    return Colouring(C, state_of)


# -- simulated distributed colouring ------------------------------------------

@dataclass
class LocalPart:
    """One simulated processor: owned vertices, their internal adjacency and
    the cross-partition edges (ghost overlap)."""

    index: int
    owned: np.ndarray            # global vertex ids, ascending
    local_adj: list              # adjacency in local indexing
    state: np.ndarray
    cross_edges: list            # (local_u, other_part, other_global_v)
    global_to_local: dict


@dataclass
class PartitionedGraph:
    graph: CutGraph
    parts: list
    owner: np.ndarray            # part index per global vertex


@dataclass
class CommLog:
    neighbor_messages: int = 0
    gather_messages: int = 0
    scatter_messages: int = 0


def partition_graph(G: CutGraph, part_of_cell: np.ndarray) -> PartitionedGraph:
    """Partition by background cell; every vertex is owned by exactly one
    part and cross edges carry the overlap information."""
    owner = part_of_cell[G.cell_of]
    n_parts = int(owner.max()) + 1 if len(owner) else 0
    parts = []
    for p in range(n_parts):
        owned = np.flatnonzero(owner == p)
        g2l = {int(g): l for l, g in enumerate(owned)}
        local_adj = [[] for _ in range(len(owned))]
        cross = []
        for l, g in enumerate(owned):
            for u in G.adj[int(g)]:
                if owner[u] == p:
                    local_adj[l].append(g2l[int(u)])
                else:
                    cross.append((l, int(owner[u]), int(u)))
        parts.append(LocalPart(p, owned, local_adj,
                               G.state[owned].copy(), cross, g2l))
    return PartitionedGraph(G, parts, owner)


def _local_colouring(part: LocalPart) -> Colouring:
    sub = CutGraph(len(part.owned), part.local_adj, part.state,
                   np.zeros(len(part.owned), dtype=np.int64), {})
    return colour_graph(sub)


def colour_distributed(pg: PartitionedGraph):
    """Two-phase global colouring (local BFS colouring, then neighbour
    exchange + gather/union/scatter).

    Returns (global Colouring, list of local Colourings, CommLog). The global
    colouring equals the serial one up to a bijection of colour ids.
    """
    G = pg.graph
    locals_ = [_local_colouring(p) for p in pg.parts]
    log = CommLog()

    # neighbour-to-neighbour exchange: each part sends the local colours of
    # its boundary vertices to each neighbouring part
    requested = {}
    for part in pg.parts:
        for l_u, q, g_v in part.cross_edges:
            requested.setdefault((int(q), part.index), set()).add(g_v)
    messages = {}
    for (q, p), verts in sorted(requested.items()):
        payload = {}
        for g_v in sorted(verts):
            lq = pg.parts[q].global_to_local.get(g_v)
            if lq is None:
                raise PartitionIntegrityError(
                    f"vertex {g_v} not owned by part {q}")
            payload[g_v] = int(locals_[q].colors[lq])
        messages[(q, p)] = payload
        log.neighbor_messages += 1

    # per cross edge with matching states, record the (part, colour) pair
    pairs = []
    for part in pg.parts:
        for l_u, q, g_v in part.cross_edges:
            g_u = int(part.owned[l_u])
            if G.state[g_u] != G.state[g_v]:
                continue
            cu = (part.index, int(locals_[part.index].colors[l_u]))
            cv = (q, messages[(q, part.index)][g_v])
            if pg.parts[q].state[pg.parts[q].global_to_local[g_v]] != \
                    G.state[g_v]:
                raise PartitionIntegrityError(
                    f"state mismatch for ghost vertex {g_v}")
            pairs.append((cu, cv))

    # gather all (part, colour) identifications on a coordinator
    log.gather_messages = len(pg.parts)
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, lc in enumerate(locals_):
        for c in range(1, lc.n_colors + 1):
            parent.setdefault((p, c), (p, c))
    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    global_id = {}
    next_id = 0
    state_of = []
    for p, lc in enumerate(locals_):
        for c in range(1, lc.n_colors + 1):
            root = find((p, c))
            if root not in global_id:
                next_id += 1
                global_id[root] = next_id
                state_of.append(lc.state_of[c - 1])

    # scatter the mapping back and build the global colour array
    log.scatter_messages = len(pg.parts)
    colors = np.zeros(G.n, dtype=np.int64)
    for part, lc in zip(pg.parts, locals_):
        for l, g in enumerate(part.owned):
            colors[int(g)] = global_id[find((part.index,
                                             int(lc.colors[l])))]
    return Colouring(colors, state_of), locals_, log


def mark_isolated(colouring: Colouring, G: CutGraph, dirichlet_cells,
                  phase=IN) -> np.ndarray:
    """Indicator over background cells: 1 where the cell's vertices of the
    given phase belong to a colour whose component never touches a
    Dirichlet-owning cell."""
    dirichlet_cells = set(int(c) for c in dirichlet_cells)
    touched = set()
    for v in range(G.n):
        if int(G.cell_of[v]) in dirichlet_cells:
            touched.add(int(colouring.colors[v]))
    n_cells = int(G.cell_of.max()) + 1 if G.n else 0
    psi = np.zeros(n_cells)
    for v in range(G.n):
        if int(G.state[v]) != phase:
            continue
        if int(colouring.colors[v]) not in touched:
            psi[int(G.cell_of[v])] = 1.0
    return psi


def dirichlet_cells(mesh: Mesh2D, tags) -> set:
    """Background cells owning at least one boundary facet with these tags."""
    if isinstance(tags, str):
        tags = (tags,)
    facets = mesh.tagged_boundary_facets(*tags)
    return {int(mesh.boundary_cells[k]) for k in facets}
