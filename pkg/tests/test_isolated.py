import numpy as np
import pytest

from cutform.geometries import ring, two_circles
from cutform.isolated import (Colouring, CutGraph, build_cut_graph,
                              colour_distributed, colour_graph, colour_volume,
                              dirichlet_cells, mark_isolated, partition_graph)
from cutform.levelset import IN, OUT, LevelSet, build_cut
from cutform.mesh import build_structured_mesh

from oracles import components_by_state


def path_graph(states):
    n = len(states)
    adj = [[] for _ in range(n)]
    for i in range(n - 1):
        adj[i].append(i + 1)
        adj[i + 1].append(i)
    return CutGraph(n, adj, np.array(states, dtype=np.int8),
                    np.arange(n), {i: [i] for i in range(n)})


def canonical(colors):
    # relabel colours by first occurrence so bijective colourings compare equal
    mapping = {}
    out = np.zeros_like(colors)
    for i, c in enumerate(colors):
        if c not in mapping:
            mapping[c] = len(mapping) + 1
        out[i] = mapping[c]
    return out


def assert_valid_colouring(G, col: Colouring):
    # same colour -> same state; same-state neighbours -> same colour;
    # colour count equals the number of same-state components (union-find)
    for v in range(G.n):
        assert col.state_of[col.colors[v] - 1] == G.state[v]
        for u in G.adj[v]:
            if G.state[u] == G.state[v]:
                assert col.colors[u] == col.colors[v]
    reps = components_by_state(G.adj, G.state)
    assert len(set(reps)) == col.n_colors
    # vertex assignment matches the union-find partition exactly
    by_rep = {}
    for v in range(G.n):
        by_rep.setdefault(reps[v], set()).add(col.colors[v])
    for group in by_rep.values():
        assert len(group) == 1


def test_colour_volume_isolated_vertex():
    G = CutGraph(1, [[]], np.array([IN], dtype=np.int8), np.array([0]),
                 {0: [0]})
    C = np.zeros(1, dtype=np.int64)
    colour_volume(0, 5, G, G.state, C)
    assert C[0] == 5


def test_colour_volume_path_same_state():
    G = path_graph([IN] * 6)
    C = np.zeros(6, dtype=np.int64)
    colour_volume(2, 3, G, G.state, C)
    assert np.all(C == 3)


def test_colour_volume_alternating_states():
    G = path_graph([IN, IN, OUT, IN, IN])
    C = np.zeros(5, dtype=np.int64)
    colour_volume(0, 1, G, G.state, C)
    assert list(C) == [1, 1, 0, 0, 0]


def test_colour_graph_all_in_mesh():
    mesh = build_structured_mesh(6, 6)
    phi = LevelSet(mesh, -np.ones(mesh.n_vertices))
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    assert G.n == mesh.n_cells
    col = colour_graph(G)
    assert col.n_colors == 1
    assert col.state_of == [IN]
    assert_valid_colouring(G, col)


def test_planar_cut_two_colors():
    mesh = build_structured_mesh(10, 10)
    phi = LevelSet.from_function(mesh, lambda x, y: x - 0.55)
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    col = colour_graph(G)
    assert col.n_colors == 2
    assert sorted(col.state_of) == [IN, OUT]
    assert_valid_colouring(G, col)


def test_two_circles_three_colors():
    mesh = build_structured_mesh(40, 40)
    phi = LevelSet.from_function(mesh, two_circles())
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    col = colour_graph(G)
    assert col.n_colors == 3
    assert sorted(col.state_of) == [IN, IN, OUT]
    assert_valid_colouring(G, col)


def test_graph_conformity_planar():
    mesh = build_structured_mesh(8, 8)
    phi = LevelSet.from_function(mesh, lambda x, y: x - 0.55)
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    # adjacency symmetric
    for v in range(G.n):
        for u in G.adj[v]:
            assert v in G.adj[u]
    # IN and OUT vertices are only connected within phase except across the
    # interface edge inside cut cells
    col = colour_graph(G)
    assert col.n_colors == 2


@pytest.mark.parametrize("seed", range(8))
def test_random_levelsets_match_union_find(seed):
    mesh = build_structured_mesh(16, 16)
    rng = np.random.default_rng(seed)
    phi = LevelSet(mesh, rng.uniform(-1, 1, mesh.n_vertices))
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    col = colour_graph(G)
    assert_valid_colouring(G, col)


def test_determinism():
    mesh = build_structured_mesh(16, 16)
    rng = np.random.default_rng(12)
    phi = LevelSet(mesh, rng.uniform(-1, 1, mesh.n_vertices))
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    c1 = colour_graph(G).colors
    c2 = colour_graph(G).colors
    assert np.array_equal(c1, c2)


def test_single_part_equals_serial():
    mesh = build_structured_mesh(12, 12)
    phi = LevelSet.from_function(mesh, two_circles())
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    serial = colour_graph(G)
    pg = partition_graph(G, np.zeros(mesh.n_cells, dtype=int))
    dist, locals_, log = colour_distributed(pg)
    assert np.array_equal(canonical(dist.colors), canonical(serial.colors))
    assert log.neighbor_messages == 0


def test_snake_four_partitions():
    # annular IN volume looping through all four quadrants: each local part
    # sees its own arc, the global colouring fuses them into one volume
    mesh = build_structured_mesh(32, 32)
    phi = LevelSet.from_function(mesh, ring())
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    quadrant = (mesh.centroids[:, 0] > 0.5).astype(int) \
        + 2 * (mesh.centroids[:, 1] > 0.5).astype(int)
    pg = partition_graph(G, quadrant)
    dist, locals_, log = colour_distributed(pg)
    local_in = sum(1 for lc in locals_ for s in lc.state_of if s == IN)
    assert local_in >= 4
    global_in = sum(1 for s in dist.state_of if s == IN)
    assert global_in == 1
    serial = colour_graph(G)
    assert np.array_equal(canonical(dist.colors), canonical(serial.colors))
    assert log.neighbor_messages > 0
    assert log.gather_messages == 4 and log.scatter_messages == 4


@pytest.mark.parametrize("seed", range(10))
def test_distributed_bijective_to_serial_random(seed):
    mesh = build_structured_mesh(16, 16)
    rng = np.random.default_rng(100 + seed)
    phi = LevelSet(mesh, rng.uniform(-1, 1, mesh.n_vertices))
    G = build_cut_graph(mesh, build_cut(mesh, phi))
    n_parts = int(rng.integers(2, 9))
    part_of_cell = rng.integers(0, n_parts, mesh.n_cells)
    pg = partition_graph(G, part_of_cell)
    dist, _, _ = colour_distributed(pg)
    serial = colour_graph(G)
    assert np.array_equal(canonical(dist.colors), canonical(serial.colors))
    # states preserved through the bijection
    for v in range(G.n):
        assert dist.state_of[dist.colors[v] - 1] == G.state[v]


def test_mark_isolated_anchored_body():
    mesh = build_structured_mesh(10, 10)
    phi = LevelSet.from_function(mesh, lambda x, y: x - 0.55)
    cut = build_cut(mesh, phi)
    G = build_cut_graph(mesh, cut)
    col = colour_graph(G)
    psi = mark_isolated(col, G, dirichlet_cells(mesh, "left"), phase=IN)
    assert np.all(psi == 0.0)


def test_mark_isolated_floating_blob():
    mesh = build_structured_mesh(40, 40)
    phi = LevelSet.from_function(mesh, two_circles(c1=(0.25, 0.5),
                                                   c2=(0.75, 0.5), r=0.15))
    cut = build_cut(mesh, phi)
    G = build_cut_graph(mesh, cut)
    col = colour_graph(G)
    # anchor the left blob by pretending its cells touch a Dirichlet boundary
    anchor = {c for c in range(mesh.n_cells)
              if mesh.centroids[c][0] < 0.3 and cut.states[c] != 1}
    psi = mark_isolated(col, G, anchor, phase=IN)
    # flagged exactly on cells hosting right-blob material
    for c in range(mesh.n_cells):
        cx = mesh.centroids[c][0]
        if psi[c]:
            assert cx > 0.5
    in_cells_right = [c for c in range(mesh.n_cells)
                      if cut.states[c] == 0 and mesh.centroids[c][0] > 0.5]
    assert all(psi[c] == 1.0 for c in in_cells_right)


def test_mark_isolated_single_cell_layer_separation():
    # two IN slabs separated by one positive node column: the failure case of
    # diffusion-style indicators; the graph keeps them distinct
    mesh = build_structured_mesh(10, 10)
    vals = np.where(mesh.vertices[:, 0] <= 0.45, -1.0,
                    np.where(mesh.vertices[:, 0] >= 0.55, -1.0, 1.0))
    phi = LevelSet(mesh, vals)
    cut = build_cut(mesh, phi)
    G = build_cut_graph(mesh, cut)
    col = colour_graph(G)
    in_colors = {c + 1 for c, s in enumerate(col.state_of) if s == IN}
    assert len(in_colors) == 2
    psi = mark_isolated(col, G, dirichlet_cells(mesh, "left"), phase=IN)
    flagged = np.flatnonzero(psi)
    assert len(flagged) > 0
    assert all(mesh.centroids[c][0] > 0.5 for c in flagged)
    # the right slab's uncut IN cells are all flagged
    for c in range(mesh.n_cells):
        if cut.states[c] == 0 and mesh.centroids[c][0] > 0.6:
            assert psi[c] == 1.0


def test_vertices_touching_boundary():
    mesh = build_structured_mesh(6, 6)
    phi = LevelSet.from_function(mesh, lambda x, y: x - 0.41)
    cut = build_cut(mesh, phi)
    G = build_cut_graph(mesh, cut)
    left = G.vertices_touching(mesh.tagged_boundary_facets("left"))
    assert left
    for v in left:
        assert G.state[v] == IN  # whole left edge is material
