"""P1 cut-FEM assembly and solves: ghost-penalty stabilized Poisson and
elasticity on the negative phase, the Hilbertian extension solve, and the
normal-velocity construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergenceError, SingularSystemError
from .functionals import DEFAULT_RULE, tri_quadrature
from .levelset import CUT, IN, OUT, LevelSet
from .mesh import FacetSkeleton, Mesh2D


def cell_basis_gradients(mesh: Mesh2D):
    """Constant P1 basis gradients per cell, shape (n_cells, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    det = 2.0 * mesh.signed_areas
    g = np.empty((mesh.n_cells, 3, 2))
    for m in range(3):
        a = p[:, (m + 1) % 3]
        b = p[:, (m + 2) % 3]
        g[:, m, 0] = (a[:, 1] - b[:, 1]) / det
        g[:, m, 1] = (b[:, 0] - a[:, 0]) / det
    return g


def cell_field_gradients(mesh: Mesh2D, nodal: np.ndarray):
    """P1 gradient of a nodal field per cell, shape (n_cells, 2)."""
    g = cell_basis_gradients(mesh)
    vals = nodal[mesh.triangles]
    return np.einsum("km,kmd->kd", vals, g)


def p1_mass_matrix(mesh: Mesh2D, cell_weights=None) -> sp.csr_matrix:
    w = mesh.areas if cell_weights is None else mesh.areas * cell_weights
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    blocks = w[:, None, None] * local
    return _scatter(mesh, blocks)


def p1_stiffness_matrix(mesh: Mesh2D, cell_weights=None) -> sp.csr_matrix:
    g = cell_basis_gradients(mesh)
    w = mesh.areas if cell_weights is None else mesh.areas * cell_weights
    blocks = np.einsum("k,kmd,knd->kmn", w, g, g)
    return _scatter(mesh, blocks)


def _scatter(mesh: Mesh2D, blocks) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                        shape=(mesh.n_vertices, mesh.n_vertices))
    return mat.tocsr()


def facet_jump_matrix(mesh: Mesh2D, skel: FacetSkeleton,
                      component=None) -> sp.csr_matrix:
    """Rows map nodal values to the facet jump of the normal gradient.

    Row k of the result applied to a nodal vector u gives
    n_F . grad(u)|_left - n_F . grad(u)|_right on interior facet k. With
    ``component`` in {0, 1} the columns address the interleaved dofs of a
    2-vector field instead.
    """
    g = cell_basis_gradients(mesh)
    rows, cols, vals = [], [], []
    for k in range(skel.n_interior):
        n = skel.normals[k]
        for cell, sign in ((skel.left_cells[k], 1.0),
                           (skel.right_cells[k], -1.0)):
            coeff = g[cell] @ n
            for m in range(3):
                rows.append(k)
                node = int(mesh.triangles[cell][m])
                cols.append(node if component is None else 2 * node + component)
                vals.append(sign * coeff[m])
    ncols = mesh.n_vertices if component is None else 2 * mesh.n_vertices
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(skel.n_interior, ncols)).tocsr()


def ghost_facet_indices(skel: FacetSkeleton, states) -> np.ndarray:
    """Interior facets with at least one CUT neighbour, both neighbours
    active in the negative phase (IN or CUT)."""
    sl = states[skel.left_cells]
    sr = states[skel.right_cells]
    active = (sl != OUT) & (sr != OUT)
    return np.flatnonzero(active & ((sl == CUT) | (sr == CUT)))


@dataclass
class FESpace:
    """Active-dof bookkeeping for a P1 space on the cut mesh.

    Dof numbering is node-major (scalar) or interleaved per node (2-vector),
    hence stable and deterministic. Dirichlet dofs are excluded from the
    solved system; their contribution moves to the right-hand side.
    """

    mesh: Mesh2D
    components: int
    active: np.ndarray            # bool over components * n_vertices
    dirichlet_mask: np.ndarray    # bool, subset of active
    dirichlet_values: np.ndarray  # full length

    @property
    def active_dofs(self):
        return np.flatnonzero(self.active)


@dataclass
class LinearSystem:
    """Reduced sparse system with Dirichlet data eliminated."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_dofs: int
    meta: dict = field(default_factory=dict)

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_dofs)
        out[self.free] = x_free
        out[self.fixed] = self.fixed_values
        return out

    def symmetry_defect(self):
        d = self.matrix - self.matrix.T
        denom = max(1.0, abs(self.matrix).max())
        return abs(d).max() / denom if d.nnz else 0.0


def _reduce(K: sp.csr_matrix, b: np.ndarray, fixed: np.ndarray,
            fixed_values: np.ndarray, active_mask: np.ndarray,
            meta=None, mesh=None, components=1) -> LinearSystem:
    n = K.shape[0]
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(active_mask & ~is_fixed)
    rhs = b[free] - K[free][:, fixed] @ fixed_values
    meta = dict(meta or {})
    if mesh is not None:
        full_vals = np.zeros(n)
        full_vals[fixed] = fixed_values
        meta["space"] = FESpace(mesh, components, active_mask.copy(),
                                is_fixed, full_vals)
    return LinearSystem(K[free][:, free].tocsr(), rhs, free, fixed,
                        fixed_values, n, meta)


def solve(system: LinearSystem, method="direct") -> np.ndarray:
    """Solve and return the full-length dof vector (Dirichlet data filled).

    ``method`` is "direct" or ("cg", tol, maxit) for Jacobi-preconditioned
    conjugate gradients.
    """
    if system.matrix.shape[0] == 0:
        return system.expand(np.zeros(0))
    if method == "direct":
        hint = system.meta.get("singular_hint",
                               "suspect an untagged isolated volume")
        try:
            lu = spla.splu(system.matrix.tocsc())
            x = lu.solve(system.rhs)
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed ({exc}); {hint}")
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(f"non-finite solution; {hint}")
        # rigid-body kernels of untagged isolated volumes survive the
        # factorization with rounding-scale pivots; a cheap one-norm
        # condition estimate catches them
        n = system.matrix.shape[0]
        inv = spla.LinearOperator((n, n), matvec=lu.solve,
                                  rmatvec=lambda v: lu.solve(v, trans="T"))
        cond = spla.onenormest(system.matrix) * spla.onenormest(inv)
        if cond > 1e13:
            raise SingularSystemError(
                f"system numerically singular (cond ~ {cond:.2e}); {hint}")
        return system.expand(x)
    kind, tol, maxit = method
    if kind != "cg":
        raise ValueError(f"unknown solve method {method!r}")
    diag = system.matrix.diagonal()
    diag[diag == 0.0] = 1.0
    precond = sp.diags(1.0 / diag)
    history = []

    def cb(xk):
        history.append(float(np.linalg.norm(system.rhs - system.matrix @ xk)))

    x, info = spla.cg(system.matrix, system.rhs, rtol=tol, maxiter=maxit,
                      M=precond, callback=cb)
    if info > 0:
        raise NonConvergenceError(
            f"cg failed to reach tol={tol:g} in {maxit} iterations", history)
    return system.expand(x)


def _phase_weights(mesh: Mesh2D, cut, phase=IN):
    """Per-cell fraction of the cell area in the given phase."""
    w = np.zeros(mesh.n_cells)
    w[cut.states == phase] = 1.0
    for k, geom in cut.cut_cells.items():
        w[k] = float(geom.sub_area(phase)) / mesh.areas[k]
    return w


def _mass_block_on_phase(mesh, cut, cell, phase, rule):
    """3x3 local mass matrix of a cell restricted to one phase."""
    ids = mesh.triangles[cell]
    corners = mesh.vertices[ids]
    (x0, y0), (x1, y1), (x2, y2) = corners
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)

    def bary(p):
        l1 = ((p[0] - x0) * (y2 - y0) - (p[1] - y0) * (x2 - x0)) / det
        l2 = ((p[1] - y0) * (x1 - x0) - (p[0] - x0) * (y1 - y0)) / det
        return np.array([1.0 - l1 - l2, l1, l2])

    local = np.zeros((3, 3))
    if cell in cut.cut_cells:
        tris = [(s[0], s[1], s[2]) for s in cut.cut_cells[cell].subs
                if s[3] == phase]
    else:
        tris = [tuple(map(tuple, corners))]
    for p0, p1, p2 in tris:
        area = 0.5 * abs((p1[0] - p0[0]) * (p2[1] - p0[1])
                         - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        for (b0, b1, b2), w in zip(rule.tri_bary, rule.tri_w):
            q = (b0 * p0[0] + b1 * p1[0] + b2 * p2[0],
                 b0 * p0[1] + b1 * p1[1] + b2 * p2[1])
            N = bary(q)
            local += (2.0 * area * w) * np.outer(N, N)
    return local


def dirichlet_nodes(mesh: Mesh2D, tags) -> np.ndarray:
    if isinstance(tags, str):
        tags = (tags,)
    return mesh.tagged_boundary_nodes(*tags)


def assemble_cut_poisson(mesh: Mesh2D, cut, skel: FacetSkeleton, psi=None,
                         gamma: float = 1e-7, f=1.0,
                         dirichlet_tags=("left",), dirichlet_value=0.0,
                         rule=DEFAULT_RULE) -> LinearSystem:
    """Scalar diffusion on the negative phase with ghost stabilization.

    ``psi`` is a per-cell 0/1 isolated-volume indicator feeding the zero-mean
    penalty term.
    """
    weights = _phase_weights(mesh, cut, IN)
    K = p1_stiffness_matrix(mesh, weights)

    ghost = ghost_facet_indices(skel, cut.states)
    if len(ghost):
        G = facet_jump_matrix(mesh, skel)[ghost]
        d = gamma * skel.h_f[ghost] ** 3 * skel.h_f[ghost]
        K = K + G.T @ sp.diags(d) @ G

    if psi is not None and np.any(psi):
        for cell in np.flatnonzero(psi):
            ids = mesh.triangles[cell]
            local = _mass_block_on_phase(mesh, cut, int(cell), IN, rule)
            K = K + sp.coo_matrix(
                (local.ravel(),
                 (np.repeat(ids, 3), np.tile(ids, 3))),
                shape=K.shape).tocsr()

    b = np.zeros(mesh.n_vertices)
    fcall = f if callable(f) else (lambda x, y: f)
    for cell in range(mesh.n_cells):
        if weights[cell] == 0.0:
            continue
        ids = mesh.triangles[cell]
        if cell in cut.cut_cells:
            geom = cut.cut_cells[cell]
            tris = [s[:3] for s in geom.subs if s[3] == IN]
        else:
            tris = [tuple(map(tuple, mesh.vertices[ids]))]
        corners = mesh.vertices[ids]
        (x0, y0), (x1, y1), (x2, y2) = corners
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        for p0, p1, p2 in tris:
            area2 = abs((p1[0] - p0[0]) * (p2[1] - p0[1])
                        - (p2[0] - p0[0]) * (p1[1] - p0[1]))
            for (b0, b1, b2), w in zip(rule.tri_bary, rule.tri_w):
                q = (b0 * p0[0] + b1 * p1[0] + b2 * p2[0],
                     b0 * p0[1] + b1 * p1[1] + b2 * p2[1])
                l1 = ((q[0] - x0) * (y2 - y0) - (q[1] - y0) * (x2 - x0)) / det
                l2 = ((q[1] - y0) * (x1 - x0) - (q[0] - x0) * (y1 - y0)) / det
                N = (1.0 - l1 - l2, l1, l2)
                c = w * area2 * fcall(*q)
                for m in range(3):
                    b[ids[m]] += c * N[m]

    active_cells = weights > 0.0
    active = np.zeros(mesh.n_vertices, dtype=bool)
    for cell in np.flatnonzero(active_cells):
        active[mesh.triangles[cell]] = True

    fixed = np.intersect1d(dirichlet_nodes(mesh, dirichlet_tags),
                           np.flatnonzero(active))
    fixed_vals = np.full(len(fixed), dirichlet_value)
    return _reduce(K, b, fixed, fixed_vals, active, mesh=mesh)


def _elastic_blocks(mesh: Mesh2D, lame, cell_weights):
    lam, mu = lame
    g = cell_basis_gradients(mesh)
    nt = mesh.n_cells
    B = np.zeros((nt, 3, 6))  # rows exx, eyy, 2exy
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    D = np.array([[lam + 2 * mu, lam, 0.0],
                  [lam, lam + 2 * mu, 0.0],
                  [0.0, 0.0, mu]])
    w = mesh.areas * cell_weights
    return np.einsum("k,kim,ij,kjn->kmn", w, B, D, B)


def _scatter_vector(mesh: Mesh2D, blocks) -> sp.csr_matrix:
    tri = mesh.triangles
    dofs = np.empty((mesh.n_cells, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * tri
    dofs[:, 1::2] = 2 * tri + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_vertices
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_cut_elasticity(mesh: Mesh2D, cut, skel: FacetSkeleton,
                            lame=(0.5769, 0.3846), psi=None,
                            gamma: float = 1e-7, dirichlet_tags=("left",),
                            tractions=(), rule=DEFAULT_RULE,
                            meta=None) -> LinearSystem:
    """Linear elasticity on the negative phase: volume term scaled by the cut
    area fraction, ghost penalty gamma*(lam+mu)*h^3 on the ghost skeleton and
    a mass penalty on cells flagged by ``psi``.

    ``tractions`` is a list of (boundary_facet_indices, g) pairs with g a
    constant 2-vector or a callable (x, y) -> (gx, gy).
    """
    lam, mu = lame
    weights = _phase_weights(mesh, cut, IN)
    K = _scatter_vector(mesh, _elastic_blocks(mesh, lame, weights))

    ghost = ghost_facet_indices(skel, cut.states)
    if len(ghost):
        d = gamma * (lam + mu) * skel.h_f[ghost] ** 3 * skel.h_f[ghost]
        for comp in (0, 1):
            G = facet_jump_matrix(mesh, skel, component=comp)[ghost]
            K = K + G.T @ sp.diags(d) @ G

    if psi is not None and np.any(psi):
        for cell in np.flatnonzero(psi):
            ids = mesh.triangles[cell]
            local = _mass_block_on_phase(mesh, cut, int(cell), IN, rule)
            for comp in (0, 1):
                dofs = 2 * ids + comp
                K = K + sp.coo_matrix(
                    (local.ravel(), (np.repeat(dofs, 3), np.tile(dofs, 3))),
                    shape=K.shape).tocsr()

    b = np.zeros(2 * mesh.n_vertices)
    for facets, gfun in tractions:
        for k in facets:
            i, j = mesh.boundary_facets[k]
            qi, qj = mesh.vertices[i], mesh.vertices[j]
            length = float(np.hypot(*(qj - qi)))
            for xi, w in zip(rule.seg_x, rule.seg_w):
                x = qi + xi * (qj - qi)
                gx, gy = gfun(*x) if callable(gfun) else gfun
                b[2 * i] += w * length * (1 - xi) * gx
                b[2 * i + 1] += w * length * (1 - xi) * gy
                b[2 * j] += w * length * xi * gx
                b[2 * j + 1] += w * length * xi * gy

    active_cells = weights > 0.0
    active = np.zeros(2 * mesh.n_vertices, dtype=bool)
    for cell in np.flatnonzero(active_cells):
        for n in mesh.triangles[cell]:
            active[2 * n] = active[2 * n + 1] = True

    nodes = dirichlet_nodes(mesh, dirichlet_tags)
    fixed = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    fixed = fixed[active[fixed]]
    return _reduce(K, b, fixed, np.zeros(len(fixed)), active, meta,
                   mesh=mesh, components=2)


def elastic_energy_density(mesh: Mesh2D, lame, d: np.ndarray,
                           s: np.ndarray) -> np.ndarray:
    """Per-cell sigma(d) : eps(s) for P1 vector fields (constant per cell)."""
    lam, mu = lame
    g = cell_basis_gradients(mesh)
    dx = d[0::2][mesh.triangles]
    dy = d[1::2][mesh.triangles]
    sx = s[0::2][mesh.triangles]
    sy = s[1::2][mesh.triangles]

    def strain(ux, uy):
        exx = np.einsum("km,km->k", ux, g[:, :, 0])
        eyy = np.einsum("km,km->k", uy, g[:, :, 1])
        exy = 0.5 * (np.einsum("km,km->k", ux, g[:, :, 1])
                     + np.einsum("km,km->k", uy, g[:, :, 0]))
        return exx, eyy, exy

    dxx, dyy, dxy = strain(dx, dy)
    sxx, syy, sxy = strain(sx, sy)
    tr_d = dxx + dyy
    return (lam * tr_d * (sxx + syy)
            + 2.0 * mu * (dxx * sxx + dyy * syy + 2.0 * dxy * sxy))


class HilbertianExtension:
    """Riesz representation of nodal directional derivatives in the
    alpha^2-weighted H1 inner product over the whole background mesh."""

    def __init__(self, mesh: Mesh2D, alpha: float):
        self.mesh = mesh
        self.alpha = alpha
        self.matrix = (alpha * alpha * p1_stiffness_matrix(mesh)
                       + p1_mass_matrix(mesh)).tocsc()
        self._lu = spla.splu(self.matrix)

    def solve(self, dJ: np.ndarray) -> np.ndarray:
        g = self._lu.solve(np.asarray(dJ, dtype=float))
        return g


def hilbertian_extension(dJ: np.ndarray, mesh: Mesh2D,
                         alpha: float) -> np.ndarray:
    """One-shot solve of <g, w>_H = dJ(phi; w) for all hat functions w."""
    return HilbertianExtension(mesh, alpha).solve(dJ)


def compute_velocity(g: np.ndarray, phi: LevelSet, mesh: Mesh2D) -> np.ndarray:
    """Nodal velocity beta_i = g_i * normalized nodal level-set gradient."""
    grads = cell_field_gradients(mesh, phi.values)
    acc = np.zeros((mesh.n_vertices, 2))
    wsum = np.zeros(mesh.n_vertices)
    for m in range(3):
        nodes = mesh.triangles[:, m]
        np.add.at(acc, nodes, grads * mesh.areas[:, None])
        np.add.at(wsum, nodes, mesh.areas)
    acc /= wsum[:, None]
    norms = np.linalg.norm(acc, axis=1)
    return g[:, None] * acc / np.maximum(norms, 1e-10)[:, None]
