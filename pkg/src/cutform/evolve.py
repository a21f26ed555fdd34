"""Level-set transport (interior penalty, Crank-Nicolson) and signed-distance
reinitialization (Picard with an approximate sign)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (cell_basis_gradients, cell_field_gradients,
                  facet_jump_matrix, p1_mass_matrix, p1_stiffness_matrix)
from .levelset import LevelSet, build_cut
from .mesh import FacetSkeleton, Mesh2D

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0],
                        [1.0, 2.0, 1.0],
                        [1.0, 1.0, 2.0]]) / 12.0


@dataclass
class EvolveConfig:
    dt: float
    steps: int = 1
    c_e: float = 0.01
    velocity_weighted: bool = True  # include |n_F . beta| in the penalty

    def __post_init__(self):
        if self.c_e <= 0 or self.dt <= 0:
            raise ValueError("c_e and dt must be positive")


@dataclass
class ReinitConfig:
    c_r1: float = 0.5
    gamma_d: float = 20.0
    variant: str = "viscosity"     # or "interior_penalty"
    c_r2: float = 0.1
    picard_tol: float = 1e-6
    picard_maxit: int = 50

    def __post_init__(self):
        if min(self.c_r1, self.gamma_d, self.c_r2) <= 0:
            raise ValueError("stabilization coefficients must be positive")
        if self.variant not in ("viscosity", "interior_penalty"):
            raise ValueError(f"unknown reinit variant {self.variant!r}")


class TransportOperators:
    """Mesh-fixed pieces of the transport weak form, reusable across steps."""

    def __init__(self, mesh: Mesh2D, skel: FacetSkeleton):
        self.mesh = mesh
        self.skel = skel
        self.mass = p1_mass_matrix(mesh)
        self.jump = facet_jump_matrix(mesh, skel)
        self.grads = cell_basis_gradients(mesh)

    def advection_matrix(self, beta: np.ndarray) -> sp.csr_matrix:
        """A_ij = integral of N_i (beta . grad N_j), beta P1-interpolated."""
        mesh = self.mesh
        bc = beta[mesh.triangles]                        # (nt, 3, 2)
        P = np.einsum("kmd,knd->kmn", bc, self.grads)    # beta_m . grad N_n
        blocks = np.einsum("k,mi,kin->kmn", mesh.areas, _LOCAL_MASS, P)
        tri = mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        return sp.coo_matrix((blocks.ravel(), (rows, cols)),
                             shape=self.mass.shape).tocsr()

    def facet_penalty(self, beta: np.ndarray, c_e: float,
                      velocity_weighted: bool) -> sp.csr_matrix:
        """Sum over interior facets of c_e h_F^2 [|n_F.beta|] times the
        normal-gradient jumps, as a matrix."""
        skel = self.skel
        if velocity_weighted:
            # integral of |n_F . beta| along each facet, beta linear on it
            vi = self.mesh.vertices[skel.facets[:, 0]]
            vj = self.mesh.vertices[skel.facets[:, 1]]
            bi = np.einsum("kd,kd->k", beta[skel.facets[:, 0]], skel.normals)
            bj = np.einsum("kd,kd->k", beta[skel.facets[:, 1]], skel.normals)
            _ = (vi, vj)
            q = np.zeros(skel.n_interior)
            s3 = 3.0 ** -0.5
            for xi, w in ((0.5 - 0.5 * s3, 0.5), (0.5 + 0.5 * s3, 0.5)):
                q += w * np.abs(bi + xi * (bj - bi))
            weight = c_e * skel.h_f ** 2 * q * skel.h_f
        else:
            weight = c_e * skel.h_f ** 2 * skel.h_f
        return (self.jump.T @ sp.diags(weight) @ self.jump).tocsr()


def evolve(phi: LevelSet, beta: np.ndarray, cfg: EvolveConfig, mesh: Mesh2D,
           skel: FacetSkeleton, ops: TransportOperators | None = None
           ) -> LevelSet:
    """Advect the level set by cfg.steps Crank-Nicolson steps of size cfg.dt.

    The operator is built once per call; beta is frozen for all steps.
    """
    beta = np.asarray(beta, dtype=float)
    max_beta = float(np.max(np.linalg.norm(beta, axis=1))) if len(beta) else 0.0
    if max_beta > 0 and cfg.dt > mesh.h_min / max_beta:
        warnings.warn(
            f"dt={cfg.dt:g} exceeds the advisory CFL limit "
            f"{mesh.h_min / max_beta:g}", UserWarning, stacklevel=2)
    if ops is None:
        ops = TransportOperators(mesh, skel)
    X = ops.advection_matrix(beta) + ops.facet_penalty(
        beta, cfg.c_e, cfg.velocity_weighted)
    lhs = (ops.mass + 0.5 * cfg.dt * X).tocsc()
    rhs_op = (ops.mass - 0.5 * cfg.dt * X).tocsr()
    lu = spla.splu(lhs)
    v = phi.values.copy()
    for _ in range(cfg.steps):
        v = lu.solve(rhs_op @ v)
    return LevelSet(mesh, v)


@dataclass
class ReinitResult:
    phi: LevelSet
    converged: bool
    iterations: int
    rel_changes: list = field(default_factory=list)


def _cell_diameters(mesh: Mesh2D) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    return np.maximum(np.maximum(e0, e1), e2)


def approximate_sign(values, grad_norm, h):
    """sign(phi) ~ phi / sqrt(phi^2 + h^2 |grad phi|^2)."""
    return values / np.sqrt(values ** 2 + (h * grad_norm) ** 2)


def _gradient_jump_matrices(mesh, skel):
    g = cell_basis_gradients(mesh)
    mats = []
    for d in range(2):
        rows, cols, vals = [], [], []
        for k in range(skel.n_interior):
            for cell, sign in ((skel.left_cells[k], 1.0),
                               (skel.right_cells[k], -1.0)):
                for m in range(3):
                    rows.append(k)
                    cols.append(int(mesh.triangles[cell][m]))
                    vals.append(sign * g[cell, m, d])
        mats.append(sp.coo_matrix((vals, (rows, cols)),
                                  shape=(skel.n_interior,
                                         mesh.n_vertices)).tocsr())
    return mats


def reinitialize(phi0: LevelSet, cfg: ReinitConfig, mesh: Mesh2D,
                 skel: FacetSkeleton | None = None, cut0=None) -> ReinitResult:
    """Drive phi toward a signed distance function by Picard iterations on the
    steady reinitialization weak form.

    The interface surface penalty is kept on the frozen initial interface;
    the transport direction is refreshed from the current iterate each
    sweep. On non-convergence the best iterate is returned with the flag
    cleared rather than raising.
    """
    if cut0 is None:
        cut0 = build_cut(mesh, phi0)
    h_cells = _cell_diameters(mesh)
    grads0 = cell_field_gradients(mesh, phi0.values)
    gnorm0 = np.linalg.norm(grads0, axis=1)

    # per-cell quadrature data of sign_h(phi0): rhs vector, the per-cell
    # integral of N_i * sign_h (reused in the advection form) and the
    # integral of |sign_h| (viscosity magnitude)
    tri = mesh.triangles
    bary = np.array([[2 / 3, 1 / 6, 1 / 6],
                     [1 / 6, 2 / 3, 1 / 6],
                     [1 / 6, 1 / 6, 2 / 3]])
    w_q = np.array([1 / 6, 1 / 6, 1 / 6])
    vals_at_q = phi0.values[tri] @ bary.T                 # (nt, 3q)
    s0_q = vals_at_q / np.sqrt(
        vals_at_q ** 2 + (h_cells[:, None] * gnorm0[:, None]) ** 2)
    jac = 2.0 * mesh.areas
    b_cell = np.einsum("k,q,qm,kq->km", jac, w_q, bary, s0_q)   # int N_m s0

    b = np.zeros(mesh.n_vertices)
    np.add.at(b, tri.ravel(), b_cell.ravel())

    basis_grads = cell_basis_gradients(mesh)

    if cfg.variant == "viscosity":
        # |w| = 1 a.e. for the exact-sign transport field; weighting the
        # viscosity by the smoothed sign instead would switch it off near the
        # interface and steepen the first ring of nodes
        J_visc = p1_stiffness_matrix(mesh, cfg.c_r1 * h_cells)
    else:
        if skel is None:
            raise ValueError("interior_penalty variant needs the skeleton")
        gx, gy = _gradient_jump_matrices(mesh, skel)
        d = cfg.c_r2 * skel.h_f ** 2 * skel.h_f
        J_visc = (gx.T @ sp.diags(d) @ gx + gy.T @ sp.diags(d) @ gy).tocsr()

    # frozen interface mass: gamma_d/h int_Gamma(phi0) N_i N_j ds
    rows, cols, vals = [], [], []
    s3 = 3.0 ** -0.5
    for k, geom in cut0.cut_cells.items():
        p0, p1 = geom.iface
        length = float(np.hypot(float(p1[0]) - float(p0[0]),
                                float(p1[1]) - float(p0[1])))
        (x0, y0), (x1, y1), (x2, y2) = geom.corners
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        ids = geom.corner_ids
        for xi, w in ((0.5 - 0.5 * s3, 0.5), (0.5 + 0.5 * s3, 0.5)):
            x = (float(p0[0]) + xi * (float(p1[0]) - float(p0[0])),
                 float(p0[1]) + xi * (float(p1[1]) - float(p0[1])))
            l1 = ((x[0] - x0) * (y2 - y0) - (x[1] - y0) * (x2 - x0)) / det
            l2 = ((x[1] - y0) * (x1 - x0) - (x[0] - x0) * (y1 - y0)) / det
            N = (1.0 - l1 - l2, l1, l2)
            c = w * length * cfg.gamma_d / h_cells[k]
            for a in range(3):
                for bb in range(3):
                    rows.append(ids[a])
                    cols.append(ids[bb])
                    vals.append(c * N[a] * N[bb])
    P = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()

    v = phi0.values.copy()
    changes = []
    converged = False
    it = 0
    for it in range(1, cfg.picard_maxit + 1):
        grads = cell_field_gradients(mesh, v)
        gn = np.maximum(np.linalg.norm(grads, axis=1), 1e-10)
        u = grads / gn[:, None]
        # advection: C_ij = (int N_i s0) * (u_K . grad N_j)
        udotg = np.einsum("kd,knd->kn", u, basis_grads)
        blocks = np.einsum("km,kn->kmn", b_cell, udotg)
        r = np.repeat(tri, 3, axis=1).ravel()
        c = np.tile(tri, (1, 3)).ravel()
        C = sp.coo_matrix((blocks.ravel(), (r, c)),
                          shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
        lhs = (C + J_visc + P).tocsc()
        v_new = spla.splu(lhs).solve(b)
        change = float(np.linalg.norm(v_new - v) / np.linalg.norm(v))
        changes.append(change)
        v = v_new
        if change <= cfg.picard_tol:
            converged = True
            break
    return ReinitResult(LevelSet(mesh, v), converged, it, changes)
