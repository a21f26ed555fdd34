"""Augmented-Lagrangian loop for volume-constrained minimization: gradient,
Hilbertian extension, normal-velocity transport, periodic reinitialization."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .adjoint import Stage, StaggeredProblem, solve_adjoint, solve_forward, \
    total_derivative
from .errors import SolverError
from .evolve import (EvolveConfig, ReinitConfig, TransportOperators, evolve,
                     reinitialize)
from .fem import (HilbertianExtension, assemble_cut_elasticity,
                  compute_velocity, elastic_energy_density)
from .functionals import ad_node_gradient
from .geometries import hole_lattice, with_material_disk
from .isolated import (build_cut_graph, colour_graph, dirichlet_cells,
                       mark_isolated)
from .levelset import IN, LevelSet, build_cut
from .mesh import Mesh2D, build_skeleton, build_structured_mesh
from .problems import cell_in_area, in_quadrature, p1_value


@dataclass
class OptConfig:
    v_f: float
    max_iters: int = 300
    tol_c: float = 1e-3
    cfl: float = 0.1
    evolve_steps: int = 5
    r_freq: int = 5
    rho0: float | None = None
    rho_growth: float = 1.1
    rho_max: float | None = None
    c_e: float = 0.01
    alpha: float | None = None          # Hilbertian length scale, default 2h
    stagnation_window: int = 10
    stagnation_tol: float = 1e-3
    min_iters: int = 5
    track_reinit_objective: bool = False
    reinit: ReinitConfig = field(default_factory=ReinitConfig)
    snapshot_every: int = 0             # VTK cadence, 0 disables


@dataclass
class ALState:
    lam: float = 0.0
    rho: float = 1.0
    rho_max: float = np.inf
    iteration: int = 0
    history: list = field(default_factory=list)


class VolumeOnlyProblem:
    """J identically zero; only the volume constraint drives the flow."""

    def __init__(self, mesh: Mesh2D, skel=None):
        self.mesh = mesh
        self.skel = skel if skel is not None else build_skeleton(mesh)
        self.nondesign_mask = np.zeros(mesh.n_vertices, dtype=bool)

    def objective_and_gradient(self, phi, cut):
        return 0.0, np.zeros(self.mesh.n_vertices)


class ComplianceProblem:
    """Minimum compliance of ghost-stabilized cut elasticity.

    The objective is the external work of the boundary traction; its shape
    derivative runs through the one-stage adjoint chain with the
    phi-derivatives evaluated by dual propagation.
    """

    def __init__(self, mesh: Mesh2D, skel, lame=(0.5769, 0.3846),
                 gamma: float = 1e-7, dirichlet_tags=("left",),
                 traction_facets=None, traction=(0.0, -1.0),
                 nondesign_mask=None):
        self.mesh = mesh
        self.skel = skel
        self.lame = lame
        self.gamma = gamma
        self.dirichlet_tags = dirichlet_tags
        self.traction_facets = traction_facets
        self.traction = traction
        self.nondesign_mask = (nondesign_mask if nondesign_mask is not None
                               else np.zeros(mesh.n_vertices, dtype=bool))
        self._dirichlet_cells = dirichlet_cells(mesh, dirichlet_tags)

    def _psi(self, cut):
        G = build_cut_graph(self.mesh, cut)
        col = colour_graph(G)
        return mark_isolated(col, G, self._dirichlet_cells, phase=IN)

    def _staggered(self, cut, psi):
        mesh, skel = self.mesh, self.skel

        def assemble(us, phi):
            return assemble_cut_elasticity(
                mesh, cut, skel, lame=self.lame, psi=psi, gamma=self.gamma,
                dirichlet_tags=self.dirichlet_tags,
                tractions=[(self.traction_facets, self.traction)])

        def partial_u_J(us, phi):
            system = assemble_cut_elasticity(
                mesh, cut, skel, lame=self.lame, psi=None, gamma=self.gamma,
                dirichlet_tags=(),
                tractions=[(self.traction_facets, self.traction)])
            b = np.zeros(system.n_dofs)
            b[system.free] = system.rhs
            return b

        def partial_phi_R(us, lam, phi):
            energy = elastic_energy_density(mesh, self.lame, us[0], lam)
            flagged = set(np.flatnonzero(psi)) if psi is not None else set()
            d = us[0]

            def cell_term(k, geom):
                term = energy[k] * cell_in_area(geom)
                if k in flagged:
                    ids = mesh.triangles[k]
                    dx3, dy3 = d[2 * ids], d[2 * ids + 1]
                    lx3, ly3 = lam[2 * ids], lam[2 * ids + 1]
                    term = term + in_quadrature(
                        geom,
                        lambda x, y: (
                            p1_value(geom.corners, dx3, (x, y))
                            * p1_value(geom.corners, lx3, (x, y))
                            + p1_value(geom.corners, dy3, (x, y))
                            * p1_value(geom.corners, ly3, (x, y))))
                return term

            return ad_node_gradient(mesh, phi, cell_term, cut=cut)

        def J(us, phi):
            b = partial_u_J(us, phi)
            return float(b @ us[0])

        stage = Stage(assemble, {}, partial_phi_R, name="elasticity")
        return StaggeredProblem(
            [stage], J, [partial_u_J],
            lambda us, phi: np.zeros(mesh.n_vertices))

    def objective_and_gradient(self, phi, cut):
        psi = self._psi(cut)
        problem = self._staggered(cut, psi if np.any(psi) else None)
        us, systems = solve_forward(problem, phi)
        lams = solve_adjoint(problem, us, phi, systems)
        J = problem.J(us, phi)
        dJ = total_derivative(problem, us, lams, phi)
        return J, dJ


def volume_constraint(mesh, cut, v_f):
    return float(cut.in_area()) - v_f * mesh.total_area()


def volume_gradient(mesh, phi, cut):
    return ad_node_gradient(mesh, phi, lambda k, geom: cell_in_area(geom),
                            cut=cut)


@dataclass
class OptDriver:
    """Bundles the problem with the mesh-fixed solver machinery."""

    problem: object
    cfg: OptConfig
    hilb: HilbertianExtension = None
    transport: TransportOperators = None

    def __post_init__(self):
        mesh = self.problem.mesh
        alpha = self.cfg.alpha if self.cfg.alpha is not None \
            else 2.0 * mesh.h_min
        if self.hilb is None:
            self.hilb = HilbertianExtension(mesh, alpha)
        if self.transport is None:
            self.transport = TransportOperators(mesh, self.problem.skel)


def al_step(driver: OptDriver, phi: LevelSet, state: ALState):
    """One augmented-Lagrangian update.

    Forms L = J + lam*C + rho/2 C^2, extends its gradient, advects with the
    CFL-limited normal velocity, then updates the multiplier and penalty.
    Reinitialization runs every cfg.r_freq iterations.
    """
    problem, cfg = driver.problem, driver.cfg
    mesh = problem.mesh
    cut = build_cut(mesh, phi)
    C = volume_constraint(mesh, cut, cfg.v_f)
    J, dJ = problem.objective_and_gradient(phi, cut)
    dC = volume_gradient(mesh, phi, cut)
    dL = dJ + (state.lam + state.rho * C) * dC

    g = driver.hilb.solve(dL)
    descent = float(g @ dL)
    beta = compute_velocity(g, phi, mesh)
    beta[problem.nondesign_mask] = 0.0
    max_beta = float(np.max(np.linalg.norm(beta, axis=1)))

    if not np.isfinite(J) or not np.isfinite(C):
        raise SolverError(f"non-finite objective/constraint: J={J}, C={C}")

    if max_beta > 1e-14:
        dt = cfg.cfl * mesh.h_min / max_beta
        phi_new = evolve(phi, beta, EvolveConfig(dt=dt,
                                                 steps=cfg.evolve_steps,
                                                 c_e=cfg.c_e),
                         mesh, problem.skel, ops=driver.transport)
    else:
        dt = 0.0
        phi_new = phi

    state.lam += state.rho * C
    state.rho = min(state.rho * cfg.rho_growth, state.rho_max)
    state.iteration += 1

    reinit_done = False
    J_before = J_after = None
    if cfg.r_freq > 0 and state.iteration % cfg.r_freq == 0:
        if cfg.track_reinit_objective:
            cut_b = build_cut(mesh, phi_new)
            J_before, _ = problem.objective_and_gradient(phi_new, cut_b)
        res = reinitialize(phi_new, cfg.reinit, mesh, problem.skel)
        phi_new = res.phi
        reinit_done = True
        if cfg.track_reinit_objective:
            cut_a = build_cut(mesh, phi_new)
            J_after, _ = problem.objective_and_gradient(phi_new, cut_a)

    state.history.append({
        "iter": state.iteration, "J": J, "C": C, "lam": state.lam,
        "rho": state.rho, "max_beta": max_beta, "dt": dt,
        "descent": descent, "reinit": int(reinit_done),
        "J_before_reinit": J_before, "J_after_reinit": J_after,
    })
    return phi_new, state


HISTORY_FIELDS = ("iter", "J", "C", "lam", "rho", "max_beta", "dt",
                  "descent", "reinit")


def write_history_csv(path, history):
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_FIELDS) + "\n")
        for row in history:
            cells = []
            for key in HISTORY_FIELDS:
                v = row[key]
                cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


def run(driver: OptDriver, phi0: LevelSet, out_dir=None):
    """Iterate al_step until the constraint settles and the objective
    stagnates, or the iteration budget runs out."""
    cfg = driver.cfg
    state = ALState()
    cut0 = build_cut(driver.problem.mesh, phi0)
    C0 = volume_constraint(driver.problem.mesh, cut0, cfg.v_f)
    J0, _ = driver.problem.objective_and_gradient(phi0, cut0)
    if cfg.rho0 is not None:
        state.rho = cfg.rho0
    else:
        state.rho = max(0.1 * abs(J0) / max(C0 * C0, 1e-12), 1.0)
    state.rho_max = cfg.rho_max if cfg.rho_max is not None \
        else 1000.0 * state.rho

    phi = phi0
    for _ in range(cfg.max_iters):
        phi, state = al_step(driver, phi, state)
        if out_dir and cfg.snapshot_every and \
                state.iteration % cfg.snapshot_every == 0:
            from .vtkio import write_levelset_vtk
            write_levelset_vtk(
                os.path.join(out_dir, f"phi_{state.iteration:04d}.vtk"),
                driver.problem.mesh, phi)
        C = state.history[-1]["C"]
        if abs(C) <= cfg.tol_c and state.iteration >= cfg.min_iters:
            window = [h["J"] for h in state.history[-cfg.stagnation_window:]]
            if len(window) >= cfg.stagnation_window:
                spread = max(window) - min(window)
                scale = max(abs(window[-1]), 1e-12)
                if spread <= cfg.stagnation_tol * scale:
                    break
    if out_dir:
        write_history_csv(os.path.join(out_dir, "history.csv"), state.history)
    return phi, state


def cantilever_setup(nx=100, ny=50, v_f=0.4, lame=(0.5769, 0.3846),
                     gamma=1e-7):
    """2D cantilever: left edge clamped, downward traction at the right
    mid-edge, perforated initial design below the target volume."""
    mesh = build_structured_mesh(nx, ny, ((0.0, 2.0), (0.0, 1.0)))
    skel = build_skeleton(mesh)
    traction_facets = mesh.select_boundary_facets(
        lambda x, y: abs(x - 2.0) < 1e-9 and abs(y - 0.5) <= 0.0500001)
    load_center = (2.0, 0.5)
    nd_radius = 0.1
    nondesign = np.linalg.norm(mesh.vertices - np.array(load_center),
                               axis=1) < nd_radius
    base = hole_lattice(kx=3.0, ky=3.0, threshold=0.3)
    fn = with_material_disk(base, load_center[0], load_center[1],
                            nd_radius + 0.02)
    phi0 = LevelSet.from_function(mesh, fn)
    problem = ComplianceProblem(mesh, skel, lame=lame, gamma=gamma,
                                dirichlet_tags=("left",),
                                traction_facets=traction_facets,
                                nondesign_mask=nondesign)
    return problem, phi0


def circle_volume_setup(n=48, v_f=0.5, r0=0.23):
    mesh = build_structured_mesh(n, n)
    problem = VolumeOnlyProblem(mesh)
    from .geometries import circle
    phi0 = LevelSet.from_function(mesh, circle(r=r0))
    return problem, phi0
