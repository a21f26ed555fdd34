"""Ready-made staggered problems on cut domains: scalar-diffusion compliance
(one stage) and a thermo-elastic chain (two stages). Shared by the tests, the
acceptance suite and the optimization demos."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .adjoint import Stage, StaggeredProblem
from .fem import (assemble_cut_elasticity, assemble_cut_poisson,
                  cell_basis_gradients, cell_field_gradients,
                  elastic_energy_density)
from .functionals import DEFAULT_RULE, ad_node_gradient, tri_quadrature
from .levelset import IN, build_cut
from .mesh import Mesh2D


def p1_value(corners, nodal3, point):
    """Evaluate a P1 field (3 corner values) at a generic point."""
    (x0, y0), (x1, y1), (x2, y2) = corners
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((point[0] - x0) * (y2 - y0) - (point[1] - y0) * (x2 - x0)) / det
    l2 = ((point[1] - y0) * (x1 - x0) - (point[0] - x0) * (y1 - y0)) / det
    return (nodal3[0] * (1.0 - l1 - l2) + nodal3[1] * l1 + nodal3[2] * l2)


def cell_in_area(geom):
    return geom.sub_area(IN)


def in_quadrature(geom, fn, rule=DEFAULT_RULE):
    """Integrate fn(x, y) over the cell's IN sub-simplices (generic)."""
    total = 0.0
    for p0, p1, p2, phase in geom.subs:
        if phase == IN:
            total = total + tri_quadrature(fn, p0, p1, p2, rule)
    return total


def poisson_compliance_problem(mesh: Mesh2D, skel, f=1.0,
                               dirichlet_tags=("left",), gamma=1e-7,
                               rule=DEFAULT_RULE) -> StaggeredProblem:
    """k = 1: cut Poisson state with load f, objective J = int_Omega f u."""
    fcall = f if callable(f) else (lambda x, y: f)

    def assemble(us, phi):
        cut = build_cut(mesh, phi)
        return assemble_cut_poisson(mesh, cut, skel, gamma=gamma, f=fcall,
                                    dirichlet_tags=dirichlet_tags, rule=rule)

    def partial_phi_R(us, lam, phi):
        cut = build_cut(mesh, phi)
        gu = cell_field_gradients(mesh, us[0])
        gl = cell_field_gradients(mesh, lam)
        energy = np.einsum("kd,kd->k", gu, gl)

        def cell_term(k, geom):
            ids = mesh.triangles[k]
            lam3 = lam[ids]
            load = in_quadrature(
                geom,
                lambda x, y: fcall(x, y) * p1_value(geom.corners, lam3,
                                                    (x, y)),
                rule)
            return energy[k] * cell_in_area(geom) - load

        return ad_node_gradient(mesh, phi, cell_term, cut=cut)

    def J(us, phi):
        cut = build_cut(mesh, phi)
        total = 0.0
        u = us[0]
        for k in range(mesh.n_cells):
            ids = mesh.triangles[k]
            u3 = u[ids]
            corners = tuple(map(tuple, mesh.vertices[ids]))
            fn = lambda x, y: fcall(x, y) * p1_value(corners, u3, (x, y))
            if k in cut.cut_cells:
                total += float(in_quadrature(cut.cut_cells[k], fn, rule))
            elif cut.states[k] == IN:
                total += float(tri_quadrature(fn, *corners, rule))
        return total

    def partial_u_J(us, phi):
        # J is linear in u: the derivative is the load vector itself
        cut = build_cut(mesh, phi)
        system = assemble_cut_poisson(mesh, cut, skel, gamma=gamma, f=fcall,
                                      dirichlet_tags=(), rule=rule)
        b = np.zeros(system.n_dofs)
        b[system.free] = system.rhs
        return b

    def partial_phi_J(us, phi):
        cut = build_cut(mesh, phi)
        u = us[0]

        def cell_term(k, geom):
            u3 = u[mesh.triangles[k]]
            return in_quadrature(
                geom,
                lambda x, y: fcall(x, y) * p1_value(geom.corners, u3, (x, y)),
                rule)

        return ad_node_gradient(mesh, phi, cell_term, cut=cut)

    stage = Stage(assemble, {}, partial_phi_R, name="diffusion")
    return StaggeredProblem([stage], J, [partial_u_J], partial_phi_J)


def _coupling_matrix(mesh: Mesh2D, cut, alpha: float,
                     rule=DEFAULT_RULE) -> sp.csr_matrix:
    """B maps a nodal temperature to the elastic load alpha int u1 div(s):
    rows are vector dofs, columns scalar nodes; integrals over the IN phase.
    """
    g = cell_basis_gradients(mesh)
    rows, cols, vals = [], [], []
    for k in range(mesh.n_cells):
        if cut.states[k] == 1:  # OUT
            continue
        ids = mesh.triangles[k]
        corners = tuple(map(tuple, mesh.vertices[ids]))
        if k in cut.cut_cells:
            geom = cut.cut_cells[k]
            moments = [float(in_quadrature(
                geom, lambda x, y, m=m: _bary_component(corners, m, (x, y)),
                rule)) for m in range(3)]
        else:
            area = mesh.areas[k]
            moments = [area / 3.0] * 3
        for i in range(3):          # test function node (vector dof)
            for m in range(3):      # temperature node
                for comp in range(2):
                    rows.append(2 * int(ids[i]) + comp)
                    cols.append(int(ids[m]))
                    vals.append(alpha * g[k, i, comp] * moments[m])
    return sp.coo_matrix(
        (vals, (rows, cols)),
        shape=(2 * mesh.n_vertices, mesh.n_vertices)).tocsr()


def _bary_component(corners, m, point):
    vals = [0.0, 0.0, 0.0]
    vals[m] = 1.0
    return p1_value(corners, vals, point)


def thermoelastic_problem(mesh: Mesh2D, skel, lame=(0.5769, 0.3846),
                          alpha=1.0, f_heat=1.0, dirichlet_tags=("left",),
                          gamma=1e-7, rule=DEFAULT_RULE) -> StaggeredProblem:
    """k = 2: scalar diffusion feeds a thermal-expansion load into elasticity;
    the objective is the squared displacement integral over the material."""

    def assemble_heat(us, phi):
        cut = build_cut(mesh, phi)
        return assemble_cut_poisson(mesh, cut, skel, gamma=gamma, f=f_heat,
                                    dirichlet_tags=dirichlet_tags, rule=rule)

    def assemble_elast(us, phi):
        cut = build_cut(mesh, phi)
        system = assemble_cut_elasticity(mesh, cut, skel, lame=lame,
                                         gamma=gamma,
                                         dirichlet_tags=dirichlet_tags,
                                         rule=rule)
        B = _coupling_matrix(mesh, cut, alpha, rule)
        load = B @ us[0]
        system.rhs = system.rhs + load[system.free]
        return system

    def dR2_du1(us, phi):
        cut = build_cut(mesh, phi)
        return -_coupling_matrix(mesh, cut, alpha, rule)

    def partial_phi_R1(us, lam, phi):
        cut = build_cut(mesh, phi)
        gu = cell_field_gradients(mesh, us[0])
        gl = cell_field_gradients(mesh, lam)
        energy = np.einsum("kd,kd->k", gu, gl)

        def cell_term(k, geom):
            lam3 = lam[mesh.triangles[k]]
            load = in_quadrature(
                geom, lambda x, y: f_heat * p1_value(geom.corners, lam3,
                                                     (x, y)), rule)
            return energy[k] * cell_in_area(geom) - load

        return ad_node_gradient(mesh, phi, cell_term, cut=cut)

    def partial_phi_R2(us, lam, phi):
        cut = build_cut(mesh, phi)
        energy = elastic_energy_density(mesh, lame, us[1], lam)
        g = cell_basis_gradients(mesh)
        u1 = us[0]
        # div(lam) per cell
        lx = lam[0::2][mesh.triangles]
        ly = lam[1::2][mesh.triangles]
        div_lam = (np.einsum("km,km->k", lx, g[:, :, 0])
                   + np.einsum("km,km->k", ly, g[:, :, 1]))

        def cell_term(k, geom):
            u13 = u1[mesh.triangles[k]]
            coupling = in_quadrature(
                geom,
                lambda x, y: alpha * p1_value(geom.corners, u13, (x, y)),
                rule) * div_lam[k]
            return energy[k] * cell_in_area(geom) - coupling

        return ad_node_gradient(mesh, phi, cell_term, cut=cut)

    def J(us, phi):
        cut = build_cut(mesh, phi)
        d = us[1]
        total = 0.0
        for k in range(mesh.n_cells):
            if cut.states[k] == 1:
                continue
            ids = mesh.triangles[k]
            corners = tuple(map(tuple, mesh.vertices[ids]))
            dx3, dy3 = d[2 * ids], d[2 * ids + 1]
            fn = lambda x, y: (p1_value(corners, dx3, (x, y)) ** 2
                               + p1_value(corners, dy3, (x, y)) ** 2)
            if k in cut.cut_cells:
                total += float(in_quadrature(cut.cut_cells[k], fn, rule))
            else:
                total += float(tri_quadrature(fn, *corners, rule))
        return total

    def partial_u1_J(us, phi):
        return np.zeros(mesh.n_vertices)

    def partial_u2_J(us, phi):
        cut = build_cut(mesh, phi)
        d = us[1]
        b = np.zeros(2 * mesh.n_vertices)
        for k in range(mesh.n_cells):
            if cut.states[k] == 1:
                continue
            ids = mesh.triangles[k]
            corners = tuple(map(tuple, mesh.vertices[ids]))
            for comp in range(2):
                d3 = d[2 * ids + comp]
                for m in range(3):
                    fn = lambda x, y: (2.0 * p1_value(corners, d3, (x, y))
                                       * _bary_component(corners, m, (x, y)))
                    if k in cut.cut_cells:
                        val = float(in_quadrature(cut.cut_cells[k], fn, rule))
                    else:
                        val = float(tri_quadrature(fn, *corners, rule))
                    b[2 * ids[m] + comp] += val
        return b

    def partial_phi_J(us, phi):
        cut = build_cut(mesh, phi)
        d = us[1]

        def cell_term(k, geom):
            ids = mesh.triangles[k]
            dx3, dy3 = d[2 * ids], d[2 * ids + 1]
            return in_quadrature(
                geom,
                lambda x, y: (p1_value(geom.corners, dx3, (x, y)) ** 2
                              + p1_value(geom.corners, dy3, (x, y)) ** 2),
                rule)

        return ad_node_gradient(mesh, phi, cell_term, cut=cut)

    heat = Stage(assemble_heat, {}, partial_phi_R1, name="diffusion")
    elast = Stage(assemble_elast, {0: dR2_du1}, partial_phi_R2,
                  name="elasticity")
    return StaggeredProblem([heat, elast], J, [partial_u1_J, partial_u2_J],
                            partial_phi_J)
