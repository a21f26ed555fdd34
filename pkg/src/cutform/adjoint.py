"""Staggered forward solves and the reverse-order adjoint chain.

A problem is k sequentially coupled residuals R_i(u_1..u_i, v_i, phi), each
linear in its test function. The adjoint stages solve the transposed systems
in reverse order; the total derivative combines the explicit phi-derivative
of J with the phi-derivatives of the residuals at frozen fields, both
evaluated by dual propagation through the cut geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SolverError
from .fem import LinearSystem, solve
from .levelset import LevelSet


@dataclass
class Stage:
    """One residual R_i of a staggered chain.

    assemble(us, phi) -> LinearSystem for the unknown u_i given the previous
    solutions; the residual is R_i(u) = A_i u_i - b_i(u_1..u_{i-1}, phi).
    partial_u_prev[j] assembles the full-size matrix d R_i / d u_j for j < i.
    partial_phi(us, lam_i, phi) evaluates d/dphi [R_i at frozen fields tested
    with lam_i] as a nodal gradient vector.
    """

    assemble: Callable
    partial_u_prev: dict = field(default_factory=dict)
    partial_phi: Callable = None
    name: str = ""


@dataclass
class StaggeredProblem:
    stages: list
    J: Callable                      # (us, phi) -> float
    partial_u_J: list                # per stage: (us, phi) -> full-size vec
    partial_phi_J: Callable          # (us, phi) -> nodal gradient vector

    @property
    def k(self):
        return len(self.stages)


def solve_forward(problem: StaggeredProblem, phi: LevelSet):
    """Solve the stages in order; stage i sees u_1..u_{i-1}.

    Returns (solutions, systems); the systems are kept for the transposed
    adjoint solves.
    """
    us, systems = [], []
    for i, stage in enumerate(problem.stages):
        try:
            system = stage.assemble(us, phi)
            us.append(solve(system))
        except SolverError as exc:
            raise SolverError(f"forward stage {i + 1} failed: {exc}") from exc
        systems.append(system)
    return us, systems


def _transposed_solve(system: LinearSystem, rhs_full: np.ndarray,
                      stage_idx: int) -> np.ndarray:
    try:
        lu = spla.splu(system.matrix.T.tocsc())
        lam_free = lu.solve(rhs_full[system.free])
    except RuntimeError as exc:
        raise SolverError(
            f"adjoint stage {stage_idx + 1} transposed solve failed: {exc}")
    lam = np.zeros(system.n_dofs)
    lam[system.free] = lam_free
    return lam


def solve_adjoint(problem: StaggeredProblem, us, phi: LevelSet,
                  systems=None):
    """Reverse-order adjoint solves.

    Stage i solves (d_{u_i} R_i)^T lam_i = d_{u_i} J - sum_{j>i}
    (d_{u_i} R_j)^T lam_j; adjoints vanish on Dirichlet dofs.
    """
    if systems is None:
        systems = []
        for i, stage in enumerate(problem.stages):
            systems.append(stage.assemble(us[:i], phi))
    k = problem.k
    lams = [None] * k
    for i in reversed(range(k)):
        rhs = np.asarray(problem.partial_u_J[i](us, phi), dtype=float).copy()
        for j in range(i + 1, k):
            dRj_dui = problem.stages[j].partial_u_prev.get(i)
            if dRj_dui is not None:
                rhs -= dRj_dui(us, phi).T @ lams[j]
        lams[i] = _transposed_solve(systems[i], rhs, i)
    return lams


def total_derivative(problem: StaggeredProblem, us, lams,
                     phi: LevelSet) -> np.ndarray:
    """dJ(phi; w_i) = d_phi J - sum_i d_phi R_i(u, lam_i) per node."""
    grad = np.asarray(problem.partial_phi_J(us, phi), dtype=float).copy()
    for stage, lam in zip(problem.stages, lams):
        if stage.partial_phi is not None:
            grad -= stage.partial_phi(us, lam, phi)
    return grad


def residual(problem: StaggeredProblem, i: int, us, phi: LevelSet,
             system: LinearSystem | None = None) -> np.ndarray:
    """Free-dof residual of stage i at the given solutions."""
    if system is None:
        system = problem.stages[i].assemble(us[:i], phi)
    return system.matrix @ us[i][system.free] - system.rhs


def lagrangian(problem: StaggeredProblem, us, lams, phi: LevelSet,
               systems=None) -> float:
    """J minus the adjoint-weighted residuals; equals J at the forward
    solution for any multipliers."""
    val = float(problem.J(us, phi))
    for i in range(problem.k):
        system = systems[i] if systems is not None else None
        r = residual(problem, i, us, phi, system)
        sys_i = system if system is not None else \
            problem.stages[i].assemble(us[:i], phi)
        val -= float(lams[i][sys_i.free] @ r)
    return val
