"""Discrete optimality system of the magneto-static control problem.

Unknowns: the adjoint field ``E`` (edge elements, zero tangential trace),
the multiplier ``u`` (P1, zero trace) enforcing ``(E, grad phi) = 0`` and the
control-region potential ``v`` (P1 on the control submesh).  The system

    [ A  B^T  C^T ] [E]   [f]
    [ B   0    0  ] [u] = [0]
    [ C   0    D  ] [v]   [0]

with ``A = (mu^-1 rot, rot) + kappa^-1 (., .)_omega``,
``C = kappa^-1 (., grad)_omega`` and ``D = kappa^-1 (grad, grad)_omega`` is
symmetric indefinite; ``v`` is fixed up to a constant by pinning one dof.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .linalg import SolveReport, SolverError, solve
from .manufactured import ProblemData
from .mesh import Mesh
from .spaces import (DofMap, FeField, SpaceKind, SubdomainMap, build_dofmap,
                     control_submesh, discrete_gradient, interpolate_edge)


@dataclass
class Spaces:
    """All discrete spaces used on one mesh."""

    mesh: Mesh
    edge: DofMap            # zero tangential trace on Omega
    edge_free: DofMap       # no trace condition on Omega
    nodal: DofMap           # P1 zero trace on Omega
    sub: Mesh               # control submesh
    smap: SubdomainMap
    nodal_omega: DofMap     # P1 on the control region
    edge_omega: DofMap      # edge elements on the control region
    face_omega: DofMap      # RT with zero normal trace on the control boundary

    @property
    def n_dofs(self) -> int:
        """Size of the optimality system (E, u and v dofs)."""
        return self.edge.n_dofs + self.nodal.n_dofs + self.nodal_omega.n_dofs


def count_dofs(mesh: Mesh) -> int:
    """Size of the optimality system without building the spaces."""
    omega_vertices = np.unique(mesh.cells[mesh.in_omega]).size
    return (int((~mesh.boundary_edges).sum()) + int((~mesh.boundary_vertices).sum())
            + omega_vertices)


def build_spaces(mesh: Mesh) -> Spaces:
    sub, smap = control_submesh(mesh)
    return Spaces(
        mesh=mesh,
        edge=build_dofmap(mesh, SpaceKind.EDGE_ZERO_TRACE),
        edge_free=build_dofmap(mesh, SpaceKind.EDGE_FREE),
        nodal=build_dofmap(mesh, SpaceKind.NODAL_ZERO_TRACE),
        sub=sub, smap=smap,
        nodal_omega=build_dofmap(sub, SpaceKind.NODAL_OMEGA),
        edge_omega=build_dofmap(sub, SpaceKind.EDGE_FREE),
        face_omega=build_dofmap(sub, SpaceKind.FACE_ZERO_TRACE_OMEGA),
    )


@dataclass
class KktSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: tuple          # (0, nE, nE + nu, nE + nu + nv)
    blocks: dict = field(repr=False)
    pinned: Optional[int] = None   # global index of the pinned v dof

    def split(self, x):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]

    @property
    def shape(self):
        return self.matrix.shape


def assemble_kkt(spaces: Spaces, data: ProblemData) -> KktSystem:
    mesh, kappa = spaces.mesh, data.kappa
    if spaces.sub.n_cells == 0:
        raise ValueError("mesh has no control cells")
    om = np.flatnonzero(mesh.in_omega)
    A = (asm.assemble_curl_curl(mesh, spaces.edge, 1.0 / mesh.mu)
         + asm.assemble_vector_mass(mesh, spaces.edge, 1.0 / kappa, cells=om))
    B = asm.assemble_mixed_b(mesh, spaces.edge, spaces.nodal)
    C = asm.assemble_mixed_c(spaces.sub, spaces.smap, spaces.edge, spaces.nodal_omega, kappa)
    D = asm.assemble_nodal_stiffness(spaces.sub, spaces.nodal_omega, 1.0 / kappa)
    f = asm.assemble_load(mesh, spaces.edge, data.j_d, data.J, data.H_d)
    nE, nu, nv = A.shape[0], B.shape[0], D.shape[0]
    K = sp.bmat([[A, B.T, C.T], [B, None, None], [C, None, D]], format="csr")
    K.sort_indices()
    rhs = np.concatenate([f, np.zeros(nu + nv)])
    return KktSystem(K, rhs, (0, nE, nE + nu, nE + nu + nv),
                     {"A": A, "B": B, "C": C, "D": D, "f": f})


def gauge_fix_v(system: KktSystem, local_index: int = 0) -> KktSystem:
    """Pin the v dof ``local_index`` (default the lowest) to zero."""
    o = system.offsets
    if not 0 <= local_index < o[3] - o[2]:
        raise IndexError("v dof out of range")
    k = o[2] + local_index
    K = system.matrix.tolil(copy=True)
    K[k, :] = 0.0
    K[:, k] = 0.0
    K[k, k] = 1.0
    K = K.tocsr()
    K.eliminate_zeros()
    K.sort_indices()
    rhs = system.rhs.copy()
    rhs[k] = 0.0
    return replace(system, matrix=K, rhs=rhs, pinned=k)


@dataclass
class OptimalitySolution:
    spaces: Spaces
    data: ProblemData
    E: FeField
    u: FeField
    v: FeField
    j: FeField              # recovered control on the control submesh (edge space)
    j_d: FeField            # interpolated shift control
    H_d: FeField            # interpolated H_d in the trace-free edge space
    report: SolveReport

    def H_at(self, bary) -> np.ndarray:
        """``mu^-1 rot E_h + H_d,h`` at barycentric points of every cell."""
        mesh = self.spaces.mesh
        c = self.E.curl() / mesh.mu[:, None]
        return c[:, None, :] + self.H_d.evaluate(bary)

    def j_at(self, bary) -> np.ndarray:
        """Recovered control at barycentric points of every control cell."""
        return self.j.evaluate(bary)

    def E_omega(self) -> FeField:
        """``E_h`` restricted to the control submesh (free edge space)."""
        sp_ = self.spaces
        return sp_.smap.restrict(self.E, sp_.edge_omega)

    def grad_v(self) -> np.ndarray:
        return self.v.grad()

    def pi_omega(self) -> FeField:
        """``E_h|omega + grad v_h`` as an edge field on the control submesh."""
        sp_ = self.spaces
        G = discrete_gradient(sp_.edge_omega, sp_.nodal_omega)
        return FeField(sp_.edge_omega, self.E_omega().coeffs + G @ self.v.coeffs)


def recover(spaces: Spaces, data: ProblemData, x_E, x_u, x_v, report) -> OptimalitySolution:
    E = FeField(spaces.edge, x_E)
    u = FeField(spaces.nodal, x_u)
    v = FeField(spaces.nodal_omega, x_v)
    jd = interpolate_edge(data.j_d, spaces.edge_omega)
    Hd = interpolate_edge(data.H_d, spaces.edge_free)
    sol = OptimalitySolution(spaces, data, E, u, v, jd, jd, Hd, report)
    sol.j = FeField(spaces.edge_omega, jd.coeffs - sol.pi_omega().coeffs / data.kappa)
    return sol


def solve_optimality(system: KktSystem, spaces: Spaces, data: ProblemData,
                     method: str = "minres", tol: float = 1e-10,
                     maxiter: Optional[int] = None) -> OptimalitySolution:
    """Solve a gauge-fixed system and recover ``j_h`` and ``H_h``."""
    if system.pinned is None:
        raise ValueError("system must be gauge fixed before solving")
    M = None
    if method == "minres":
        from .linalg import jacobi
        M = jacobi(system.matrix)
    x, rep = solve(system.matrix, system.rhs, method=method, tol=tol, M=M, maxiter=maxiter)
    bnorm = np.linalg.norm(system.rhs)
    if bnorm > 0 and not np.linalg.norm(system.matrix @ x - system.rhs) <= max(tol, 1e-8) * bnorm:
        raise SolverError(f"KKT residual too large: {rep}")
    return recover(spaces, data, *system.split(x), rep)


def solve_on_mesh(mesh: Mesh, data: ProblemData, method: str = "minres",
                  tol: float = 1e-10) -> OptimalitySolution:
    spaces = build_spaces(mesh)
    system = gauge_fix_v(assemble_kkt(spaces, data))
    return solve_optimality(system, spaces, data, method=method, tol=tol)
