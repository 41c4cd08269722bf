"""Assembly of bilinear forms and load vectors.

All element matrices are computed for every cell at once and scattered into
a CSR matrix over free dofs only; constrained dofs are dropped at scatter
time.  Matrices of bilinear forms ``m(u, v)`` are returned with rows indexed
by the test space and columns by the trial space.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, Mesh
from .quadrature import tet_rule
from .spaces import DofMap, SubdomainMap, edge_basis_values, edge_curls

LOAD_DEGREE = 5


class SparseMatrixBuilder:
    """Triplet accumulator; duplicates are summed in a fixed order."""

    def __init__(self, shape):
        self.shape = shape
        self._rows, self._cols, self._vals = [], [], []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self._rows.append(rows[keep])
        self._cols.append(cols[keep])
        self._vals.append(vals[keep])

    def tocsr(self) -> sp.csr_matrix:
        if not self._rows:
            return sp.csr_matrix(self.shape)
        A = sp.coo_matrix((np.concatenate(self._vals),
                           (np.concatenate(self._rows), np.concatenate(self._cols))),
                          shape=self.shape).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _scatter(local, row_dm: DofMap, col_dm: DofMap, cells=None,
             row_cells=None, col_cells=None) -> sp.csr_matrix:
    """Scatter signed element matrices ``local`` (n, nr, nc)."""
    rc = cells if row_cells is None else row_cells
    cc = cells if col_cells is None else col_cells
    sl_r = slice(None) if rc is None else rc
    sl_c = slice(None) if cc is None else cc
    rd, rs = row_dm.cell_dofs[sl_r], row_dm.cell_signs[sl_r]
    cd, cs = col_dm.cell_dofs[sl_c], col_dm.cell_signs[sl_c]
    vals = rs[:, :, None] * local * cs[:, None, :]
    b = SparseMatrixBuilder((row_dm.n_dofs, col_dm.n_dofs))
    b.add(np.broadcast_to(rd[:, :, None], vals.shape),
          np.broadcast_to(cd[:, None, :], vals.shape), vals)
    return b.tocsr()


def _scatter_vector(local, dm: DofMap, cells=None) -> np.ndarray:
    sl = slice(None) if cells is None else cells
    d, s = dm.cell_dofs[sl], dm.cell_signs[sl]
    vals = (s * local).ravel()
    d = d.ravel()
    keep = d >= 0
    return np.bincount(d[keep], weights=vals[keep], minlength=dm.n_dofs)


def _cellwise(weight, mesh: Mesh, default=1.0):
    if weight is None:
        return np.full(mesh.n_cells, default)
    w = np.asarray(weight, dtype=float)
    return np.full(mesh.n_cells, float(w)) if w.ndim == 0 else w


def _lambda_moments(degree=2):
    r = tet_rule(degree)
    m1 = r.weights @ r.points                              # int lambda_i / |T|
    m2 = np.einsum("q,qi,qj->ij", r.weights, r.points, r.points)
    return m1, m2


# ----------------------------------------------------------------------
# edge space forms

def local_curl_curl(mesh: Mesh, coefficient=None) -> np.ndarray:
    c = edge_curls(mesh)
    w = _cellwise(coefficient, mesh) * mesh.volumes
    return w[:, None, None] * np.einsum("tid,tjd->tij", c, c)


def assemble_curl_curl(mesh: Mesh, dm: DofMap, coefficient=None) -> sp.csr_matrix:
    """``(coef rot u, rot v)``; coefficient is cellwise (default 1)."""
    return _scatter(local_curl_curl(mesh, coefficient), dm, dm)


def local_edge_mass(mesh: Mesh, weight=None, cells=None) -> np.ndarray:
    sl = slice(None) if cells is None else cells
    g = mesh.grad_lambda[sl]
    vol = mesh.volumes[sl] * _cellwise(weight, mesh)[sl]
    _, m2 = _lambda_moments(2)
    gg = np.einsum("tid,tjd->tij", g, g)
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    # int (l_i g_j - l_j g_i).(l_k g_l - l_l g_k)
    loc = (m2[i][:, i][None] * gg[:, j][:, :, j]
           - m2[i][:, j][None] * gg[:, j][:, :, i]
           - m2[j][:, i][None] * gg[:, i][:, :, j]
           + m2[j][:, j][None] * gg[:, i][:, :, i])
    return vol[:, None, None] * loc


def assemble_vector_mass(mesh: Mesh, dm: DofMap, weight=None, cells=None) -> sp.csr_matrix:
    """Edge mass ``(w u, v)``, optionally restricted to a subset of cells."""
    if dm.kind.entity == "face":
        return assemble_rt_mass(mesh, dm, weight, cells)
    return _scatter(local_edge_mass(mesh, weight, cells), dm, dm, cells)


def local_mixed_b(mesh: Mesh, cells=None) -> np.ndarray:
    """``(w_e, grad phi_k)`` per cell, shape (n, 4 nodal, 6 edge)."""
    sl = slice(None) if cells is None else cells
    g = mesh.grad_lambda[sl]
    m1, _ = _lambda_moments(2)
    gg = np.einsum("tid,tjd->tij", g, g)
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    loc = m1[i][None, None, :] * gg[:, :, j] - m1[j][None, None, :] * gg[:, :, i]
    return mesh.volumes[sl][:, None, None] * loc


def assemble_mixed_b(mesh: Mesh, edge_dm: DofMap, nodal_dm: DofMap) -> sp.csr_matrix:
    """``b(Phi, u) = (Phi, grad u)``: rows nodal dofs, columns edge dofs."""
    return _scatter(local_mixed_b(mesh), nodal_dm, edge_dm)


def assemble_mixed_c(sub: Mesh, smap: SubdomainMap, edge_dm: DofMap,
                     omega_nodal_dm: DofMap, kappa: float) -> sp.csr_matrix:
    """``c(Phi, v) = kappa^-1 (Phi|omega, grad v)_omega``.

    Rows are control-region nodal dofs, columns edge dofs of the parent mesh.
    """
    loc = local_mixed_b(sub) / kappa
    parent_cells = smap.cell_map
    b = SparseMatrixBuilder((omega_nodal_dm.n_dofs, edge_dm.n_dofs))
    rd, rs = omega_nodal_dm.cell_dofs, omega_nodal_dm.cell_signs
    cd, cs = edge_dm.cell_dofs[parent_cells], edge_dm.cell_signs[parent_cells]
    # submesh and parent share vertex order, hence local edge order and signs
    vals = rs[:, :, None] * loc * cs[:, None, :]
    b.add(np.broadcast_to(rd[:, :, None], vals.shape),
          np.broadcast_to(cd[:, None, :], vals.shape), vals)
    return b.tocsr()


# ----------------------------------------------------------------------
# nodal forms

def local_nodal_stiffness(mesh: Mesh, coefficient=None) -> np.ndarray:
    g = mesh.grad_lambda
    w = _cellwise(coefficient, mesh) * mesh.volumes
    return w[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def assemble_nodal_stiffness(mesh: Mesh, dm: DofMap, coefficient=None) -> sp.csr_matrix:
    """``(coef grad u, grad v)``."""
    return _scatter(local_nodal_stiffness(mesh, coefficient), dm, dm)


def assemble_nodal_mass(mesh: Mesh, dm: DofMap, weight=None) -> sp.csr_matrix:
    _, m2 = _lambda_moments(2)
    w = _cellwise(weight, mesh) * mesh.volumes
    return _scatter(w[:, None, None] * m2[None], dm, dm)


# ----------------------------------------------------------------------
# face forms

def local_rt_mass(mesh: Mesh, weight=None, cells=None) -> np.ndarray:
    sl = slice(None) if cells is None else cells
    p = mesh.vertices[mesh.cells[sl]]
    vol = mesh.volumes[sl]
    _, m2 = _lambda_moments(2)
    d = p[:, None, :, :] - p[:, :, None, :]          # d[t, i, k] = p_k - p_i
    loc = np.einsum("kl,tikd,tjld->tij", m2, d, d)
    w = _cellwise(weight, mesh)[sl]
    return (w / (9.0 * vol))[:, None, None] * loc


def assemble_rt_mass(mesh: Mesh, dm: DofMap, weight=None, cells=None) -> sp.csr_matrix:
    return _scatter(local_rt_mass(mesh, weight, cells), dm, dm, cells)


def assemble_div_div(mesh: Mesh, dm: DofMap, weight=None) -> sp.csr_matrix:
    """``(w div u, div v)``; the local divergence of a unit-flux basis is 1/|T|."""
    w = _cellwise(weight, mesh) / mesh.volumes
    loc = np.broadcast_to(w[:, None, None], (mesh.n_cells, 4, 4))
    return _scatter(loc, dm, dm)


# ----------------------------------------------------------------------
# load vectors

def edge_load_local(mesh: Mesh, values, rule, cells=None) -> np.ndarray:
    """``int F . w_e`` per cell from values of F at the rule's points."""
    sl = slice(None) if cells is None else cells
    g = mesh.grad_lambda[sl]
    fg = np.einsum("tqd,tkd->tqk", values, g)
    I = np.einsum("q,qi,tqj->tij", rule.weights, rule.points, fg)
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return mesh.volumes[sl][:, None] * (I[:, i, j] - I[:, j, i])


def assemble_edge_source(mesh: Mesh, dm: DofMap, field: Callable,
                         cells=None, degree: int = LOAD_DEGREE) -> np.ndarray:
    """``(F, Phi)`` for an analytic vector field, over ``cells`` (default all)."""
    rule = tet_rule(degree)
    sl = slice(None) if cells is None else cells
    x = mesh.map_points(rule.points)[sl]
    vals = np.asarray(field(x.reshape(-1, 3))).reshape(x.shape)
    return _scatter_vector(edge_load_local(mesh, vals, rule, cells), dm, cells)


def assemble_edge_curl_source(mesh: Mesh, dm: DofMap, field: Callable,
                              cells=None, degree: int = LOAD_DEGREE) -> np.ndarray:
    """``(F, rot Phi)`` for an analytic vector field."""
    rule = tet_rule(degree)
    sl = slice(None) if cells is None else cells
    x = mesh.map_points(rule.points)[sl]
    vals = np.asarray(field(x.reshape(-1, 3))).reshape(x.shape)
    mean = np.einsum("q,tqd->td", rule.weights, vals) * mesh.volumes[sl][:, None]
    local = np.einsum("td,ted->te", mean, edge_curls(mesh)[sl])
    return _scatter_vector(local, dm, cells)


def assemble_load(mesh: Mesh, edge_dm: DofMap, jd: Optional[Callable],
                  J: Optional[Callable], Hd: Optional[Callable],
                  degree: int = LOAD_DEGREE) -> np.ndarray:
    """``f(Phi) = (zeta jd + J, Phi) - (Hd, rot Phi)`` with degree-5 quadrature.

    ``jd`` is only sampled on cells of the control region.
    """
    f = np.zeros(edge_dm.n_dofs)
    if jd is not None:
        f += assemble_edge_source(mesh, edge_dm, jd, np.flatnonzero(mesh.in_omega), degree)
    if J is not None:
        f += assemble_edge_source(mesh, edge_dm, J, None, degree)
    if Hd is not None:
        f -= assemble_edge_curl_source(mesh, edge_dm, Hd, None, degree)
    return f


def edge_basis_at(mesh: Mesh, bary):
    """Re-export of the local edge basis for dense oracles in tests."""
    return edge_basis_values(mesh, bary)


def export_matrix_market(path, matrix, comment: str = ""):
    """Write an assembled matrix in Matrix Market format for debugging."""
    import scipy.io

    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, precision=17)
    p = str(path)
    return p if p.endswith(".mtx") else p + ".mtx"
