"""
Lowest-order finite element spaces on tetrahedral meshes.

* edge elements of Nedelec's first family, ``a + b x x`` per cell, one dof per
  edge: the tangential line integral along the globally oriented edge
  (ascending vertex index);
* continuous piecewise linear nodal elements, one dof per vertex;
* Raviart-Thomas face elements, ``a + b x`` per cell, one dof per face: the
  flux through the globally oriented face.

Spaces on the control region live on the extracted submesh (see
:meth:`magnetocontrol.mesh.Mesh.submesh`); :class:`SubdomainMap` relates
their dofs to the parent dofs.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from .mesh import LOCAL_EDGES, LOCAL_FACES, Mesh, SubmeshMaps
from .quadrature import line_rule, triangle_rule


class SpaceKind(Enum):
    EDGE_ZERO_TRACE = ("edge", True)
    EDGE_FREE = ("edge", False)
    NODAL_ZERO_TRACE = ("vertex", True)
    NODAL_OMEGA = ("vertex", False)
    FACE_ZERO_TRACE_OMEGA = ("face", True)
    FACE_FREE = ("face", False)

    @property
    def entity(self) -> str:
        return self.value[0]

    @property
    def zero_trace(self) -> bool:
        return self.value[1]


class DofMap:
    """Dof numbering of one space on one mesh.

    Attributes
    ----------
    entity_dofs : (n_entities,) int array
        Free dof index of every edge / vertex / face, -1 if constrained.
    cell_dofs : (nt, nloc) int array
        Free dof of every local basis function (-1 if constrained).
    cell_signs : (nt, nloc) int array
        Orientation sign relating local and global basis functions.
    """

    def __init__(self, mesh: Mesh, kind: SpaceKind):
        self.mesh = mesh
        self.kind = kind
        if kind.entity == "edge":
            n_ent = mesh.n_edges
            bnd = mesh.boundary_edges
            local = mesh.cell_edges
            signs = mesh.cell_edge_signs
        elif kind.entity == "vertex":
            n_ent = mesh.n_vertices
            bnd = mesh.boundary_vertices
            local = mesh.cells
            signs = np.ones_like(mesh.cells, dtype=np.int8)
        else:
            n_ent = mesh.n_faces
            bnd = mesh.boundary_faces
            local = mesh.cell_faces
            signs = mesh.cell_face_signs
        constrained = bnd.copy() if kind.zero_trace else np.zeros(n_ent, dtype=bool)
        entity_dofs = np.full(n_ent, -1, dtype=np.int64)
        free = ~constrained
        entity_dofs[free] = np.arange(int(free.sum()))
        self.n_entities = n_ent
        self.constrained = constrained
        self.entity_dofs = entity_dofs
        self.cell_entities = local
        self.cell_dofs = entity_dofs[local]
        self.cell_signs = signs.astype(float)
        self.n_dofs = int(free.sum())

    def __repr__(self):
        return f"DofMap({self.kind.name}, n_dofs={self.n_dofs})"

    @property
    def nloc(self) -> int:
        return self.cell_dofs.shape[1]

    def to_free(self, entity_values) -> np.ndarray:
        return np.asarray(entity_values)[~self.constrained]

    def to_entities(self, coeffs) -> np.ndarray:
        out = np.zeros(self.n_entities)
        out[~self.constrained] = coeffs
        return out


def build_dofmap(mesh: Mesh, kind: SpaceKind) -> DofMap:
    return DofMap(mesh, kind)


# ----------------------------------------------------------------------
# local basis evaluation

def edge_basis_coefficients(mesh: Mesh, local_coeffs):
    """Collapse oriented local edge coefficients to per-vertex vectors.

    A Nedelec field ``sum_e c_e (l_i grad l_j - l_j grad l_i)`` equals
    ``sum_k l_k A_k``; returns ``A`` with shape (nt, 4, 3).
    """
    g = mesh.grad_lambda
    A = np.zeros((mesh.n_cells, 4, 3))
    for e, (i, j) in enumerate(LOCAL_EDGES):
        c = local_coeffs[:, e, None]
        A[:, i] += c * g[:, j]
        A[:, j] -= c * g[:, i]
    return A


def edge_curls(mesh: Mesh) -> np.ndarray:
    """Curls of the local (locally oriented) edge basis, shape (nt, 6, 3)."""
    g = mesh.grad_lambda
    return 2.0 * np.cross(g[:, LOCAL_EDGES[:, 0]], g[:, LOCAL_EDGES[:, 1]])


def edge_basis_values(mesh: Mesh, bary) -> np.ndarray:
    """Local edge basis at barycentric points, shape (nt, nq, 6, 3)."""
    g = mesh.grad_lambda
    bary = np.asarray(bary)
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return (bary[None, :, i, None] * g[:, None, j, :]
            - bary[None, :, j, None] * g[:, None, i, :])


def face_basis_values(mesh: Mesh, bary) -> np.ndarray:
    """Local RT basis with unit outward flux, shape (nt, nq, 4, 3)."""
    x = mesh.map_points(bary)                       # (nt, nq, 3)
    p = mesh.vertices[mesh.cells]                   # (nt, 4, 3)
    return (x[:, :, None, :] - p[:, None, :, :]) / (3.0 * mesh.volumes[:, None, None, None])


@dataclass
class FeField:
    """Coefficient vector (free dofs only) bound to a dof map."""

    dofmap: DofMap
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_dofs,):
            raise ValueError(f"expected {self.dofmap.n_dofs} coefficients, "
                             f"got {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite coefficients")

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def kind(self) -> SpaceKind:
        return self.dofmap.kind

    def local(self) -> np.ndarray:
        """Oriented local coefficients, shape (nt, nloc)."""
        d = self.dofmap
        vals = np.where(d.cell_dofs >= 0, self.coeffs[np.maximum(d.cell_dofs, 0)], 0.0)
        return vals * d.cell_signs

    def evaluate(self, bary) -> np.ndarray:
        """Values at barycentric points of every cell: (nt, nq, 3) or (nt, nq)."""
        bary = np.asarray(bary, dtype=float)
        loc = self.local()
        ent = self.kind.entity
        if ent == "edge":
            A = edge_basis_coefficients(self.mesh, loc)
            return np.einsum("qk,tkd->tqd", bary, A)
        if ent == "vertex":
            return np.einsum("qk,tk->tq", bary, loc)
        x = self.mesh.map_points(bary)
        p = self.mesh.vertices[self.mesh.cells]
        # sum_i c_i (x - p_i) / (3|T|)
        s = loc.sum(axis=1)
        shift = np.einsum("tk,tkd->td", loc, p)
        return (s[:, None, None] * x - shift[:, None, :]) / (3.0 * self.mesh.volumes[:, None, None])

    def curl(self) -> np.ndarray:
        """Cellwise constant curl of an edge field, (nt, 3)."""
        if self.kind.entity != "edge":
            raise TypeError("curl needs an edge field")
        return np.einsum("te,ted->td", self.local(), edge_curls(self.mesh))

    def div(self) -> np.ndarray:
        """Cellwise constant divergence of a face field, (nt,)."""
        if self.kind.entity != "face":
            raise TypeError("div needs a face field")
        return self.local().sum(axis=1) / self.mesh.volumes

    def grad(self) -> np.ndarray:
        """Cellwise constant gradient of a nodal field, (nt, 3)."""
        if self.kind.entity != "vertex":
            raise TypeError("grad needs a nodal field")
        return np.einsum("tk,tkd->td", self.local(), self.mesh.grad_lambda)

    def __add__(self, other):
        _check_same(self, other)
        return FeField(self.dofmap, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return FeField(self.dofmap, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return FeField(self.dofmap, a * self.coeffs)

    __rmul__ = __mul__


def _check_same(a: FeField, b: FeField):
    if a.dofmap is not b.dofmap and (a.dofmap.kind != b.dofmap.kind
                                     or a.dofmap.n_dofs != b.dofmap.n_dofs):
        raise ValueError("fields live in different spaces")


# ----------------------------------------------------------------------
# interpolation

def edge_moments(mesh: Mesh, field: Callable, npoints: int = 4) -> np.ndarray:
    """Tangential line integrals of ``field`` along every (global) edge."""
    s, w = line_rule(npoints)
    a = mesh.vertices[mesh.edges[:, 0]]
    t = mesh.vertices[mesh.edges[:, 1]] - a
    pts = a[:, None, :] + s[None, :, None] * t[:, None, :]
    vals = np.asarray(field(pts.reshape(-1, 3))).reshape(pts.shape)
    return np.einsum("q,eqd,ed->e", w, vals, t)


def face_fluxes(mesh: Mesh, field: Callable, degree: int = 5) -> np.ndarray:
    """Fluxes of ``field`` through every globally oriented face."""
    rule = triangle_rule(degree)
    x = mesh.vertices[mesh.faces]                         # (nf, 3, 3)
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])    # |n| = 2 |F|
    pts = np.einsum("qk,fkd->fqd", rule.points, x)
    vals = np.asarray(field(pts.reshape(-1, 3))).reshape(pts.shape)
    return 0.5 * np.einsum("q,fqd,fd->f", rule.weights, vals, n)


def interpolate_edge(field: Callable, dofmap: DofMap) -> FeField:
    """Canonical edge interpolant (4-point Gauss per edge)."""
    return FeField(dofmap, dofmap.to_free(edge_moments(dofmap.mesh, field)))


def interpolate_face(field: Callable, dofmap: DofMap) -> FeField:
    """Canonical face-flux interpolant (degree-5 triangle rule)."""
    return FeField(dofmap, dofmap.to_free(face_fluxes(dofmap.mesh, field)))


def interpolate_nodal(field: Callable, dofmap: DofMap) -> FeField:
    vals = np.asarray(field(dofmap.mesh.vertices), dtype=float)
    return FeField(dofmap, dofmap.to_free(vals))


def discrete_gradient(edge_map: DofMap, nodal_map: DofMap):
    """Sparse matrix taking nodal coefficients to edge coefficients of the gradient."""
    import scipy.sparse as sp

    mesh = edge_map.mesh
    e = mesh.edges
    rows = np.repeat(np.arange(mesh.n_edges), 2)
    cols = e.ravel()
    vals = np.tile([-1.0, 1.0], mesh.n_edges)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_edges, mesh.n_vertices))
    er = edge_map.entity_dofs
    vc = nodal_map.entity_dofs
    G = G[er >= 0][:, vc >= 0]
    return G.tocsr()


# ----------------------------------------------------------------------
# subdomain maps

class SubdomainMap:
    """Correspondence between spaces on the control submesh and the parent mesh.

    ``restrict`` is the restriction of coefficients to control entities,
    ``extend_by_zero`` the transposed injection.
    """

    def __init__(self, parent: Mesh, sub: Mesh, maps: SubmeshMaps):
        self.parent = parent
        self.sub = sub
        self.maps = maps

    @property
    def cell_map(self) -> np.ndarray:
        return self.maps.cell_map

    def entity_map(self, entity: str) -> np.ndarray:
        return {"edge": self.maps.edge_map, "vertex": self.maps.vertex_map,
                "face": self.maps.face_map}[entity]

    def _check(self, parent_dm: DofMap, sub_dm: DofMap):
        if parent_dm.mesh is not self.parent or sub_dm.mesh is not self.sub:
            raise ValueError("dof maps do not belong to this subdomain map")
        if parent_dm.kind.entity != sub_dm.kind.entity:
            raise ValueError("incompatible spaces: "
                             f"{parent_dm.kind.name} vs {sub_dm.kind.name}")

    def restrict_matrix(self, parent_dm: DofMap, sub_dm: DofMap):
        """Sparse (sub dofs x parent dofs) 0/1 matrix."""
        import scipy.sparse as sp

        self._check(parent_dm, sub_dm)
        emap = self.entity_map(sub_dm.kind.entity)
        sub_dofs = sub_dm.entity_dofs
        par_dofs = parent_dm.entity_dofs[emap]
        ok = (sub_dofs >= 0) & (par_dofs >= 0)
        return sp.csr_matrix((np.ones(int(ok.sum())), (sub_dofs[ok], par_dofs[ok])),
                             shape=(sub_dm.n_dofs, parent_dm.n_dofs))

    def restrict(self, field: FeField, sub_dm: DofMap) -> FeField:
        return FeField(sub_dm, self.restrict_matrix(field.dofmap, sub_dm) @ field.coeffs)

    def extend_by_zero(self, field: FeField, parent_dm: DofMap) -> FeField:
        return FeField(parent_dm, self.restrict_matrix(parent_dm, field.dofmap).T @ field.coeffs)


def control_submesh(mesh: Mesh):
    """Extract the control submesh and its :class:`SubdomainMap`."""
    sub, maps = mesh.submesh()
    return sub, SubdomainMap(mesh, sub, maps)
