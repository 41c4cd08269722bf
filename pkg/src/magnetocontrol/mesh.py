"""
Conforming tetrahedral meshes of boxes with newest vertex bisection.

Cells are stored as ordered vertex tuples ``(x0, x1, x2, x3)`` together
with a bisection level.  The refinement edge of a cell on level ``l`` is
``(x0, xk)`` with ``k = 3 - l % 3`` (Maubach's tagged bisection).  The
initial Kuhn decomposition of a structured grid orders every tetrahedron
along its monotone path from the lower to the upper cube corner, so the
initial refinement edge is the cube diagonal, which is also the unique
longest edge.  With this ordering three bisection sweeps reproduce the Kuhn
decomposition at half the mesh size and conforming closure terminates.

Example
-------
>>> from magnetocontrol.mesh import Box, build_structured_cube, bisect
>>> m = build_structured_cube(Box((0, 0, 0), (1, 1, 1)), 1)
>>> m.n_cells
6
>>> bisect(m, [0]).n_cells
8
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations
from typing import Callable, Iterable, Optional

import numpy as np

# local edge (i, j) of a cell, i < j in local numbering
LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
# local face i is opposite local vertex i
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

_KEY = np.int64(1) << np.int64(32)


class AlignmentError(ValueError):
    """The control box does not lie on the grid lines of the mesh."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("Box needs 3D corners")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} -> {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x, tol=0.0) -> np.ndarray:
        """Boolean mask of the points ``x`` (shape (..., 3)) inside the closed box."""
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c for a, c in zip(self.lo, other.lo)) and all(
            d <= b for b, d in zip(self.hi, other.hi))


def _edge_keys(a, b):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * _KEY + hi


class Mesh:
    """Conforming tetrahedral mesh.

    Parameters
    ----------
    vertices : (nv, 3) array
    cells : (nt, 4) int array
        Vertex tuples in bisection order.
    levels : (nt,) int array
        Bisection generation of each cell.
    in_omega : (nt,) bool array
        Subdomain tag, True for cells inside the control region.
    mu, eps : (nt,) float arrays
        Cellwise constant material values.
    ancestor : (nt,) int array, optional
        Index of the cell of the previous mesh containing each cell
        (-1 on an initial mesh).

    The mesh is treated as immutable; all connectivity is derived lazily.
    """

    def __init__(self, vertices, cells, levels=None, in_omega=None, mu=None,
                 eps=None, ancestor=None, domain: Optional[Box] = None,
                 control: Optional[Box] = None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        nt = self.cells.shape[0]
        self.levels = (np.zeros(nt, dtype=np.int64) if levels is None
                       else np.asarray(levels, dtype=np.int64))
        self.in_omega = (np.zeros(nt, dtype=bool) if in_omega is None
                         else np.asarray(in_omega, dtype=bool))
        self.mu = np.ones(nt) if mu is None else np.asarray(mu, dtype=float)
        self.eps = np.ones(nt) if eps is None else np.asarray(eps, dtype=float)
        self.ancestor = (np.full(nt, -1, dtype=np.int64) if ancestor is None
                         else np.asarray(ancestor, dtype=np.int64))
        self.domain = domain
        self.control = control
        for arr in (self.vertices, self.cells, self.levels, self.in_omega,
                    self.mu, self.eps, self.ancestor):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, n_cells={self.n_cells}, "
                f"n_omega_cells={int(self.in_omega.sum())})")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    # ------------------------------------------------------------------
    # geometry
    @cached_property
    def _jacobian(self):
        p = self.vertices[self.cells]
        return p[:, 1:, :] - p[:, :1, :]

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self._jacobian)) / 6.0

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (nt, 4, 3)."""
        inv = np.linalg.inv(self._jacobian)  # columns are grad lambda_1..3
        g = np.empty((self.n_cells, 4, 3))
        g[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
        return g

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d = p[:, LOCAL_EDGES[:, 0]] - p[:, LOCAL_EDGES[:, 1]]
        return np.sqrt((d ** 2).sum(axis=2)).max(axis=1)

    def quality(self) -> np.ndarray:
        """Inradius over diameter of every cell."""
        p = self.vertices[self.cells]
        area = np.zeros(self.n_cells)
        for f in LOCAL_FACES:
            a, b, c = p[:, f[0]], p[:, f[1]], p[:, f[2]]
            area += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        inradius = 3.0 * self.volumes / area
        return inradius / self.diameters

    def map_points(self, bary) -> np.ndarray:
        """Physical coordinates of barycentric points, shape (nt, nq, 3)."""
        bary = np.asarray(bary, dtype=float)
        return np.einsum("qk,tkd->tqd", bary, self.vertices[self.cells])

    # ------------------------------------------------------------------
    # topology
    @cached_property
    def refinement_edge(self) -> np.ndarray:
        """Local vertex positions ``(0, k)`` of each cell's refinement edge."""
        k = 3 - self.levels % 3
        return np.stack([np.zeros_like(k), k], axis=1)

    @cached_property
    def _edge_data(self):
        a = self.cells[:, LOCAL_EDGES[:, 0]]
        b = self.cells[:, LOCAL_EDGES[:, 1]]
        keys = _edge_keys(a, b)
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        edges = np.stack([uniq // _KEY, uniq % _KEY], axis=1)
        cell_edges = inv.reshape(-1, 6)
        signs = np.where(a < b, 1, -1).astype(np.int8)
        return edges, cell_edges, signs

    @property
    def edges(self) -> np.ndarray:
        """Global edges as ascending vertex pairs, shape (ne, 2)."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        return self._edge_data[1]

    @property
    def cell_edge_signs(self) -> np.ndarray:
        """+1 where the local edge direction agrees with the global one."""
        return self._edge_data[2]

    @cached_property
    def _face_data(self):
        tri = np.sort(self.cells[:, LOCAL_FACES], axis=2)  # (nt, 4, 3)
        nv = np.int64(self.n_vertices)
        keys = (tri[..., 0] * nv + tri[..., 1]) * nv + tri[..., 2]
        uniq, inv, counts = np.unique(keys.ravel(), return_inverse=True,
                                      return_counts=True)
        faces = np.stack([uniq // (nv * nv), (uniq // nv) % nv, uniq % nv],
                         axis=1)
        cell_faces = inv.reshape(-1, 4)
        # global normal (b - a) x (c - a); outward direction is -grad lambda_i
        x = self.vertices
        n = np.cross(x[faces[:, 1]] - x[faces[:, 0]],
                     x[faces[:, 2]] - x[faces[:, 0]])
        outward = -self.grad_lambda
        s = np.einsum("tfd,tfd->tf", n[cell_faces], outward)
        signs = np.where(s > 0, 1, -1).astype(np.int8)
        return faces, cell_faces, signs, counts

    @property
    def faces(self) -> np.ndarray:
        """Global faces as ascending vertex triples, shape (nf, 3)."""
        return self._face_data[0]

    @property
    def cell_faces(self) -> np.ndarray:
        return self._face_data[1]

    @property
    def cell_face_signs(self) -> np.ndarray:
        """+1 where the global face normal points out of the cell."""
        return self._face_data[2]

    @property
    def face_cell_count(self) -> np.ndarray:
        return self._face_data[3]

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return self.face_cell_count == 1

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces[self.boundary_faces].ravel()] = True
        return mask

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        f = self.faces[self.boundary_faces]
        keys = np.concatenate([_edge_keys(f[:, 0], f[:, 1]),
                               _edge_keys(f[:, 0], f[:, 2]),
                               _edge_keys(f[:, 1], f[:, 2])])
        ekeys = _edge_keys(self.edges[:, 0], self.edges[:, 1])
        return np.isin(ekeys, keys)

    def is_conforming(self) -> bool:
        """Face-incidence audit: every face has one or two cells, and
        no cell edge carries a vertex in its interior (hanging node)."""
        if self.face_cell_count.max(initial=0) > 2:
            return False
        # a boundary face must lie on the domain boundary
        if self.domain is not None:
            x = self.vertices[self.faces[self.boundary_faces]]
            lo, hi = np.asarray(self.domain.lo), np.asarray(self.domain.hi)
            scale = max(self.domain.diameter, 1.0)
            on = np.zeros(x.shape[0], dtype=bool)
            for d in range(3):
                for val in (lo[d], hi[d]):
                    on |= np.all(np.abs(x[:, :, d] - val) <= 1e-12 * scale,
                                 axis=1)
            if not on.all():
                return False
        # hanging vertices: a vertex coinciding with an edge midpoint
        mids = 0.5 * (self.vertices[self.edges[:, 0]] +
                      self.vertices[self.edges[:, 1]])
        scale = max(self.diameters.min(initial=1.0), 1e-300)
        q = np.round(self.vertices / (1e-9 * scale)).astype(np.int64)
        qm = np.round(mids / (1e-9 * scale)).astype(np.int64)
        vset = {tuple(r) for r in q}
        return not any(tuple(r) in vset for r in qm)

    def submesh(self, mask=None) -> tuple["Mesh", "SubmeshMaps"]:
        """Extract the cells selected by ``mask`` (default: the control region).

        Vertex numbering is the order-preserving compression of the parent
        numbering, so global edge and face orientations agree with the parent.
        """
        mask = self.in_omega if mask is None else np.asarray(mask, dtype=bool)
        cell_map = np.flatnonzero(mask)
        used = np.unique(self.cells[cell_map])
        renum = np.full(self.n_vertices, -1, dtype=np.int64)
        renum[used] = np.arange(used.size)
        sub = Mesh(self.vertices[used], renum[self.cells[cell_map]],
                   levels=self.levels[cell_map], in_omega=self.in_omega[cell_map],
                   mu=self.mu[cell_map], eps=self.eps[cell_map],
                   domain=self.control, control=self.control)
        pkeys = _edge_keys(self.edges[:, 0], self.edges[:, 1])
        skeys = _edge_keys(used[sub.edges[:, 0]], used[sub.edges[:, 1]])
        edge_map = np.searchsorted(pkeys, skeys)
        nv = np.int64(self.n_vertices)
        pf = self.faces
        pfk = (pf[:, 0] * nv + pf[:, 1]) * nv + pf[:, 2]
        sf = used[sub.faces]
        sfk = (sf[:, 0] * nv + sf[:, 1]) * nv + sf[:, 2]
        face_map = np.searchsorted(pfk, sfk)
        return sub, SubmeshMaps(vertex_map=used, cell_map=cell_map,
                                edge_map=edge_map, face_map=face_map)

    def contains_points(self, cell_ids, points, tol=1e-10) -> np.ndarray:
        """True where ``points[i]`` lies in cell ``cell_ids[i]``."""
        p0 = self.vertices[self.cells[cell_ids, 0]]
        g = self.grad_lambda[cell_ids]
        lam123 = np.einsum("tkd,td->tk", g[:, 1:], points - p0)
        lam = np.concatenate([1 - lam123.sum(axis=1, keepdims=True), lam123],
                             axis=1)
        return np.all(lam >= -tol, axis=1)


@dataclass(frozen=True)
class SubmeshMaps:
    """Index maps from submesh entities to parent mesh entities."""

    vertex_map: np.ndarray
    cell_map: np.ndarray
    edge_map: np.ndarray
    face_map: np.ndarray


def build_structured_cube(domain: Box, n: int, control: Optional[Box] = None,
                          mu: Optional[Callable] = None,
                          eps: Optional[Callable] = None) -> Mesh:
    """Kuhn decomposition of an ``n x n x n`` grid of ``domain``.

    Each grid cube is split into 6 tetrahedra.  ``mu`` and ``eps`` are
    evaluated at cell centroids (``f(points) -> values``).

    Raises
    ------
    ValueError
        If ``n < 1``.
    AlignmentError
        If the faces of ``control`` are not grid planes.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one subdivision per axis")
    control = domain if control is None else control
    if not domain.contains_box(control):
        raise AlignmentError(f"control box {control} not inside {domain}")
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    h = (hi - lo) / n
    for corner in (control.lo, control.hi):
        t = (np.asarray(corner) - lo) / h
        if np.any(np.abs(t - np.round(t)) > 1e-9):
            raise AlignmentError(
                f"control corner {corner} is not on the {n}-grid of {domain}")

    g = np.arange(n + 1)
    k, j, i = np.meshgrid(g, g, g, indexing="ij")
    idx = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
    vertices = lo + idx * h
    stride = np.array([1, n + 1, (n + 1) ** 2])

    c = np.arange(n)
    ck, cj, ci = np.meshgrid(c, c, c, indexing="ij")
    corner = np.stack([ci.ravel(), cj.ravel(), ck.ravel()], axis=1) @ stride
    cells = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for ax in perm:
            step = path[-1].copy()
            step[ax] += 1
            path.append(step)
        offs = np.array([p @ stride for p in path])
        cells.append(corner[:, None] + offs[None, :])
    cells = np.stack(cells, axis=1).reshape(-1, 4)

    cent = vertices[cells].mean(axis=1)
    in_omega = control.contains(cent)
    mu_vals = np.ones(len(cells)) if mu is None else np.asarray(mu(cent), dtype=float)
    eps_vals = np.ones(len(cells)) if eps is None else np.asarray(eps(cent), dtype=float)
    return Mesh(vertices, cells, in_omega=in_omega, mu=mu_vals, eps=eps_vals,
                domain=domain, control=control)


def _lookup(keys_sorted, vals, query):
    pos = np.searchsorted(keys_sorted, query)
    pos_c = np.minimum(pos, max(keys_sorted.size - 1, 0))
    found = (keys_sorted.size > 0) & (keys_sorted[pos_c] == query) if keys_sorted.size \
        else np.zeros(query.shape, dtype=bool)
    out = np.full(query.shape, -1, dtype=np.int64)
    out[found] = vals[pos_c[found]]
    return out


def bisect(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Bisect the marked cells and close the mesh conformingly.

    Every cell carrying a bisected edge is itself bisected (at its own
    refinement edge) until no such cell remains.  The ``ancestor`` array of
    the result points into the cells of ``mesh``.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_cells):
        raise IndexError("marked cell index out of range")

    nv = mesh.n_vertices
    cells = mesh.cells.copy()
    levels = mesh.levels.copy()
    anc = np.arange(mesh.n_cells, dtype=np.int64)
    in_omega = mesh.in_omega.copy()
    mu = mesh.mu.copy()
    eps = mesh.eps.copy()
    split_keys = np.empty(0, dtype=np.int64)
    split_mid = np.empty(0, dtype=np.int64)
    allv = mesh.vertices

    todo = marked
    while todo.size:
        c = cells[todo]
        k = 3 - levels[todo] % 3
        rows = np.arange(todo.size)
        a, b = c[:, 0], c[rows, k]
        keys = _edge_keys(a, b)
        mid = _lookup(split_keys, split_mid, keys)
        new = mid < 0
        if new.any():
            nk, first = np.unique(keys[new], return_index=True)
            ab = np.stack([a[new][first], b[new][first]], axis=1)
            pts = 0.5 * (allv[ab[:, 0]] + allv[ab[:, 1]])
            ids = nv + np.arange(nk.size)
            nv += nk.size
            allv = np.concatenate([allv, pts])
            order = np.argsort(np.concatenate([split_keys, nk]), kind="stable")
            split_keys = np.concatenate([split_keys, nk])[order]
            split_mid = np.concatenate([split_mid, ids])[order]
            mid = _lookup(split_keys, split_mid, keys)

        child1 = c.copy()
        child1[rows, k] = mid
        child2 = c.copy()
        for kk in (1, 2, 3):
            sel = k == kk
            if not sel.any():
                continue
            # (x1, ..., xk, z, x_{k+1}, ..., x3)
            child2[sel, :kk] = c[sel, 1:kk + 1]
            child2[sel, kk] = mid[sel]
        cells[todo] = child1
        levels[todo] += 1
        cells = np.concatenate([cells, child2])
        levels = np.concatenate([levels, levels[todo]])
        anc = np.concatenate([anc, anc[todo]])
        in_omega = np.concatenate([in_omega, in_omega[todo]])
        mu = np.concatenate([mu, mu[todo]])
        eps = np.concatenate([eps, eps[todo]])

        ek = _edge_keys(cells[:, LOCAL_EDGES[:, 0]], cells[:, LOCAL_EDGES[:, 1]])
        hanging = np.isin(ek, split_keys).any(axis=1)
        todo = np.flatnonzero(hanging)

    return Mesh(allv, cells, levels=levels, in_omega=in_omega, mu=mu, eps=eps,
                ancestor=anc, domain=mesh.domain, control=mesh.control)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Three full bisection sweeps; halves every cell diameter of a Kuhn mesh."""
    out = mesh
    anc = None
    for _ in range(3):
        out = bisect(out, np.arange(out.n_cells))
        anc = out.ancestor if anc is None else anc[out.ancestor]
    return _with_ancestor(out, anc)


def _with_ancestor(mesh: Mesh, ancestor) -> Mesh:
    return Mesh(mesh.vertices, mesh.cells, levels=mesh.levels,
                in_omega=mesh.in_omega, mu=mesh.mu, eps=mesh.eps,
                ancestor=ancestor, domain=mesh.domain, control=mesh.control)


def locate_cells(mesh: Mesh, points, hint=None) -> np.ndarray:
    """Index of a cell containing each point (-1 if none); brute force in chunks."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(points.shape[0], -1, dtype=np.int64)
    p0 = mesh.vertices[mesh.cells[:, 0]]
    g = mesh.grad_lambda[:, 1:]
    lo = mesh.vertices[mesh.cells].min(axis=1) - 1e-12
    hi = mesh.vertices[mesh.cells].max(axis=1) + 1e-12
    for i, x in enumerate(points):
        cand = np.flatnonzero(np.all((x >= lo) & (x <= hi), axis=1))
        if cand.size == 0:
            continue
        lam = np.einsum("tkd,td->tk", g[cand], x - p0[cand])
        ok = np.all(lam >= -1e-10, axis=1) & (lam.sum(axis=1) <= 1 + 1e-10)
        hit = cand[ok]
        if hit.size:
            out[i] = hit[0]
    return out
