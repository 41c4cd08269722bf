"""Independent reference implementations used as test oracles."""
import numpy as np

EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def barycentric(verts, x):
    """Barycentric coordinates and their gradients on one tetrahedron."""
    T = np.vstack([np.asarray(verts, float).T, np.ones(4)])
    Tinv = np.linalg.inv(T)
    lam = (Tinv @ np.vstack([np.asarray(x, float).T, np.ones(len(x))])).T
    return lam, Tinv[:, :3]


def whitney(verts, x):
    """Locally oriented lowest-order edge basis at points x, shape (nq, 6, 3)."""
    lam, g = barycentric(verts, x)
    return np.stack([lam[:, i, None] * g[j] - lam[:, j, None] * g[i] for i, j in EDGES], axis=1)


def whitney_curl(verts):
    _, g = barycentric(verts, np.zeros((1, 3)))
    return np.stack([2 * np.cross(g[i], g[j]) for i, j in EDGES])


def physical_rule(verts, rule):
    verts = np.asarray(verts, float)
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6
    return rule.points @ verts, rule.weights * vol


def dense_scatter(local, cell_dofs, cell_signs, n_rows, n_cols=None, col_dofs=None, col_signs=None):
    """Loop-based dense assembly, skipping constrained (-1) dofs."""
    if col_dofs is None:
        col_dofs, col_signs, n_cols = cell_dofs, cell_signs, n_rows
    K = np.zeros((n_rows, n_cols))
    for t in range(local.shape[0]):
        for a, ra in enumerate(cell_dofs[t]):
            if ra < 0:
                continue
            for b, cb in enumerate(col_dofs[t]):
                if cb >= 0:
                    K[ra, cb] += cell_signs[t, a] * local[t, a, b] * col_signs[t, b]
    return K
