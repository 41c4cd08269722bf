"""Analytical benchmark for the magneto-static control problem.

Geometry: ``Omega = (-0.5, 1)^3`` with control region ``omega = (0, 0.5)^3``.
The permeability is 10 on the column ``(-0.5, 0)^2 x (-0.5, 1)`` and 1
elsewhere; ``kappa = 1`` and ``eps = 1`` by default.

With ``E = mu^2 / (8 pi^2) sin^2(2 pi x) sin^2(2 pi y) e_z`` one has

    rot E = mu^2 / (4 pi) (sin^2(2 pi x) sin(4 pi y), -sin(4 pi x) sin^2(2 pi y), 0)

and the benchmark fields are ``H = rot E / mu``, the adjoint
``E_bar = chi E`` cut off on the column ``(0, 0.5)^2 x (-0.5, 1)`` that
contains the control region, ``H_d = H`` on that column (0 elsewhere),
``j = 100 (sin(2 pi x) cos(2 pi y), -sin(2 pi y) cos(2 pi x), 0)``,
``j_d = j`` and ``J = rot H - j`` on the control region, ``rot H`` elsewhere.
All functions take points of shape (N, 3).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mesh import Box, Mesh
from .quadrature import QuadratureRule, tet_rule

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi

DOMAIN = Box((-0.5, -0.5, -0.5), (1.0, 1.0, 1.0))
CONTROL = Box((0.0, 0.0, 0.0), (0.5, 0.5, 0.5))
MU_HIGH = 10.0
J_AMPLITUDE = 100.0


def _xy(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def in_high_mu(x) -> np.ndarray:
    a, b = _xy(x)
    return (a < 0.0) & (b < 0.0)


def in_column(x) -> np.ndarray:
    """Cut-off column ``(0, 0.5)^2 x (-0.5, 1)``, complement of the state region."""
    a, b = _xy(x)
    return (a > 0.0) & (a < 0.5) & (b > 0.0) & (b < 0.5)


def in_control(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return in_column(x) & (x[..., 2] > 0.0) & (x[..., 2] < 0.5)


def mu(x) -> np.ndarray:
    return np.where(in_high_mu(x), MU_HIGH, 1.0)


def eps(x) -> np.ndarray:
    return np.ones(np.shape(x)[:-1])


def E_full(x) -> np.ndarray:
    """``E`` before the cut-off."""
    a, b = _xy(x)
    m = mu(x)
    out = np.zeros(np.shape(x))
    out[..., 2] = m ** 2 / (8 * np.pi ** 2) * np.sin(TWO_PI * a) ** 2 * np.sin(TWO_PI * b) ** 2
    return out


def rot_E_full(x) -> np.ndarray:
    a, b = _xy(x)
    m = mu(x)
    s = m ** 2 / FOUR_PI
    out = np.zeros(np.shape(x))
    out[..., 0] = s * np.sin(TWO_PI * a) ** 2 * np.sin(FOUR_PI * b)
    out[..., 1] = -s * np.sin(FOUR_PI * a) * np.sin(TWO_PI * b) ** 2
    return out


def E_bar(x) -> np.ndarray:
    return np.where(in_column(x)[..., None], 0.0, E_full(x))


def rot_E_bar(x) -> np.ndarray:
    return np.where(in_column(x)[..., None], 0.0, rot_E_full(x))


def H_bar(x) -> np.ndarray:
    return rot_E_full(x) / mu(x)[..., None]


def rot_H_bar(x) -> np.ndarray:
    a, b = _xy(x)
    out = np.zeros(np.shape(x))
    out[..., 2] = mu(x) * (-np.cos(FOUR_PI * a) * np.sin(TWO_PI * b) ** 2
                           - np.sin(TWO_PI * a) ** 2 * np.cos(FOUR_PI * b))
    return out


def j_bar(x) -> np.ndarray:
    """Optimal control; smooth, evaluated on any point but meaningful on omega."""
    a, b = _xy(x)
    out = np.zeros(np.shape(x))
    out[..., 0] = J_AMPLITUDE * np.sin(TWO_PI * a) * np.cos(TWO_PI * b)
    out[..., 1] = -J_AMPLITUDE * np.sin(TWO_PI * b) * np.cos(TWO_PI * a)
    return out


def H_d(x) -> np.ndarray:
    return np.where(in_column(x)[..., None], H_bar(x), 0.0)


def J_source(x) -> np.ndarray:
    return rot_H_bar(x) - np.where(in_control(x)[..., None], j_bar(x), 0.0)


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExactSolution:
    E: Callable = E_bar
    rot_E: Callable = rot_E_bar
    H: Callable = H_bar
    rot_H: Callable = rot_H_bar
    j: Callable = j_bar


@dataclass(frozen=True)
class ProblemData:
    """Data of the control problem.  ``j_d`` is only sampled on the control region."""

    kappa: float = 1.0
    J: Callable = J_source
    H_d: Callable = H_d
    j_d: Callable = j_bar
    mu: Callable = mu
    eps: Callable = eps
    domain: Box = DOMAIN
    control: Box = CONTROL
    exact: Optional[ExactSolution] = field(default_factory=ExactSolution)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


def manufactured_data(kappa: float = 1.0) -> ProblemData:
    return ProblemData(kappa=kappa)


def eval_exact(point) -> dict:
    """All benchmark fields at a single point of Omega.

    ``j`` is ``None`` outside the (closed) control region.
    """
    p = np.asarray(point, dtype=float).reshape(1, 3)
    if not DOMAIN.contains(p[0]):
        raise ValueError(f"point {p[0]} lies outside the domain")
    j = j_bar(p)[0] if CONTROL.contains(p[0]) else None
    return {"E": E_bar(p)[0], "H": H_bar(p)[0], "j": j, "J": J_source(p)[0],
            "H_d": H_d(p)[0], "mu": float(mu(p)[0])}


# ----------------------------------------------------------------------
# exact errors

@dataclass
class ErrorReport:
    err_H: float
    err_j: float
    total: float
    cell_H: np.ndarray = field(repr=False)   # squared mu-weighted H error per cell
    cell_j: np.ndarray = field(repr=False)   # squared j error per cell (0 off omega)

    def cell_total(self, kappa: float) -> np.ndarray:
        """Per-cell triple-norm contribution, square-rooted."""
        return np.sqrt(self.cell_H + kappa * self.cell_j)


def cell_l2_squares(mesh: Mesh, approx, exact: Callable, rule: QuadratureRule,
                    cells=None, weight=None) -> np.ndarray:
    """``int_T w |approx - exact|^2`` for each selected cell.

    ``approx`` holds values at the rule's points, (n_sel, nq, d).
    """
    sl = slice(None) if cells is None else cells
    x = mesh.map_points(rule.points)[sl]
    ex = np.asarray(exact(x.reshape(-1, 3))).reshape(np.shape(approx))
    d2 = np.sum((approx - ex) ** 2, axis=-1)
    out = np.einsum("q,tq->t", rule.weights, d2) * mesh.volumes[sl]
    if weight is not None:
        out = out * np.asarray(weight)[sl]
    return out


def triple_norm_error(mesh: Mesh, H_h: Callable, j_h: Callable, kappa: float,
                      exact: Optional[ExactSolution] = None, degree: int = 5) -> ErrorReport:
    """Errors ``||H - H_h||_mu``, ``||j - j_h||_omega`` and the triple norm.

    ``H_h(bary)`` returns values on all cells (nt, nq, 3); ``j_h(bary)`` on the
    control cells in increasing parent index order.
    """
    exact = exact or ExactSolution()
    rule = tet_rule(degree)
    cH = cell_l2_squares(mesh, H_h(rule.points), exact.H, rule, weight=mesh.mu)
    om = np.flatnonzero(mesh.in_omega)
    cj = np.zeros(mesh.n_cells)
    cj[om] = cell_l2_squares(mesh, j_h(rule.points), exact.j, rule, cells=om)
    eH = float(np.sqrt(cH.sum()))
    ej = float(np.sqrt(cj.sum()))
    return ErrorReport(eH, ej, float(np.sqrt(eH ** 2 + kappa * ej ** 2)), cH, cj)


# ----------------------------------------------------------------------
# self-checks by finite differences

def fd_curl(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    J = np.empty(x.shape + (3,))            # J[..., i, k] = d f_i / d x_k
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[..., :, k] = (f(x + e) - f(x - e)) / (2 * h)
    return np.stack([J[..., 2, 1] - J[..., 1, 2],
                     J[..., 0, 2] - J[..., 2, 0],
                     J[..., 1, 0] - J[..., 0, 1]], axis=-1)


def fd_div(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out += (f(x + e)[..., k] - f(x - e)[..., k]) / (2 * h)
    return out


_REGIONS = [  # open boxes on which mu and the cut-off are constant
    Box((-0.5, -0.5, -0.5), (0.0, 0.0, 1.0)),
    Box((0.0, -0.5, -0.5), (1.0, 0.0, 1.0)),
    Box((-0.5, 0.0, -0.5), (0.0, 1.0, 1.0)),
    Box((0.0, 0.0, -0.5), (0.5, 0.5, 1.0)),
    Box((0.5, 0.0, -0.5), (1.0, 1.0, 1.0)),
    Box((0.0, 0.5, -0.5), (0.5, 1.0, 1.0)),
]


def _sample(box: Box, n: int, rng, margin: float = 1e-3) -> np.ndarray:
    lo = np.asarray(box.lo) + margin
    hi = np.asarray(box.hi) - margin
    return lo + (hi - lo) * rng.random((n, 3))


@dataclass
class ConsistencyReport:
    errors: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.errors.values())

    def failures(self) -> dict:
        return {k: v for k, v in self.errors.items() if v > self.tol}


def verify_consistency(n: int = 50, seed: int = 0, tol: float = 1e-6) -> ConsistencyReport:
    """Check the benchmark identities at random points.

    Errors are relative to the field magnitude (max(1, max |reference|)).
    """
    rng = np.random.default_rng(seed)
    pts = np.concatenate([_sample(b, n, rng) for b in _REGIONS])
    om = _sample(CONTROL, n, rng)

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))

    err = {
        "rot E = mu H": rel(fd_curl(E_full, pts), rot_E_full(pts)),
        "rot H formula": rel(fd_curl(H_bar, pts), rot_H_bar(pts)),
        "rot H = zeta j + J": rel(rot_H_bar(pts), J_source(pts)
                                  + np.where(in_control(pts)[:, None], j_bar(pts), 0.0)),
        "rot E_bar = mu (H - H_d)": rel(fd_curl(E_bar, pts),
                                        mu(pts)[:, None] * (H_bar(pts) - H_d(pts))),
        "div mu H = 0": float(np.max(np.abs(fd_div(lambda y: mu(y)[..., None] * H_bar(y), pts)))),
        "div j = 0": float(np.max(np.abs(fd_div(j_bar, om)))) / J_AMPLITUDE,
        "j = j_d": rel(j_bar(om), ProblemData().j_d(om)),
    }
    # tangential trace of E_bar and normal trace of j on the boundaries
    t = rng.random((n, 2))
    bnd, nrm = [], []
    for k in range(3):
        for side in (0, 1):
            for (box, sink) in ((DOMAIN, bnd), (CONTROL, nrm)):
                p = np.empty((n, 3))
                lo, hi = np.asarray(box.lo), np.asarray(box.hi)
                others = [i for i in range(3) if i != k]
                p[:, others] = lo[others] + (hi - lo)[others] * t
                p[:, k] = hi[k] if side else lo[k]
                nv = np.zeros(3)
                nv[k] = 1.0
                sink.append((p, nv))
    err["E_bar x n on boundary"] = max(
        float(np.max(np.abs(np.cross(E_bar(p), nv)))) for p, nv in bnd)
    err["j . n on control boundary"] = max(
        float(np.max(np.abs(j_bar(p) @ nv))) for p, nv in nrm) / J_AMPLITUDE
    return ConsistencyReport(err, tol)
