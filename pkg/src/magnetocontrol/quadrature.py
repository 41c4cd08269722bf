"""Quadrature rules on the reference tetrahedron, triangle and interval.

Tetrahedral rules are returned in barycentric coordinates ``(nq, 4)`` with
weights summing to one, so ``sum(w * f(x)) * |T|`` integrates over a cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # barycentric, (nq, d+1)
    weights: np.ndarray  # (nq,), sum 1
    degree: int

    def __len__(self):
        return len(self.weights)


def _orbit(base):
    return np.array(sorted(set(permutations(base))), dtype=float)


def _symmetric(groups, degree):
    pts, wts = [], []
    for base, w in groups:
        orb = _orbit(base)
        pts.append(orb)
        wts.append(np.full(len(orb), w))
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), degree)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    """Symmetric rule on the tetrahedron exact for polynomials of ``degree``.

    Degrees 0-1: centroid; 2: 4 points; 3-5: 14 points.  Higher degrees fall
    back to the collapsed Gauss-Jacobi product rule.
    """
    if degree <= 1:
        return QuadratureRule(np.full((1, 4), 0.25), np.ones(1), 1)
    if degree == 2:
        a = (5.0 - np.sqrt(5.0)) / 20.0
        b = 1.0 - 3.0 * a
        return _symmetric([((b, a, a, a), 0.25)], 2)
    if degree <= 5:
        a1, a2, b = _DEG5_POINTS
        w1, w2, w3 = _DEG5_WEIGHTS
        return _symmetric([
            ((1 - 3 * a1, a1, a1, a1), w1),
            ((1 - 3 * a2, a2, a2, a2), w2),
            ((0.5 - b, 0.5 - b, b, b), w3),
        ], 5)
    return collapsed_tet_rule(degree)


# Walkington's 14 point degree-5 rule, weights normalised to unit volume
_DEG5_POINTS = (0.0927352503108912, 0.3108859192633006, 0.0455037041256496)
_DEG5_WEIGHTS = (6 * 0.01224884051939366, 6 * 0.01878132095300264,
                 6 * 0.007091003462846911)


def _exponents(degree):
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                yield (i, j, k)


@lru_cache(maxsize=None)
def collapsed_tet_rule(degree: int) -> QuadratureRule:
    """Conical product (Duffy) rule of Gauss-Jacobi type, exact to ``degree``."""
    n = degree // 2 + 1
    x0, w0 = roots_jacobi(n, 2.0, 0.0)
    x1, w1 = roots_jacobi(n, 1.0, 0.0)
    x2, w2 = roots_jacobi(n, 0.0, 0.0)
    # map [-1, 1] -> [0, 1]
    s, ws = (x0 + 1) / 2, w0 / 8
    t, wt = (x1 + 1) / 2, w1 / 4
    u, wu = (x2 + 1) / 2, w2 / 2
    S, T, U = np.meshgrid(s, t, u, indexing="ij")
    W = ws[:, None, None] * wt[None, :, None] * wu[None, None, :]
    xa = S
    xb = (1 - S) * T
    xc = (1 - S) * (1 - T) * U
    lam = np.stack([1 - xa - xb - xc, xa, xb, xc], axis=-1).reshape(-1, 4)
    w = W.ravel()
    return QuadratureRule(lam, w / w.sum(), degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Triangle rule in barycentric coordinates ``(nq, 3)``, weights sum to one."""
    if degree <= 1:
        return QuadratureRule(np.full((1, 3), 1 / 3), np.ones(1), 1)
    if degree <= 5:
        r15 = np.sqrt(15.0)
        a = (6 - r15) / 21
        b = (6 + r15) / 21
        return _symmetric([((1 / 3, 1 / 3, 1 / 3), 9 / 40),
                           ((1 - 2 * a, a, a), (155 - r15) / 1200),
                           ((1 - 2 * b, b, b), (155 + r15) / 1200)], 5)
    raise ValueError(f"no triangle rule of degree {degree}")


@lru_cache(maxsize=None)
def line_rule(npoints: int = 4):
    """Gauss-Legendre points on ``[0, 1]`` and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return (x + 1) / 2, w / 2
