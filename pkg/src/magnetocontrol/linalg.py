"""Krylov solvers, preconditioners and a direct fallback.

``cg`` and ``minres`` are plain preconditioned implementations operating on
anything with a ``@`` product.  Preconditioners are callables ``r -> M^-1 r``
and must be symmetric positive definite for both methods.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a linear solve fails to reach the requested tolerance."""


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float          # relative residual ||b - Ax|| / ||b||
    converged: bool
    history: list = field(default_factory=list, repr=False)


def jacobi(A) -> Callable:
    """Diagonal preconditioner ``|diag A|^-1``; entries below 1e-30 are treated as one."""
    d = np.asarray(A.diagonal(), dtype=float).copy()
    d[np.abs(d) < 1e-30] = 1.0
    inv = 1.0 / np.abs(d)
    return lambda r: inv * r


def block_preconditioner(blocks, solvers) -> Callable:
    """Block-diagonal preconditioner from slices and per-block solvers."""
    def apply(r):
        z = np.empty_like(r)
        for sl, s in zip(blocks, solvers):
            z[sl] = s(r[sl])
        return z
    return apply


def _identity(r):
    return r


def cg(A, b, x0=None, M: Optional[Callable] = None, tol: float = 1e-10,
       maxiter: Optional[int] = None) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for symmetric positive definite ``A``."""
    M = M or _identity
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport("cg", 0, 0.0, True)
    r = b - A @ x
    z = M(r)
    p = z.copy()
    rz = r @ z
    hist = [np.linalg.norm(r) / bnorm]
    k = 0
    while k < maxiter:
        if hist[-1] <= tol:
            # recurrence residual can drift from the true one; refresh and recheck
            r = b - A @ x
            hist[-1] = np.linalg.norm(r) / bnorm
            if hist[-1] <= tol:
                break
            z = M(r)
            rz = r @ z
            p = z.copy()
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1
        hist.append(np.linalg.norm(r) / bnorm)
    res = np.linalg.norm(b - A @ x) / bnorm
    return x, SolveReport("cg", k, res, res <= tol, hist)


def minres(A, b, x0=None, M: Optional[Callable] = None, tol: float = 1e-10,
           maxiter: Optional[int] = None) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned MINRES for symmetric (possibly indefinite) ``A``.

    Convergence is monitored in the preconditioned norm; the reported residual
    is the true relative Euclidean residual at exit.
    """
    M = M or _identity
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport("minres", 0, 0.0, True)

    r1 = b - A @ x
    y = M(r1)
    beta1 = np.sqrt(max(r1 @ y, 0.0))
    if beta1 == 0.0:
        return x, SolveReport("minres", 0, 0.0, True)
    r2 = r1.copy()
    beta, oldb = beta1, 0.0
    dbar, epsln = 0.0, 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    hist = [1.0]
    inner_tol = tol
    k = 0
    while k < maxiter:
        k += 1
        v = y / beta
        y = A @ v
        if k >= 2:
            y -= (beta / oldb) * r1
        alfa = v @ y
        y -= (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb, beta = beta, np.sqrt(max(r2 @ y, 0.0))

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        hist.append(phibar / beta1)
        if hist[-1] <= inner_tol or beta == 0.0:
            # the estimate lives in the preconditioned norm; confirm the true residual
            res = np.linalg.norm(b - A @ x) / bnorm
            if res <= tol or beta == 0.0:
                break
            inner_tol = hist[-1] * max(0.05, 0.5 * tol / res)
    res = np.linalg.norm(b - A @ x) / bnorm
    return x, SolveReport("minres", k, res, res <= tol, hist)


def direct(A, b) -> tuple[np.ndarray, SolveReport]:
    """Sparse LU solve (SuperLU with COLAMD ordering)."""
    lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x) / bnorm if bnorm else 0.0
    return x, SolveReport("direct", 1, res, bool(np.isfinite(res)))


def factorized(A) -> Callable:
    """Return ``b -> A^-1 b`` from a sparse LU factorisation."""
    lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    return lu.solve


def solve(A, b, method: str = "direct", tol: float = 1e-10, M=None,
          maxiter: Optional[int] = None, strict: bool = True):
    """Dispatch to ``direct``, ``minres`` or ``cg``.

    With ``strict`` a non-converged iterative solve raises ``SolverError``.
    """
    if method == "direct":
        x, rep = direct(A, b)
    elif method == "minres":
        x, rep = minres(A, b, M=M, tol=tol, maxiter=maxiter)
    elif method == "cg":
        x, rep = cg(A, b, M=M, tol=tol, maxiter=maxiter)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    log.debug("%s: %d its, residual %.3e", rep.method, rep.iterations, rep.residual)
    if strict and not rep.converged:
        raise SolverError(f"{rep.method} stopped after {rep.iterations} iterations "
                          f"with relative residual {rep.residual:.3e}")
    return x, rep
