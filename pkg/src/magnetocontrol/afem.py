"""Adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE.

Three modes are supported: marking by the majorant indicators
(``adaptive-majorant``), by the exact elementwise error (``adaptive-exact``)
and uniform refinement (``uniform``).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .estimator import EstimatorConstants, EstimatorReport, estimate, minorant
from .manufactured import ProblemData, triple_norm_error
from .mesh import Mesh, bisect, build_structured_cube, uniform_refine
from .optimality import (OptimalitySolution, assemble_kkt, build_spaces,
                         count_dofs, gauge_fix_v, solve_optimality)
from .spaces import interpolate_edge

log = logging.getLogger(__name__)

MODES = ("adaptive-majorant", "adaptive-exact", "uniform")


@dataclass
class AfemConfig:
    theta: float = 0.5
    kappa: float = 1.0
    max_iterations: int = 20
    max_dof: int = 150_000
    tol_kkt: float = 1e-10
    tol_aux: float = 1e-10
    mode: str = "adaptive-majorant"
    n: int = 6
    out: Optional[str] = None
    solver: str = "minres"
    deterministic: bool = True
    estimate_always: bool = False     # evaluate M_h in every mode
    minorant: bool = True
    vtk: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n < 1 or self.max_iterations < 1:
            raise ValueError("n and max_iterations must be positive")
        if self.max_dof < 1:
            raise ValueError("max_dof must be positive")
        if self.solver not in ("minres", "direct"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not (self.tol_kkt > 0 and self.tol_aux > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class ConvergenceRecord:
    dof: int
    err_H: float
    err_j: float
    total: float
    M_h: Optional[float] = None
    M_minus: Optional[float] = None
    n_cells: int = 0
    marked: int = 0
    marked_in_omega: int = 0
    seconds: float = 0.0

    def bound_holds(self) -> bool:
        return self.M_h is None or self.total <= self.M_h + 1e-8 * (1.0 + self.M_h)


@dataclass
class AfemResult:
    config: AfemConfig
    records: List[ConvergenceRecord]
    meshes: List[Mesh] = field(repr=False, default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and all(r.bound_holds() for r in self.records)


def dorfler_mark(indicators, theta: float) -> np.ndarray:
    """Smallest set of cells whose indicators sum to at least ``theta`` of the total.

    Cells are taken in descending order of indicator, ties by ascending index.
    """
    eta = np.asarray(indicators, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and nonnegative")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    order = np.lexsort((np.arange(eta.size), -eta))
    csum = np.cumsum(eta[order])
    if eta.size == 0 or csum[-1] == 0.0:
        return np.zeros(0, dtype=np.int64)
    k = min(int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1, eta.size)
    return np.sort(order[:k])


def best_minorant(sol: OptimalitySolution, data: ProblemData) -> float:
    """Minorant for ``Phi = t (I_h E - E_h)`` with the optimal scaling ``t``.

    The minorant is a concave quadratic ``a t - b t^2`` in ``t``; two
    evaluations determine it and its maximum ``a^2 / 4b`` over all real ``t``.
    """
    exact = data.exact
    if exact is None:
        return 0.0
    phi = interpolate_edge(exact.E, sol.spaces.edge) - sol.E
    m1 = minorant(sol.spaces, sol.H_at, sol.j_at, phi, data)
    m2 = minorant(sol.spaces, sol.H_at, sol.j_at, 2.0 * phi, data)
    b = (2.0 * m1 - m2) / 2.0
    a = m1 + b
    if b <= 0.0:                   # Phi = 0 or degenerate; t = 0 is admissible
        return 0.0
    return a * a / (4.0 * b)


def run(config: AfemConfig, data: Optional[ProblemData] = None,
        mesh: Optional[Mesh] = None, callback: Optional[Callable] = None,
        keep_meshes: bool = False) -> AfemResult:
    """Run the adaptive (or uniform) loop and optionally write artifacts."""
    from . import io as io_

    config.validate()
    data = data or ProblemData(kappa=config.kappa)
    if data.kappa != config.kappa:
        raise ValueError("config and data disagree on kappa")
    constants = EstimatorConstants.from_data(data)
    if mesh is None:
        from .manufactured import mu
        mesh = build_structured_cube(data.domain, config.n, control=data.control, mu=mu)

    out = Path(config.out) if config.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io_.write_manifest(out / "manifest.txt", config, constants, data)
        io_.start_history(out / "history.csv")

    records: List[ConvergenceRecord] = []
    meshes: List[Mesh] = []
    result = AfemResult(config, records, meshes)
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        spaces = build_spaces(mesh)
        try:
            system = gauge_fix_v(assemble_kkt(spaces, data))
            sol = solve_optimality(system, spaces, data, method=config.solver,
                                   tol=config.tol_kkt)
            err = triple_norm_error(mesh, sol.H_at, sol.j_at, data.kappa, data.exact)
            est: Optional[EstimatorReport] = None
            if config.mode == "adaptive-majorant" or config.estimate_always:
                est = estimate(sol, data, constants, tol=config.tol_aux)
        except Exception as exc:            # partial history is kept
            log.error("iteration %d failed: %s", it, exc)
            result.error = f"iteration {it}: {exc}"
            break

        rec = ConvergenceRecord(spaces.n_dofs, err.err_H, err.err_j, err.total,
                                None if est is None else est.M_h,
                                n_cells=mesh.n_cells)
        if config.minorant and config.mode == "adaptive-majorant":
            rec.M_minus = best_minorant(sol, data)

        last = (spaces.n_dofs >= config.max_dof) or (it == config.max_iterations - 1)
        if not last:
            if config.mode == "uniform":
                new = uniform_refine(mesh)
                rec.marked = mesh.n_cells
                rec.marked_in_omega = int(mesh.in_omega.sum())
            else:
                eta = est.M_T if config.mode == "adaptive-majorant" else err.cell_total(data.kappa)
                marked = dorfler_mark(eta, config.theta)
                rec.marked = int(marked.size)
                rec.marked_in_omega = int(mesh.in_omega[marked].sum())
                new = bisect(mesh, marked) if marked.size else mesh
        rec.seconds = time.perf_counter() - t0
        records.append(rec)
        if keep_meshes:
            meshes.append(mesh)
        log.info("it %2d  dof %7d  total %.4e  M_h %s  (%.1fs)", it, rec.dof, rec.total,
                 "-" if rec.M_h is None else f"{rec.M_h:.4e}", rec.seconds)
        if out is not None:
            io_.append_history(out / "history.csv", rec)
            if config.vtk:
                io_.write_vtk(out / f"iter{it:03d}.vtk", mesh, sol,
                              None if est is None else est.M_T)
        if callback is not None:
            callback(it, mesh, sol, rec, est)
        if last or new is mesh or count_dofs(new) > config.max_dof:
            break
        mesh = new
    return result
