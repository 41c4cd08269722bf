"""Adaptive finite elements for optimal control of magneto-static fields.

Lowest-order edge elements for the optimality system, guaranteed functional
error majorants and minorants, and a Dorfler-marked adaptive loop driven by
newest vertex bisection.
"""
from .afem import AfemConfig, ConvergenceRecord, dorfler_mark, run
from .estimator import EstimatorConstants, EstimatorReport, estimate, minorant
from .manufactured import ExactSolution, ProblemData, manufactured_data, triple_norm_error
from .mesh import Box, Mesh, bisect, build_structured_cube, uniform_refine
from .optimality import (KktSystem, OptimalitySolution, assemble_kkt, build_spaces,
                         gauge_fix_v, solve_optimality)
from .spaces import DofMap, FeField, SpaceKind, build_dofmap

__version__ = "0.1.0"

__all__ = [
    "AfemConfig", "ConvergenceRecord", "dorfler_mark", "run",
    "EstimatorConstants", "EstimatorReport", "estimate", "minorant",
    "ExactSolution", "ProblemData", "manufactured_data", "triple_norm_error",
    "Box", "Mesh", "bisect", "build_structured_cube", "uniform_refine",
    "KktSystem", "OptimalitySolution", "assemble_kkt", "build_spaces",
    "gauge_fix_v", "solve_optimality",
    "DofMap", "FeField", "SpaceKind", "build_dofmap",
]
