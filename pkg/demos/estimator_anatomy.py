"""Solve once on the initial mesh and take the majorant apart.

Prints the true error, the two majorant terms, the efficiency index, the
minorant and where the largest indicators sit.

    python demos/estimator_anatomy.py [n]
"""
import sys

import numpy as np

from magnetocontrol import (EstimatorConstants, build_structured_cube, estimate,
                            manufactured_data, triple_norm_error)
from magnetocontrol.afem import best_minorant
from magnetocontrol.manufactured import mu
from magnetocontrol.optimality import solve_on_mesh

n = int(sys.argv[1]) if len(sys.argv) > 1 else 6
data = manufactured_data(kappa=1.0)
mesh = build_structured_cube(data.domain, n, control=data.control, mu=mu)
sol = solve_on_mesh(mesh, data)
const = EstimatorConstants.from_data(data)
est = estimate(sol, data, const)
err = triple_norm_error(mesh, sol.H_at, sol.j_at, data.kappa)

print(f"mesh: {mesh.n_cells} cells, {sol.spaces.n_dofs} unknowns, "
      f"KKT solve {sol.report.iterations} MINRES iterations")
print(f"error   H {err.err_H:.4f}   j {err.err_j:.4f}   total {err.total:.4f}")
print(f"M_rot {est.M_plus_rot:.4f}   M_pi {est.M_plus_pi:.4f}   M_h {est.M_h:.4f}")
print(f"efficiency M_h / error = {est.M_h / err.total:.2f}")
print(f"minorant {best_minorant(sol, data):.3e} <= error^2 {err.total ** 2:.3e}")

top = np.argsort(est.M_T)[::-1][:50]
print(f"top 50 indicators: {int(mesh.in_omega[top].sum())} inside the control region "
      f"({mesh.in_omega.mean():.1%} of all cells are)")
