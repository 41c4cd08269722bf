"""Adaptive refinement against uniform refinement at a small budget.

Writes both histories under runs/ and prints them side by side, the same
comparison the acceptance suite makes at 1.5e5 DoF.

    python demos/adaptive_vs_uniform.py [max_dof]
"""
import sys

from magnetocontrol import AfemConfig, run
from magnetocontrol.io import compare_runs

budget = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
runs = {}
for mode in ("adaptive-majorant", "uniform"):
    cfg = AfemConfig(n=6, theta=0.5, max_dof=budget, mode=mode, out=f"runs/{mode}", vtk=False)
    runs[mode] = run(cfg).records

print(f"{'mode':18s} {'DoF':>8s} {'total':>10s} {'M_h':>10s}")
for mode, recs in runs.items():
    for r in recs:
        mh = "" if r.M_h is None else f"{r.M_h:10.4f}"
        print(f"{mode:18s} {r.dof:8d} {r.total:10.4f} {mh}")
compare_runs([f"runs/{m}" for m in runs], "runs/compare.csv")
print("merged table: runs/compare.csv")
