"""Command line entry point.

    magnetocontrol run --mode adaptive --theta 0.5 --max-dof 150000 --out runs/adaptive
    magnetocontrol run --mode uniform --n 3 --steps 3 --out runs/uniform
    magnetocontrol compare --runs runs/adaptive runs/uniform --out merged.csv
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .afem import AfemConfig, run
from .io import ConfigError, compare_runs, load_config

_MODE_NAMES = {"adaptive": "adaptive-majorant", "adaptive-majorant": "adaptive-majorant",
               "exact": "adaptive-exact", "adaptive-exact": "adaptive-exact",
               "uniform": "uniform"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magnetocontrol",
                                description="Adaptive FEM for optimal magneto-static control")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the adaptive or uniform loop")
    r.add_argument("--config", help="key = value file; flags override it")
    r.add_argument("--mode", choices=sorted(_MODE_NAMES))
    r.add_argument("--n", type=int, help="initial subdivisions per axis (multiple of 3)")
    r.add_argument("--theta", type=float)
    r.add_argument("--kappa", type=float)
    r.add_argument("--max-dof", type=int, dest="max_dof")
    r.add_argument("--max-iters", type=int, dest="max_iterations")
    r.add_argument("--steps", type=int, dest="steps",
                   help="number of records (alias of --max-iters)")
    r.add_argument("--tol-kkt", type=float, dest="tol_kkt")
    r.add_argument("--tol-aux", type=float, dest="tol_aux")
    r.add_argument("--solver", choices=["minres", "direct"])
    r.add_argument("--no-vtk", action="store_true")
    r.add_argument("--deterministic", action="store_true",
                   help="accepted for compatibility; runs are always deterministic")
    r.add_argument("--out", required=False, default=None)
    r.add_argument("-v", "--verbose", action="store_true")

    c = sub.add_parser("compare", help="merge histories of several runs")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--out", required=True)
    return p


def _config_from_args(a) -> AfemConfig:
    over = {}
    for key in ("n", "theta", "kappa", "max_dof", "max_iterations", "tol_kkt",
                "tol_aux", "solver", "out"):
        val = getattr(a, key)
        if val is not None:
            over[key] = val
    if a.steps is not None:
        over["max_iterations"] = a.steps
    if a.mode is not None:
        over["mode"] = _MODE_NAMES[a.mode]
    if a.no_vtk:
        over["vtk"] = False
    if a.deterministic:
        over["deterministic"] = True
    if a.config:
        return load_config(a.config, **over)
    return AfemConfig(**over)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    if a.command == "compare":
        try:
            rows = compare_runs(a.runs, a.out)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {len(rows)} rows to {a.out}")
        return 0

    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = _config_from_args(a)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(cfg)
    except ValueError as exc:          # e.g. control box not aligned with the grid
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in result.records:
        mh = "" if r.M_h is None else f"  M_h {r.M_h:.6g}"
        print(f"DoF {r.dof:8d}  err_H {r.err_H:.6g}  err_j {r.err_j:.6g}  "
              f"total {r.total:.6g}{mh}")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    if not all(r.bound_holds() for r in result.records):
        print("error: majorant below the total error", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
