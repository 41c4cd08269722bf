"""Run artifacts: history CSV, manifest, VTK snapshots and key=value configs."""
from __future__ import annotations

import csv
import math
from dataclasses import fields
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

HISTORY_HEADER = ["DoF", "err_H", "err_j", "total", "M_h"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.17g}"


# ----------------------------------------------------------------------
# history

def start_history(path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(HISTORY_HEADER)


def append_history(path, rec) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow([str(int(rec.dof)), _fmt(rec.err_H), _fmt(rec.err_j),
                                 _fmt(rec.total), _fmt(rec.M_h)])


def write_history(path, records: Iterable) -> None:
    start_history(path)
    for r in records:
        append_history(path, r)


def read_history(path) -> list:
    """Parse a history file back into :class:`ConvergenceRecord` objects."""
    from .afem import ConvergenceRecord

    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for k, row in enumerate(rows, start=2):
            if len(row) != len(HISTORY_HEADER):
                raise ValueError(f"{path}:{k}: expected {len(HISTORY_HEADER)} columns")
            out.append(ConvergenceRecord(int(row[0]), float(row[1]), float(row[2]),
                                         float(row[3]), float(row[4]) if row[4] else None))
    return out


def compare_runs(run_dirs, out_path) -> list:
    """Merge several histories into one (run, DoF, total, M_h) table."""
    rows = []
    for d in run_dirs:
        d = Path(d)
        for r in read_history(d / "history.csv"):
            rows.append((d.name, r.dof, r.total, r.M_h))
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "DoF", "total", "M_h"])
        for name, dof, total, mh in rows:
            w.writerow([name, dof, _fmt(total), _fmt(mh)])
    return rows


# ----------------------------------------------------------------------
# manifest and config

def write_manifest(path, config, constants, data) -> None:
    lines = ["# run manifest"]
    for f in fields(config):
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    for f in fields(constants):
        lines.append(f"const.{f.name} = {getattr(constants, f.name):.17g}")
    lines.append(f"domain = {tuple(data.domain.lo)} .. {tuple(data.domain.hi)}")
    lines.append(f"control = {tuple(data.control.lo)} .. {tuple(data.control.hi)}")
    lines.append("data.j_d = edge interpolant on the control submesh")
    lines.append("data.H_d = edge interpolant in the trace-free edge space")
    Path(path).write_text("\n".join(lines) + "\n")


class ConfigError(ValueError):
    pass


_ALIASES = {"max_iters": "max_iterations", "max-iters": "max_iterations",
            "max-dof": "max_dof", "tol-kkt": "tol_kkt", "tol-aux": "tol_aux"}


def _coerce(value: str, default, key: str, lineno: int, path):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(float(value)) if float(value).is_integer() else int(value)
        if isinstance(default, float):
            return float(value)
        return None if value.lower() in ("", "none") else value
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None


def parse_config(text: str, path="<config>", **overrides):
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown keys fail."""
    from .afem import AfemConfig

    defaults = AfemConfig()
    known = {f.name for f in fields(AfemConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = (_coerce(val, getattr(defaults, key), key, lineno, path), lineno)
    kwargs = {k: v for k, (v, _) in values.items()}
    kwargs.update(overrides)
    try:
        return AfemConfig(**kwargs)
    except ValueError as exc:
        bad = next((ln for k, (_, ln) in values.items() if k in str(exc)), None)
        where = f"{path}:{bad}" if bad else str(path)
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path, **overrides):
    with open(path) as fh:
        return parse_config(fh.read(), path=str(path), **overrides)


# ----------------------------------------------------------------------
# VTK

def write_vtk(path, mesh, sol=None, indicators: Optional[np.ndarray] = None) -> None:
    """Legacy ASCII unstructured grid with cell data.

    Always writes ``mu`` and ``in_omega``; with a solution also the cell
    averages of ``E``, ``H`` and ``j`` (zero off the control region), ``u`` and
    ``v`` at the vertices (``v`` zero off the control region), and optional
    per-cell estimator indicators ``M_T``.
    """
    nv, nt = mesh.n_vertices, mesh.n_cells
    out: List[str] = ["# vtk DataFile Version 3.0", "magnetocontrol mesh", "ASCII",
                      "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    out.append(f"CELLS {nt} {5 * nt}")
    out += [f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.cells]
    out.append(f"CELL_TYPES {nt}")
    out += ["10"] * nt
    out.append(f"CELL_DATA {nt}")

    def scalars(name, vals, fmt="{:.17g}"):
        out.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
        out.extend(fmt.format(v) for v in vals)

    def vectors(name, vals):
        out.append(f"VECTORS {name} double")
        out.extend(f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vals)

    scalars("mu", mesh.mu)
    scalars("in_omega", mesh.in_omega.astype(int), "{:d}")
    if indicators is not None:
        scalars("M_T", indicators)
    if sol is not None:
        centroid = np.full((1, 4), 0.25)
        vectors("E", sol.E.evaluate(centroid)[:, 0])
        vectors("H", sol.H_at(centroid)[:, 0])
        j = np.zeros((nt, 3))
        j[sol.spaces.smap.cell_map] = sol.j_at(centroid)[:, 0]
        vectors("j", j)
        out.append(f"POINT_DATA {nv}")
        u = sol.u.dofmap.to_entities(sol.u.coeffs)
        v = np.zeros(nv)
        v[sol.spaces.smap.entity_map("vertex")] = sol.v.coeffs
        scalars("u", u)
        scalars("v", v)
    Path(path).write_text("\n".join(out) + "\n")
