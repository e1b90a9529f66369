"""CSV/JSON serialization of fields, solutions, reports and traces.

Field CSV layout::

    # nx,ny,lx,ly,ncomp
    # 64,64,1,1,1
    i,j,x,y,value_0[,value_1,...]

Floats are written with 17 significant digits, so a write/read round trip
is bit-exact.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .domain import Grid, SubdomainMask, build_grid, make_mask
from .errors import InvalidArgumentError
from .kinetics import ConstantState

FLOAT_FMT = "%.17g"


def _tojson(obj):
    if isinstance(obj, dict):
        return {str(k): _tojson(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tojson(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _tojson(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_tojson(obj), indent=2, sort_keys=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_field_csv(path, grid: Grid, values):
    """Write a scalar ``(nx, ny)`` or vector ``(n, nx, ny)`` field."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 2:
        vals = vals[None]
    if vals.shape[1:] != grid.shape:
        raise InvalidArgumentError(f"field shape {vals.shape} does not match grid {grid.shape}")
    ncomp = vals.shape[0]
    x, y = grid.centers()
    ii, jj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
    cols = [ii.ravel(), jj.ravel(), x.ravel(), y.ravel(), *(vals[c].ravel() for c in range(ncomp))]
    table = np.column_stack(cols)
    header = f"nx,ny,lx,ly,ncomp\n{grid.nx},{grid.ny},{grid.lx!r},{grid.ly!r},{ncomp}"
    np.savetxt(path, table, delimiter=",", fmt=["%d", "%d"] + [FLOAT_FMT] * (2 + ncomp), header=header, comments="# ")


def read_field_csv(path):
    """Return ``(grid, values)`` with values shaped ``(ncomp, nx, ny)``."""
    with open(path) as fh:
        first = fh.readline()
        second = fh.readline()
    if not first.startswith("#") or "nx,ny,lx,ly,ncomp" not in first:
        raise InvalidArgumentError(f"{path}: missing field header")
    nx, ny, lx, ly, ncomp = second.lstrip("# ").strip().split(",")
    grid = build_grid(int(nx), int(ny), float(lx), float(ly))
    ncomp = int(ncomp)
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape != (grid.ncells, 4 + ncomp):
        raise InvalidArgumentError(f"{path}: expected {grid.ncells} rows of {4 + ncomp} columns")
    vals = np.empty((ncomp, grid.nx, grid.ny))
    i = data[:, 0].astype(int)
    j = data[:, 1].astype(int)
    for c in range(ncomp):
        vals[c, i, j] = data[:, 4 + c]
    return grid, vals


# --------------------------------------------------------------------------
# stationary solutions


def save_solution(directory, solution, model=None, seed=None):
    """``U.csv``, ``V.csv``, ``labels.csv`` and the ``solution.json`` sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = solution.grid
    write_field_csv(d / "U.csv", g, solution.U)
    write_field_csv(d / "V.csv", g, solution.V)
    write_field_csv(d / "labels.csv", g, solution.mask.labels.astype(float))
    diag = solution.diagnostics
    side = {
        "schema": "rdode.solution/1",
        "base_state": solution.base.to_dict(),
        "branch_assignment": solution.branch_assignment(),
        "gamma": solution.gamma,
        "tol": diag.get("tol"),
        "iterations": diag.get("iterations"),
        "residuals": {"f_res": diag.get("f_res"), "g_res": diag.get("g_res")},
        "eps_measured": solution.eps_measured,
        "mask_spec": solution.mask.spec,
        "seed": seed,
        "grid": g.to_dict(),
        "model": {"name": model.name, "params": model.params} if model is not None else None,
        "diagnostics": {k: v for k, v in diag.items() if k not in ("update_history", "contraction_ratios")},
        "update_history": diag.get("update_history", []),
    }
    write_json(d / "solution.json", side)
    return d


def load_solution(directory):
    """Inverse of :func:`save_solution`; returns ``(solution, sidecar)``."""
    from .stationary import StationarySolution

    d = Path(directory)
    side = read_json(d / "solution.json")
    grid, U = read_field_csv(d / "U.csv")
    _, V = read_field_csv(d / "V.csv")
    labels_path = d / "labels.csv"
    if labels_path.exists():
        _, lab = read_field_csv(labels_path)
        mask = SubdomainMask(grid, lab[0].astype(np.int64), side.get("mask_spec") or {})
    else:
        mask = make_mask(grid, side["mask_spec"])
    assign = side["branch_assignment"]
    branches = [assign[str(k)] for k in sorted(map(int, assign))]
    sol = StationarySolution(grid, U, V[0], mask, branches, ConstantState.from_dict(side["base_state"]),
                             float(side["gamma"]), dict(side.get("diagnostics", {})))
    return sol, side


# --------------------------------------------------------------------------
# traces


def write_norms_csv(path, trace, stride: int = 1):
    """Columns ``t, D, du, dv`` (every ``stride``-th step plus the last)."""
    n = trace.times.size
    idx = np.arange(0, n, max(1, stride))
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    if trace.du.size:
        table = np.column_stack([trace.times[idx], trace.D[idx], trace.du[idx], trace.dv[idx]])
    else:
        table = np.column_stack([trace.times[idx], *(np.full(idx.size, np.nan) for _ in range(3))])
    np.savetxt(path, table, delimiter=",", fmt=FLOAT_FMT, header="t,D,du,dv", comments="")


def read_norms_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"t": data[:, 0], "D": data[:, 1], "du": data[:, 2], "dv": data[:, 3]}


def write_snapshots(directory, trace):
    """One ``u``/``v`` field CSV pair per snapshot, indexed by ``snapshots.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, s in enumerate(trace.snapshots):
        uf, vf = f"u_{k:04d}.csv", f"v_{k:04d}.csv"
        write_field_csv(d / uf, s.grid, s.u)
        write_field_csv(d / vf, s.grid, s.v)
        entries.append({"index": k, "t": s.t, "u": uf, "v": vf})
    write_json(d / "snapshots.json", {"schema": "rdode.snapshots/1", "dt": trace.dt,
                                      "completed": trace.completed, "message": trace.message,
                                      "snapshots": entries})
    return entries
