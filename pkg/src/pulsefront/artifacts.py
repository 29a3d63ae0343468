"""Checkpoint, field-dump, history, and report artifacts.

Formats (all deterministic: sorted keys, fixed float formatting, no
timestamps):

* field CSV: columns ``s,x,z,value`` in C order, one row per node, with a
  JSON sidecar carrying grid metadata, the regularization knobs, and the
  boundary-condition tag;
* checkpoint directory: ``checkpoint.json`` (schema version, c, tau, eps,
  delta, a, config hash, resolved config) plus one CSV per field -- enough
  to rebuild the solver state and resume or re-diagnose;
* DNS: ``history.csv`` with (t, x_f, max_T, u_inf, min_T) and 2D snapshot
  CSVs (columns x,z,value) with sidecars;
* continuation: ``stages.csv`` plus ``continuation.json`` with the
  extrapolated speed.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ArtifactError
from .fields_ops import GridField
from .geometry import PeriodCell

CHECKPOINT_SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_field_csv(path, field: GridField):
    cell = field.cell
    s = np.repeat(cell.s, cell.n_x * cell.n_z)
    x = np.tile(np.repeat(cell.x, cell.n_z), cell.n_s)
    z = np.tile(cell.sigma_map.z.ravel(), cell.n_s)
    data = np.column_stack([s, x, z, field.values.ravel()])
    np.savetxt(path, data, delimiter=",", header="s,x,z,value", comments="",
               fmt=FLOAT_FMT)
    _write_json(str(path) + ".json", {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "bc_tag": field.bc_tag,
        "eps": field.eps, "delta": field.delta,
        "grid": {"n_s": cell.n_s, "n_x": cell.n_x, "n_z": cell.n_z,
                 "a": cell.a, "ell": cell.ell},
    })


def read_field_csv(path, cell: PeriodCell, bc_tag=None) -> GridField:
    try:
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"missing or invalid sidecar for {path}: {exc}")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ArtifactError(f"unsupported field schema {meta.get('schema_version')}")
    g = meta["grid"]
    if (g["n_s"], g["n_x"], g["n_z"]) != cell.shape:
        raise ArtifactError(f"grid mismatch: sidecar {g} vs cell {cell.shape}")
    values = np.loadtxt(path, delimiter=",", skiprows=1, usecols=3)
    return GridField(values.reshape(cell.shape), bc_tag or meta["bc_tag"], cell,
                     eps=meta.get("eps"), delta=meta.get("delta"))


def save_checkpoint(out_dir, sol, config_hash, resolved_config):
    os.makedirs(os.path.join(out_dir, "fields"), exist_ok=True)
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config_hash": config_hash,
        "config": resolved_config,
        "c": sol.c, "tau": sol.tau, "eps": sol.eps, "delta": sol.delta,
        "a": sol.a,
        "theta_minus": sol.theta_minus, "theta_plus": sol.theta_plus,
        "converged": sol.converged,
        "residual_history": [[float(v) for v in row]
                             for row in sol.residual_history],
    }
    _write_json(os.path.join(out_dir, "checkpoint.json"), header)
    for name, fld in (("T_m", sol.T), ("omega_m", sol.omega), ("psi_m", sol.Psi),
                      ("u1_m", sol.u1), ("u2_m", sol.u2)):
        write_field_csv(os.path.join(out_dir, "fields", name + ".csv"), fld)


def load_checkpoint(out_dir):
    """Rebuild a FrontSolution (and its RunConfig) from a checkpoint directory."""
    from .config import config_from_resolved
    from .frontsolve import FrontSolution
    from .fields_ops import (TAG_STREAM, TAG_TEMPERATURE, TAG_VELOCITY,
                             TAG_VORTICITY)
    from .geometry import build_period_cell

    path = os.path.join(out_dir, "checkpoint.json")
    try:
        with open(path) as fh:
            header = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read checkpoint: {exc}")
    if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ArtifactError(
            f"unsupported checkpoint schema {header.get('schema_version')!r}")
    for key in ("config", "c", "tau", "eps", "delta", "a"):
        if key not in header:
            raise ArtifactError(f"checkpoint missing field {key!r}")
    run_cfg = config_from_resolved(header["config"])
    cell = build_period_cell(run_cfg.geometry)

    import math
    margin = math.ceil(2.0 * cell.ell / cell.h_s)
    cell_ext = cell.extended(margin)
    fields_dir = os.path.join(out_dir, "fields")
    T = read_field_csv(os.path.join(fields_dir, "T_m.csv"), cell, TAG_TEMPERATURE)
    omega = read_field_csv(os.path.join(fields_dir, "omega_m.csv"), cell_ext,
                           TAG_VORTICITY)
    psi = read_field_csv(os.path.join(fields_dir, "psi_m.csv"), cell_ext,
                         TAG_STREAM)
    u1 = read_field_csv(os.path.join(fields_dir, "u1_m.csv"), cell_ext,
                        TAG_VELOCITY)
    u2 = read_field_csv(os.path.join(fields_dir, "u2_m.csv"), cell_ext,
                        TAG_VELOCITY)
    sol = FrontSolution(c=header["c"], T=T, omega=omega, Psi=psi, u1=u1, u2=u2,
                        tau=header["tau"], eps=header["eps"],
                        delta=header["delta"], a=header["a"],
                        theta_minus=header.get("theta_minus"),
                        theta_plus=header.get("theta_plus"),
                        residual_history=[tuple(r) for r in
                                          header.get("residual_history", [])],
                        converged=header.get("converged", False))
    return sol, run_cfg, header["config_hash"]


# ---------------------------------------------------------------------------
# DNS artifacts
# ---------------------------------------------------------------------------

def write_history_csv(path, history):
    data = np.array(history, dtype=float)
    np.savetxt(path, data, delimiter=",", comments="",
               header="t,x_f,max_T,u_inf,min_T", fmt=FLOAT_FMT)


def write_snapshot_csv(path, grid, t, T):
    x = np.repeat(grid.x, grid.sigma.size)
    z = grid.z_nodes().ravel()
    np.savetxt(path, np.column_stack([x, z, T.ravel()]), delimiter=",",
               header="x,z,value", comments="", fmt=FLOAT_FMT)
    _write_json(str(path) + ".json", {
        "schema_version": CHECKPOINT_SCHEMA_VERSION, "t": t,
        "grid": {"n_x": int(grid.x.size), "n_z": int(grid.sigma.size),
                 "length": grid.length, "ell": grid.ell},
    })


# ---------------------------------------------------------------------------
# continuation artifacts
# ---------------------------------------------------------------------------

def write_continuation(out_dir, result, config_hash):
    os.makedirs(out_dir, exist_ok=True)
    rows = [(i, st["kind"], st["a"], st["eps"], st["delta"], st["c"],
             st["c"] ** 2 / st["eps"])
            for i, st in enumerate(result.stages)]
    with open(os.path.join(out_dir, "stages.csv"), "w") as fh:
        fh.write("stage,kind,a,eps,delta,c,c2_over_eps\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, (int, str))
                              else FLOAT_FMT % v for v in row) + "\n")
    _write_json(os.path.join(out_dir, "continuation.json"), {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config_hash": config_hash,
        "c_extrapolated": result.c_extrapolated,
        "eps_order": result.eps_order,
        "failed_stage": result.failed_stage,
        "stages": result.stages,
    })


def write_error(out_dir, exc):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "error.json"),
                {"error": type(exc).__name__, "message": str(exc)})
