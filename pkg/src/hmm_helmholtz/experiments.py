"""End-to-end experiment drivers producing CSV tables."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import fem
from .cell import CellConfig, CellSolver, mu_eff_sweep
from .config import ExperimentConfig
from .errors import NonMonotoneMesh, NonPositiveError
from .macro import (
    MacroProblem,
    Scaling,
    build_inclusion_layout,
    decay_ratio,
    inclusion_indicator,
    line_sample,
    reconstruct,
    solve_effective,
    solve_with_coefficients,
)
from .mesh import structured_mesh
from .reference import HeterogeneousProblem, solve_heterogeneous

log = logging.getLogger(__name__)


def compute_eoc(errors: Sequence[tuple[float, float]]) -> list[float]:
    """``ln(e_i / e_{i+1}) / ln(h_i / h_{i+1})`` between consecutive levels."""
    out = []
    for (h1, e1), (h2, e2) in zip(errors, errors[1:]):
        if e1 <= 0 or e2 <= 0:
            raise NonPositiveError(f"errors must be positive, got {e1}, {e2}")
        if not h2 < h1:
            raise NonMonotoneMesh(f"mesh sizes must strictly decrease, got {h1} then {h2}")
        out.append(math.log(e1 / e2) / math.log(h1 / h2))
    return out


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


@dataclass
class ResultTable:
    """Rows of one CSV output plus the metadata written as ``#`` header lines."""

    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> list[Any]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def write(self, path: str | Path, run_info: str | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            if run_info:
                fh.write(f"# run: {run_info}\n")
            for key in sorted(self.metadata):
                fh.write(f"# {key}: {_fmt(self.metadata[key])}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        return path


@dataclass
class ExperimentResult:
    tables: dict[str, ResultTable]
    fields: dict[str, fem.FieldP1] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def write(self, cfg: ExperimentConfig, elapsed: float | None = None) -> list[Path]:
        out = Path(cfg.out)
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        run_info = f"timestamp={stamp}" + ("" if elapsed is None else f" elapsed_s={elapsed:.3f}")
        written = []
        for name, table in self.tables.items():
            table.metadata.setdefault("config_hash", cfg.digest())
            table.metadata.setdefault("experiment", cfg.experiment)
            written.append(table.write(out / f"{name}.csv", run_info))
        if cfg.write_fields:
            for name, f in self.fields.items():
                written.append(fem.write_field_csv(
                    f, out / f"{name}.csv", [f"config_hash: {cfg.digest()}", f"field: {name}"]))
        return written


def cell_config(cfg: ExperimentConfig, n_cell: int) -> CellConfig:
    return CellConfig(cfg.eps_e_inv, complex(cfg.eps_i_inv), cfg.D_box, n_cell)


def macro_problem(cfg: ExperimentConfig, k: float, n: int, n_cell: int | None = None) -> MacroProblem:
    n_cell = cfg.cell_factor * n if n_cell is None else n_cell
    return MacroProblem(k=k, n_macro=n, cell=cell_config(cfg, n_cell), G=cfg.G_box, Omega=cfg.omega_box,
                        delta=cfg.delta, direction=tuple(cfg.direction), amplitude=complex(cfg.amplitude))


def _h_label(n: int) -> float:
    # Level label in the unit-square convention, sqrt(2) / n.
    return math.sqrt(2.0) / n


# -- mu_eff sweep -----------------------------------------------------------------------

def run_mueff_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    ccfg = cell_config(cfg, cfg.n_cell)
    n_steps = int(round((cfg.k_max - cfg.k_min) / cfg.k_step))
    ks = cfg.k_min + cfg.k_step * np.arange(n_steps + 1)
    solver = CellSolver(ccfg)
    sweep = mu_eff_sweep(ccfg, ks, cfg.oracle_m, cfg.bisect_tol, solver=solver)
    a = sweep.a_eff
    table = ResultTable(["k", "Re(mu)", "Im(mu)", "Re(mu_oracle)", "Im(mu_oracle)",
                         "a_eff_11", "a_eff_22", "a_eff_12"])
    for k, mu, mo in zip(sweep.ks, sweep.mu, sweep.mu_oracle):
        table.rows.append([k, mu.real, mu.imag, mo.real, mo.imag, a[0, 0], a[1, 1], a[0, 1]])
    table.metadata.update({"n_cell": cfg.n_cell, "h_cell": solver.mesh.h_max, "oracle_M": cfg.oracle_m,
                           "D_triangles": int((solver.mesh.region == 1).sum()),
                           "max_residual": max(solver.residuals.values())})
    crossings = ResultTable(["k", "direction"], [[c.k, c.direction] for c in sweep.crossings],
                            {"bisect_tol": cfg.bisect_tol, "n_cell": cfg.n_cell})
    return ExperimentResult({"mueff": table, "mueff_crossings": crossings},
                            summary={"crossings": sweep.crossings, "sweep": sweep})


# -- homogenized reference and level loops ----------------------------------------------------

def homogenized_reference(cfg: ExperimentConfig, k: float):
    """Effective problem solved with cell and macro meshes both at ``n_ref``."""
    return solve_effective(macro_problem(cfg, k, cfg.n_ref, cfg.n_ref))


def run_eoc(cfg: ExperimentConfig) -> ExperimentResult:
    k = cfg.k
    table = ResultTable(["n", "entities", "h_max", "H_label", "k", "l2_error", "h1k_error",
                         "eoc_l2", "eoc_h1k"])
    levels = cfg.mesh_levels
    if not levels:
        return ExperimentResult({"eoc": table})
    ref = homogenized_reference(cfg, k)
    residuals = [ref.residual]
    errs = []
    for n in levels:
        sol = solve_effective(macro_problem(cfg, k, n))
        residuals.append(sol.residual)
        l2, h1k = fem.cross_mesh_error(sol.u_H, ref.u_H, k)
        errs.append((n, sol.u_H.mesh.h_max, l2, h1k, sol.u_H.mesh.n_triangles))
    eoc_l2 = [math.nan] + compute_eoc([(h, e) for _, h, e, _, _ in errs])
    eoc_h1 = [math.nan] + compute_eoc([(h, e) for _, h, _, e, _ in errs])
    for (n, h, l2, h1k, ent), p, q in zip(errs, eoc_l2, eoc_h1):
        table.rows.append([n, ent, h, _h_label(n), k, l2, h1k, p, q])
    table.metadata.update({"n_ref": cfg.n_ref, "cell_factor": cfg.cell_factor,
                           "reference_mu_eff": ref.cell.mu_eff, "max_residual": max(residuals)})
    return ExperimentResult({"eoc": table})


def threshold_level(errors: Sequence[float]) -> int | None:
    """Index of the first level whose error is below half the coarsest-level error."""
    for i, e in enumerate(errors):
        if e < 0.5 * errors[0]:
            return i
    return None


def run_resolution(cfg: ExperimentConfig) -> ExperimentResult:
    table = ResultTable(["k", "n", "entities", "h_max", "h1k_error", "below_half_initial"])
    summary = ResultTable(["k", "threshold_n", "threshold_entities"])
    residuals = []
    for k in cfg.k_list:
        ref = homogenized_reference(cfg, k)
        residuals.append(ref.residual)
        rows = []
        for n in cfg.mesh_levels:
            sol = solve_effective(macro_problem(cfg, k, n))
            residuals.append(sol.residual)
            _, h1k = fem.cross_mesh_error(sol.u_H, ref.u_H, k)
            rows.append((n, sol.u_H.mesh.n_triangles, sol.u_H.mesh.h_max, h1k))
        errs = [r[3] for r in rows]
        for n, ent, h, e in rows:
            table.rows.append([k, n, ent, h, e, e < 0.5 * errs[0]])
        i = threshold_level(errs)
        summary.rows.append([k, rows[i][0] if i is not None else "", rows[i][1] if i is not None else ""])
    meta = {"n_ref": cfg.n_ref, "cell_factor": cfg.cell_factor, "max_residual": max(residuals, default=0.0)}
    table.metadata.update(meta)
    summary.metadata.update(meta)
    return ExperimentResult({"resolution": table, "resolution_thresholds": summary})


def run_manufactured(cfg: ExperimentConfig) -> ExperimentResult:
    """Plane wave through a homogeneous domain: exact solution of the impedance problem."""
    k = cfg.k
    u, grad = fem.plane_wave(k, cfg.direction, complex(cfg.amplitude))
    problem = macro_problem(cfg, k, 1)
    coeff = fem.CoefficientField.uniform([0], 1.0, 1.0)
    table = ResultTable(["n", "h_max", "k", "l2_error", "h1k_error", "eoc_l2", "eoc_h1k"])
    errs, residuals = [], []
    for n in cfg.mesh_levels:
        mesh = structured_mesh(cfg.G_box, n)
        uh, res = solve_with_coefficients(mesh, coeff, problem)
        residuals.append(res)
        errs.append((n, mesh.h_max, *fem.error_against_exact(uh, u, grad, k)))
    eoc_l2 = [math.nan] + compute_eoc([(h, e) for _, h, e, _ in errs])
    eoc_h1 = [math.nan] + compute_eoc([(h, e) for _, h, _, e in errs])
    for (n, h, l2, h1k), p, q in zip(errs, eoc_l2, eoc_h1):
        table.rows.append([n, h, k, l2, h1k, p, q])
    table.metadata["max_residual"] = max(residuals, default=0.0)
    return ExperimentResult({"manufactured": table})


# -- comparisons with the heterogeneous problem -----------------------------------------------

def run_reconstruction(cfg: ExperimentConfig) -> ExperimentResult:
    k = cfg.k
    het = HeterogeneousProblem(macro_problem(cfg, k, cfg.mesh_levels[0]), cfg.n_fine)
    u_delta, ref_res = solve_heterogeneous(het)
    fine = u_delta.mesh
    table = ResultTable(["n", "entities", "h_max", "H_label", "err_uH", "err_unscaled", "err_delta_scaled",
                         "eoc_unscaled", "eoc_delta_scaled"])
    rows = []
    residuals = [ref_res]
    for n in cfg.mesh_levels:
        sol = solve_effective(macro_problem(cfg, k, n))
        residuals.append(sol.residual)
        uH_fine = fem.FieldP1(fine, fem.evaluate(sol.u_H, fine.vertices))
        errs = [fem.norm_l2(u_delta - uH_fine)]
        for scaling in Scaling:
            errs.append(fem.norm_l2(u_delta - reconstruct(sol, fine, scaling)))
        rows.append((n, sol.u_H.mesh.n_triangles, sol.u_H.mesh.h_max, *errs))
    eoc_u = [math.nan] + compute_eoc([(r[2], r[4]) for r in rows])
    eoc_d = [math.nan] + compute_eoc([(r[2], r[5]) for r in rows])
    for r, p, q in zip(rows, eoc_u, eoc_d):
        table.rows.append([r[0], r[1], r[2], _h_label(r[0]), r[3], r[4], r[5], p, q])
    best = {s.value: min(r[4 + i] for r in rows) for i, s in enumerate(Scaling)}
    winner = min(best, key=best.get)
    table.metadata.update({
        "n_fine": cfg.n_fine, "delta": cfg.delta, "cell_factor": cfg.cell_factor,
        "inclusions": len(build_inclusion_layout(cfg.omega_box, cfg.delta, cfg.D_box)),
        "winning_scaling": winner, "max_residual": max(residuals),
    })
    return ExperimentResult({"reconstruction": table}, summary={"winner": winner, "best": best})


def run_bandgap(cfg: ExperimentConfig) -> ExperimentResult:
    eval_mesh = structured_mesh(cfg.G_box, cfg.n_fine, cfg.omega_box)
    boxes = build_inclusion_layout(cfg.omega_box, cfg.delta, cfg.D_box)
    in_incl = inclusion_indicator(eval_mesh.vertices, boxes)
    summary = ResultTable(["k", "Re(mu_eff)", "Im(mu_eff)", "decay_ratio", "max_abs_rec_inclusions",
                           "max_abs_incident", "max_abs_uH"])
    tables: dict[str, ResultTable] = {"bandgap_summary": summary}
    fields: dict[str, fem.FieldP1] = {}
    for k in cfg.band_k:
        sol = solve_effective(macro_problem(cfg, k, cfg.n_macro))
        rec = reconstruct(sol, eval_mesh, Scaling.UNSCALED)
        u_inc, _ = fem.plane_wave(k, cfg.direction, complex(cfg.amplitude))
        max_inc = float(np.abs(u_inc(eval_mesh.vertices)).max())
        max_rec = float(np.abs(rec.values[in_incl]).max()) if in_incl.any() else 0.0
        mu = sol.cell.mu_eff
        summary.rows.append([k, mu.real, mu.imag, decay_ratio(sol.u_H, cfg.omega_box), max_rec, max_inc,
                             float(np.abs(sol.u_H.values).max())])
        tag = f"k{_fmt(k)}"
        fields[f"field_uH_{tag}"] = sol.u_H
        fields[f"field_rec_{tag}"] = rec
        for name, f in ((f"line_uH_{tag}", sol.u_H), (f"line_rec_{tag}", rec)):
            samples = line_sample(f, cfg.y_line, cfg.n_samples)
            tables[name] = ResultTable(["x", "re", "im", "abs"],
                                       [[x, v.real, v.imag, abs(v)] for x, v in samples],
                                       {"y_line": cfg.y_line, "n_samples": cfg.n_samples})
    summary.metadata.update({"n_macro": cfg.n_macro, "n_fine": cfg.n_fine, "scaling": Scaling.UNSCALED.value,
                             "cell_factor": cfg.cell_factor})
    return ExperimentResult(tables, fields)


def run_dump_mesh(cfg: ExperimentConfig) -> ExperimentResult:
    mesh = structured_mesh(cfg.G_box, cfg.n_macro, cfg.omega_box)
    verts = ResultTable(["index", "x", "y"], [[i, x, y] for i, (x, y) in enumerate(mesh.vertices)],
                        {"n": cfg.n_macro, "h_max": mesh.h_max})
    tris = ResultTable(["index", "v0", "v1", "v2", "region"],
                       [[i, *map(int, t), int(r)] for i, (t, r) in enumerate(zip(mesh.triangles, mesh.region))],
                       {"n": cfg.n_macro, "triangles": mesh.n_triangles})
    return ExperimentResult({"mesh_vertices": verts, "mesh_triangles": tris})


RUNNERS = {
    "mueff-sweep": run_mueff_sweep,
    "eoc": run_eoc,
    "resolution": run_resolution,
    "reconstruction": run_reconstruction,
    "bandgap": run_bandgap,
    "manufactured": run_manufactured,
    "dump-mesh": run_dump_mesh,
}


def run(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    start = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg)
    if write:
        result.write(cfg, time.perf_counter() - start)
    return result
