"""Batch front-end over the library: validation, continuity sweeps,
certification, determinant scans, factorization fits, conjugation builds, and
energy audits, driven by a JSON run configuration.

Outputs per run: a CSV table (single header row, one row per grid point,
numbers with 17 significant digits) plus a ``run-manifest/1`` JSON document
recording the config hash, effective tolerances, and a pass/fail summary.
The certify task additionally writes a ``symmetrizer-certificate/1`` document
storing the evaluated matrices per grid point so ``--replay`` can re-check the
margins without reconstructing anything.

Exit status: 0 when the task's pass criterion holds, 1 on a task failure
(the manifest carries the failing grid point), 2 on configuration or
command-line problems.

Tasks whose grid rows are independent (evans-scan cells, energy-audit trials)
are evaluated through a thread pool sized by ``--workers``; rows are emitted
in grid order regardless of completion order.  Sweeps whose rows share state
run serially.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conjugation import (
    VariableSymbol,
    build_conjugator,
    energy_audit,
    honest_constants,
    EnergyConstants,
)
from .errors import CertificationFailureError, NotFoundError, ToolkitError
from .evans import evans_at, factorization_sweep, lopatinski_limit
from .subspaces import continuity_sweep
from .symbols import Frequency, PolarFrequency, from_polar, unit_direction
from .symmetrizers import (
    assemble_symmetrizer,
    certification_grid,
    _oblique_projectors,
)
from .systems import (
    BoundaryData,
    ParamBox,
    SystemDefinition,
    get_example,
    validate_hypotheses,
)

MANIFEST_SCHEMA = "run-manifest/1"
CERTIFICATE_SCHEMA = "symmetrizer-certificate/1"

TASKS = (
    "validate",
    "continuity",
    "certify",
    "evans-scan",
    "factorization",
    "conjugate",
    "energy-audit",
)

# Default tolerances; each may be overridden per-config or with repeated
# ``--tolerance name=value`` flags.
DEFAULT_TOLERANCES = {
    "margin_floor": -1e-10,        # pass floor for certificate margins
    "hermiticity_tol": 1e-10,      # absolute symmetry-defect allowance
    "monotone_jitter": 1e-10,      # permitted uptick in a decreasing sweep
    "final_gap_max": 1e-4,         # ceiling on the last valid sweep gap
    "conjugation_residual": 1e-6,  # max derivative defect of the conjugator
    "slack_floor": -1e-8,          # energy-estimate slack floor
    "identity_tol": 1e-6,          # energy-identity residual ceiling
}


class ConfigError(Exception):
    """Configuration problem; carries the offending field or source line."""

    def __init__(self, message: str, field_path: Optional[str] = None,
                 line: Optional[int] = None):
        super().__init__(message)
        self.field_path = field_path
        self.line = line

    def diagnostic(self) -> str:
        where = ""
        if self.field_path:
            where = f" [field: {self.field_path}]"
        elif self.line is not None:
            where = f" [line: {self.line}]"
        return f"config error: {self}{where}"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# serialization helpers


def _fmt(value) -> str:
    """17-significant-digit decimal rendering used by every table cell."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _plain(obj):
    """Recursively strip numpy types so json.dumps round-trips cleanly."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(np.real(obj)), float(np.imag(obj))]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _cplx_matrix(m: np.ndarray) -> list:
    """Row-major nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(obj, field_path: str, expect_complex: bool = False) -> np.ndarray:
    """Row-major matrix from nested lists; entries are numbers or [re, im]."""
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ConfigError("matrix must be a nonempty list of rows", field_path)
    width = len(obj[0])
    if width == 0 or any(len(r) != width for r in obj):
        raise ConfigError("matrix rows must be nonempty and equal length", field_path)
    out = np.zeros((len(obj), width), dtype=complex)
    for i, row in enumerate(obj):
        for j, cell in enumerate(row):
            if isinstance(cell, (int, float)) and not isinstance(cell, bool):
                out[i, j] = float(cell)
            elif (isinstance(cell, list) and len(cell) == 2
                  and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                          for v in cell)):
                out[i, j] = complex(float(cell[0]), float(cell[1]))
            else:
                raise ConfigError(
                    "matrix entries must be numbers or [re, im] pairs",
                    f"{field_path}[{i}][{j}]",
                )
    if not np.all(np.isfinite(out)):
        raise ConfigError("matrix entries must be finite", field_path)
    if not expect_complex and np.max(np.abs(out.imag)) == 0.0:
        return out.real.copy()
    return out


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_plain(doc), indent=2, sort_keys=True))
        fh.write("\n")


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class GridAxis:
    values: np.ndarray

    @property
    def count(self) -> int:
        return int(self.values.size)


def _as_number(obj, field_path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError("expected a number", field_path)
    v = float(obj)
    if not math.isfinite(v):
        raise ConfigError("expected a finite number", field_path)
    return v


def _parse_axis(obj, name: str) -> GridAxis:
    path = f"grids.{name}"
    if not isinstance(obj, dict):
        raise ConfigError("axis must be an object", path)
    if "values" in obj:
        raw = obj["values"]
        if not isinstance(raw, list) or len(raw) < 1:
            raise ConfigError("grid count must be >= 1", f"{path}.values")
        vals = np.array([_as_number(v, f"{path}.values[{i}]")
                         for i, v in enumerate(raw)], dtype=float)
    else:
        for key in ("min", "max", "count"):
            if key not in obj:
                raise ConfigError(f"axis needs '{key}' (or 'values')", f"{path}.{key}")
        count = obj["count"]
        if isinstance(count, bool) or not isinstance(count, int):
            raise ConfigError("grid count must be an integer", f"{path}.count")
        if count < 1:
            raise ConfigError("grid count must be >= 1", f"{path}.count")
        lo = _as_number(obj["min"], f"{path}.min")
        hi = _as_number(obj["max"], f"{path}.max")
        if lo > hi:
            raise ConfigError("axis min exceeds max", path)
        scale = obj.get("scale", "linear")
        if scale not in ("linear", "log"):
            raise ConfigError("scale must be 'linear' or 'log'", f"{path}.scale")
        if scale == "log":
            if lo <= 0 or hi <= 0:
                raise ConfigError("log-scale axis requires positive bounds", path)
            vals = np.geomspace(lo, hi, count)
        else:
            vals = np.linspace(lo, hi, count) if count > 1 else np.array([lo])
    if name in ("rho", "gamma") and np.any(vals < 0):
        raise ConfigError(f"{name} grid entries must be nonnegative", path)
    return GridAxis(values=vals)


def _load_config(path: str) -> Tuple[dict, bytes]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8 text: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be an object")
    return doc, raw


def _constant_boundary(matrix: np.ndarray, n_state: int) -> BoundaryData:
    g = np.asarray(matrix, dtype=complex)
    return BoundaryData(matrix_of=lambda p, zeta=None, _g=g: _g, n_state=n_state)


def _build_inline_system(spec: dict, params: Sequence[float]) -> SystemDefinition:
    for key in ("n_state", "n_space", "convection", "viscosity"):
        if key not in spec:
            raise ConfigError(f"inline system needs '{key}'", f"system.{key}")
    n = spec["n_state"]
    d = spec["n_space"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError("n_state must be a positive integer", "system.n_state")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ConfigError("n_space must be a positive integer", "system.n_space")
    conv_raw = spec["convection"]
    visc_raw = spec["viscosity"]
    if not isinstance(conv_raw, list) or len(conv_raw) != d:
        raise ConfigError(f"convection must list {d} matrices", "system.convection")
    if not isinstance(visc_raw, list) or len(visc_raw) != d \
            or any(not isinstance(r, list) or len(r) != d for r in visc_raw):
        raise ConfigError(f"viscosity must be a {d}x{d} nested list of matrices",
                          "system.viscosity")
    conv = []
    for j, m in enumerate(conv_raw):
        mat = _matrix_from_json(m, f"system.convection[{j}]")
        if mat.shape != (n, n) or np.iscomplexobj(mat):
            raise ConfigError(f"convection matrix {j} must be real {n}x{n}",
                              f"system.convection[{j}]")
        conv.append(mat)
    visc = []
    for j, row in enumerate(visc_raw):
        vrow = []
        for k, m in enumerate(row):
            mat = _matrix_from_json(m, f"system.viscosity[{j}][{k}]")
            if mat.shape != (n, n) or np.iscomplexobj(mat):
                raise ConfigError(f"viscosity matrix ({j},{k}) must be real {n}x{n}",
                                  f"system.viscosity[{j}][{k}]")
            vrow.append(mat)
        visc.append(vrow)
    p_tuple = tuple(float(v) for v in params)
    return SystemDefinition(
        n_state=n,
        n_space=d,
        n_params=len(p_tuple),
        conv=lambda p, j, _c=conv: _c[j - 1],
        visc=lambda p, j, k, _v=visc: _v[j - 1][k - 1],
        param_domain=ParamBox(p_tuple, p_tuple),
        name="inline",
    )


@dataclass
class RunContext:
    task: str
    system: SystemDefinition
    boundary: BoundaryData
    params: Tuple[float, ...]
    direction: Optional[Frequency]
    direction_list: List[Frequency]
    grids: Dict[str, GridAxis]
    constants: Dict[str, float]
    tolerances: Dict[str, float]
    doc: dict
    raw: bytes
    system_label: str
    outdir: str
    workers: int
    seed: int
    config_path: str


def _resolve_context(doc: dict, raw: bytes, args) -> RunContext:
    task = doc.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}", "task")

    spec = doc.get("system")
    entry = None
    if isinstance(spec, str):
        try:
            entry = get_example(spec)
        except NotFoundError as exc:
            raise ConfigError(str(exc), "system") from exc
        system = entry.system
        boundary = entry.boundary
        params = doc.get("params", list(entry.default_params))
        label = spec
    elif isinstance(spec, dict):
        params = doc.get("params", [])
        if not isinstance(params, list):
            raise ConfigError("params must be a list of numbers", "params")
        system = _build_inline_system(spec, params)
        boundary = _constant_boundary(
            np.hstack([np.eye(system.n_state), np.zeros((system.n_state, system.n_state))]),
            system.n_state,
        )
        label = "inline"
    elif spec is None and task in ("conjugate", "energy-audit"):
        # These tasks can run on matrices given directly in their own section.
        system = None
        boundary = None
        params = doc.get("params", [])
        label = "none"
    else:
        raise ConfigError("system must be a catalog name or an inline object", "system")

    if not isinstance(params, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in params):
        raise ConfigError("params must be a list of numbers", "params")
    params = tuple(float(v) for v in params)
    if system is not None and system.n_params and len(params) != system.n_params:
        raise ConfigError(
            f"system expects {system.n_params} parameters, got {len(params)}", "params")

    if doc.get("boundary") is not None:
        if system is None:
            raise ConfigError("boundary override needs a system", "boundary")
        mat = _matrix_from_json(doc["boundary"], "boundary", expect_complex=True)
        if mat.shape != (system.n_state, 2 * system.n_state):
            raise ConfigError(
                f"boundary must be {system.n_state}x{2 * system.n_state}", "boundary")
        boundary = _constant_boundary(mat, system.n_state)

    grids = {}
    raw_grids = doc.get("grids", {})
    if not isinstance(raw_grids, dict):
        raise ConfigError("grids must be an object of axes", "grids")
    for name, axis in raw_grids.items():
        if name not in ("rho", "gamma", "angle", "p"):
            raise ConfigError(f"unknown grid axis {name!r}", f"grids.{name}")
        grids[name] = _parse_axis(axis, name)

    direction = None
    if system is not None:
        dir_spec = doc.get("direction", "base" if entry is not None else None)
        if isinstance(dir_spec, str):
            if entry is None or dir_spec not in entry.directions:
                raise ConfigError(f"unknown named direction {dir_spec!r}", "direction")
            direction = unit_direction(entry.directions[dir_spec], system.n_space)
        elif isinstance(dir_spec, list):
            comps = [_as_number(v, f"direction[{i}]") for i, v in enumerate(dir_spec)]
            direction = unit_direction(comps, system.n_space)
        elif dir_spec is not None:
            raise ConfigError("direction must be a catalog key or component list",
                              "direction")
        if direction is not None and direction.gamma < 0:
            raise ConfigError("direction gamma component must be nonnegative",
                              "direction")

    direction_list = []
    if system is not None:
        if isinstance(doc.get("directions"), list):
            for i, comps in enumerate(doc["directions"]):
                if not isinstance(comps, list):
                    raise ConfigError("each direction must be a component list",
                                      f"directions[{i}]")
                freq = unit_direction(
                    [_as_number(v, f"directions[{i}][{j}]") for j, v in enumerate(comps)],
                    system.n_space,
                )
                if freq.gamma < 0:
                    raise ConfigError("direction gamma component must be nonnegative",
                                      f"directions[{i}]")
                direction_list.append(freq)
        elif "angle" in grids:
            for i, phi in enumerate(grids["angle"].values):
                if phi < -1e-12 or phi > math.pi + 1e-12:
                    raise ConfigError(
                        "angle grid must lie in [0, pi] so gamma stays nonnegative",
                        "grids.angle")
                comps = [math.cos(phi)] + [0.0] * (system.n_space - 1) + [max(math.sin(phi), 0.0)]
                direction_list.append(unit_direction(comps, system.n_space))
        elif direction is not None:
            direction_list = [direction]

    constants = dict(doc.get("constants", {}))
    if not isinstance(constants, dict):
        raise ConfigError("constants must be an object", "constants")
    for key, val in constants.items():
        constants[key] = _as_number(val, f"constants.{key}")

    tolerances = dict(DEFAULT_TOLERANCES)
    doc_tols = doc.get("tolerances", {})
    if not isinstance(doc_tols, dict):
        raise ConfigError("tolerances must be an object", "tolerances")
    for key, val in doc_tols.items():
        tolerances[str(key)] = _as_number(val, f"tolerances.{key}")
    for key, val in (args.tolerance or {}).items():
        tolerances[key] = val

    out_spec = doc.get("output", {})
    if not isinstance(out_spec, dict):
        raise ConfigError("output must be an object", "output")
    fmt = out_spec.get("format", "csv")
    if fmt != "csv":
        raise ConfigError("only csv tables are supported", "output.format")
    outdir = args.output_dir or out_spec.get("dir", ".")
    if not isinstance(outdir, str):
        raise ConfigError("output.dir must be a string", "output.dir")

    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError("--workers must be >= 1")

    return RunContext(
        task=task,
        system=system,
        boundary=boundary,
        params=params,
        direction=direction,
        direction_list=direction_list,
        grids=grids,
        constants=constants,
        tolerances=tolerances,
        doc=doc,
        raw=raw,
        system_label=label,
        outdir=outdir,
        workers=workers,
        seed=args.seed,
        config_path=args.config,
    )


def _need_axis(ctx: RunContext, name: str) -> GridAxis:
    if name not in ctx.grids:
        raise ConfigError(f"task {ctx.task!r} needs the {name!r} grid axis",
                          f"grids.{name}")
    return ctx.grids[name]


def _need_system(ctx: RunContext):
    if ctx.system is None:
        raise ConfigError(f"task {ctx.task!r} needs a system", "system")


def _pool_map(fn, items, workers: int) -> list:
    """Order-preserving map, threaded when more than one worker is allowed."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# task runners; each returns (header, rows, summary, status, extra_files)


def _run_validate(ctx: RunContext):
    _need_system(ctx)
    rng = np.random.default_rng(ctx.seed)
    count = ctx.grids["p"].count if "p" in ctx.grids else int(ctx.constants.get("samples", 50))
    if count < 1:
        raise ConfigError("grid count must be >= 1", "grids.p.count")
    box = ctx.system.param_domain
    if box.dim:
        p_samples = box.sample(rng, count)
    else:
        p_samples = np.zeros((count, 0))
    samples = []
    for p in p_samples:
        xi = rng.standard_normal(ctx.system.n_space)
        while np.linalg.norm(xi) < 1e-8:
            xi = rng.standard_normal(ctx.system.n_space)
        samples.append((tuple(p.tolist()), xi / np.linalg.norm(xi)))
    report = validate_hypotheses(ctx.system, samples)
    header = ["check", "passed", "statistic", "witness"]
    rows = [
        ["h1", report.h1_pass, "", json.dumps(_plain(report.h1_witness), sort_keys=True)],
        ["h2", report.h2_pass, report.h2_constant,
         json.dumps(_plain(report.h2_witness), sort_keys=True)],
        ["h3", report.h3_pass, report.h3_min_det,
         json.dumps(_plain(report.h3_witness), sort_keys=True)],
    ]
    ok = report.all_pass
    summary = {
        "pass": ok,
        "sample_count": report.sample_count,
        "h2_constant": report.h2_constant,
        "h3_min_det": report.h3_min_det,
    }
    return header, rows, summary, (0 if ok else 1), {}


def _run_continuity(ctx: RunContext):
    _need_system(ctx)
    if ctx.direction is None:
        raise ConfigError("continuity needs a direction", "direction")
    rho = _need_axis(ctx, "rho").values
    if np.any(rho <= 0):
        raise ConfigError("continuity radii must be positive", "grids.rho")
    order = np.argsort(rho)[::-1]  # sweep from the largest radius inward
    rows_out = continuity_sweep(ctx.system, ctx.params, ctx.direction, rho[order])
    header = ["rho", "gap", "error"]
    rows = [[r.rho, r.gap if r.error is None else None, r.error] for r in rows_out]
    # The pass criterion reads the successfully evaluated rows: near-axis
    # failures at the smallest radii are recorded per-row by design and do not
    # refute the decrease demonstrated by the valid prefix.
    valid = [(r.rho, r.gap) for r in rows_out if r.error is None]
    gaps = [g for _, g in valid]
    jitter = ctx.tolerances["monotone_jitter"]
    monotone = all(b <= a + jitter for a, b in zip(gaps, gaps[1:]))
    gap_ceiling = ctx.tolerances["final_gap_max"]
    ok = bool(gaps) and monotone and gaps[-1] <= gap_ceiling
    slope = None
    if len(valid) >= 2 and all(g > 0 for g in gaps):
        fit = np.polyfit(np.log([r for r, _ in valid]), np.log(gaps), 1)
        slope = float(fit[0])
    summary = {
        "pass": ok,
        "rows": len(rows_out),
        "monotone": monotone,
        "row_errors": sum(1 for r in rows_out if r.error is not None),
        "min_gap": min(gaps) if gaps else None,
        "final_gap": gaps[-1] if gaps else None,
        "loglog_slope": slope,
    }
    return header, rows, summary, (0 if ok else 1), {}


def _certificate_document(ctx: RunContext, cert) -> dict:
    grid_entries = []
    for row in cert.margins:
        grid_entries.append({
            "gamma_check": row.gamma,
            "rho": row.rho,
            "s": _cplx_matrix(cert.s_at(row.gamma, row.rho)),
            "g_matrix": _cplx_matrix(cert.g_at(row.gamma, row.rho)),
            "hermiticity_defect": row.hermiticity_defect,
            "separation_margin": row.separation_margin,
            "dissipation_margin": row.dissipation_margin,
        })
    return {
        "schema": CERTIFICATE_SCHEMA,
        "system": ctx.system_label,
        "params": list(ctx.params),
        "direction": list(cert.base_direction.as_tuple()),
        "kappa": cert.kappa,
        "kappa_requested": ctx.constants.get("kappa", 10.0),
        "c": cert.c,
        "delta_scale": cert.delta_scale,
        "e_minus": _cplx_matrix(cert.e_minus_ref.basis),
        "e_plus": _cplx_matrix(cert.e_plus_ref.basis),
        "grid": grid_entries,
    }


def _run_certify(ctx: RunContext):
    _need_system(ctx)
    if ctx.direction is None:
        raise ConfigError("certify needs a base direction", "direction")
    default_axis = np.array([0.0, 1e-3, 1e-2, 1e-1])
    gammas = ctx.grids["gamma"].values if "gamma" in ctx.grids else default_axis
    rhos = ctx.grids["rho"].values if "rho" in ctx.grids else default_axis
    grid = certification_grid(gammas.tolist(), rhos.tolist())
    kappa = ctx.constants.get("kappa", 10.0)
    c_base = ctx.constants.get("c_base", 1.0)
    max_rounds = int(ctx.constants.get("max_rounds", 5))
    header = ["gamma_check", "rho", "hermiticity_defect", "separation_margin",
              "dissipation_margin"]
    try:
        cert = assemble_symmetrizer(ctx.system, ctx.params, ctx.direction, kappa,
                                    grid, c_base=c_base, max_rounds=max_rounds)
    except CertificationFailureError as exc:
        summary = {
            "pass": False,
            "error": str(exc),
            "failed_point": list(exc.point) if exc.point is not None else None,
            "margins_at_failure": _plain(exc.margins) if exc.margins else None,
        }
        return header, [], summary, 1, {}
    rows = [[r.gamma, r.rho, r.hermiticity_defect, r.separation_margin,
             r.dissipation_margin] for r in cert.margins]
    floor = ctx.tolerances["margin_floor"]
    herm_tol = ctx.tolerances["hermiticity_tol"]
    ok = (
        all(r.separation_margin >= floor for r in cert.margins)
        and all(r.dissipation_margin >= floor for r in cert.margins)
        and all(r.hermiticity_defect <= herm_tol for r in cert.margins)
        and cert.c > 0
    )
    summary = {
        "pass": ok,
        "kappa_requested": kappa,
        "kappa_effective": cert.kappa,
        "c": cert.c,
        "delta_scale": cert.delta_scale,
        "grid_points": len(cert.margins),
        "min_separation_margin": min(r.separation_margin for r in cert.margins),
        "min_dissipation_margin": min(r.dissipation_margin for r in cert.margins),
        "max_hermiticity_defect": max(r.hermiticity_defect for r in cert.margins),
    }
    extra = {"certificate.json": _certificate_document(ctx, cert)}
    return header, rows, summary, (0 if ok else 1), extra


def _run_evans_scan(ctx: RunContext):
    _need_system(ctx)
    if not ctx.direction_list:
        raise ConfigError("evans-scan needs directions (direction, directions, "
                          "or an angle grid)", "direction")
    rho_axis = _need_axis(ctx, "rho").values
    if "p" in ctx.grids:
        if not ctx.params:
            raise ConfigError("system has no parameters to sweep", "grids.p")
        p_grid = [(float(v),) + ctx.params[1:] for v in ctx.grids["p"].values]
    else:
        p_grid = [ctx.params]
    threshold = ctx.constants.get("threshold", 0.0)

    cells = [(p, freq, float(r))
             for p in p_grid for freq in ctx.direction_list for r in rho_axis]

    def run_cell(cell):
        p, freq, rho = cell
        try:
            if rho == 0.0:
                res = lopatinski_limit(ctx.system, ctx.boundary, p, freq)
            else:
                res = evans_at(ctx.system, ctx.boundary, p,
                               from_polar(PolarFrequency(freq, rho)))
            return (res.modulus, None)
        except Exception as exc:  # noqa: BLE001 - per-row capture is the contract
            return (None, f"{type(exc).__name__}: {exc}")

    results = _pool_map(run_cell, cells, ctx.workers)

    n_eta = ctx.system.n_space - 1
    header = ([f"p_{i + 1}" for i in range(len(ctx.params))]
              + ["tau"] + [f"eta_{i + 1}" for i in range(n_eta)]
              + ["gamma_check", "rho", "evans_modulus", "error"])
    rows = []
    best = None
    for (p, freq, rho), (modulus, err) in zip(cells, results):
        comp = freq.as_tuple()
        rows.append(list(p) + list(comp) + [rho, modulus, err])
        if modulus is not None and (best is None or modulus < best[0]):
            best = (modulus, (list(p), list(comp), rho))
    if best is None:
        summary = {"pass": False, "error": "no grid row evaluated successfully",
                   "rows": len(rows)}
        return header, rows, summary, 1, {}
    ok = best[0] >= threshold
    summary = {
        "pass": ok,
        "rows": len(rows),
        "row_errors": sum(1 for _, e in results if e is not None),
        "min_modulus": best[0],
        "argmin": best[1],
        "threshold": threshold,
    }
    return header, rows, summary, (0 if ok else 1), {}


def _run_factorization(ctx: RunContext):
    _need_system(ctx)
    if ctx.direction is None:
        raise ConfigError("factorization needs a direction", "direction")
    rho = _need_axis(ctx, "rho").values
    if np.any(rho <= 0):
        raise ConfigError("factorization radii must be positive", "grids.rho")
    rho_desc = np.sort(np.unique(rho))[::-1].tolist()
    diag = factorization_sweep(ctx.system, ctx.boundary, ctx.params, ctx.direction,
                               rho_desc)
    by_rho = {r: m for r, m in diag.rho_table}
    err_by_rho = dict(diag.row_errors)
    header = ["rho", "evans_modulus", "error"]
    rows = [[r, by_rho.get(r), err_by_rho.get(r)] for r in rho_desc]
    summary = {
        "pass": True,
        "rows": len(rows),
        "row_errors": len(diag.row_errors),
        "delta_lim": diag.delta_lim,
        "beta_estimate": diag.beta_estimate,
        "beta_indeterminate": diag.beta_indeterminate,
        "residual": diag.residual,
    }
    return header, rows, summary, 0, {}


def _run_conjugate(ctx: RunContext):
    section = ctx.doc.get("conjugation")
    if not isinstance(section, dict):
        raise ConfigError("conjugate needs a 'conjugation' section", "conjugation")
    for key in ("g_limit", "perturbation", "theta"):
        if key not in section:
            raise ConfigError(f"conjugation needs '{key}'", f"conjugation.{key}")
    g_inf = _matrix_from_json(section["g_limit"], "conjugation.g_limit",
                              expect_complex=True)
    pert = _matrix_from_json(section["perturbation"], "conjugation.perturbation",
                             expect_complex=True)
    if g_inf.shape[0] != g_inf.shape[1]:
        raise ConfigError("g_limit must be square", "conjugation.g_limit")
    if pert.shape != g_inf.shape:
        raise ConfigError("perturbation must match g_limit's shape",
                          "conjugation.perturbation")
    theta = _as_number(section["theta"], "conjugation.theta")
    if theta <= 0:
        raise ConfigError("theta must be positive", "conjugation.theta")
    c_decay = _as_number(section.get("c_decay", float(np.linalg.norm(pert, 2))),
                         "conjugation.c_decay")
    x_max = _as_number(section.get("x_max", 25.0), "conjugation.x_max")
    if x_max * theta < 20.0:
        raise ConfigError("x_max * theta must be at least 20 for a reliable tail fit",
                          "conjugation.x_max")
    grid_step = section.get("grid_step")
    if grid_step is not None:
        grid_step = _as_number(grid_step, "conjugation.grid_step")

    vs = VariableSymbol(
        g_of_x=lambda x, z, _g=g_inf, _p=pert, _t=theta: _g + math.exp(-_t * x) * _p,
        g_inf=lambda z, _g=g_inf: _g,
        theta=theta,
        c_decay=c_decay,
    )
    zeta = Frequency.zero(1)
    conj = build_conjugator(vs, zeta, x_max, grid_step=grid_step,
                            residual_tol=ctx.tolerances["conjugation_residual"])
    header = ["x", "deviation_from_limit"]
    eye = np.eye(g_inf.shape[0])
    rows = [[x, float(np.linalg.norm(w - eye))] for x, w in zip(conj.xs, conj.w)]
    summary = {
        "pass": True,
        "nodes": len(conj.xs),
        "theta_fitted": conj.theta1,
        "cond_bound": conj.cond_bound,
        "residual": conj.residual,
        "w0_deviation": float(np.linalg.norm(conj.at_zero() - eye)),
    }
    return header, rows, summary, 0, {}


def _load_certificate_matrices(section: dict) -> Tuple[np.ndarray, np.ndarray]:
    path = section["certificate"]
    if not isinstance(path, str):
        raise ConfigError("certificate must be a file path", "energy.certificate")
    point = section.get("point")
    if (not isinstance(point, list) or len(point) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in point)):
        raise ConfigError("point must be [gamma_check, rho]", "energy.point")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load certificate: {exc}", "energy.certificate") from exc
    if doc.get("schema") != CERTIFICATE_SCHEMA:
        raise ConfigError("certificate has an unrecognized schema tag",
                          "energy.certificate")
    g0, r0 = float(point[0]), float(point[1])
    best = None
    for entry in doc.get("grid", []):
        dist = abs(entry["gamma_check"] - g0) + abs(entry["rho"] - r0)
        if best is None or dist < best[0]:
            best = (dist, entry)
    if best is None or best[0] > 1e-9:
        raise ConfigError(f"no grid point near ({g0}, {r0}) in the certificate",
                          "energy.point")
    entry = best[1]
    s = _matrix_from_json(entry["s"], "certificate.grid[].s", expect_complex=True)
    g = _matrix_from_json(entry["g_matrix"], "certificate.grid[].g_matrix",
                          expect_complex=True)
    return s, g


def _run_energy_audit(ctx: RunContext):
    section = ctx.doc.get("energy")
    if not isinstance(section, dict):
        raise ConfigError("energy-audit needs an 'energy' section", "energy")
    if "certificate" in section:
        s_mat, g_mat = _load_certificate_matrices(section)
    else:
        for key in ("s_matrix", "g_matrix"):
            if key not in section:
                raise ConfigError(
                    "energy needs 's_matrix'/'g_matrix' or a certificate reference",
                    f"energy.{key}")
        s_mat = _matrix_from_json(section["s_matrix"], "energy.s_matrix",
                                  expect_complex=True)
        g_mat = _matrix_from_json(section["g_matrix"], "energy.g_matrix",
                                  expect_complex=True)
    if s_mat.shape != g_mat.shape or s_mat.shape[0] != s_mat.shape[1]:
        raise ConfigError("s_matrix and g_matrix must be square with equal shape",
                          "energy")
    n = s_mat.shape[0]
    gamma_rows = None
    if section.get("boundary_rows") is not None:
        gamma_rows = _matrix_from_json(section["boundary_rows"],
                                       "energy.boundary_rows", expect_complex=True)
        if gamma_rows.shape[1] != n:
            raise ConfigError(f"boundary_rows must have {n} columns",
                              "energy.boundary_rows")
    x_max = _as_number(section.get("x_max", 30.0), "energy.x_max")
    step = _as_number(section.get("step", 1e-3), "energy.step")
    trials = section.get("trials", 50)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials must be a positive integer", "energy.trials")
    if x_max <= 0 or step <= 0 or step > x_max / 4:
        raise ConfigError("need 0 < step <= x_max/4", "energy.step")

    xs = np.linspace(0.0, x_max, int(round(x_max / step)) + 1)
    if "constants" in section:
        cdict = section["constants"]
        if not isinstance(cdict, dict) or set(cdict) != {"c0", "lam", "delta", "c1"}:
            raise ConfigError("constants must give exactly c0, lam, delta, c1",
                              "energy.constants")
        consts = EnergyConstants(*(_as_number(cdict[k], f"energy.constants.{k}")
                                   for k in ("c0", "lam", "delta", "c1")))
    else:
        consts = honest_constants(s_mat, g_mat, gamma_rows, xs)

    rng = np.random.default_rng(ctx.seed)
    # Decay rates keep the far-end value below the trajectory tolerance and
    # the quadrature error of the identity within its ceiling.
    rates = rng.uniform(0.7, 1.2, size=trials)
    seeds_re = rng.standard_normal((trials, n))
    seeds_im = rng.standard_normal((trials, n))

    def run_trial(i):
        a = rates[i]
        v = seeds_re[i] + 1j * seeds_im[i]
        v /= np.linalg.norm(v)
        u = np.exp(-a * xs)[:, None] * v[None, :]
        f = u @ (-a * np.eye(n) - g_mat).T
        try:
            audit = energy_audit(s_mat, g_mat, gamma_rows, xs, u, f, consts)
            return (a, audit, None)
        except Exception as exc:  # noqa: BLE001 - per-trial capture
            return (a, None, f"{type(exc).__name__}: {exc}")

    results = _pool_map(run_trial, range(trials), ctx.workers)

    header = ["trial", "decay_rate", "slack", "identity_residual",
              "hypotheses_pass", "error"]
    rows = []
    slacks, residuals = [], []
    hyp_pass = True
    hyp_margins = None
    for i, (a, audit, err) in enumerate(results):
        if err is not None:
            rows.append([i, a, None, None, None, err])
            continue
        rows.append([i, a, audit.slack, audit.identity_residual,
                     audit.hypotheses_pass, None])
        slacks.append(audit.slack)
        residuals.append(audit.identity_residual)
        hyp_pass = hyp_pass and audit.hypotheses_pass
        hyp_margins = audit.hypotheses
    clean = all(err is None for _, _, err in results)
    ok = (clean and hyp_pass and bool(slacks)
          and min(slacks) >= ctx.tolerances["slack_floor"]
          and max(residuals) <= ctx.tolerances["identity_tol"])
    summary = {
        "pass": ok,
        "trials": trials,
        "trial_errors": sum(1 for _, _, e in results if e is not None),
        "constants": dict(consts._asdict()),
        "hypotheses_pass": hyp_pass,
        "hypothesis_margins": _plain(hyp_margins) if hyp_margins else None,
        "min_slack": min(slacks) if slacks else None,
        "max_identity_residual": max(residuals) if residuals else None,
        "grid_nodes": int(xs.size),
    }
    return header, rows, summary, (0 if ok else 1), {}


_RUNNERS = {
    "validate": _run_validate,
    "continuity": _run_continuity,
    "certify": _run_certify,
    "evans-scan": _run_evans_scan,
    "factorization": _run_factorization,
    "conjugate": _run_conjugate,
    "energy-audit": _run_energy_audit,
}


# ---------------------------------------------------------------------------
# certificate replay


def _replay_margins(doc: dict) -> List[dict]:
    try:
        kappa = float(doc["kappa"])
        c = float(doc["c"])
        e_minus = _matrix_from_json(doc["e_minus"], "e_minus", expect_complex=True)
        e_plus = _matrix_from_json(doc["e_plus"], "e_plus", expect_complex=True)
        grid = doc["grid"]
        if not isinstance(grid, list) or not grid:
            raise KeyError("grid")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"certificate is missing or corrupt: {exc}") from exc
    pi_minus, pi_plus = _oblique_projectors(e_minus, e_plus)
    target = kappa ** 2 * pi_plus.conj().T @ pi_plus - pi_minus.conj().T @ pi_minus
    target_h = 0.5 * (target + target.conj().T)
    out = []
    for idx, entry in enumerate(grid):
        try:
            g_coord = float(entry["gamma_check"])
            rho = float(entry["rho"])
            s = _matrix_from_json(entry["s"], f"grid[{idx}].s", expect_complex=True)
            gm = _matrix_from_json(entry["g_matrix"], f"grid[{idx}].g_matrix",
                                   expect_complex=True)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"certificate grid entry {idx} is corrupt: {exc}") from exc
        if s.shape != gm.shape or s.shape[0] != e_minus.shape[0]:
            raise ConfigError(f"certificate grid entry {idx} has inconsistent shapes")
        defect = float(np.linalg.norm(s - s.conj().T))
        s_h = 0.5 * (s + s.conj().T)
        sep = float(np.linalg.eigvalsh(s_h - target_h).min())
        sg = s @ gm
        diss = float(np.linalg.eigvalsh(0.5 * (sg + sg.conj().T)).min()) \
            - c * rho * (g_coord + rho)
        sym_margin = 1e-10 * (1.0 + float(np.linalg.norm(s))) - defect
        out.append({
            "gamma_check": g_coord,
            "rho": rho,
            "symmetry": sym_margin,
            "separation": sep,
            "dissipation": diss,
        })
    return out


def replay_certificate(path: str) -> int:
    """Re-verify a stored certificate from its own matrices; 0/1/2 status."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"replay error: cannot parse certificate: {exc}", file=sys.stderr)
        return 2
    if not isinstance(doc, dict) or doc.get("schema") != CERTIFICATE_SCHEMA:
        print("replay error: unrecognized schema tag", file=sys.stderr)
        return 2
    try:
        margins = _replay_margins(doc)
    except ConfigError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return 2
    floor = -1e-10
    for row in margins:
        for name in ("symmetry", "separation", "dissipation"):
            if row[name] < floor:
                print(
                    f"FAIL: {name} margin {_fmt(row[name])} at "
                    f"(gamma_check={_fmt(row['gamma_check'])}, rho={_fmt(row['rho'])})"
                )
                return 1
    worst = min(min(r["symmetry"], r["separation"], r["dissipation"]) for r in margins)
    print(f"PASS: {len(margins)} grid points re-verified, worst margin {_fmt(worst)}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _parse_args(argv):
    parser = _Parser(
        prog="hypar",
        description="Run validations, sweeps, certifications, scans, and audits "
                    "from a JSON config; or re-verify a stored certificate.",
    )
    parser.add_argument("config", nargs="?", help="path to the JSON run config")
    parser.add_argument("--output-dir", default=None,
                        help="directory for tables and manifests "
                             "(default: output.dir from the config, else '.')")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads for independent grid rows "
                             "(default: processor count)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized sampling tasks")
    parser.add_argument("--tolerance", action="append", default=None,
                        metavar="NAME=VALUE",
                        help="override a named tolerance (repeatable)")
    parser.add_argument("--replay", default=None, metavar="CERT",
                        help="re-verify a stored certificate and exit")
    args = parser.parse_args(argv)

    overrides = {}
    for item in args.tolerance or []:
        if "=" not in item:
            raise _UsageError(f"--tolerance expects NAME=VALUE, got {item!r}")
        name, _, value = item.partition("=")
        name = name.strip()
        if not name:
            raise _UsageError(f"--tolerance expects NAME=VALUE, got {item!r}")
        try:
            overrides[name] = float(value)
        except ValueError:
            raise _UsageError(f"--tolerance value for {name!r} is not a number") from None
    args.tolerance = overrides
    return args


def run(args) -> int:
    doc, raw = _load_config(args.config)
    ctx = _resolve_context(doc, raw, args)
    os.makedirs(ctx.outdir, exist_ok=True)

    failure = None
    try:
        header, rows, summary, status, extra = _RUNNERS[ctx.task](ctx)
    except ToolkitError as exc:
        failure = exc
        header, rows, extra = ["error"], [], {}
        summary = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
        point = getattr(exc, "point", None)
        if point is not None:
            summary["failed_point"] = list(point)
        status = 1

    table_name = f"{ctx.task}.csv"
    _write_csv(os.path.join(ctx.outdir, table_name), header, rows)
    for name, content in extra.items():
        _write_json(os.path.join(ctx.outdir, name), content)

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "task": ctx.task,
        "system": ctx.system_label,
        "params": list(ctx.params),
        "config_sha256": hashlib.sha256(ctx.raw).hexdigest(),
        "seed": ctx.seed,
        "tolerances": dict(sorted(ctx.tolerances.items())),
        "constants": dict(sorted(ctx.constants.items())),
        "table": table_name,
        "artifacts": sorted(extra),
        "summary": summary,
        "status": status,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_json(os.path.join(ctx.outdir, "manifest.json"), manifest)

    if failure is not None:
        print(f"task failed: {summary['error']}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = _parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    if args.replay is not None:
        return replay_certificate(args.replay)
    if not args.config:
        print("usage error: a config path (or --replay) is required", file=sys.stderr)
        return 2
    try:
        return run(args)
    except ConfigError as exc:
        print(exc.diagnostic(), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
