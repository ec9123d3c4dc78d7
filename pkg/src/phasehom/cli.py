"""Experiment harness: config-driven sweeps over the solver modules.

Configs are JSON (documented below); command-line flags override config
keys.  Every task writes CSV tables with a fixed column order plus one
manifest per run; identical configs produce byte-identical CSV bodies, and
every row carries the config hash for provenance joins.

Config schema (keys by task; "knobs" collects the numerical parameters)::

    {
      "task": "h_hom_table" | "f_hom_table" | "g0_sweep" | "g_ell_sweep"
              | "g_inf_sweep" | "at_convergence" | "inequality_suite"
              | "averaging_suite",
      "surface": { integrand dict, role "surface" },   # surface tasks
      "bulk":    { integrand dict, role "bulk" },      # bulk/at tasks
      "regime":  { "eps_sequence": [...], "delta_coeff": 1.0,
                   "delta_exponent": 1.0, "eta_coeff": 1.0,
                   "eta_exponent": 2.0 },
      "datum":   { "kind": "step"|"ramp"|"file", "height": 10.0,
                   "position": 0.5, "slope": 1.0, "path": "..." },
      "knobs":   { "w_list": [[0,1], ...] or "n_directions": 16,
                   "xi_list": [...], "r_list": [...], "N": 256,
                   "N_per_cell": 64, "grid_spacing": 0.125, "ell": 1.0,
                   "interface_family_size": 7, "grid_cells": 640,
                   "q": 2.0, "tol": 1e-8, "max_sweeps": 80,
                   "delta": 0.015625, "sigma": 0.1, "K": 0,
                   "n_fields": 20, "limit_grid": 128, "max_jumps": 1 },
      "seed": 0,
      "out_dir": "runs"
    }
"""

import argparse
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, PhasehomError, SolverError
from .integrands import integrand_from_dict
from .geometry import BoxGrid
from .cell_problems import CSV_FIELDS, f_hom_table, h_hom_table
from .surface_density import (SURFACE_CSV_FIELDS, RegimeParams, g0_hom,
                              g_ell_hom, g_inf_hom, regime_select)
from .at_solver import minimize_F_eps
from .limit_solver import M_ell_1d
from .averaging import (AVERAGING_CSV_FIELDS, calibrate_window_factor,
                        check_hom_lower_bound, check_shift_poincare)

__all__ = ["ExperimentConfig", "RunManifest", "run_experiment",
           "emit_polar_data", "main"]

TASKS = ("f_hom_table", "h_hom_table", "g0_sweep", "g_ell_sweep",
         "g_inf_sweep", "at_convergence", "inequality_suite",
         "averaging_suite")

_HASH_EXCLUDED = ("out_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description."""

    task: str
    raw: dict
    out_dir: str
    seed: int
    workers: int

    @property
    def config_hash(self):
        payload = {k: v for k, v in self.raw.items()
                   if k not in _HASH_EXCLUDED}
        blob = json.dumps(payload, sort_keys=True,
                          separators=(",", ":")).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def knob(self, name, default=None, required=False):
        knobs = self.raw.get("knobs", {})
        if name in knobs:
            return knobs[name]
        if required:
            raise ConfigError(f"knobs.{name}", "required for this task")
        return default


@dataclass
class RunManifest:
    """What a run produced: hash, outputs, timings."""

    config_hash: str
    version: str
    task: str
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    row_failures: int = 0

    def to_dict(self):
        return {"config_hash": self.config_hash, "version": self.version,
                "task": self.task, "outputs": self.outputs,
                "timings": self.timings, "row_failures": self.row_failures}


def _load_config(path, overrides, cli_task, cli_out, cli_seed, cli_workers):
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be an object")
    else:
        raw = {}
    for key, value in overrides:
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-object")
        node[parts[-1]] = value
    if cli_task is not None:
        raw["task"] = cli_task
    if cli_out is not None:
        raw["out_dir"] = cli_out
    if cli_seed is not None:
        raw["seed"] = cli_seed
    if cli_workers is not None:
        raw["workers"] = cli_workers

    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError("task", f"must be one of {', '.join(TASKS)}, "
                          f"got {task!r}")
    out_dir = raw.get("out_dir") or os.environ.get("PHASEHOM_OUT", "runs")
    seed = raw.get("seed", 0)
    workers = raw.get("workers", 1)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", f"must be an integer, got {seed!r}")
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", f"must be a positive integer, "
                          f"got {workers!r}")
    return ExperimentConfig(task=task, raw=raw, out_dir=str(out_dir),
                            seed=seed, workers=workers)


def _spec(config, key, role):
    data = config.raw.get(key)
    if data is None:
        raise ConfigError(key, f"task {config.task} needs the {role} "
                          f"integrand")
    try:
        spec = integrand_from_dict(data)
    except PhasehomError as exc:
        raise ConfigError(key, str(exc))
    if spec.role != role:
        raise ConfigError(f"{key}.role",
                          f"expected {role!r}, got {spec.role!r}")
    return spec


def _regime(config):
    data = config.raw.get("regime")
    if data is None:
        raise ConfigError("regime", "task needs the regime rule")
    try:
        return RegimeParams(
            eps_sequence=tuple(data.get("eps_sequence", ())),
            delta_coeff=data.get("delta_coeff", 1.0),
            delta_exponent=data.get("delta_exponent", 1.0),
            eta_coeff=data.get("eta_coeff", 1.0),
            eta_exponent=data.get("eta_exponent", 2.0))
    except PhasehomError as exc:
        raise ConfigError("regime", str(exc))


def _directions(config):
    knobs = config.raw.get("knobs", {})
    if "w_list" in knobs:
        dirs = []
        for w in knobs["w_list"]:
            v = np.asarray(w, dtype=float)
            norm = np.linalg.norm(v)
            if norm == 0:
                raise ConfigError("knobs.w_list", "zero direction")
            dirs.append(tuple(v / norm))
        return dirs
    n = int(knobs.get("n_directions", 16))
    if n < 1:
        raise ConfigError("knobs.n_directions", f"must be >= 1, got {n}")
    angles = [math.pi * k / n for k in range(n)]
    return [(math.cos(a), math.sin(a)) for a in angles]


def _format_value(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    if isinstance(value, (np.floating, np.integer)):
        return _format_value(float(value))
    return str(value)


def _write_csv(path, fieldnames, rows, config_hash):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(fieldnames) + ["config_hash"])
        for row in rows:
            writer.writerow([_format_value(row[k]) for k in fieldnames]
                            + [config_hash])


def emit_polar_data(results, path):
    """Write (angle, value, error bar) triples sorted by angle."""
    if not results:
        raise ConfigError("results", "polar output needs at least one result")
    triples = sorted((res.nu.angle, res.value, res.error_bar)
                     for res in results)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("angle", "value", "error_bar"))
        for angle, value, bar in triples:
            writer.writerow((_format_value(float(angle)),
                             _format_value(float(value)),
                             _format_value(float(bar))))
    return path


def _parallel_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _run_cell_table(config):
    r_list = tuple(config.knob("r_list", (1, 2, 4)))
    if config.task == "f_hom_table":
        spec = _spec(config, "bulk", "bulk")
        xi_list = config.knob("xi_list", required=True)
        results = f_hom_table(spec, [np.asarray(x, dtype=float)
                                     for x in xi_list],
                              r_list=r_list,
                              N_per_cell=int(config.knob("N_per_cell", 64)))
    else:
        spec = _spec(config, "surface", "surface")
        knobs = config.raw.get("knobs", {})
        if "w_list" in knobs:
            w_list = [np.asarray(w, dtype=float) for w in knobs["w_list"]]
        else:
            w_list = [np.asarray(d) for d in _directions(config)]
        results = h_hom_table(spec, w_list, N=int(config.knob("N", 256)))
    rows = [row for res in results for row in res.csv_rows()]
    failures = sum(1 for res in results if res.error is not None)
    return rows, CSV_FIELDS, results, failures


def _surface_solver(config, spec):
    task = config.task
    r_list = tuple(config.knob("r_list", (4, 8)))
    spacing = float(config.knob("grid_spacing", 1.0 / 16.0))

    def solve(direction):
        if task == "g0_sweep":
            return g0_hom(spec, direction, r_list=r_list,
                          grid_spacing=spacing)
        if task == "g_ell_sweep":
            return g_ell_hom(spec, float(config.knob("ell", 1.0)), direction,
                             r_list=tuple(config.knob("r_list", (8, 16))),
                             grid_spacing=float(config.knob("grid_spacing",
                                                            0.125)),
                             interface_family_size=int(
                                 config.knob("interface_family_size", 7)))
        return g_inf_hom(spec, direction, N=int(config.knob("N", 256)))

    return solve


def _run_surface_sweep(config, out_dir):
    spec = _spec(config, "surface", "surface")
    directions = _directions(config)
    solve = _surface_solver(config, spec)
    failures = 0
    results, rows = [], []
    for direction, outcome in zip(
            directions,
            _parallel_map(lambda d: _try_solve(solve, d), directions,
                          config.workers)):
        if isinstance(outcome, str):
            failures += 1
            angle = math.atan2(direction[1], direction[0])
            rows.append({"regime": "failed", "ell": float("nan"),
                         "angle": angle, "size": 0, "value": float("nan"),
                         "error_bar": float("nan")})
        else:
            results.append(outcome)
            rows.extend(outcome.csv_rows())
    extra = []
    if results:
        polar = os.path.join(out_dir, f"{config.task}_polar.csv")
        emit_polar_data(results, polar)
        extra.append(polar)
    return rows, SURFACE_CSV_FIELDS, extra, failures


def _try_solve(solve, direction):
    try:
        return solve(direction)
    except SolverError as exc:
        return str(exc)


def _datum_callable(config):
    data = config.raw.get("datum")
    if data is None:
        raise ConfigError("datum", "at_convergence needs a datum")
    kind = data.get("kind")
    if kind == "step":
        height = float(data.get("height", 1.0))
        position = float(data.get("position", 0.5))
        return lambda x: height * (np.asarray(x, dtype=float).ravel()
                                   > position)
    if kind == "ramp":
        slope = float(data.get("slope", 1.0))
        return lambda x: slope * np.asarray(x, dtype=float).ravel()
    if kind == "file":
        path = data.get("path")
        if not path or not os.path.exists(path):
            raise ConfigError("datum.path", f"no such file: {path!r}")
        samples = np.loadtxt(path)
        return np.asarray(samples, dtype=float)
    raise ConfigError("datum.kind",
                      f"must be step, ramp or file, got {kind!r}")


def _run_at_convergence(config):
    f = _spec(config, "bulk", "bulk")
    h = _spec(config, "surface", "surface")
    params = _regime(config)
    regime_select(params)
    if f.feature_scale is not None or h.feature_scale is not None:
        raise ConfigError(
            "bulk", "the at_convergence experiment runs constant "
            "coefficients; oscillating specs need the cell-problem tasks")
    datum = _datum_callable(config)
    q = float(config.knob("q", 2.0))
    tol = float(config.knob("tol", 1e-8))
    max_sweeps = int(config.knob("max_sweeps", 80))
    cells_per_eps = float(config.knob("cells_per_eps", 16.0))

    rows = []
    failures = 0
    for i, eps in enumerate(params.eps_sequence):
        n = int(round(cells_per_eps / eps))
        grid = BoxGrid((0.0,), (1.0,), (n,))
        try:
            report = minimize_F_eps(f, h, params, grid, datum, q=q, tol=tol,
                                    max_sweeps=max_sweeps, eps_index=i)
            rows.append({"eps": eps, "value": report.M_eps,
                         "sweeps": report.iterations,
                         "converged": int(report.converged)})
        except SolverError:
            failures += 1
            rows.append({"eps": eps, "value": float("nan"), "sweeps": 0,
                         "converged": 0})
    f_hom_coeff = float(f.c_lower)
    g_hom_value = 2.0 * math.sqrt(float(h.c_lower))
    limit_value, minimizer = M_ell_1d(
        datum if callable(datum) else datum,
        q=q, f_hom_coeff=f_hom_coeff, g_hom_value=g_hom_value,
        max_jumps=int(config.knob("max_jumps", 1)),
        grid=int(config.knob("limit_grid", 128)))
    rows.append({"eps": "limit", "value": limit_value,
                 "sweeps": minimizer.jump_count, "converged": 1})
    return rows, ("eps", "value", "sweeps", "converged"), [], failures


def _run_inequality_suite(config):
    spec = _spec(config, "surface", "surface")
    directions = _directions(config)
    ell = float(config.knob("ell", 1.0))
    tol_rel = float(config.knob("tolerance", 0.03))
    lo = 2.0 * math.sqrt(float(spec.c_lower))
    hi = 2.0 * math.sqrt(float(spec.c_upper))

    def solve(direction):
        a = g0_hom(spec, direction,
                   r_list=tuple(config.knob("r_list", (4, 8))),
                   grid_spacing=float(config.knob("grid_spacing", 1 / 16)))
        b = g_ell_hom(spec, ell, direction,
                      r_list=tuple(config.knob("ell_r_list", (8, 16))),
                      grid_spacing=float(config.knob("ell_spacing", 0.125)),
                      interface_family_size=int(
                          config.knob("interface_family_size", 7)))
        c = g_inf_hom(spec, direction, N=int(config.knob("N", 128)))
        return a, b, c

    rows = []
    failures = 0
    for direction, outcome in zip(
            directions,
            _parallel_map(lambda d: _try_solve(solve, d), directions,
                          config.workers)):
        angle = math.atan2(direction[1], direction[0])
        if isinstance(outcome, str):
            failures += 1
            rows.append({"angle": angle, "g0": float("nan"),
                         "g_ell": float("nan"), "g_inf": float("nan"),
                         "bounds_ok": 0, "order_ok": 0})
            continue
        a, b, c = outcome
        values = (a.value, b.value, c.value)
        bounds_ok = all(lo * (1 - tol_rel) <= v <= hi * (1 + tol_rel)
                        for v in values)
        order_ok = (a.value <= b.value * (1 + tol_rel)
                    and a.value <= c.value * (1 + tol_rel))
        rows.append({"angle": angle, "g0": a.value, "g_ell": b.value,
                     "g_inf": c.value, "bounds_ok": int(bounds_ok),
                     "order_ok": int(order_ok)})
    fields = ("angle", "g0", "g_ell", "g_inf", "bounds_ok", "order_ok")
    return rows, fields, [], failures


def _band_limited_fields(grid, seed, count, kmax=3, n_modes=6):
    rng = np.random.default_rng(seed)
    pts = np.asarray(grid.nodes())
    fields = []
    for _ in range(count):
        v = np.zeros(grid.node_shape)
        for _ in range(n_modes):
            k = rng.integers(-kmax, kmax + 1, size=grid.dimension)
            phase = rng.uniform(0, 2 * math.pi)
            amp = rng.normal()
            wave = pts @ k if grid.dimension > 1 else pts * k[0]
            v += amp * np.cos(2 * math.pi * wave + phase)
        fields.append(v)
    return fields


def _run_averaging_suite(config):
    spec = _spec(config, "surface", "surface")
    n_cells = int(config.knob("grid_cells", 512))
    grid = BoxGrid((0.0,) * spec.dimension, (1.0,) * spec.dimension,
                   (n_cells,) * spec.dimension)
    fields = _band_limited_fields(grid, config.seed,
                                  int(config.knob("n_fields", 20)))
    delta = float(config.knob("delta", 1.0 / 64.0))
    sigma = float(config.knob("sigma", 0.1))
    K = int(config.knob("K", 0))
    rows = []
    failures = 0
    if K <= 0:
        K = calibrate_window_factor(grid, fields[:4], spec, delta, sigma)
    constant = float(config.knob("poincare_constant", 1.0))
    inner = np.zeros(grid.node_shape, dtype=bool)
    quarter = n_cells // 4
    inner[(slice(quarter, -quarter),) * spec.dimension] = True
    for i, v in enumerate(fields):
        try:
            rep1 = check_shift_poincare(grid, v, inner,
                                        float(config.knob("r", 1.0 / 16.0)),
                                        constant)
            rep2 = check_hom_lower_bound(grid, v, spec, delta, sigma, K)
        except SolverError:
            failures += 1
            continue
        for rep in (rep1, rep2):
            row = rep.csv_row()
            row["label"] = f"{row['label']}:{i}"
            rows.append(row)
    return rows, AVERAGING_CSV_FIELDS, [], failures


def run_experiment(config):
    """Execute one task; returns the manifest after writing all outputs."""
    os.makedirs(config.out_dir, exist_ok=True)
    manifest = RunManifest(config_hash=config.config_hash,
                           version=__version__, task=config.task)
    t0 = time.perf_counter()
    extra = []
    if config.task in ("f_hom_table", "h_hom_table"):
        rows, fields, _, failures = _run_cell_table(config)
    elif config.task in ("g0_sweep", "g_ell_sweep", "g_inf_sweep"):
        rows, fields, extra, failures = _run_surface_sweep(config,
                                                           config.out_dir)
    elif config.task == "at_convergence":
        rows, fields, extra, failures = _run_at_convergence(config)
    elif config.task == "inequality_suite":
        rows, fields, extra, failures = _run_inequality_suite(config)
    else:
        rows, fields, extra, failures = _run_averaging_suite(config)
    table = os.path.join(config.out_dir, f"{config.task}.csv")
    _write_csv(table, fields, rows, config.config_hash)
    manifest.outputs = [table] + list(extra)
    manifest.row_failures = failures
    manifest.timings[config.task] = round(time.perf_counter() - t0, 6)

    manifest_path = os.path.join(config.out_dir,
                                 f"manifest_{config.config_hash}.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for out in manifest.outputs:
        if not os.path.exists(out):
            raise SolverError(f"declared output missing: {out}")
    return manifest


def _parse_override(text):
    if "=" not in text:
        raise ConfigError("--override", f"expected KEY=VALUE, got {text!r}")
    key, raw_value = text.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key, value


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="phasehom",
        description="Homogenization experiment harness: effective "
                    "coefficients, surface densities, phase-field "
                    "convergence runs and estimate checks.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--task", choices=TASKS, help="task to run "
                        "(overrides the config)")
    parser.add_argument("--out", help="output directory (default: "
                        "$PHASEHOM_OUT or ./runs)")
    parser.add_argument("--workers", type=int, help="parallel sweep workers")
    parser.add_argument("--seed", type=int, help="seed for randomized "
                        "corpora")
    parser.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config key (dotted path, repeatable)")
    args = parser.parse_args(argv)

    try:
        overrides = [_parse_override(text) for text in args.override]
        config = _load_config(args.config, overrides, args.task, args.out,
                              args.seed, args.workers)
        manifest = run_experiment(config)
    except ConfigError as exc:
        parser.exit(1, f"config error: {exc}\n")
    except PhasehomError as exc:
        parser.exit(1, f"error: {exc}\n")
    print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    return 2 if manifest.row_failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
