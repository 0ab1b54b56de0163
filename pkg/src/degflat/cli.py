"""Command-line pipeline: build the control, verify it with both solvers.

Configuration is a flat ``key = value`` file plus command-line overrides.
Exit status: 0 when every threshold passes, 1 when one fails, 2 for a bad
configuration (nothing is written), 3 for a numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError, GridError, NumericalError
from .flatness import assemble_control, control_metadata, fmt, write_control_csv
from .simulator import (cross_validate, fv_solve, galerkin_solve, graded_mesh, l2_norm,
                        write_norms_csv, write_trajectory_csv)
from .spectral import (ModelParams, build_basis, default_mode_count, parse_initial_datum,
                       project)

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
STUDY_AXES = {"K": "K", "N": "N", "M": "cells", "dt": "dt"}
N_CHECKPOINTS = 11


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    f0: str = "const 1"
    K: int | None = None
    N: int = 30
    cells: int = 400
    dt: float | None = None
    out: str = "out"
    max_galerkin_norm: float = 1e-5
    max_fv_norm: float = 1e-2
    require_cross_validation: bool = True
    study: str | None = None
    study_values: tuple = field(default=())

    @property
    def step(self):
        return 5e-4 * self.params.T if self.dt is None else self.dt


_INT_KEYS = {"K", "N", "cells"}
_FLOAT_KEYS = {"alpha", "T", "tau", "s", "dt", "max_galerkin_norm", "max_fv_norm"}
_KEYS = _INT_KEYS | _FLOAT_KEYS | {"f0", "out", "study", "require_cross_validation"}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    items = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        items[key] = value
    return items


def _convert(key, value):
    if value is None:
        return None
    try:
        if key in _INT_KEYS:
            v = int(value)
            if v < 1:
                raise ConfigError(f"{key} must be at least 1, got {v}")
            return v
        if key in _FLOAT_KEYS:
            v = float(value)
            if not math.isfinite(v):
                raise ConfigError(f"{key} must be finite")
            return v
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if key == "require_cross_validation":
        low = str(value).strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"bad boolean for {key}: {value!r}")
        return low in ("true", "1", "yes")
    return str(value)


def _parse_study(spec):
    # "AXIS=v1,v2,..." or "AXIS" with values given elsewhere
    if spec is None:
        return None, ()
    axis, _, vals = str(spec).partition("=")
    axis = axis.strip()
    if axis not in STUDY_AXES:
        raise ConfigError(f"study axis must be one of {sorted(STUDY_AXES)}, got {axis!r}")
    values = tuple(v.strip() for v in vals.split(",") if v.strip())
    if not values:
        raise ConfigError("study needs a nonempty list of values, e.g. M=100,200,400")
    key = STUDY_AXES[axis]
    return axis, tuple(_convert(key, v) for v in values)


def make_config(items):
    """Validate raw string settings into a RunConfig."""
    vals = {k: _convert(k, v) for k, v in items.items() if v is not None}
    try:
        params = ModelParams(vals.pop("alpha", 1.5), vals.pop("T", 1.0),
                             vals.pop("tau", None), vals.pop("s", 1.5))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    study, study_values = _parse_study(vals.pop("study", None))
    cfg = RunConfig(params, study=study, study_values=study_values, **vals)
    if cfg.dt is not None and not 0 < cfg.dt <= (params.T - params.tau) / 200.0:
        raise ConfigError("dt must lie in (0, (T - tau)/200]")
    return cfg


def build_parser():
    p = argparse.ArgumentParser(
        prog="degflat",
        description="Flatness-based boundary control of the degenerate heat equation, "
                    "verified with a spectral Galerkin and a finite-volume solver.")
    p.add_argument("config", nargs="?", help="key = value configuration file")
    p.add_argument("--alpha", help="degeneracy exponent in [1, 2)")
    p.add_argument("--T", help="control horizon")
    p.add_argument("--tau", help="waiting time before the control starts (default T/3)")
    p.add_argument("--s", help="Gevrey order of the bump, in (1, 2)")
    p.add_argument("--K", help="number of eigenmodes (default: lambda_K tau >= 60)")
    p.add_argument("--N", help="number of series terms")
    p.add_argument("--cells", help="finite-volume cells")
    p.add_argument("--dt", help="time step of the control grid and both solvers")
    p.add_argument("--f0", help="initial datum: 'const c', 'poly c0 c1 ...', 'eig k ...', 'csv path'")
    p.add_argument("--out", help="output directory")
    p.add_argument("--study", help="refinement study, e.g. M=100,200,400 (axes K, N, M, dt)")
    p.add_argument("--max-galerkin-norm", dest="max_galerkin_norm")
    p.add_argument("--max-fv-norm", dest="max_fv_norm")
    p.add_argument("--require-cross-validation", dest="require_cross_validation")
    p.add_argument("--dump-zeros", dest="dump_zeros", metavar="PATH",
                   help="also write the Bessel zeros of the basis as k,zero")
    return p


def config_from_args(ns):
    items = read_config_file(ns.config) if ns.config else {}
    for key in _KEYS:
        v = getattr(ns, key, None)
        if v is not None:
            items[key] = v
    return make_config(items)


# --- pipeline -----------------------------------------------------------------

@dataclass
class RunResult:
    status: int
    summary: dict
    files: dict = field(default_factory=dict)


def _checkpoints(times, params):
    # from tau on: at t = 0 a datum that does not vanish at x = 1 is not
    # representable by finitely many modes, so the gap there says nothing
    targets = np.linspace(params.tau, params.T, N_CHECKPOINTS)
    idx = np.unique([int(np.argmin(np.abs(times - t))) for t in targets])
    return times[idx]


def compute(cfg):
    """Run the synthesis and both solvers; returns (summary, artifacts)."""
    p = cfg.params
    K = cfg.K or default_mode_count(p)
    basis = build_basis(p, K)
    f0 = parse_initial_datum(cfg.f0, basis)
    coeffs = project(basis, f0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        control = assemble_control(basis, coeffs, p, cfg.N, dt=cfg.step)
    if not np.all(np.isfinite(control.u)):
        raise NumericalError("control has non-finite samples")
    gal = galerkin_solve(basis, coeffs, control)
    mesh = graded_mesh(p.alpha, cfg.cells)
    fv = fv_solve(p, f0(mesh), control, mesh)
    cps = _checkpoints(control.times, p)
    fv_err = _fv_error_estimate(p, f0, control, cfg.cells, fv, cps)
    xval = cross_validate(gal, fv, cps, fv_err)
    g_end, fv_end = gal.l2_norm(len(gal.states) - 1), l2_norm(fv.states[-1])
    checks = {
        "galerkin_terminal_norm": bool(g_end <= cfg.max_galerkin_norm),
        "fv_terminal_norm": bool(fv_end <= cfg.max_fv_norm),
    }
    if cfg.require_cross_validation:
        checks["cross_validation"] = xval.passed
    summary = {
        "alpha": p.alpha, "nu": p.nu, "T": p.T, "tau": p.tau, "s": p.s,
        "f0": cfg.f0, "K": K, "N": cfg.N, "cells": cfg.cells, "dt": cfg.step,
        "f0_norm": coeffs.f0_norm,
        "terminal_norm_galerkin": g_end,
        "terminal_norm_fv": fv_end,
        "max_abs_control": float(np.max(np.abs(control.u))),
        "control": control_metadata(control),
        "precision_warnings": len({str(w.message).split(":")[0] for w in caught}),
        "cross_validation": xval.as_dict(),
        "thresholds": {"max_galerkin_norm": cfg.max_galerkin_norm,
                       "max_fv_norm": cfg.max_fv_norm},
        "checks": checks,
        "passed": all(checks.values()),
    }
    fv_times = fv.times
    keep = np.isin(fv_times, cps)
    artifacts = {
        "control": control,
        "traj_times": fv_times[keep],
        "traj_values": np.array([s.values for s, k in zip(fv.states, keep) if k]),
        "mesh": mesh,
        "norm_times": fv_times,
        "norms": fv.l2_norms(),
        "zeros": basis.zeros,
    }
    return summary, artifacts


def _fv_error_estimate(p, f0, control, cells, fv, cps):
    # Richardson estimate from a run on every other node (second order)
    if cells < 4 or cells % 2:
        return None
    coarse_mesh = graded_mesh(p.alpha, cells // 2)
    coarse = fv_solve(p, f0(coarse_mesh), control, coarse_mesh)
    est = []
    for t in cps:
        fine = fv.states[int(np.argmin(np.abs(fv.times - t)))].values[::2]
        crs = coarse.states[int(np.argmin(np.abs(coarse.times - t)))].values
        est.append(math.sqrt(float(np.trapezoid((fine - crs) ** 2, coarse_mesh))) / 3.0)
    return np.array(est)


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if math.isfinite(v) else str(v)
    return obj


def write_outputs(out, summary, art, dump_zeros=None):
    os.makedirs(out, exist_ok=True)
    files = {
        "control": os.path.join(out, "control.csv"),
        "trajectory": os.path.join(out, "trajectory.csv"),
        "l2norm": os.path.join(out, "l2norm.csv"),
        "summary": os.path.join(out, "summary.json"),
    }
    write_control_csv(art["control"], files["control"])
    write_trajectory_csv(files["trajectory"], art["traj_times"], art["mesh"], art["traj_values"])
    write_norms_csv(files["l2norm"], art["norm_times"], art["norms"])
    with open(files["summary"], "w") as fh:
        json.dump(_json_ready(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if dump_zeros:
        art["zeros"].to_csv(dump_zeros)
        files["zeros"] = dump_zeros
    return files


def run_pipeline(cfg, dump_zeros=None):
    """Compute everything first, then write; errors leave no partial outputs."""
    summary, art = compute(cfg)
    files = write_outputs(cfg.out, summary, art, dump_zeros)
    status = EXIT_OK if summary["passed"] else EXIT_THRESHOLD
    return RunResult(status, summary, files)


def run_study(cfg, axis=None, values=None):
    """One pipeline run per value of ``axis``; writes study.csv in cfg.out."""
    axis = axis or cfg.study
    values = cfg.study_values if values is None else tuple(values)
    if axis not in STUDY_AXES:
        raise ConfigError(f"study axis must be one of {sorted(STUDY_AXES)}")
    if not values:
        raise ConfigError("study needs a nonempty list of values")
    key = STUDY_AXES[axis]
    values = tuple(_convert(key, v) for v in values)
    results = []
    for v in values:
        sub = replace(cfg, study=None, study_values=(), out=os.path.join(cfg.out, f"{axis}_{v}"),
                      **{key: v})
        t0 = time.perf_counter()
        summary, art = compute(sub)
        results.append((v, sub, summary, art, time.perf_counter() - t0))
    rows = []
    status = EXIT_OK
    for v, sub, summary, art, wall in results:
        write_outputs(sub.out, summary, art)
        if not summary["passed"]:
            status = EXIT_THRESHOLD
        rows.append((v, summary["terminal_norm_galerkin"], summary["terminal_norm_fv"], wall))
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "study.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"{axis},terminal_norm_galerkin,terminal_norm_fv,wall_time\n")
        for v, g, f, w in rows:
            fh.write(f"{v},{fmt(g)},{fmt(f)},{fmt(w)}\n")
    return RunResult(status, {"axis": axis, "rows": rows}, {"study": path})


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        if cfg.study:
            res = run_study(cfg)
            for v, g, f, _ in res.summary["rows"]:
                print(f"{res.summary['axis']}={v}: galerkin {g:.3e}  fv {f:.3e}")
        else:
            res = run_pipeline(cfg, ns.dump_zeros)
            s = res.summary
            print(f"terminal norm: galerkin {s['terminal_norm_galerkin']:.3e}  "
                  f"fv {s['terminal_norm_fv']:.3e}  -> {'pass' if s['passed'] else 'FAIL'}")
        return res.status
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConvergenceError, GridError, ArithmeticError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
