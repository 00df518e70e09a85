"""
Command-line front door.

    vortexsheet <command> [--config PATH] [--out DIR] [--seed N] [--threads N]

Commands: check-stability, eikonal, solve-linear, smooth-test, iterate,
report.  Configs are JSON objects with optional sections (gas, sheet,
grid, ...); missing sections fall back to the reference defaults.

Exit codes: 0 success or stable verdict, 2 negative verdict, 64 usage or
malformed config, 70 internal or downstream failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 64, 70
COMMANDS = ("check-stability", "eikonal", "solve-linear", "smooth-test", "iterate", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------
# Serialization


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj):
    path.write_text(dumps(obj))


def write_csv(path: Path, rows: list, fields: list | None = None):
    fields = fields or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(_clean(cfg), sort_keys=True).encode()).hexdigest()


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                              capture_output=True, text=True, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+g{desc}" if desc else __version__


# ---------------------------------------------------------------
# Config sections


def _section(cfg, name, default=None):
    v = cfg.get(name, default if default is not None else {})
    if not isinstance(v, dict):
        raise UsageError(f"section '{name}' must be an object")
    return v


def _num(d, key, default=None, positive=False, minimum=None):
    if key not in d:
        if default is None:
            raise UsageError(f"missing field '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"field '{key}' must be a number")
    if positive and not v > 0:
        raise UsageError(f"field '{key}' must be positive")
    if minimum is not None and v < minimum:
        raise UsageError(f"field '{key}' must be >= {minimum}")
    return v


def parse_gas(cfg):
    from .euler_core import GasModel
    g = _section(cfg, "gas")
    K = _num(g, "K", 1.0, positive=True)
    gamma = _num(g, "gamma", 2.0)
    if gamma <= 1:
        raise UsageError("gas.gamma must exceed 1")
    return GasModel(K=float(K), gamma=float(gamma))


def parse_sheet(cfg, required=False):
    from .stability import PlanarVortexSheet
    if required and "sheet" not in cfg:
        raise UsageError("missing section 'sheet'")
    s = _section(cfg, "sheet")
    gas = parse_gas(cfg)
    vals = {k: float(_num(s, k, None if required else d)) for k, d in
            (("u_r", 3.0), ("w_r", 2.0), ("u_l", 3.0), ("w_l", -2.0))}
    if "p_bar" in s:
        p = float(_num(s, "p_bar", positive=True))
    else:
        c = float(_num(s, "c_bar", 1.0, positive=True))
        p = gas.pressure_for_sound_speed(c)
    if not p > 0:
        raise UsageError("pressure must be positive")
    return PlanarVortexSheet(vals["u_r"], vals["w_r"], vals["u_l"], vals["w_l"], p, gas)


def parse_grid(cfg, defaults: dict):
    from .geometry import HalfSpaceGrid
    g = _section(cfg, "grid")
    out = {}
    for k in ("X", "Ymax", "Z"):
        out[k] = float(_num(g, k, defaults[k], positive=True))
    for k in ("Nx", "Ny", "Nz"):
        v = _num(g, k, defaults[k])
        if int(v) != v or v < 8:
            raise UsageError(f"grid.{k} must be an integer >= 8")
        out[k] = int(v)
    return HalfSpaceGrid(**out)


# ---------------------------------------------------------------
# Commands


def cmd_check_stability(cfg, out: Path, seed: int):
    import numpy as np
    from .stability import g_theta, theta_bounds, weak_stability_verdict
    sheet = parse_sheet(cfg, required=True)
    n_grid = int(_num(_section(cfg, "stability"), "n_grid", 1024, minimum=16))
    v = weak_stability_verdict(sheet, n_grid=n_grid)
    res = {"verdict": v.to_dict(), "sheet": {"u_r": sheet.u_r, "w_r": sheet.w_r, "u_l": sheet.u_l,
                                             "w_l": sheet.w_l, "p_bar": sheet.p_bar,
                                             "c_bar": sheet.c_bar}}
    write_json(out / "verdict.json", res)
    rows = []
    if sheet.u_r > 0 and sheet.u_l > 0:
        work = sheet.rotated(v.rotation_angle) if v.rotation_angle else sheet
        tl, tr = theta_bounds(work)
        if tr > tl:
            eps = 1e-9 * (tr - tl)
            th = np.linspace(tl + eps, tr - eps, 512)
            rows = [{"theta": float(t), "g": float(gv)} for t, gv in zip(th, g_theta(work, th))]
    write_csv(out / "theta_scan.csv", rows, ["theta", "g"])
    return (EXIT_OK if v.stable else EXIT_NEGATIVE), res


def cmd_eikonal(cfg, out: Path, seed: int):
    from .geometry import oracle_study
    grid = parse_grid(cfg, {"X": 0.5, "Nx": 64, "Ymax": 1.0, "Ny": 9, "Z": 1.0, "Nz": 64})
    e = _section(cfg, "eikonal")
    front, rep, errors = oracle_study(grid, u=float(_num(e, "u", 2.0, positive=True)),
                                      v=float(_num(e, "v", 0.3)), w=float(_num(e, "w", 1.0)),
                                      amp=float(_num(e, "amp", 0.05)))
    res = {"grid": grid.to_dict(), "max_residual": rep.max_residual, "l2_residual": rep.l2_residual,
           "trace_mismatch": rep.trace_mismatch, "oracle_error": errors}
    write_json(out / "eikonal.json", res)
    write_csv(out / "eikonal_steps.csv", rep.steps, ["step", "x", "max_abs_dpsi"])
    return EXIT_OK, res


def cmd_solve_linear(cfg, out: Path, seed: int):
    import numpy as np
    from .numerics import ManufacturedSolution, mms_study
    from .stability import weak_stability_verdict
    sheet = parse_sheet(cfg)
    v = weak_stability_verdict(sheet)
    if not v.stable:
        res = {"error": "background verdict is not WeaklyStable", "verdict": v.to_dict()}
        write_json(out / "solve_linear.json", res)
        return EXIT_NEGATIVE, res
    grid = parse_grid(cfg, {"X": 0.5, "Nx": 32, "Ymax": 1.0, "Ny": 17, "Z": 1.0, "Nz": 16})
    lin = _section(cfg, "linear")
    levels = int(_num(lin, "levels", 3, minimum=2))
    preset = lin.get("preset", "manufactured")
    if preset != "manufactured":
        raise UsageError(f"unknown linear.preset '{preset}'")
    if lin.get("randomize", False):
        rng = np.random.default_rng(seed)
        mms = ManufacturedSolution(amps=tuple(map(tuple, rng.uniform(-1, 1, (2, 4)))),
                                   phases=tuple(map(tuple, rng.uniform(0, 2 * np.pi, (2, 4)))))
    else:
        mms = ManufacturedSolution()
    study = mms_study(sheet, grid, levels, mms)
    rows = []
    for r in study["rows"]:
        row = {k: r[k] for k in ("h", "U_l2", "U_max", "phi_l2", "phi_max", "bc_truncation",
                                 "interior_max", "boundary_max") if k in r}
        for e in r["energy"]:
            row[f"energy_ratio_gamma{e['gamma']}"] = e["ratio"]
        rows.append(row)
    write_csv(out / "diagnostics.csv", rows)
    res = {"order_U": study["order_U"], "order_phi": study["order_phi"],
           "order_bc": study["order_bc"], "order_in_range": 1.7 <= study["order_U"] <= 2.3,
           "rows": rows}
    write_json(out / "solve_linear.json", res)
    return EXIT_OK, res


def cmd_smooth_test(cfg, out: Path, seed: int):
    from .smoothing import default_bound_check
    s = _section(cfg, "smoothing")
    thetas = s.get("thetas", [1, 2, 4, 8, 16])
    if not isinstance(thetas, list) or not thetas or any(
            not isinstance(t, (int, float)) or t < 1 for t in thetas):
        raise UsageError("smoothing.thetas must be a list of numbers >= 1")
    scale = float(_num(s, "scale", 4.0, positive=True))
    rep = default_bound_check(tuple(thetas), scale)
    stable = rep.stable_within(0.2)
    res = {"report": rep.to_dict(), "stable_within_20pct": stable}
    write_json(out / "smoothing_constants.json", res)
    return EXIT_OK, res


def _build_iteration(cfg):
    from .nash_moser import (NMConfig, build_approximate_solution, build_compatible_traces,
                             reference_perturbation)
    sheet = parse_sheet(cfg)
    grid = parse_grid(cfg, {"X": 1.0, "Nx": 32, "Ymax": 1.5, "Ny": 16, "Z": 1.0, "Nz": 16})
    it = _section(cfg, "iteration")
    delta = float(_num(it, "delta", 1e-3, minimum=0.0))
    if delta > 1e-2:
        raise UsageError("iteration.delta above the small-data threshold 1e-2")
    k = int(_num(it, "jet_order", 1, minimum=1))
    scale = it.get("scale", "auto")
    if scale != "auto":
        scale = float(_num(it, "scale", positive=True))
    ncfg = NMConfig(theta0=float(_num(it, "theta0", 2.0, minimum=1.0)),
                    N=int(_num(it, "N", 8, minimum=1)), scale=scale,
                    identity_step=it.get("identity_step"),
                    alpha=float(_num(it, "alpha", 8.0)), s0=float(_num(it, "s0", 3.0)),
                    s1=float(_num(it, "s1", 14.0)),
                    decrease_factor=float(_num(it, "decrease_factor", 0.1, positive=True)))
    Ut, psi0 = reference_perturbation(grid, delta)
    data = build_compatible_traces(Ut, psi0, sheet, grid, k=k)
    approx = build_approximate_solution(data, grid)
    return sheet, grid, ncfg, data, approx


def cmd_iterate(cfg, out: Path, seed: int):
    from .nash_moser import DivergenceError, run
    from .stability import weak_stability_verdict
    sheet = parse_sheet(cfg)
    v = weak_stability_verdict(sheet)
    if not v.stable:
        res = {"error": "background verdict is not WeaklyStable", "verdict": v.to_dict()}
        write_json(out / "summary.json", res)
        return EXIT_NEGATIVE, res
    sheet, grid, ncfg, data, approx = _build_iteration(cfg)
    try:
        result = run(approx, sheet, ncfg)
    except DivergenceError as exc:
        write_json(out / "ledger.json", exc.ledger or [])
        res = {"status": "diverged", "error": str(exc)}
        write_json(out / "summary.json", res)
        return EXIT_INTERNAL, res
    summary = dict(result.summary)
    summary.pop("wall_time", None)
    res = {"status": result.status, "converged": result.converged, "initial": result.initial,
           "final": result.final, "summary": summary, "compatibility_order": data.order,
           "compatibility_mismatch": data.mismatch, "approximate_solution": approx.report}
    write_json(out / "ledger.json", result.ledger)
    write_json(out / "summary.json", res)
    rows = []
    for e in result.ledger:
        rows.append({"n": e["n"], "theta": e["theta"], "interior_residual": e["interior_residual"],
                     "boundary_residual": e["boundary_residual"],
                     "eikonal_residual": e["eikonal_residual"],
                     **{k: v for k, v in e["errors"].items()},
                     **{k: v for k, v in e["errors_boundary"].items()},
                     "increment_s0": e["increment_norms"][0],
                     "increment_s3": e["increment_norms"][3],
                     "telescoping_max": max(e["telescoping"].values()),
                     "constraint": e["modified_state_constraint"]})
    write_csv(out / "summary.csv", rows)
    fit = summary.get("decay_fit", {})
    write_csv(out / "decay_fit.csv", [{"s": k, "slope": v} for k, v in sorted(fit.items())], ["s", "slope"])
    return EXIT_OK, res


def cmd_report(cfg, out: Path, seed: int):
    files = {"verdict.json": "check-stability", "eikonal.json": "eikonal",
             "solve_linear.json": "solve-linear", "smoothing_constants.json": "smooth-test",
             "summary.json": "iterate"}
    src = Path(cfg.get("source", str(out)))
    found = {}
    for name, cmd in files.items():
        p = src / name
        if p.exists():
            found[cmd] = json.loads(p.read_text())
    lines = [f"# vortexsheet report ({src})", ""]
    if "check-stability" in found:
        v = found["check-stability"]["verdict"]
        lines.append(f"- stability: {v['verdict']} (min_value {v['min_value']})")
    if "eikonal" in found:
        lines.append(f"- eikonal: max residual {found['eikonal']['max_residual']:.3e}")
    if "solve-linear" in found:
        lines.append(f"- linear MMS order: {found['solve-linear']['order_U']:.3f}")
    if "smooth-test" in found:
        st = found["smooth-test"]["stable_within_20pct"]
        lines.append(f"- smoothing families stable: {st}")
    if "iterate" in found:
        s = found["iterate"]
        lines.append(f"- iteration: {s.get('status')} final {s.get('final')}")
    text = "\n".join(lines) + "\n"
    (out / "report.md").write_text(text)
    res = {"source": str(src), "found": sorted(found)}
    write_json(out / "report.json", res)
    print(text, end="")
    return EXIT_OK, res


HANDLERS = {"check-stability": cmd_check_stability, "eikonal": cmd_eikonal,
            "solve-linear": cmd_solve_linear, "smooth-test": cmd_smooth_test,
            "iterate": cmd_iterate, "report": cmd_report}


# ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vortexsheet", description="Supersonic vortex-sheet toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for c in COMMANDS:
        sp = sub.add_parser(c)
        sp.add_argument("--config", type=str, default=None, help="JSON config file")
        sp.add_argument("--out", type=str, default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
    return p


def _limit_threads(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    _limit_threads(args.threads)
    out = Path(args.out)
    t0 = time.time()
    try:
        if args.config is None:
            cfg = {}
        else:
            try:
                cfg = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise UsageError(f"config file not found: {args.config}")
            except json.JSONDecodeError as exc:
                raise UsageError(f"config is not valid JSON: {exc}")
            if not isinstance(cfg, dict):
                raise UsageError("config must be a JSON object")
        out.mkdir(parents=True, exist_ok=True)
        code, res = HANDLERS[args.command](cfg, out, args.seed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # downstream failures become structured errors
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "error.json", {"command": args.command, "type": type(exc).__name__,
                                        "message": str(exc)})
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    manifest = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg),
                "seed": args.seed, "threads": args.threads, "version": version_string(),
                "python": sys.version.split()[0], "wall_time": time.time() - t0,
                "exit_code": code}
    import numpy
    manifest["versions"] = {"numpy": numpy.__version__}
    write_json(out / "manifest.json", manifest)
    summary = {"command": args.command, "exit_code": code, "config_hash": manifest["config_hash"],
               "version": manifest["version"]}
    write_json(out / "run_summary.json", summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
