"""Command-line front end: single solves, convergence ladders, conditioning
studies, and multiscale-basis cost comparisons, emitting CSV plus an aligned
3-significant-digit table.

Configuration comes from flags and/or a plain key=value file (flags win).
Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import geometry, verification
from .interface import ConvergenceError
from .subdomain import FloatingSubdomainError
from .verification import SolvabilityError

CSV_HEADER = ("level,h,H,err_sigma,rate_sigma,err_div,rate_div,err_u,rate_u,"
              "err_Phu,rate_Phu,err_gamma,rate_gamma,err_mortar,rate_mortar,"
              "cg_iters,cond_est,solves_per_subdomain")

NORM_LABELS = ("sigma", "div", "u", "Phu", "gamma", "mortar")


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    example: str = "ex1"
    method: int = 1
    mortar_degree: int = 2
    scaling: str = "2h"
    level: int = 0
    levels: list = None
    pattern: tuple = (2, 2)
    patterns: list = None
    cells: tuple = (2, 3)
    tol: float = 1e-14
    msb: bool = False
    continuous: bool = False
    raster: str = None
    output: str = None
    threads: int = 1

    def validate(self):
        if self.method not in (1, 2):
            raise ConfigError(f"method must be 1 or 2, got {self.method}")
        if self.mortar_degree < 1:
            raise ConfigError("mortar degree must be >= 1")
        if self.example not in ("ex1", "ex2", "ex4", "ex5", "patch", "rigid"):
            raise ConfigError(f"unknown example {self.example!r}")
        if self.example == "ex5" and self.raster is None:
            raise ConfigError("example ex5 requires --raster")
        if self.method == 2 and self.cells[0] != self.cells[1]:
            # normal-stress multiplier needs matching traces
            self.cells = (self.cells[0], self.cells[0])
        if self.tol <= 0 or self.tol >= 1:
            raise ConfigError(f"cg tolerance out of range: {self.tol}")
        if self.threads < 1:
            raise ConfigError("thread count must be >= 1")


def parse_pattern(text):
    try:
        a, b = text.lower().split("x")
        return (int(a), int(b))
    except ValueError:
        raise ConfigError(f"pattern must look like '2x2', got {text!r}")


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {line!r}")
            key, val = (t.strip() for t in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def build_config(args):
    cfg = RunConfig()
    file_vals = read_config_file(args.config) if args.config else {}

    def pick(name, cast, flag_val):
        if flag_val is not None:
            return cast(flag_val)
        if name in file_vals:
            return cast(file_vals[name])
        return getattr(cfg, name)

    as_bool = lambda v: str(v).lower() in ("1", "true", "yes", "on")
    cfg.example = pick("example", str, args.example)
    cfg.method = pick("method", int, args.method)
    cfg.mortar_degree = pick("mortar_degree", int, args.mortar_degree)
    cfg.scaling = pick("scaling", str, args.scaling)
    cfg.level = pick("level", int, args.level)
    if getattr(args, "levels", None) is not None:
        cfg.levels = [int(t) for t in args.levels.split(",")]
    elif "levels" in file_vals:
        cfg.levels = [int(t) for t in file_vals["levels"].split(",")]
    cfg.pattern = pick("pattern", parse_pattern, args.pattern)
    if getattr(args, "patterns", None) is not None:
        cfg.patterns = [parse_pattern(t) for t in args.patterns.split(",")]
    elif "patterns" in file_vals:
        cfg.patterns = [parse_pattern(t) for t in file_vals["patterns"].split(",")]
    cfg.tol = pick("tol", float, args.tol)
    cfg.msb = pick("msb", as_bool, True if args.msb else None)
    cfg.continuous = pick("continuous", as_bool, True if args.continuous else None)
    cfg.raster = pick("raster", str, args.raster)
    cfg.output = pick("output", str, args.output)
    env_threads = os.environ.get("ELASTMORTAR_THREADS")
    cfg.threads = pick("threads", int, args.threads if args.threads is not None
                       else env_threads)
    cfg.validate()
    return cfg


def resolve_scaling(text):
    if text in ("2h", "sqrt(h)", "sqrt_h"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"mortar scaling must be 2h, sqrt(h), or a number, got {text!r}")


def make_case_for(cfg):
    kwargs = {}
    if cfg.example == "ex5":
        kwargs["raster"] = verification.load_porosity(cfg.raster)
    return verification.make_case(cfg.example, **kwargs)


def run_level(cfg, case, level, pattern=None, use_msb=None):
    pattern = pattern or cfg.pattern
    decomp = geometry.build_checkerboard(level, pattern, cells=cfg.cells,
                                         neumann_sides=case.neumann_sides)
    if cfg.method == 2:
        return decomp, None, verification.solve_method2(
            case, decomp, tol=cfg.tol, threads=cfg.threads)
    mortars = geometry.build_mortar_grids(decomp, resolve_scaling(cfg.scaling),
                                          cfg.mortar_degree,
                                          continuous=cfg.continuous)
    res = verification.solve_mortar(
        case, decomp, mortars, tol=cfg.tol,
        use_msb=cfg.msb if use_msb is None else use_msb, threads=cfg.threads)
    return decomp, mortars, res


def fmt_full(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def fmt3(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.3g}"


def row_dict(level, h, H, errors, rates):
    vals = {"level": level, "h": h, "H": H,
            "cg_iters": errors.cg_iterations,
            "cond_est": errors.cond_estimate,
            "solves_per_subdomain": errors.solves_per_subdomain}
    for name, err, rate in zip(NORM_LABELS, errors.norms(), rates):
        vals[f"err_{name}"] = err
        vals[f"rate_{name}"] = rate
    return vals


def emit(rows, output):
    lines = [CSV_HEADER]
    for r in rows:
        cells = []
        for key in CSV_HEADER.split(","):
            v = r.get(key)
            cells.append(str(v) if key in ("level", "cg_iters",
                                           "solves_per_subdomain")
                         else fmt_full(v))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    # aligned 3-significant-digit table on stderr-free stdout for human eyes
    cols = CSV_HEADER.split(",")
    table = [cols] + [
        [fmt3(r.get(c)) if c not in ("level", "cg_iters", "solves_per_subdomain")
         else str(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(row[j]) for row in table) for j in range(len(cols))]
    for row in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)),
              file=sys.stderr)


def cmd_solve(cfg):
    case = make_case_for(cfg)
    decomp, mortars, res = run_level(cfg, case, cfg.level)
    err = res.errors or verification.ErrorReport(
        cg_iterations=res.cg.iterations, cond_estimate=res.cg.cond_estimate,
        solves_per_subdomain=res.solves_per_subdomain)
    H = mortars[0].H if mortars else math.nan
    emit([row_dict(cfg.level, decomp.nominal_h, H, err, (math.nan,) * 6)],
         cfg.output)
    return 0


def cmd_convergence(cfg):
    case = make_case_for(cfg)
    if cfg.patterns:
        return _pattern_sweep(cfg, case)
    levels = cfg.levels if cfg.levels is not None else list(range(cfg.level + 1))
    rows = verification.convergence_study(
        cfg.example, levels, degree=cfg.mortar_degree,
        scaling=resolve_scaling(cfg.scaling), shape=cfg.pattern,
        cells=cfg.cells, tol=cfg.tol, use_msb=cfg.msb, threads=cfg.threads,
        case_kwargs={"raster": verification.load_porosity(cfg.raster)}
        if cfg.example == "ex5" else None)
    emit([row_dict(r["level"], r["h"], r["H"], r["errors"], r["rates"])
          for r in rows], cfg.output)
    return 0


def _level_for(pattern, h):
    """Refinement level at which a pattern reaches nominal cell size h."""
    n = 1.0 / (h * 2 * pattern[1])
    level = round(math.log2(n)) if n >= 1 else -1
    if level < 0 or abs(2**level - n) > 1e-9:
        raise ConfigError(
            f"pattern {pattern[0]}x{pattern[1]} cannot reach h={h} "
            "by uniform refinement")
    return level


def _pattern_sweep(cfg, case):
    h_target = 1.0 / (cfg.pattern[1] * 2 * 2**cfg.level)
    rows = []
    for pat in cfg.patterns:
        lev = _level_for(pat, h_target)
        decomp, mortars, res = run_level(cfg, case, lev, pattern=pat)
        err = res.errors or verification.ErrorReport(
            cg_iterations=res.cg.iterations,
            cond_estimate=res.cg.cond_estimate,
            solves_per_subdomain=res.solves_per_subdomain)
        row = row_dict(lev, decomp.nominal_h,
                       mortars[0].H if mortars else math.nan, err,
                       (math.nan,) * 6)
        row["level"] = f"{pat[0]}x{pat[1]}"
        rows.append(row)
    emit(rows, cfg.output)
    return 0


def cmd_condnum(cfg):
    case = make_case_for(cfg)
    levels = cfg.levels if cfg.levels is not None else list(range(cfg.level + 1))
    rows, hs, its, ks = [], [], [], []
    for lev in levels:
        decomp, mortars, res = run_level(cfg, case, lev)
        err = verification.ErrorReport(
            cg_iterations=res.cg.iterations, cond_estimate=res.cg.cond_estimate,
            solves_per_subdomain=res.solves_per_subdomain)
        rows.append(row_dict(lev, decomp.nominal_h,
                             mortars[0].H if mortars else math.nan, err,
                             (math.nan,) * 6))
        hs.append(decomp.nominal_h)
        its.append(res.cg.iterations)
        ks.append(res.cg.cond_estimate)
    emit(rows, cfg.output)
    if len(hs) >= 2:
        print(f"# iteration growth exponent vs h: "
              f"{verification.fit_exponent(hs, its):+.3f}", file=sys.stderr)
        print(f"# condition estimate exponent vs h: "
              f"{verification.fit_exponent(hs, ks):+.3f}", file=sys.stderr)
    return 0


def cmd_msb_compare(cfg):
    case = make_case_for(cfg)
    decomp, mortars, res = run_level(cfg, case, cfg.level, use_msb=False)
    _, _, res_msb = run_level(cfg, case, cfg.level, use_msb=True)
    dim = res.mortar.dim if res.mortar is not None else 0
    print(f"mortar degree {cfg.mortar_degree}, "
          f"H {mortars[0].H if mortars else float('nan')}, dim(Lambda_H) {dim}")
    print("config,cg_iters,solves_per_subdomain")
    print(f"no-msb,{res.cg.iterations},{res.solves_per_subdomain}")
    print(f"msb,{res_msb.cg.iterations},{res_msb.solves_per_subdomain}")
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write("config,cg_iters,solves_per_subdomain\n")
            fh.write(f"no-msb,{res.cg.iterations},{res.solves_per_subdomain}\n")
            fh.write(f"msb,{res_msb.cg.iterations},{res_msb.solves_per_subdomain}\n")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser():
    p = _Parser(prog="elastmortar",
                description="mortar mixed elasticity solver")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "convergence", "condnum", "msb-compare"):
        q = sub.add_parser(name)
        q.add_argument("--config", help="key=value configuration file")
        q.add_argument("--example", help="ex1|ex2|ex4|ex5|patch|rigid")
        q.add_argument("--method", type=int)
        q.add_argument("--mortar-degree", type=int, dest="mortar_degree")
        q.add_argument("--scaling", help="2h | sqrt(h) | explicit H")
        q.add_argument("--level", type=int)
        q.add_argument("--levels", help="comma-separated refinement levels")
        q.add_argument("--pattern", help="subdomain pattern, e.g. 2x2")
        if name == "convergence":
            q.add_argument("--patterns",
                           help="comma-separated pattern sweep, e.g. 2x2,4x4")
        q.add_argument("--tol", type=float)
        q.add_argument("--msb", action="store_true", default=None)
        q.add_argument("--continuous", action="store_true", default=None)
        q.add_argument("--raster", help="porosity raster file for ex5")
        q.add_argument("--output", help="CSV output path")
        q.add_argument("--threads", type=int)
    return p


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        cfg = build_config(args)
        handler = {
            "solve": cmd_solve,
            "convergence": cmd_convergence,
            "condnum": cmd_condnum,
            "msb-compare": cmd_msb_compare,
        }[args.command]
        return handler(cfg)
    except (ValueError, FileNotFoundError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    except (ConvergenceError, FloatingSubdomainError, SolvabilityError,
            np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
