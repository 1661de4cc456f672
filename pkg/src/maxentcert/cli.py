"""Command-line front end.

Exit codes: 0 certified (or success), 1 self-test failure, 2 invalid config
or input, 3 no existence route (and not forced), 4 solver did not converge,
5 certificate rejected.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .certificate import certify, diagnose_existence
from .config import ConfigError, RunReport, _jsonable, load_config
from .dual import DualSolution, SolverOptions, log_density, sample, solve
from .errors import (AcceptanceRateCollapse, DivergentPartition, InfeasibleDiscretization,
                     NoExistenceRoute)
from .oracle import analytic_fixtures, grid_solve
from .quadrature import QuadratureOptions, laplace_proposal

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_NO_ROUTE = 3
EXIT_NOT_CONVERGED = 4
EXIT_REJECTED = 5

GRID_SPAN = 12.0


def fmt(v):
    return "%.17g" % float(v)


class _Out:
    def __init__(self, quiet):
        self.quiet = quiet

    def info(self, msg=""):
        if not self.quiet:
            print(msg)

    @staticmethod
    def error(msg):
        print(f"maxentcert: {msg}", file=sys.stderr)


# --------------------------------------------------------------------------- helpers

def _quad_options(cfg):
    q = cfg.quadrature
    return QuadratureOptions(budget=q["budget"], target_rel_tol=q["target_rel_tol"], seed=q["seed"])


def _solver_options(cfg):
    s = cfg.solver
    return SolverOptions(tol=s["tol"], max_iter=s["max_iter"], budget=s["budget"], seed=s["seed"],
                         target_rel_tol=cfg.quadrature["target_rel_tol"])


def _out_dir(args):
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def grid_axes(problem, solution, grid):
    """Per-axis node vectors for the density CSV: cell midpoints over [lower, upper]."""
    lo, hi = (np.array(b, dtype=float) for b in problem.support.bounds)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        energy = lambda X: -log_density(solution, problem, X)  # noqa: E731
        loc, scale = laplace_proposal(energy, problem.support)
        lo = np.where(np.isfinite(lo), lo, loc - GRID_SPAN * scale)
        hi = np.where(np.isfinite(hi), hi, loc + GRID_SPAN * scale)
        blo, bhi = problem.support.bounds
        lo, hi = np.maximum(lo, blo), np.minimum(hi, bhi)
    if "lower" in grid:
        lo = np.array(grid["lower"], dtype=float)
    if "upper" in grid:
        hi = np.array(grid["upper"], dtype=float)
    n = grid["points"]
    return [a + (b - a) / n * (np.arange(n) + 0.5) for a, b in zip(lo, hi)]


def density_table(problem, solution, grid):
    """Grid nodes inside S and the density there; also the cell volume."""
    axes = grid_axes(problem, solution, grid)
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.dimension)
    G = G[problem.support.contains(G)]
    dens = np.exp(log_density(solution, problem, G))
    cell = float(np.prod([(a[-1] - a[0]) / (len(a) - 1) for a in axes]))
    return G, dens, cell


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def density_csv(problem, solution, grid):
    G, dens, _ = density_table(problem, solution, grid)
    header = [f"x_{i + 1}" for i in range(problem.dimension)] + ["density"]
    return csv_text(header, np.column_stack([G, dens]))


def _load(args, out):
    try:
        return load_config(args.config)
    except ConfigError as exc:
        out.error(f"invalid config: {exc}")
        return None


def _solution_file(solution, problem):
    return json.dumps({"lambda": [float(v) for v in solution.lambda_],
                       "alpha": float(solution.alpha), "entropy": float(solution.entropy),
                       "m": problem.m}, indent=2, sort_keys=True) + "\n"


def _read_solution(path, problem):
    """Multipliers (and optional alpha) from a JSON solution file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(path), f"cannot read solution: {exc}") from None
    if not isinstance(data, dict) or "lambda" not in data:
        raise ConfigError(f"{path}:lambda", "solution file needs a 'lambda' list")
    lam = data["lambda"]
    if not isinstance(lam, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                            for v in lam):
        raise ConfigError(f"{path}:lambda", "expected a list of numbers")
    lam = np.array(lam, dtype=float)
    if lam.size != problem.m:
        raise ConfigError(f"{path}:lambda", f"expected {problem.m} multipliers, got {lam.size}")
    if not np.all(np.isfinite(lam)):
        raise ConfigError(f"{path}:lambda", "multipliers must be finite")
    if np.any(lam < 0):
        raise ConfigError(f"{path}:lambda", "multipliers must be nonnegative")
    alpha = data.get("alpha")
    if alpha is not None and (isinstance(alpha, bool) or not isinstance(alpha, (int, float))
                              or not math.isfinite(alpha)):
        raise ConfigError(f"{path}:alpha", "alpha must be a finite number")
    return lam, alpha


def _residual_table(cert):
    lines = [f"{'check':<20} {'residual':>24} {'tolerance':>24}  status"]
    for name, r, tol in cert.residual_table():
        ok = r < tol
        lines.append(f"{name:<20} {fmt(r):>24} {fmt(tol):>24}  {'ok' if ok else 'FAIL'}")
    return "\n".join(lines)


# --------------------------------------------------------------------------- commands

def cmd_solve(args):
    out = _Out(args.quiet)
    cfg = _load(args, out)
    if cfg is None:
        return EXIT_CONFIG
    problem = cfg.problem
    out_dir = _out_dir(args)
    t0 = time.perf_counter()
    timings = {}
    report = RunReport("solve", __version__, {}, cfg.echo())

    def finish(code, status, message=""):
        report.outcome = {"exit_code": code, "status": status, "message": message}
        _write_text(os.path.join(out_dir, cfg.output["report"]), report.to_json())
        timings["total_s"] = time.perf_counter() - t0
        _write_text(os.path.join(out_dir, "timings.json"),
                    json.dumps({"timings": timings, "kernel_backend": kernels.BACKEND},
                               indent=2, sort_keys=True) + "\n")
        if message:
            (out.error if code else out.info)(message)
        return code

    seed = cfg.quadrature["seed"]
    diag = diagnose_existence(problem, seed=seed, quad_budget=cfg.quadrature["budget"])
    timings["diagnose_s"] = time.perf_counter() - t0
    report.diagnosis = diag.to_dict()
    if diag.route == "none" and not args.force:
        return finish(EXIT_NO_ROUTE, "no-route",
                      "no existence route: " + "; ".join(diag.reasons)
                      + " (add a stabilizing constraint or pass --force)")
    out.info(f"existence route: {diag.route}")
    t1 = time.perf_counter()
    try:
        sol = solve(problem, _solver_options(cfg), force=True, diagnosis=diag)
    except (NoExistenceRoute, DivergentPartition) as exc:
        return finish(EXIT_NO_ROUTE, "divergent", f"cannot solve: {exc}")
    timings["solve_s"] = time.perf_counter() - t1
    report.solution = sol.summary()
    _write_text(os.path.join(out_dir, "solution.json"), _solution_file(sol, problem))
    _write_text(os.path.join(out_dir, cfg.output["csv"]), density_csv(problem, sol, cfg.output["grid"]))
    out.info(f"lambda = {[fmt(v) for v in sol.lambda_]}")
    out.info(f"alpha = {fmt(sol.alpha)}  entropy = {fmt(sol.entropy)}")
    if not sol.converged:
        return finish(EXIT_NOT_CONVERGED, "not-converged",
                      f"solver did not converge: {'; '.join(sol.warnings)}")
    t2 = time.perf_counter()
    cert = certify(problem, sol, budget=cfg.quadrature["budget"], seed=seed, diagnosis=diag)
    timings["certify_s"] = time.perf_counter() - t2
    report.certificate = cert.to_dict()
    out.info(_residual_table(cert))
    if not cert.certified:
        return finish(EXIT_REJECTED, "rejected", "certificate rejected: " + "; ".join(cert.reasons))
    return finish(EXIT_OK, "certified", "certified")


def cmd_verify(args):
    out = _Out(args.quiet)
    cfg = _load(args, out)
    if cfg is None:
        return EXIT_CONFIG
    problem = cfg.problem
    try:
        lam, alpha = _read_solution(args.solution, problem)
    except ConfigError as exc:
        out.error(str(exc))
        return EXIT_CONFIG
    if not problem.bounded_below:
        out.error("a constraint function is not bounded below on the support")
        return EXIT_NO_ROUTE
    qopts = _quad_options(cfg)
    try:
        sol = DualSolution.from_multipliers(problem, lam, qopts, alpha=alpha)
    except DivergentPartition as exc:
        out.error(f"partition function diverges at the given multipliers: {exc}")
        return EXIT_REJECTED
    cert = certify(problem, sol, budget=qopts.budget, seed=qopts.seed)
    out.info(_residual_table(cert))
    if args.out:
        report = RunReport("verify", __version__,
                           {"exit_code": 0 if cert.certified else EXIT_REJECTED,
                            "status": cert.verdict}, cfg.echo(),
                           solution=sol.summary(), certificate=cert.to_dict())
        _write_text(os.path.join(_out_dir(args), cfg.output["report"]), report.to_json())
    if cert.certified:
        out.info("certified")
        return EXIT_OK
    out.error("certificate rejected: " + "; ".join(cert.reasons))
    return EXIT_REJECTED


def _solution_for(args, cfg, out):
    """Solution from --solution, or a fresh solve. Returns (solution, exit code)."""
    problem = cfg.problem
    if getattr(args, "solution", None):
        lam, alpha = _read_solution(args.solution, problem)
        return DualSolution.from_multipliers(problem, lam, _quad_options(cfg), alpha=alpha), 0
    diag = diagnose_existence(problem, seed=cfg.quadrature["seed"],
                              quad_budget=cfg.quadrature["budget"])
    if diag.route == "none" and not args.force:
        out.error("no existence route: " + "; ".join(diag.reasons))
        return None, EXIT_NO_ROUTE
    try:
        sol = solve(problem, _solver_options(cfg), force=True, diagnosis=diag)
    except (NoExistenceRoute, DivergentPartition) as exc:
        out.error(f"cannot solve: {exc}")
        return None, EXIT_NO_ROUTE
    if not sol.converged:
        out.error("solver did not converge")
        return None, EXIT_NOT_CONVERGED
    return sol, 0


def cmd_eval(args):
    out = _Out(args.quiet)
    cfg = _load(args, out)
    if cfg is None:
        return EXIT_CONFIG
    problem = cfg.problem
    pts = []
    for lineno, line in enumerate(sys.stdin, 1):
        if not line.strip():
            continue
        try:
            x = [float(v) for v in line.split()]
        except ValueError:
            out.error(f"stdin line {lineno}: not a list of numbers")
            return EXIT_CONFIG
        if len(x) != problem.dimension or not all(math.isfinite(v) for v in x):
            out.error(f"stdin line {lineno}: expected {problem.dimension} finite coordinates")
            return EXIT_CONFIG
        pts.append(x)
    try:
        sol, code = _solution_for(args, cfg, out)
    except ConfigError as exc:
        out.error(str(exc))
        return EXIT_CONFIG
    if sol is None:
        return code
    if pts:
        X = np.array(pts, dtype=float)
        dens = np.exp(log_density(sol, problem, X))
        for x, v in zip(X, dens):
            sys.stdout.write(" ".join(fmt(c) for c in x) + " " + fmt(v) + "\n")
    return EXIT_OK


def cmd_sample(args):
    out = _Out(args.quiet)
    cfg = _load(args, out)
    if cfg is None:
        return EXIT_CONFIG
    if args.n < 1:
        out.error("--n must be at least 1")
        return EXIT_CONFIG
    try:
        sol, code = _solution_for(args, cfg, out)
    except ConfigError as exc:
        out.error(str(exc))
        return EXIT_CONFIG
    if sol is None:
        return code
    seed = args.seed if args.seed is not None else cfg.solver["seed"]
    if cfg.seed_override is not None:
        seed = cfg.seed_override
    try:
        X = sample(sol, cfg.problem, args.n, seed=seed)
    except AcceptanceRateCollapse as exc:
        out.error(str(exc))
        return EXIT_NOT_CONVERGED
    text = csv_text([f"x_{i + 1}" for i in range(cfg.dimension)], X)
    if args.out:
        _write_text(os.path.join(_out_dir(args), "samples.csv"), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_diagnose(args):
    out = _Out(args.quiet)
    cfg = _load(args, out)
    if cfg is None:
        return EXIT_CONFIG
    diag = diagnose_existence(cfg.problem, seed=cfg.quadrature["seed"],
                              quad_budget=cfg.quadrature["budget"])
    text = json.dumps(_jsonable(diag.to_dict()), indent=2, sort_keys=True)
    out.info(text)
    if args.out:
        report = RunReport("diagnose", __version__,
                           {"exit_code": EXIT_NO_ROUTE if diag.route == "none" else EXIT_OK,
                            "status": diag.route}, cfg.echo(), diagnosis=diag.to_dict())
        _write_text(os.path.join(_out_dir(args), cfg.output["report"]), report.to_json())
    if diag.route == "none":
        out.error("no existence route: " + "; ".join(diag.reasons))
        return EXIT_NO_ROUTE
    return EXIT_OK


# --------------------------------------------------------------------------- self-test

SELFTEST_LAMBDA_REL = 1e-3
SELFTEST_ENTROPY_ABS = 1e-4
SELFTEST_TV = 1e-2
SELFTEST_GRID_GAP = 2e-3


def run_selftest(solver_tol=1e-8, quad_budget=400_000, cells=4000, seed=0):
    """Solve, certify and grid-compare every analytic fixture.

    Returns a list of ``(fixture, check, passed, detail)`` rows.
    """
    rows = []
    opts = SolverOptions(tol=solver_tol, budget=quad_budget, seed=seed)
    for fx in analytic_fixtures():
        P = fx.problem
        try:
            sol = solve(P, opts)
        except (NoExistenceRoute, DivergentPartition) as exc:
            for check in ("solve", "certify", "grid"):
                rows.append((fx.name, check, False, str(exc)))
            continue
        lam_err = float(np.max(np.abs(sol.lambda_ - fx.lambda_true) /
                               np.maximum(np.abs(fx.lambda_true), 1.0))) if P.m else 0.0
        h_err = abs(sol.entropy - fx.entropy_true)
        ok = sol.converged and lam_err <= SELFTEST_LAMBDA_REL and h_err <= SELFTEST_ENTROPY_ABS
        rows.append((fx.name, "solve", ok, f"lambda err {lam_err:.2e}, entropy err {h_err:.2e}"))
        cert = certify(P, sol, budget=quad_budget, seed=seed)
        rows.append((fx.name, "certify", cert.certified, "; ".join(cert.reasons) or cert.verdict))
        try:
            grid = grid_solve(P, fx.truncation, cells)
        except InfeasibleDiscretization as exc:
            rows.append((fx.name, "grid", False, str(exc)))
            continue
        mass_out = fx.mass_outside_truncation()
        dens = lambda x, s=sol, P=P: np.exp(log_density(s, P, np.reshape(x, (-1, P.dimension))))
        tv = grid.tv_distance(dens, mass_out)
        gap = abs(grid.entropy_grid - sol.entropy)
        ok = tv <= SELFTEST_TV and gap <= SELFTEST_GRID_GAP
        rows.append((fx.name, "grid", ok, f"TV {tv:.2e}, entropy gap {gap:.2e}"))
    return rows


def cmd_selftest(args):
    out = _Out(args.quiet)
    rows = run_selftest(args.solver_tol, args.quad_budget)
    names = list(dict.fromkeys(r[0] for r in rows))
    checks = ("solve", "certify", "grid")
    status = {(r[0], r[1]): r[2] for r in rows}
    out.info(f"{'fixture':<24}" + "".join(f"{c:>10}" for c in checks))
    for n in names:
        out.info(f"{n:<24}" + "".join(f"{'pass' if status.get((n, c)) else 'FAIL':>10}"
                                      for c in checks))
    failed = [r for r in rows if not r[2]]
    for name, check, _, detail in failed:
        out.error(f"{name}/{check}: {detail}")
    if not args.quiet:
        for name, check, ok, detail in rows:
            if ok:
                out.info(f"  {name}/{check}: {detail}")
    return EXIT_SELFTEST if failed else EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="maxentcert",
                                description="Maximum-entropy densities under moment inequalities.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="problem config (YAML)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true",
                        help="solve even when no existence route was found")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    sp = sub.add_parser("solve", help="diagnose, solve and certify; write report and CSV")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="certify multipliers from a solution file")
    common(sp)
    sp.add_argument("--solution", required=True, help="JSON file with 'lambda' (and 'alpha')")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("eval", help="density at points read from stdin")
    common(sp)
    sp.add_argument("--solution", help="use these multipliers instead of solving")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sample", help="draw points from the solved density")
    common(sp)
    sp.add_argument("--solution", help="use these multipliers instead of solving")
    sp.add_argument("--n", type=int, default=1000, help="number of draws")
    sp.add_argument("--seed", type=int, default=None, help="sampling seed")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("diagnose", help="existence diagnostics only")
    common(sp)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("selftest", help="run the analytic fixtures end to end")
    common(sp, config=False)
    sp.add_argument("--solver-tol", type=float, default=1e-8)
    sp.add_argument("--quad-budget", type=int, default=400_000)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
