"""Command-line entry point.

Exit status: 0 on success, 1 on usage or parse errors, 2 when a verdict is
VIOLATED, 3 when the numerical solver does not converge.  Every run that
gets as far as parsing its arguments writes ``report.json`` to ``--out``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HypScherkError, SchemaError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATED = 2
EXIT_NONCONVERGED = 3


class _Run:
    """Collects payload, timings and the exit status of one invocation."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.timings = {}
        self.payload = {}
        self.status = EXIT_OK
        self.input_hash = ""

    def timed(self, name, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def finish(self):
        from .io import build_report, write_report
        self.payload["exit_status"] = self.status
        rep = build_report(self.args.command, self.input_hash, self.payload, self.timings,
                           __version__)
        write_report(self.out, rep)
        return self.status


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _args_hash(args, keys):
    rec = {k: getattr(args, k) for k in keys}
    return hashlib.sha256(json.dumps(rec, sort_keys=True).encode("ascii")).hexdigest()


def _load(run):
    from .io import parse_domain_file
    if not run.args.input:
        raise SchemaError("--input is required for this subcommand")
    df = run.timed("parse", parse_domain_file, run.args.input)
    run.input_hash = df.text_hash
    return df


def _solver_config(df, args):
    from .solver import SolverConfig
    cfg = SolverConfig()
    tol = df.solver.get("tol") if df is not None else None
    if tol is not None:
        cfg.tol = float(tol)
    if df is not None and df.solver.get("max_iter") is not None:
        cfg.max_iter = int(df.solver["max_iter"])
    return cfg


def _chart(df):
    from .solver import make_chart
    name = df.solver.get("chart")
    return make_chart(name) if name else None


def _h(df, args, default=1 / 32):
    if getattr(args, "h", None) is not None:
        return float(args.h)
    return float(df.solver.get("h", default)) if df is not None else default


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(run):
    from .domain import validate_domain
    df = _load(run)
    diags = run.timed("validate", validate_domain, df.domain)
    run.payload = {"domain": df.domain.name, "valid": not diags,
                   "diagnostics": [d.to_dict() for d in diags]}
    for d in diags:
        print("%s: %s" % (d.code, d.message))
    if not diags:
        print("valid")


def cmd_check(run):
    from .domain import VIOLATED, check_domain
    df = _load(run)
    verdict = run.timed("check", check_domain, df.domain)
    run.payload = {"domain": df.domain.name, "verdict": verdict.to_dict()}
    print("verdict=%s theorem=%d" % (verdict.status, verdict.theorem))
    if verdict.witness is not None:
        print("witness=%s margin=%.10g" % (list(verdict.witness.vertices), verdict.margin))
    if verdict.status == VIOLATED:
        run.status = EXIT_VIOLATED


def _solve(run, df):
    from .solver import build_grid, domain_region, solve_dirichlet
    args = run.args
    h = _h(df, args)
    level = args.level if args.level is not None else float(df.solver.get("level", 1.0))
    gen = args.generation if args.generation is not None else int(df.solver.get("generation", 1))
    region = run.timed("region", domain_region, df.domain, _chart(df), gen, h,
                       df.solver.get("standoff"))
    grid = run.timed("grid", build_grid, region, h, level)
    sol = run.timed("solve", solve_dirichlet, grid, _solver_config(df, args))
    return sol, {"h": h, "level": level, "generation": gen}


def cmd_solve(run):
    from .solver import reaction_fluxes, write_grid_csv
    df = _load(run)
    sol, cfg = _solve(run, df)
    run.out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(sol, run.out / "grid.csv")
    run.payload = {"domain": df.domain.name, "config": cfg, "chart": sol.grid.chart.name,
                   "interior_nodes": int(sol.grid.n_interior), "converged": sol.converged,
                   "iterations": sol.iterations, "residual_max": sol.residual_max,
                   "residual_l2": sol.residual_l2, "message": sol.message,
                   "boundary_flux": reaction_fluxes(sol)}
    print("converged=%s iterations=%d residual=%.3e" % (sol.converged, sol.iterations,
                                                        sol.residual_max))
    if not sol.converged:
        run.status = EXIT_NONCONVERGED


def cmd_sequence(run):
    from .solver import detect_divergence_lines, run_truncation_sequence
    df = _load(run)
    args = run.args
    levels = _floats(args.levels) if args.levels else list(df.solver.get("levels", [2, 4, 8, 16]))
    gens = df.solver.get("generations")
    h = _h(df, args)
    probes = df.solver.get("probes")
    probes = np.asarray(probes, dtype=float) if probes else None
    seq = run.timed("sequence", run_truncation_sequence, df.domain, levels, gens, h,
                    _chart(df), probes, _solver_config(df, args), df.solver.get("standoff"))
    cands = run.timed("divergence", detect_divergence_lines, seq)
    inc = seq.increments()
    run.payload = {"sequence": seq.to_dict(), "increments": inc.tolist(),
                   "cauchy": seq.is_cauchy(), "candidates": [c.to_dict() for c in cands]}
    print("increments=%s cauchy=%s candidates=%d"
          % (",".join("%.3e" % v for v in inc), seq.is_cauchy(), len(cands)))
    if seq.flagged:
        run.status = EXIT_NONCONVERGED


def cmd_flux(run):
    from .flux import (Arc, FluxSample, HalfPiGraph, flux_exact, verify_flux_lemmas)
    from .io import write_csv
    from .solver import discrete_flux
    df = _load(run)
    spec = df.flux
    arcs = spec.get("arcs", [])
    rows = []
    if spec.get("exact") == "h-half-pi":
        u = HalfPiGraph()
        if arcs:
            for a in arcs:
                r = flux_exact(u, Arc.polyline(a["points"], a.get("label", "arc")))
                rows.append([a.get("label", "arc"), r.value, r.arc_length, r.error_estimate,
                             r.flagged])
        else:
            box = tuple(spec.get("box", (0.5, 2.0, 0.5, 2.0)))
            rep = run.timed("lemmas", verify_flux_lemmas, u, FluxSample(box), run.args.seed)
            for kind, label, val, ln, err, ok in rep.rows:
                rows.append(["%s:%s" % (kind, label), val, ln, err, not ok])
            run.payload["lemmas_passed"] = rep.passed
    elif spec.get("exact"):
        raise SchemaError("unknown exact graph %r" % spec.get("exact"))
    else:
        sol, cfg = _solve(run, df)
        run.payload["solve"] = dict(cfg, converged=sol.converged, iterations=sol.iterations)
        if not sol.converged:
            run.status = EXIT_NONCONVERGED
        for a in arcs:
            r = discrete_flux(sol, np.asarray(a["points"], dtype=float))
            rows.append([a.get("label", "arc"), r.value, r.arc_length, r.error_estimate,
                         r.flagged])
    header = ["arc", "flux", "arc_length", "error_estimate", "flagged"]
    run.out.mkdir(parents=True, exist_ok=True)
    write_csv(run.out / "flux.csv", header, rows)
    run.payload["header"] = header
    run.payload["rows"] = rows
    for r in rows:
        print("%s flux=%.12g length=%.12g" % (r[0], r[1], r[2]))


def profile_header(prof) -> str:
    """One-line summary: case tag and the interior endpoints theta1, theta2."""
    ends = sorted({t for b in prof.branches for t in (b.theta_lo, b.theta_hi)
                   if 0.0 < t < math.pi})
    parts = ["case=%s" % prof.case_tag]
    parts += ["θ%d=%.10f" % (k + 1, t) for k, t in enumerate(ends)]
    return " ".join(parts)


def cmd_cmc_profile(run):
    from .io import write_csv
    from .profiles import make_profile
    args = run.args
    run.input_hash = _args_hash(args, ["H", "param", "points"])
    prof = run.timed("profile", make_profile, args.H, args.param, None, args.points)
    rows = []
    for i, (ths, vals) in enumerate(prof.table):
        for t, v in zip(ths, vals):
            d = prof.derivative(float(t)) if prof.branches[i].contains(float(t)) else math.nan
            rows.append([i, float(t), float(v), d])
    header = ["branch", "theta", "f", "fprime"]
    run.out.mkdir(parents=True, exist_ok=True)
    write_csv(run.out / "profile.csv", header, rows)
    line = profile_header(prof)
    print(line)
    for b in prof.branches:
        print("branch (%.10f, %.10f) ends %s / %s" % (b.theta_lo, b.theta_hi, b.tag_lo, b.tag_hi))
    run.payload = {"H": args.H, "param": args.param, "case": prof.case_tag, "header": line,
                   "branches": [{"theta_lo": b.theta_lo, "theta_hi": b.theta_hi,
                                 "tag_lo": b.tag_lo, "tag_hi": b.tag_hi}
                                for b in prof.branches],
                   "table_error": prof.table_error}


def cmd_experiment(run):
    from .errors import DomainError
    from .flux import NonzeroFluxConfig, experiment_nonuniqueness, experiment_nonzero_flux
    from .io import write_csv
    args = run.args
    block = {}
    if args.input:
        df = _load(run)
        block = dict(df.experiments.get(args.name, {}))
    else:
        run.input_hash = _args_hash(args, ["name", "alpha", "depth", "h"])
    if args.name == "nonzero-flux":
        cfg = NonzeroFluxConfig(**{k: v for k, v in block.items()
                                   if k in NonzeroFluxConfig.__dataclass_fields__})
        if args.h is not None:
            cfg.h = float(args.h)
        if args.generations:
            cfg.generations = _ints(args.generations)
        try:
            rep = run.timed("experiment", experiment_nonzero_flux, cfg)
        except DomainError as exc:
            run.payload = {"refused": str(exc)}
            print("refused: %s" % exc)
            run.status = EXIT_VIOLATED
            return
    else:
        alpha = args.alpha if args.alpha is not None else float(block.get("alpha", 3 * math.pi / 8))
        depths = _ints(args.depth) if args.depth else list(block.get("depths", [1, 2, 4]))
        h = float(args.h) if args.h is not None else float(block.get("h", 1 / 32))
        rep = run.timed("experiment", experiment_nonuniqueness, alpha, depths, h,
                        float(block.get("m0", 1.0)))
    run.out.mkdir(parents=True, exist_ok=True)
    write_csv(run.out / "flux.csv", rep.header, rep.rows)
    run.payload = rep.to_dict()
    print("experiment=%s passed=%s" % (rep.experiment, rep.passed))
    for r in rep.rows:
        print(" ".join("%.10g" % v if isinstance(v, float) else str(v) for v in r))
    if any(r[-1] is False for r in rep.rows):
        run.status = EXIT_NONCONVERGED


COMMANDS = {"validate": cmd_validate, "check": cmd_check, "solve": cmd_solve,
            "sequence": cmd_sequence, "flux": cmd_flux, "cmc-profile": cmd_cmc_profile,
            "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="domain file (JSON, schema 1)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="thread cap")
    common.add_argument("--seed", type=int, default=0, help="seed for random sampling")
    p = argparse.ArgumentParser(prog="hypscherk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="structural diagnostics")
    sub.add_parser("check", parents=[common], help="solvability verdict")
    for name in ("solve", "flux"):
        s = sub.add_parser(name, parents=[common],
                           help="one Dirichlet solve" if name == "solve" else "flux table")
        s.add_argument("--h", type=float)
        s.add_argument("--level", type=float, help="truncation level m for A/B edges")
        s.add_argument("--generation", type=int, help="horocycle generation")
    s = sub.add_parser("sequence", parents=[common], help="truncation sequence")
    s.add_argument("--h", type=float)
    s.add_argument("--levels", help="comma separated truncation levels")
    s = sub.add_parser("cmc-profile", parents=[common], help="profile classification and table")
    s.add_argument("--H", type=float, required=True)
    s.add_argument("--param", type=float, required=True)
    s.add_argument("--points", type=int, default=129)
    s = sub.add_parser("experiment", parents=[common], help="flux experiments")
    s.add_argument("name", choices=["nonzero-flux", "nonuniqueness"])
    s.add_argument("--h", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--depth", help="comma separated depths")
    s.add_argument("--generations", help="comma separated horocycle generations")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))
    run = _Run(args)
    try:
        COMMANDS[args.command](run)
    except (SchemaError, HypScherkError, ValueError, KeyError, TypeError, OSError) as exc:
        msgs = exc.messages if isinstance(exc, SchemaError) else [str(exc)]
        for m in msgs:
            print("error: %s" % m, file=sys.stderr)
        run.payload = {"errors": msgs}
        run.status = EXIT_USAGE
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
