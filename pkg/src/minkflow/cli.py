"""``minkflow flow|lp-solve|verify --config <path> [--out <dir>] [--seed <int>]``.

Exit codes: 0 success, 1 configuration error, 2 step limit reached,
3 step failure, 4 a verify check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from minkflow import functionals as fn
from minkflow.config import RunConfig, build_field, build_phi, build_shape, load_config
from minkflow.errors import ConfigError, MinkflowError
from minkflow.flow import run
from minkflow.io import export_mesh, write_body, write_summary, write_trajectory_csv
from minkflow.minkowski import LpProblem, align_volume, solve
from minkflow.verify import run_checks

EXIT_OK, EXIT_CONFIG, EXIT_MAX_STEPS, EXIT_STEP_FAILURE, EXIT_VERIFY = 0, 1, 2, 3, 4
STATUS_EXIT = {"converged": EXIT_OK, "max_steps": EXIT_MAX_STEPS, "step_failure": EXIT_STEP_FAILURE}

log = logging.getLogger("minkflow")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(cfg: RunConfig, **extra) -> dict:
    return {"mode": cfg.mode, "seed": cfg.seed, **extra}


def _write_run(out: Path, cfg: RunConfig, traj, body, name="body_final.txt"):
    write_trajectory_csv(out / "trajectory.csv", traj)
    write_body(out / name, body, _provenance(cfg, step=traj.final.step))
    if cfg.snapshots:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        for i, (t, b) in enumerate(traj.snapshots):
            write_body(snap / f"body_{i:05d}.txt", b, _provenance(cfg, t=t))
    if cfg.mesh and body.grid.n == 2:
        export_mesh(body, out / "body_final.obj")


def _grid_summary(cfg):
    return {"n": cfg.n, "n_theta": cfg.n_theta, "n_phi": cfg.n_phi}


def cmd_flow(cfg: RunConfig) -> int:
    grid = cfg.grid()
    f = build_field(cfg, ("f",), cfg.f_spec, grid)
    body = build_shape(cfg, ("initial",), cfg.initial_spec, grid, np.random.default_rng(cfg.seed))
    params = fn.FlowParams(cfg.alpha, cfg.beta, f, cfg.n)
    traj = run(body, params, cfg.solver)
    out = _out(cfg)
    _write_run(out, cfg, traj, traj.final.body)
    summary = {
        "mode": "flow", "alpha": cfg.alpha, "beta": cfg.beta, "seed": cfg.seed,
        "grid": _grid_summary(cfg), "t_final": traj.final.t, "J_final": traj.final.J,
        "residual": traj.final.residual, **traj.report,
    }
    write_summary(out / "summary.json", summary)
    print(f"flow: status={traj.status} steps={traj.final.step} c={traj.c:.12g} residual={traj.final.residual:.3e} "
          f"regime={params.regime.value} monotonicity_violations={traj.report['monotonicity_violations']}")
    return STATUS_EXIT[traj.status]


def cmd_lp_solve(cfg: RunConfig) -> int:
    grid = cfg.grid()
    phi = build_phi(cfg, grid)
    start = build_shape(cfg, ("initial",), cfg.initial_spec, grid, np.random.default_rng(cfg.seed))
    problem = LpProblem(cfg.p, phi, grid, cfg.solver)
    out = _out(cfg)
    summary = {"mode": "lp-solve", "p": cfg.p, "seed": cfg.seed, "grid": _grid_summary(cfg)}
    try:
        sol = solve(problem, start)
    except MinkflowError as err:
        traj = getattr(err, "trajectory", None)
        if traj is None:
            raise
        _write_run(out, cfg, traj, traj.final.body)
        summary.update({"status": traj.status, "c": traj.c, "residual": traj.final.residual, **traj.report})
        write_summary(out / "summary.json", summary)
        print(f"lp-solve: {err}")
        return STATUS_EXIT.get(traj.status, EXIT_STEP_FAILURE)
    _write_run(out, cfg, sol.trajectory, sol.body, name="solution.txt")
    summary.update(sol.report)
    reference = None
    if cfg.reference_spec is not None:
        reference = build_shape(cfg, ("reference",), cfg.reference_spec, grid, np.random.default_rng(cfg.seed))
    elif isinstance(cfg.phi_spec, dict) and cfg.phi_spec.get("kind") == "manufactured":
        reference = build_shape(cfg, ("phi", "body"), cfg.phi_spec.get("body", {"kind": "sphere"}), grid,
                                np.random.default_rng(cfg.seed))
    if reference is not None:
        cmp = align_volume(sol.body, reference) if problem.dilation_invariant else sol.body
        summary["recovery_error"] = float(np.max(np.abs(cmp.u - reference.u)))
    write_summary(out / "summary.json", summary)
    line = f"lp-solve: status=converged c={sol.report['c']:.12g} residual={sol.report['residual']:.3e}"
    if "recovery_error" in summary:
        line += f" recovery_error={summary['recovery_error']:.3e}"
    if problem.dilation_invariant:
        line += " (unique up to dilation)"
    print(line)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    grid = cfg.grid()
    results = run_checks(grid, cfg.checks, cfg.seed, cfg.samples, cfg.tolerance, cfg.tolerances)
    out = _out(cfg)
    header = ("check", "passed", "margin", "tolerance", "samples", "kind")
    rows = [(r.name, "PASS" if r.passed else "FAIL", "%.6e" % r.margin, "%.1e" % r.tolerance, str(r.samples), r.kind)
            for r in results]
    (out / "verify.csv").write_text("\n".join(",".join(r) for r in [header, *rows]) + "\n")
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    for r in [header, *rows]:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    ok = all(r.passed for r in results)
    write_summary(out / "summary.json", {
        "mode": "verify", "seed": cfg.seed, "grid": _grid_summary(cfg), "samples": cfg.samples,
        "passed": ok, "checks": [r.as_dict() for r in results],
    })
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"flow": cmd_flow, "lp-solve": cmd_lp_solve, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minkflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides the config's seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command, seed=args.seed, out_dir=args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
