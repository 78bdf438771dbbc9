"""Run the normalised flow from an ellipsoid and print how it approaches the soliton.

Usage: python scripts/soliton_convergence.py [--alpha 0] [--beta 1] [--axes 1 1 1.5] [--n-theta 32]
"""

import argparse

import numpy as np

from minkflow import functionals as fn
from minkflow.flow import FlowConfig, run
from minkflow.shapes import make_shape
from minkflow.sphere import build_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.0)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--axes", type=float, nargs=3, default=[1.0, 1.0, 1.5])
    ap.add_argument("--n-theta", type=int, default=32)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args()

    grid = build_grid(2, args.n_theta, 2 * args.n_theta)
    params = fn.FlowParams(args.alpha, args.beta, np.ones(grid.size), 2)
    body = make_shape("ellipsoid", {"axes": args.axes}, grid)
    traj = run(body, params, FlowConfig(tol_residual=args.tol, tol_J_rate=args.tol * 1e-2))

    print(f"regime {params.regime.value}, status {traj.status}, {traj.final.step} steps, c = {traj.c:.10f}")
    print(f"{'step':>6} {'t':>10} {'J':>16} {'residual':>10} {'sup|u-1|':>10}")
    rows = traj.rows
    for k in np.unique(np.geomspace(1, len(rows), 12).astype(int) - 1):
        r = rows[k]
        print(f"{k:6d} {r['t']:10.4f} {r['J']:16.10f} {r['residual']:10.2e} {max(r['u_max'] - 1, 1 - r['u_min']):10.2e}")


if __name__ == "__main__":
    main()
