"""Grid refinement of the discrete operators and identities.

Prints, for 16x32 up to 64x128 (or --max-theta), the sup errors of the
covariant Hessian and sigma_2 on the ellipsoid (1, 1, 2) against closed
forms, the polar identity residual and the relative dZ identity residual,
with the ratio between consecutive grids.

Usage: python scripts/refinement_study.py [--max-theta 64]
"""

import argparse

import numpy as np

from minkflow import functionals as fn
from minkflow.body import curvature, polar_identity_residual
from minkflow.shapes import make_shape
from minkflow.sphere import build_grid, covariant_hessian


def ellipsoid_exact(grid, axes):
    """Covariant Hessian and sigma_n of u = sqrt(x^T M x) from the ambient formula."""
    M = np.diag(np.asarray(axes, float) ** 2)
    x = grid.nodes
    u = np.sqrt(np.einsum("ik,kl,il->i", x, M, x))
    My = x @ M
    D2 = M[None] / u[:, None, None] - np.einsum("ik,il->ikl", My, My) / u[:, None, None] ** 3
    F = grid.frames
    hess = np.einsum("iak,ikl,ibl->iab", F, D2, F) - u[:, None, None] * np.eye(2)[None]
    return hess, np.linalg.det(M) / u**4


def measure(nt):
    g = build_grid(2, nt, 2 * nt)
    axes = [1.0, 1.0, 2.0]
    body = make_shape("ellipsoid", {"axes": axes}, g)
    hess, sigma = ellipsoid_exact(g, axes)
    pert = make_shape("perturbed", {"eps": 0.2, "modes": {"x3^2": 1.0, "x1^2*x2^2": 0.5}}, g)
    params = fn.FlowParams(0.5, 0.7, 1.0 + 0.2 * g.nodes[:, 2] ** 2, 2)
    return {
        "hessian": np.max(np.abs(covariant_hessian(g, body.u) - hess)),
        "sigma_2": np.max(np.abs(curvature(body).sigma_n - sigma)),
        "polar": polar_identity_residual(body),
        "dZ": fn.dZp_identity_residual(1 / 0.7, pert, None, params)["rel"],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-theta", type=int, default=64)
    args = ap.parse_args()
    sizes = [nt for nt in (16, 32, 64, 128, 256) if nt <= args.max_theta]
    results = [measure(nt) for nt in sizes]
    keys = list(results[0])
    print(f"{'grid':>9} " + " ".join(f"{k:>18}" for k in keys))
    for i, nt in enumerate(sizes):
        cells = []
        for k in keys:
            ratio = "" if i == 0 else f"({results[i - 1][k] / results[i][k]:5.1f})"
            cells.append(f"{results[i][k]:10.2e} {ratio:>7}")
        print(f"{nt:4d}x{2 * nt:<4d} " + " ".join(cells))


if __name__ == "__main__":
    main()
