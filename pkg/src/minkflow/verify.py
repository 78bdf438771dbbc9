"""Batch checks of the identities and inequalities on seeded random bodies.

Every check returns a :class:`CheckResult` whose ``margin`` is the worst
measured value and ``passed`` compares it against ``tolerance``. Margins are
oriented so that larger is better except for residual-type checks, where
the margin is a residual that must stay below the tolerance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from minkflow import functionals as fn
from minkflow.body import (
    SupportField,
    curvature,
    mixed_volume,
    polar_identity_residual,
    radial_from_support,
)
from minkflow.flow import renormalize
from minkflow.minkowski import worker_count
from minkflow.shapes import random_even_polynomial, random_even_body
from minkflow.sphere import SphereGrid, gradient, integrate, sphere_area

DEFAULT_TOLERANCES = {
    "af": 1e-6,
    "af_spec": 1e-6,
    "bs": 1e-3,
    "polar": 5e-3,
    "dzp": 1e-2,
    "holder": 1e-12,
}
CHECKS = tuple(DEFAULT_TOLERANCES)


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    tolerance: float
    samples: int
    kind: str
    detail: dict

    def as_dict(self) -> dict:
        return asdict(self)


def _lower(name, values, tol, detail=None):
    worst = float(np.min(values))
    return CheckResult(name, worst >= -tol, worst, tol, len(values), "lower_bound", detail or {})


def _upper(name, values, tol, detail=None):
    worst = float(np.max(values))
    return CheckResult(name, worst <= tol, worst, tol, len(values), "residual", detail or {})


def af_margin(u: SupportField, v: SupportField) -> float:
    """(V(v,u..u)^2 - V(v,v,u..u) V(u..u)) / V(v,u..u)^2 for bodies on S^n."""
    n = u.grid.n
    v_u = mixed_volume(v, [u] * n)
    v_v = mixed_volume(v, [v] + [u] * (n - 1))
    u_u = mixed_volume(u, [u] * n)
    return (v_u**2 - v_v * u_u) / v_u**2


def af_specialization_margin(body: SupportField, psi: np.ndarray) -> float:
    """((int u psi sigma)^2 - V (int u sigma psi^2 - (1/n) int u^2 cof psi_i psi_j)) / normaliser.

    ``V = int u sigma_n``, which equals ``|S^n|`` for a normalised body.
    """
    grid = body.grid
    n = grid.n
    c = curvature(body)
    dpsi = gradient(grid, psi)
    quad = np.einsum("ia,iab,ib->i", dpsi, c.cofactor, dpsi)
    vol = integrate(grid, body.u * c.sigma_n)
    lhs = vol * (integrate(grid, body.u * c.sigma_n * psi**2) - integrate(grid, body.u**2 * quad) / n)
    rhs = integrate(grid, body.u * psi * c.sigma_n) ** 2
    return (rhs - lhs) / (vol * integrate(grid, body.u * c.sigma_n * psi**2))


def santalo_ratio(body: SupportField) -> float:
    """Vol(body) Vol(polar) / |S^n|^2 with volumes from radial functions."""
    grid = body.grid
    n = grid.n
    vol = integrate(grid, radial_from_support(body).r ** (n + 1))
    vol_dual = integrate(grid, body.u ** (-(n + 1.0)))
    return vol * vol_dual / sphere_area(n) ** 2


def check_af(grid, rng, samples, tol):
    margins, eq = [], []
    for _ in range(samples):
        u = random_even_body(grid, rng)
        v = random_even_body(grid, rng)
        margins.append(af_margin(u, v))
        w = rng.uniform(-0.05, 0.05, grid.n + 1)
        a = rng.uniform(0.5, 2.0)
        vh = SupportField(grid, a * u.u + grid.nodes @ w)
        eq.append(abs(af_margin(u, vh)))
    return _lower("af", margins, tol, {"equality_case_max_abs_margin": float(max(eq))})


def check_af_spec(grid, rng, samples, tol):
    margins = []
    for _ in range(samples):
        body = renormalize(random_even_body(grid, rng))
        psi = 1.0 + 0.3 * random_even_polynomial(grid, rng)
        margins.append(af_specialization_margin(body, psi))
    return _lower("af_spec", margins, tol)


def check_bs(grid, rng, samples, tol):
    ratios = [santalo_ratio(random_even_body(grid, rng)) for _ in range(samples)]
    Q, _ = np.linalg.qr(rng.normal(size=(grid.n + 1, grid.n + 1)))
    axes = np.exp(rng.uniform(-0.3, 0.3, grid.n + 1))
    ell = SupportField(grid, np.sqrt(np.sum((axes * (grid.nodes @ Q)) ** 2, axis=1)), True)
    ell_gap = abs(santalo_ratio(ell) - 1.0)
    margins = [1.0 - r for r in ratios]
    res = _lower("bs", margins, tol, {"ellipsoid_abs_gap": ell_gap, "max_ratio": float(max(ratios))})
    res.passed = res.passed and ell_gap <= tol
    return res


def check_polar(grid, rng, samples, tol):
    res = [polar_identity_residual(random_even_body(grid, rng)) for _ in range(samples)]
    return _upper("polar", res, tol)


def check_dzp(grid, rng, samples, tol, alpha=1.0, beta=1.0):
    f = 1.0 + 0.2 * grid.nodes[:, -1] ** 2
    params = fn.FlowParams(alpha, beta, f, grid.n)
    rel = []
    for _ in range(samples):
        body = renormalize(random_even_body(grid, rng))
        rel.append(fn.dZp_identity_residual(1.0 / beta, body, None, params)["rel"])
    return _upper("dzp", rel, tol, {"alpha": alpha, "beta": beta})


def check_holder(grid, rng, samples, tol):
    f = 1.0 + 0.2 * grid.nodes[:, -1] ** 2
    triples = [(0.5, 1.0, 2.0), (-1.0, 0.5, 3.0), (0.0, 1.0, 2.0)]
    margins = []
    for _ in range(samples):
        body = renormalize(random_even_body(grid, rng))
        c = curvature(body)
        params = fn.FlowParams(rng.uniform(-0.5, 2.0), rng.uniform(0.5, 1.5), f, grid.n)
        z0 = fn.Z(0, body, c, params)
        for p, q, s in triples:
            zp, zq, zs = (fn.Z(k, body, c, params) / z0 for k in (p, q, s))
            bound = zp ** ((s - q) / (s - p)) * zs ** ((q - p) / (s - p))
            margins.append(1.0 - zq / bound)
    return _lower("holder", margins, tol)


_RUNNERS = {
    "af": check_af,
    "af_spec": check_af_spec,
    "bs": check_bs,
    "polar": check_polar,
    "dzp": check_dzp,
    "holder": check_holder,
}


def run_checks(grid: SphereGrid, checks=CHECKS, seed: int = 0, samples: int = 20,
               tolerance: float | None = None, tolerances: dict | None = None,
               workers: int | None = None) -> list[CheckResult]:
    """Run the named checks; each gets its own generator seeded by (seed, index).

    ``tolerance`` overrides every check's tolerance; ``tolerances`` overrides
    individual ones.
    """
    unknown = [c for c in checks if c not in _RUNNERS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    if tolerance is not None:
        tol = {k: tolerance for k in tol}

    def one(name):
        rng = np.random.default_rng([seed, CHECKS.index(name)])
        return _RUNNERS[name](grid, rng, samples, tol[name])

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        return list(pool.map(one, checks))
