"""Smooth L_p Minkowski problem ``u^(1-p) sigma_n[W_u] = phi`` solved by the flow.

With ``beta = 1`` and ``alpha = p`` a self-similar solution of the flow
satisfies ``phi u^(p-1) sigma_n^-1 = c``; rescaling by ``c^(1/(1+n-p))``
turns it into a solution of the Minkowski equation. At ``p = n+1`` the
equation is dilation invariant and the volume-normalised body is returned.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from minkflow import functionals as fn
from minkflow.body import SupportField, curvature, volume
from minkflow.errors import MinkflowError, RegimeError
from minkflow.flow import EVEN_TOL, FlowConfig, Trajectory, run
from minkflow.sphere import SphereGrid

DEFAULT_SOLVER = FlowConfig(tol_residual=1e-7, tol_J_rate=1e-9, max_steps=20000)


def worker_count(requested: int | None = None) -> int:
    """Worker cap from ``MINKFLOW_THREADS`` (default 1)."""
    cap = int(os.environ.get("MINKFLOW_THREADS", "1") or 1)
    return max(1, min(cap, requested or cap))


@dataclass(frozen=True, eq=False)
class LpProblem:
    p: float
    phi: np.ndarray
    grid: SphereGrid
    config: FlowConfig = field(default_factory=lambda: DEFAULT_SOLVER)

    def __post_init__(self):
        n = self.grid.n
        phi = self.grid.check_field(self.phi, "phi")
        if not np.all(phi > 0):
            raise ValueError("phi must be positive at every node")
        if not self.p > -n - 1:
            raise RegimeError(f"p = {self.p:g} outside the admissible range p > -n-1 = {-n - 1}")
        if self.p < n + 1 and np.max(np.abs(phi - phi[self.grid.antipode_index])) > EVEN_TOL * phi.max():
            raise ValueError(f"p = {self.p:g} < n+1 requires an even phi")
        object.__setattr__(self, "p", float(self.p))
        # regime check doubles as the exponent-dictionary assertion
        expected = fn.Regime.D if self.p >= n + 1 else (fn.Regime.C if self.p == 0 else
                                                         fn.Regime.A if self.p > 0 else fn.Regime.B)
        got = self.params.regime
        if got is not expected:
            raise MinkflowError(f"internal error: p={self.p:g} mapped to regime {got.value}, expected {expected.value}")

    @property
    def params(self) -> fn.FlowParams:
        return fn.FlowParams(alpha=self.p, beta=1.0, f=self.phi, n=self.grid.n)

    @property
    def dilation_invariant(self) -> bool:
        return self.p == self.grid.n + 1


def manufactured_phi(body: SupportField, p: float) -> np.ndarray:
    """phi = u^(1-p) sigma_n[W_u] with the discrete operator, so ``body`` solves it exactly."""
    return body.u ** (1.0 - p) * curvature(body).sigma_n


def residual(body: SupportField, problem: LpProblem) -> float:
    """sup |u^(1-p) sigma_n / phi - 1|."""
    return float(np.max(np.abs(manufactured_phi(body, problem.p) / problem.phi - 1.0)))


@dataclass
class LpSolution:
    body: SupportField
    report: dict
    trajectory: Trajectory


def solve(problem: LpProblem, start: SupportField | None = None) -> LpSolution:
    """Run the flow to a soliton and rescale it into a solution.

    The report carries ``c``, ``residual``, ``status`` and
    ``unique_up_to_dilation``.

    Raises
    ------
    MinkflowError
        If the flow stops without converging; ``trajectory`` is attached to
        the exception as ``err.trajectory``.
    """
    grid = problem.grid
    params = problem.params
    if start is None:
        start = SupportField(grid, np.ones(grid.size), True)
    traj = run(start, params, problem.config)
    if traj.status != "converged":
        err = MinkflowError(f"flow did not converge: status {traj.status}, residual {traj.final.residual:.3e}")
        err.trajectory = traj
        raise err
    c = traj.c
    u = traj.final.body
    if not problem.dilation_invariant:
        u = u.scaled(c ** (1.0 / (1.0 + grid.n - problem.p)))
    report = {
        "p": problem.p,
        "c": c,
        "regime": params.regime.value,
        "status": traj.status,
        "steps": traj.final.step,
        "flow_residual": traj.final.residual,
        "residual": residual(u, problem),
        "unique_up_to_dilation": problem.dilation_invariant,
        "monotonicity_violations": traj.report["monotonicity_violations"],
    }
    return LpSolution(u, report, traj)


def align_volume(body: SupportField, reference: SupportField) -> SupportField:
    """Dilate ``body`` to the volume of ``reference``."""
    n = body.grid.n
    return body.scaled((volume(reference) / volume(body)) ** (1.0 / (n + 1)))


def uniqueness_probe(problem: LpProblem, starts, tol: float = 5e-3, workers: int | None = None) -> dict:
    """Solve from several starts and compare the final bodies pairwise.

    Refused for ``p <= 1``, where uniqueness is not available. At ``p = n+1``
    each solution is dilated to the first one's volume before comparing.
    """
    if not problem.p > 1:
        raise ValueError(f"uniqueness probe needs p > 1, got p = {problem.p:g}")
    starts = list(starts)
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(lambda s: solve(problem, s), starts))
    bodies = [r.body for r in results]
    if problem.dilation_invariant:
        bodies = [bodies[0]] + [align_volume(b, bodies[0]) for b in bodies[1:]]
    distances = {
        f"{i}-{j}": float(np.max(np.abs(bodies[i].u - bodies[j].u)))
        for i, j in combinations(range(len(bodies)), 2)
    }
    worst = max(distances.values(), default=0.0)
    return {
        "p": problem.p,
        "distances": distances,
        "max_distance": worst,
        "tolerance": tol,
        "unique": worst <= tol,
        "reports": [r.report for r in results],
        "bodies": bodies,
    }
