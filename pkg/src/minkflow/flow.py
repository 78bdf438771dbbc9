"""Explicit time integration of the normalised anisotropic shrinking flow.

The normalised flow is ``du/dt = -f u^alpha sigma_n^(-beta) + eta(t) u`` with
the volume ``int u sigma_n`` pinned to ``|S^n|`` by rescaling after each
accepted step. The integrator is the explicit midpoint rule. Tendencies are
passed through :func:`polar_filter`, so the step size is set by the
latitude spacing rather than the shrinking longitude spacing near the poles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from minkflow import functionals as fn
from minkflow.body import (
    DEFAULT_EPS_CONVEX,
    CurvatureData,
    SupportField,
    curvature,
)
from minkflow.errors import MinkflowError, NonConvexError, StepFailure
from minkflow.sphere import integrate, polar_filter, sphere_area

log = logging.getLogger(__name__)

ROW_COLUMNS = ("t", "dt", "eta", "J", "Z0", "residual", "lambda_min", "u_min", "u_max")
EVEN_TOL = 1e-10


@dataclass(frozen=True)
class FlowConfig:
    """Time-stepping controls. ``symmetrize=None`` means on in regimes A/B/C."""

    dt_init: float = 1e-2
    dt_min: float = 1e-12
    dt_max: float = 1.0
    cfl_safety: float = 0.15
    tol_residual: float = 1e-3
    tol_J_rate: float = 1e-4
    max_steps: int = 20000
    renormalize_every: int = 1
    symmetrize: bool | None = None
    snapshot_every: int = 0
    eps_convex: float = DEFAULT_EPS_CONVEX
    filter_poles: bool = True
    tol_mono_rel: float = 1e-8
    tol_mono_abs: float = 1e-10
    burn_in_steps: int = 50

    def __post_init__(self):
        for name in ("dt_init", "dt_min", "dt_max", "cfl_safety", "tol_residual", "tol_J_rate",
                     "eps_convex", "tol_mono_rel", "tol_mono_abs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.dt_min < self.dt_init <= self.dt_max:
            raise ValueError("need dt_min < dt_init <= dt_max")
        if self.cfl_safety > 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.max_steps < 0 or self.renormalize_every < 0 or self.snapshot_every < 0:
            raise ValueError("step counts must be non-negative")

    def symmetrize_for(self, params: fn.FlowParams) -> bool:
        if self.symmetrize is None:
            return params.regime.needs_even_data
        return bool(self.symmetrize)

    def tol_mono(self, J: float) -> float:
        return self.tol_mono_rel * abs(J) + self.tol_mono_abs


@dataclass(frozen=True, eq=False)
class FlowState:
    body: SupportField
    curv: CurvatureData
    t: float
    step: int
    dt: float
    eta: float
    J: float
    Z0: float
    residual: float
    lambda_min: float

    @property
    def u(self) -> np.ndarray:
        return self.body.u

    def row(self) -> dict:
        return {
            "t": self.t, "dt": self.dt, "eta": self.eta, "J": self.J, "Z0": self.Z0,
            "residual": self.residual, "lambda_min": self.lambda_min,
            "u_min": float(self.u.min()), "u_max": float(self.u.max()),
        }


@dataclass
class Trajectory:
    rows: list[dict] = field(default_factory=list)
    snapshots: list[tuple[float, SupportField]] = field(default_factory=list)
    status: str = "max_steps"
    final: FlowState | None = None
    report: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def c(self) -> float:
        return self.final.eta


def make_state(body: SupportField, params: fn.FlowParams, t=0.0, step=0, dt=0.0,
               eps_convex=DEFAULT_EPS_CONVEX) -> FlowState:
    curv = curvature(body, eps_convex)
    return FlowState(
        body=body, curv=curv, t=t, step=step, dt=dt,
        eta=fn.eta(body, curv, params), J=fn.J(body, curv, params),
        Z0=fn.Z(0, body, curv, params), residual=fn.soliton_residual(body, curv, params),
        lambda_min=curv.lambda_min,
    )


def renormalize(body: SupportField, curv: CurvatureData | None = None) -> SupportField:
    """Rescale so that int u sigma_n = |S^n|."""
    curv = curv or curvature(body, check=False)
    n = body.grid.n
    vol = integrate(body.grid, body.u * curv.sigma_n)
    return body.scaled((sphere_area(n) / vol) ** (1.0 / (n + 1)))


def choose_dt(state: FlowState, params: fn.FlowParams, config: FlowConfig) -> float:
    """clamp(cfl_safety h_min^2 / max D, dt_min, dt_max)."""
    dt = fn.cfl_step(state.body, state.curv, params, config.cfl_safety)
    return float(np.clip(dt, config.dt_min, config.dt_max))


def _check_params(body: SupportField, params: fn.FlowParams):
    if params.f.shape != body.u.shape or params.n != body.grid.n:
        raise MinkflowError("flow weight f and body live on different grids")


def _tendency(body, params, config, normalized=True):
    curv = curvature(body, config.eps_convex)
    V = -fn.speed(body, curv, params)
    if normalized:
        V = V + fn.eta(body, curv, params) * body.u
    if config.filter_poles:
        V = polar_filter(body.grid, V)
    return V


def _trial(state, params, config, dt, normalized, symmetrize):
    """One midpoint update; NonConvexError signals a rejected trial."""
    grid = state.body.grid
    u0 = state.u
    k1 = _tendency(state.body, params, config, normalized)
    mid = u0 + 0.5 * dt * k1
    if not np.all(mid > 0):
        raise NonConvexError("support function lost positivity", node=int(np.argmin(mid)))
    k2 = _tendency(SupportField(grid, mid), params, config, normalized)
    u1 = u0 + dt * k2
    if symmetrize:
        u1 = 0.5 * (u1 + u1[grid.antipode_index])
    if not np.all(u1 > 0):
        raise NonConvexError("support function lost positivity", node=int(np.argmin(u1)))
    body = SupportField(grid, u1, state.body.symmetric and symmetrize)
    curvature(body, config.eps_convex)
    return body


def _advance(state, params, config, normalized, dt=None):
    symmetrize = config.symmetrize_for(params) if normalized else bool(config.symmetrize)
    if dt is None:
        dt = choose_dt(state, params, config)
        if state.step == 0:
            dt = min(dt, config.dt_init)
    last = None
    while dt >= config.dt_min:
        try:
            body = _trial(state, params, config, dt, normalized, symmetrize)
            break
        except NonConvexError as err:
            last = err
            log.debug("step %d rejected at dt=%.3e: %s", state.step, dt, err)
            dt *= 0.5
    else:
        report = {
            "step": state.step, "t": state.t, "dt": dt,
            "node": getattr(last, "node", None), "lambda_min": getattr(last, "lambda_min", None),
            "reason": str(last),
        }
        raise StepFailure(f"time step underflow at step {state.step}: {last}", report)
    step = state.step + 1
    if normalized and config.renormalize_every and step % config.renormalize_every == 0:
        body = renormalize(body)
    return make_state(body, params, state.t + dt, step, dt, config.eps_convex)


def step(state: FlowState, params: fn.FlowParams, config: FlowConfig, dt: float | None = None) -> FlowState:
    """Advance the normalised flow by one accepted step.

    Midpoint update with ``eta`` recomputed at each stage, then optional
    symmetrisation and renormalisation. Trial steps that lose positivity or
    convexity are retried with half the step.

    Raises
    ------
    StepFailure
        When the step falls below ``dt_min``; ``report`` names the node.
    """
    return _advance(state, params, config, True, dt)


def unnormalized_step(state: FlowState, params: fn.FlowParams, config: FlowConfig,
                      dt: float | None = None) -> FlowState:
    """One midpoint step of ``du/dt = -f u^alpha sigma_n^(-beta)``, no rescaling."""
    return _advance(state, params, config, False, dt)


def _prepare(body, params, config):
    _check_params(body, params)
    grid = body.grid
    if config.symmetrize_for(params):
        if body.asymmetry() > EVEN_TOL * float(body.u.max()):
            raise MinkflowError("symmetric mode needs an origin-symmetric initial body")
        f = params.f
        if np.max(np.abs(f - f[grid.antipode_index])) > EVEN_TOL * float(f.max()):
            raise MinkflowError("symmetric mode needs an even weight f")
        body = SupportField(grid, body.u, True)
    return body


class _Monitor:
    def __init__(self, params, config, state):
        self.params, self.config = params, config
        self.direction = params.regime.j_direction
        self.violations = 0
        self.worst = 0.0
        self.eta_violations = 0
        self.eta_bound = state.eta
        self.u_lo, self.u_hi = np.inf, -np.inf
        self.z0_drift = abs(state.Z0 - sphere_area(params.n))

    def update(self, prev, new):
        change = self.direction * (new.J - prev.J)
        tol = self.config.tol_mono(prev.J)
        if change < -tol:
            self.violations += 1
        self.worst = min(self.worst, change)
        if new.step > self.config.burn_in_steps:
            if new.eta > 2.0 * self.eta_bound:
                self.eta_violations += 1
            self.u_lo = min(self.u_lo, float(new.u.min()))
            self.u_hi = max(self.u_hi, float(new.u.max()))
        self.eta_bound = max(self.eta_bound, new.eta)
        self.z0_drift = max(self.z0_drift, abs(new.Z0 - sphere_area(self.params.n)))

    def report(self):
        return {
            "monotonicity_violations": self.violations,
            "worst_J_change": self.worst,
            "J_direction": "non-decreasing" if self.direction > 0 else "non-increasing",
            "eta_bound_violations": self.eta_violations,
            "u_min_after_burn_in": None if np.isinf(self.u_lo) else self.u_lo,
            "u_max_after_burn_in": None if np.isinf(self.u_hi) else self.u_hi,
            "max_Z0_drift": self.z0_drift,
        }


def run(body: SupportField, params: fn.FlowParams, config: FlowConfig) -> Trajectory:
    """Iterate :func:`step` until the soliton residual and |dJ/dt| are both small.

    Status is ``converged``, ``max_steps`` or ``step_failure``; the final row's
    ``eta`` is the soliton constant ``c``.
    """
    body = _prepare(body, params, config)
    if config.renormalize_every:
        body = renormalize(body)
    state = make_state(body, params, dt=0.0, eps_convex=config.eps_convex)
    traj = Trajectory()
    traj.rows.append(state.row())
    if config.snapshot_every:
        traj.snapshots.append((state.t, state.body))
    mon = _Monitor(params, config, state)
    J_rate = np.inf
    while True:
        if state.step >= 1 and state.residual < config.tol_residual and J_rate < config.tol_J_rate:
            traj.status = "converged"
            break
        if state.step >= config.max_steps:
            traj.status = "max_steps"
            break
        try:
            new = step(state, params, config)
        except StepFailure as err:
            traj.status = "step_failure"
            traj.report["failure"] = err.report
            break
        J_rate = abs(new.J - state.J) / new.dt
        mon.update(state, new)
        state = new
        traj.rows.append(state.row())
        if config.snapshot_every and state.step % config.snapshot_every == 0:
            traj.snapshots.append((state.t, state.body))
    traj.final = state
    traj.report.update(mon.report())
    traj.report.update({
        "status": traj.status, "steps": state.step, "c": state.eta,
        "regime": params.regime.value, "final_residual": state.residual,
    })
    if params.n == 1:
        traj.report["note"] = "n=1 run: outside the dimension range covered by the convergence theorems"
    return traj


def run_unnormalized(body: SupportField, params: fn.FlowParams, config: FlowConfig,
                     u_floor: float = 0.3, t_end: float = np.inf) -> Trajectory:
    """Unnormalised flow until ``u_min < u_floor``, ``t_end`` or ``max_steps``.

    Rows carry the actual volume in ``Z0``; status is ``extinction_guard``
    when the floor stops the run. No step is taken past ``t_end``.
    """
    _check_params(body, params)
    state = make_state(body, params, dt=0.0, eps_convex=config.eps_convex)
    traj = Trajectory()
    traj.rows.append(state.row())
    if config.snapshot_every:
        traj.snapshots.append((state.t, state.body))
    while True:
        if state.u.min() < u_floor:
            traj.status = "extinction_guard"
            break
        if state.t >= t_end:
            traj.status = "t_end"
            break
        if state.step >= config.max_steps:
            traj.status = "max_steps"
            break
        dt = choose_dt(state, params, config)
        dt = min(dt, t_end - state.t)
        try:
            state = unnormalized_step(state, params, config, dt=dt)
        except StepFailure as err:
            traj.status = "step_failure"
            traj.report["failure"] = err.report
            break
        traj.rows.append(state.row())
        if config.snapshot_every and state.step % config.snapshot_every == 0:
            traj.snapshots.append((state.t, state.body))
    traj.final = state
    traj.report.update({"status": traj.status, "steps": state.step})
    return traj


def time_rescale(traj: Trajectory, params: fn.FlowParams) -> np.ndarray:
    """Normalised times tau_k = int_0^t_k (|S^n| / V)^((1 + n beta - alpha)/(n+1)) ds.

    Trapezoid rule over the rows of an unnormalised trajectory.
    """
    n = params.n
    t = traj.column("t")
    V = traj.column("Z0")
    g = (sphere_area(n) / V) ** (params.scaling_exponent / (n + 1))
    tau = np.zeros_like(t)
    tau[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))
    return tau


def rescaled_body(body: SupportField) -> SupportField:
    """Volume-normalised copy, (|S^n| / V)^(1/(n+1)) u."""
    return renormalize(body)


def shape_at(traj: Trajectory, time: float) -> np.ndarray:
    """Support samples at ``time``, linearly interpolated between snapshots."""
    times = np.array([s[0] for s in traj.snapshots])
    if not times.size or time < times[0] or time > times[-1]:
        raise ValueError(f"time {time} outside the snapshot range")
    k = int(np.searchsorted(times, time))
    if times[k] == time:
        return traj.snapshots[k][1].u
    t0, t1 = times[k - 1], times[k]
    w = (time - t0) / (t1 - t0)
    return (1 - w) * traj.snapshots[k - 1][1].u + w * traj.snapshots[k][1].u


def rescaled_mismatch(unnormalized: Trajectory, normalized: Trajectory, params: fn.FlowParams) -> np.ndarray:
    """Sup-distance between rescaled unnormalised snapshots and the normalised run at equal tau.

    Both trajectories need ``snapshot_every=1``; snapshots of the unnormalised
    run beyond the normalised run's time span are skipped.
    """
    tau = time_rescale(unnormalized, params)
    t_rows = unnormalized.column("t")
    out = []
    t_end = normalized.snapshots[-1][0]
    for t, body in unnormalized.snapshots:
        k = int(np.searchsorted(t_rows, t))
        if tau[k] > t_end:
            break
        ref = shape_at(normalized, tau[k])
        out.append(float(np.max(np.abs(rescaled_body(body).u - ref))))
    return np.array(out)


def sphere_distance(body: SupportField) -> float:
    """sup |u - 1|."""
    return float(np.max(np.abs(body.u - 1.0)))


__all__ = [
    "ROW_COLUMNS", "FlowConfig", "FlowState", "Trajectory", "choose_dt", "make_state",
    "renormalize", "rescaled_mismatch", "run", "run_unnormalized", "shape_at", "step",
    "time_rescale", "unnormalized_step",
]
