"""Scalar functionals tracked along the flow and the identities they satisfy.

Notation: ``rho = f u^(alpha-1) sigma_n^(-beta)``,
``eta = int f u^alpha sigma_n^(1-beta) / |S^n|`` and
``Z_p = int u sigma_n rho^p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from minkflow.body import CurvatureData, SupportField, curvature
from minkflow.errors import RegimeError
from minkflow.sphere import integrate, sphere_area

_EXACT = 1e-12


class Regime(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"

    @property
    def j_direction(self) -> int:
        """-1 if J is non-increasing along the normalised flow, +1 if non-decreasing."""
        return 1 if self is Regime.B else -1

    @property
    def needs_even_data(self) -> bool:
        return self is not Regime.D


def classify_regime(alpha: float, beta: float, n: int) -> Regime:
    """Map exponents to the admissible case, or raise RegimeError.

    C: alpha = 0 and beta = 1. D: alpha >= 1 + n beta.
    A: 1 - beta < alpha < 1 + n beta. B: 1 - n beta - 2 beta < alpha < 1 - beta.
    """
    if not beta > 0:
        raise RegimeError(f"beta must be positive, got {beta}")
    if abs(alpha) <= _EXACT and abs(beta - 1.0) <= _EXACT:
        return Regime.C
    if alpha >= 1.0 + n * beta:
        return Regime.D
    if abs(alpha - (1.0 - beta)) <= _EXACT * max(1.0, abs(alpha)):
        raise RegimeError(f"alpha = 1 - beta = {1.0 - beta:g} is excluded")
    if alpha > 1.0 - beta:
        return Regime.A
    if alpha > 1.0 - n * beta - 2.0 * beta:
        return Regime.B
    raise RegimeError(
        f"alpha = {alpha:g} <= 1 - n beta - 2 beta = {1.0 - n * beta - 2.0 * beta:g} is outside every admissible case"
    )


@dataclass(frozen=True, eq=False)
class FlowParams:
    """Exponents and the positive weight ``f`` sampled on the grid."""

    alpha: float
    beta: float
    f: np.ndarray
    n: int

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1:
            raise ValueError("f must be a flat array of grid samples")
        if not np.all(f > 0):
            raise ValueError(f"f must be positive at every node (min f = {f.min():.3g})")
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        classify_regime(self.alpha, self.beta, self.n)

    @property
    def regime(self) -> Regime:
        return classify_regime(self.alpha, self.beta, self.n)

    @property
    def scaling_exponent(self) -> float:
        """1 + n beta - alpha: the speed scales like u to the power -(this - 1)."""
        return 1.0 + self.n * self.beta - self.alpha


def _curv(body, curv):
    return curv if curv is not None else curvature(body)


def rho(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> np.ndarray:
    c = _curv(body, curv)
    return params.f * body.u ** (params.alpha - 1.0) * c.sigma_n ** (-params.beta)


def eta(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    c = _curv(body, curv)
    integrand = params.f * body.u**params.alpha * c.sigma_n ** (1.0 - params.beta)
    return integrate(body.grid, integrand) / sphere_area(body.grid.n)


def speed(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> np.ndarray:
    """Normal speed of the unnormalised flow, ``f u^alpha sigma_n^(-beta)``."""
    c = _curv(body, curv)
    return params.f * body.u**params.alpha * c.sigma_n ** (-params.beta)


def normalized_tendency(body: SupportField, curv: CurvatureData | None, params: FlowParams,
                        eta_value: float | None = None) -> np.ndarray:
    """du/dt = -f u^alpha sigma_n^(-beta) + eta u."""
    c = _curv(body, curv)
    e = eta(body, c, params) if eta_value is None else eta_value
    return -speed(body, c, params) + e * body.u


def effective_diffusion(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> np.ndarray:
    """beta f u^alpha sigma_n^(-beta-1) lambda_max(cofactor): the diffusion
    coefficient of the linearised operator, nodewise."""
    c = _curv(body, curv)
    cof_max = c.cofactor[:, 0, 0] if c.cofactor.shape[1] == 1 else np.max(_eig2(c.cofactor), axis=1)
    return params.beta * params.f * body.u**params.alpha * c.sigma_n ** (-params.beta - 1.0) * cof_max


def _eig2(M):
    a, b, d = M[:, 0, 0], M[:, 0, 1], M[:, 1, 1]
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    return np.stack([mean - rad, mean + rad], axis=1)


def cfl_step(body: SupportField, curv: CurvatureData | None, params: FlowParams, safety: float) -> float:
    """safety * h_min^2 / max D, before clamping."""
    D = effective_diffusion(body, curv, params)
    return safety * body.grid.h_min**2 / float(np.max(D))


def Z(p: float, body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    c = _curv(body, curv)
    if p == 0:
        return integrate(body.grid, body.u * c.sigma_n)
    return integrate(body.grid, body.u * c.sigma_n * rho(body, c, params) ** p)


def J(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    """Monotone functional: Z_{1/beta}, or the entropy form when alpha=0, beta=1."""
    c = _curv(body, curv)
    if params.regime is Regime.C:
        g = body.grid
        f = params.f
        entropy = integrate(g, f * np.log(body.u)) / integrate(g, f)
        return entropy - np.log(integrate(g, body.u * c.sigma_n)) / (g.n + 1)
    return Z(1.0 / params.beta, body, c, params)


def entropy_dissipation(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    """dJ/dt along the normalised flow when alpha=0, beta=1:
    ``-int u^-1 sigma_n (f / sigma_n - eta u)^2 / int f``."""
    if params.regime is not Regime.C:
        raise RegimeError("entropy dissipation applies only to alpha = 0, beta = 1")
    c = _curv(body, curv)
    e = eta(body, c, params)
    s = c.sigma_n
    integrand = s / body.u * (params.f / s - e * body.u) ** 2
    return -integrate(body.grid, integrand) / integrate(body.grid, params.f)


def soliton_residual(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    """sup |rho / eta - 1|; zero exactly at a self-similar solution."""
    c = _curv(body, curv)
    return float(np.max(np.abs(rho(body, c, params) / eta(body, c, params) - 1.0)))


def dZ_closed_form(body: SupportField, curv: CurvatureData | None, params: FlowParams) -> float:
    """((1 - alpha - beta) / beta) (Z_{1+1/beta} - Z_1 Z_{1/beta} / |S^n|)."""
    c = _curv(body, curv)
    b = params.beta
    area = sphere_area(body.grid.n)
    bracket = Z(1.0 + 1.0 / b, body, c, params) - Z(1.0, body, c, params) * Z(1.0 / b, body, c, params) / area
    return (1.0 - params.alpha - b) / b * bracket


def dZp_identity_residual(p: float, body: SupportField, curv: CurvatureData | None,
                          params: FlowParams, delta: float | None = None) -> dict:
    """Compare a centred difference of ``Z_{1/beta}`` along the flow with its closed form.

    The body is pushed by ``+-delta`` times the (unfiltered, unrenormalised)
    normalised tendency and ``Z_{1/beta}`` is differenced across the pair.
    ``delta`` defaults to a stable explicit step, so the discrepancy is the
    O(delta^2) truncation of the centred difference.

    Returns
    -------
    dict
        ``fd``, ``closed``, ``abs`` and ``rel`` (discrepancy relative to
        ``max(|fd|, |closed|)``, with a floor at ``1e-12 Z``).
    """
    b = params.beta
    if abs(p - 1.0 / b) > 1e-12 * max(1.0, abs(p)):
        raise ValueError(f"closed form available only for p = 1/beta = {1.0 / b:g}")
    c = _curv(body, curv)
    if delta is None:
        delta = cfl_step(body, c, params, 0.15)
    V = normalized_tendency(body, c, params)
    zs = []
    for sgn in (1.0, -1.0):
        moved = SupportField(body.grid, body.u + sgn * delta * V)
        zs.append(Z(p, moved, curvature(moved), params))
    fd = (zs[0] - zs[1]) / (2.0 * delta)
    closed = dZ_closed_form(body, c, params)
    err = abs(fd - closed)
    scale = max(abs(fd), abs(closed), 1e-12 * abs(Z(p, body, c, params)))
    return {"fd": fd, "closed": closed, "abs": err, "rel": err / scale}
