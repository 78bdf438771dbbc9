"""Convex bodies through their support functions.

Volume follows the convention ``Vol = int u sigma_n dx = int r^{n+1} dxi``
with no ``1/(n+1)`` factor, so the unit ball has volume ``|S^n|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from minkflow.errors import GridError, MinkflowError, NonConvexError
from minkflow.sphere import (
    SphereGrid,
    SpectralInterpolant,
    covariant_hessian,
    gradient,
    integrate,
    tangent_to_ambient,
)

DEFAULT_EPS_CONVEX = 1e-12


@dataclass(frozen=True, eq=False)
class SupportField:
    grid: SphereGrid
    u: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        u = self.grid.check_field(self.u, "support function").copy()
        if self.symmetric:
            u = 0.5 * (u + u[self.grid.antipode_index])
        if not np.all(u > 0):
            i = int(np.argmin(u))
            raise NonConvexError(
                f"support function must be positive (origin inside the body); min u = {u[i]:.3g} at node {i}",
                node=i,
            )
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def with_values(self, u, symmetric=None) -> "SupportField":
        return SupportField(self.grid, u, self.symmetric if symmetric is None else symmetric)

    def scaled(self, s: float) -> "SupportField":
        return SupportField(self.grid, s * self.u, self.symmetric)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.u - self.u[self.grid.antipode_index])))


@dataclass(frozen=True, eq=False)
class CurvatureData:
    W: np.ndarray
    lam: np.ndarray
    sigma_n: np.ndarray
    cofactor: np.ndarray

    @property
    def lambda_min(self) -> float:
        return float(self.lam[:, 0].min())

    @property
    def nonconvex(self) -> np.ndarray:
        return self.lam[:, 0] <= 0.0


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: SphereGrid
    r: np.ndarray


def radii_matrix(grid: SphereGrid, u) -> np.ndarray:
    """W_u = covariant Hessian + u I, for any scalar field."""
    u = grid.check_field(u)
    W = covariant_hessian(grid, u)
    idx = np.arange(grid.n)
    W[:, idx, idx] += u[:, None]
    return W


def _eig_sym(W):
    if W.shape[1] == 1:
        return W[:, :, 0].copy()
    a, b, c = W[:, 0, 0], W[:, 0, 1], W[:, 1, 1]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return np.stack([mean - rad, mean + rad], axis=1)


def _det_cof(W):
    if W.shape[1] == 1:
        return W[:, 0, 0].copy(), np.ones_like(W)
    a, b, c = W[:, 0, 0], W[:, 0, 1], W[:, 1, 1]
    cof = np.empty_like(W)
    cof[:, 0, 0] = c
    cof[:, 1, 1] = a
    cof[:, 0, 1] = cof[:, 1, 0] = -b
    return a * c - b * b, cof


def curvature_from_matrix(W, eps_convex=DEFAULT_EPS_CONVEX, check=True) -> CurvatureData:
    lam = _eig_sym(W)
    sigma, cof = _det_cof(W)
    if check and lam[:, 0].min() <= eps_convex:
        i = int(np.argmin(lam[:, 0]))
        raise NonConvexError(
            f"radii matrix not positive definite: lambda_min = {lam[i, 0]:.3e} at node {i}",
            lambda_min=float(lam[i, 0]),
            node=i,
        )
    return CurvatureData(W=W, lam=lam, sigma_n=sigma, cofactor=cof)


def curvature(body: SupportField, eps_convex=DEFAULT_EPS_CONVEX, check=True) -> CurvatureData:
    """Principal radii data of ``body``.

    Raises NonConvexError when the smallest radius is ``<= eps_convex`` and
    ``check`` is set; with ``check=False`` the offending nodes are exposed
    through ``CurvatureData.nonconvex`` instead.
    """
    return curvature_from_matrix(radii_matrix(body.grid, body.u), eps_convex, check)


def embedding(body: SupportField) -> np.ndarray:
    """Boundary points X(x) = u(x) x + grad u(x), shape (N, n+1)."""
    g = body.grid
    return body.u[:, None] * g.nodes + tangent_to_ambient(g, gradient(g, body.u))


def volume(body: SupportField, curv: CurvatureData | None = None) -> float:
    curv = curv or curvature(body, check=False)
    return integrate(body.grid, body.u * curv.sigma_n)


def volume_radial(body: SupportField) -> float:
    rf = radial_from_support(body)
    return integrate(body.grid, rf.r ** (body.grid.n + 1))


# -- radial function and duality ------------------------------------------------

_CHUNK = 512


def _discrete_argmin(grid: SphereGrid, u, targets):
    nodes = grid.nodes
    best = np.empty(targets.shape[0], dtype=int)
    for s in range(0, targets.shape[0], _CHUNK):
        dots = targets[s:s + _CHUNK] @ nodes.T
        with np.errstate(divide="ignore"):
            F = np.where(dots > 1e-3, u[None, :] / np.where(dots > 1e-3, dots, 1.0), np.inf)
        if not np.all(np.isfinite(F.min(axis=1))):
            raise MinkflowError("internal error: radial direction with no admissible grid node")
        best[s:s + _CHUNK] = np.argmin(F, axis=1)
    return best


def radial_values(body: SupportField, targets, iters: int = 30, tol: float = 1e-13) -> np.ndarray:
    """Radial function of ``body`` at arbitrary unit directions.

    ``r(xi) = min_x u(x) / <x, xi>``: the discrete minimiser over grid nodes
    seeds a Newton solve for the normal ``x`` whose boundary point
    ``X(x) = u x + grad u`` is parallel to ``xi``; ``u`` and its derivatives
    come from the spectral interpolant of the samples.
    """
    grid = body.grid
    n = grid.n
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    interp = SpectralInterpolant(grid, body.u)
    x = grid.nodes[_discrete_argmin(grid, body.u, targets)].copy()
    active = np.ones(len(x), dtype=bool)
    eye = np.eye(n)
    for _ in range(iters):
        if not active.any():
            break
        xa, xi = x[active], targets[active]
        val, grad, hess, frames = interp.evaluate(xa, order=2)
        W = hess + val[:, None, None] * eye
        X = val[:, None] * xa + np.einsum("ta,tak->tk", grad, frames)
        cols = np.einsum("tab,tak->tkb", W, frames)
        A = np.concatenate([cols, -xi[:, :, None]], axis=2)
        sol = np.linalg.solve(A, -X[:, :, None])[:, :, 0]
        step = sol[:, :n]
        norm = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, 0.25 / np.maximum(norm, 1e-300))[:, None]
        xn = xa + np.einsum("ta,tak->tk", step, frames)
        x[active] = xn / np.linalg.norm(xn, axis=1)[:, None]
        done = norm < tol
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    val = interp(x)
    return val / np.einsum("tk,tk->t", x, targets)


def radial_from_support(body: SupportField) -> RadialField:
    return RadialField(body.grid, radial_values(body, body.grid.nodes))


def dual_body(body: SupportField) -> SupportField:
    """Support function of the polar body: u* = 1 / r."""
    rf = radial_from_support(body)
    return SupportField(body.grid, 1.0 / rf.r, body.symmetric)


def support_from_radial(rf: RadialField, symmetric=False) -> SupportField:
    """Support function of the convex body whose radial function is ``rf``."""
    dual = SupportField(rf.grid, 1.0 / rf.r, symmetric)
    return SupportField(rf.grid, 1.0 / radial_from_support(dual).r, symmetric)


def gauss_from_radial(rf: RadialField) -> np.ndarray:
    """Gauss curvature at the boundary point r(xi) xi, from the radial chart.

    ``K = det hbar / det g`` with ``g_ij = r^2 d_ij + r_i r_j`` and
    ``hbar_ij = (-r r_ij + 2 r_i r_j + r^2 d_ij) / sqrt(r^2 + |grad r|^2)``.
    """
    grid = rf.grid
    r = grid.check_field(rf.r, "radial function")
    if not np.all(r > 0):
        raise NonConvexError("radial function must be positive")
    dr = gradient(grid, r)
    H = covariant_hessian(grid, r)
    eye = np.eye(grid.n)[None]
    outer = dr[:, :, None] * dr[:, None, :]
    g = r[:, None, None] ** 2 * eye + outer
    denom = np.sqrt(r**2 + np.sum(dr**2, axis=1))
    hbar = (-r[:, None, None] * H + 2.0 * outer + r[:, None, None] ** 2 * eye) / denom[:, None, None]
    det_h = np.linalg.det(hbar)
    if np.any(det_h <= 0):
        i = int(np.argmin(det_h))
        raise NonConvexError(f"radial graph not uniformly convex at node {i}", node=i)
    return det_h / np.linalg.det(g)


def radial_normals(rf: RadialField) -> np.ndarray:
    """Outer unit normal at r(xi) xi: (r xi - grad r) / sqrt(r^2 + |grad r|^2)."""
    grid = rf.grid
    dr = tangent_to_ambient(grid, gradient(grid, rf.r))
    v = rf.r[:, None] * grid.nodes - dr
    return v / np.linalg.norm(v, axis=1)[:, None]


def polar_identity_residual(body: SupportField, eps_convex=DEFAULT_EPS_CONVEX) -> float:
    """max |u(x)^{n+2} u*(xi)^{n+2} / (K(p) K*(p*)) - 1| over grid normals x.

    ``p = X(x)`` is the boundary point with outer normal ``x`` and
    ``p* = x / u(x)`` its polar partner (``<p, p*> = 1``). Every factor is
    available at the node itself:

    * ``K(p) = 1 / sigma_n(x)`` from the support side;
    * ``xi = p / |p|`` and ``u*(xi) = 1 / r(xi) = 1 / |p|``;
    * the polar body's radial function is ``1 / u``, so ``K*(p*)`` is the
      Gauss curvature of that radial graph at ``x``.
    """
    grid = body.grid
    n = grid.n
    curv = curvature(body, eps_convex)
    X = embedding(body)
    u_star = 1.0 / np.linalg.norm(X, axis=1)
    K_star = gauss_from_radial(RadialField(grid, 1.0 / body.u))
    ratio = body.u ** (n + 2) * u_star ** (n + 2) * curv.sigma_n / K_star
    return float(np.max(np.abs(ratio - 1.0)))


# -- mixed volumes --------------------------------------------------------------

def mixed_sigma(W_list) -> np.ndarray:
    """Complete polarisation sigma_n(A_1, ..., A_n), nodewise."""
    W_list = [np.asarray(W) for W in W_list]
    n = W_list[0].shape[1]
    if len(W_list) != n:
        raise GridError(f"mixed_sigma needs {n} matrix fields, got {len(W_list)}")
    if any(W.shape != W_list[0].shape for W in W_list):
        raise GridError("matrix fields live on different grids")
    for W in W_list:
        if _eig_sym(W)[:, 0].min() <= 0:
            raise NonConvexError("mixed_sigma argument outside the positive cone")
    if n == 1:
        return W_list[0][:, 0, 0].copy()
    A, B = W_list
    trA = A[:, 0, 0] + A[:, 1, 1]
    trB = B[:, 0, 0] + B[:, 1, 1]
    trAB = np.einsum("iab,iba->i", A, B)
    return 0.5 * (trA * trB - trAB)


def mixed_volume(first, bodies) -> float:
    """V_{n+1}(u^1, u^2, ..., u^{n+1}) = int u^1 sigma_n[W_{u^2}, ..., W_{u^{n+1}}] dx.

    ``first`` may be any scalar field (a SupportField or raw samples); the
    remaining ``n`` arguments must be convex bodies on the same grid.
    """
    bodies = list(bodies)
    grid = bodies[0].grid
    if any(b.grid is not grid for b in bodies):
        raise GridError("bodies live on different grids")
    if isinstance(first, SupportField):
        if first.grid is not grid:
            raise GridError("bodies live on different grids")
        first = first.u
    first = grid.check_field(first)
    sig = mixed_sigma([radii_matrix(grid, b.u) for b in bodies])
    return integrate(grid, first * sig)
