"""Analytic shape constructors and low-order spherical polynomials."""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Mapping

import numpy as np

from minkflow.body import SupportField, curvature
from minkflow.errors import GridError, MinkflowError, NonConvexError
from minkflow.sphere import SphereGrid

MAX_DEGREE = 4
_FACTOR = re.compile(r"^x([1-3])(?:\^([0-9]+))?$")


def parse_monomial(term: str, n: int) -> tuple[int, ...]:
    """``"x1*x3^2"`` -> exponent tuple ``(1, 0, 2)``; ``"1"`` is the constant."""
    powers = [0] * (n + 1)
    text = term.replace(" ", "")
    if text == "1":
        return tuple(powers)
    for factor in text.split("*"):
        m = _FACTOR.match(factor)
        if not m:
            raise ValueError(f"cannot parse monomial {term!r}")
        i = int(m.group(1)) - 1
        if i > n:
            raise ValueError(f"monomial {term!r} uses x{i + 1} but n={n}")
        powers[i] += int(m.group(2) or 1)
    if sum(powers) > MAX_DEGREE:
        raise ValueError(f"monomial {term!r} exceeds degree {MAX_DEGREE}")
    return tuple(powers)


@dataclass(frozen=True)
class SphericalPolynomial:
    """Sum of ``coefficient * monomial`` restricted to the unit sphere."""

    n: int
    terms: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def from_mapping(cls, n: int, coefficients: Mapping[str, float]) -> "SphericalPolynomial":
        terms = tuple((parse_monomial(k, n), float(v)) for k, v in coefficients.items())
        return cls(n, terms)

    @property
    def is_even(self) -> bool:
        return all(sum(p) % 2 == 0 for p, c in self.terms if c != 0.0)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for powers, c in self.terms:
            out += c * np.prod(pts ** np.asarray(powers), axis=1)
        return out

    def on(self, grid: SphereGrid) -> np.ndarray:
        if grid.n != self.n:
            raise GridError(f"polynomial is for n={self.n}, grid has n={grid.n}")
        vals = self(grid.nodes)
        if self.is_even:
            # odd-degree-free polynomials are exactly even; make the samples agree
            vals = 0.5 * (vals + vals[grid.antipode_index])
        return vals


def _rotation(params, n):
    R = params.get("rotation")
    if R is None:
        return np.eye(n + 1)
    R = np.asarray(R, dtype=float)
    if R.shape == (3,) and n == 2:
        # z-y-z Euler angles
        a, b, c = R

        def rz(t):
            return np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1.0]])

        def ry(t):
            return np.array([[np.cos(t), 0, np.sin(t)], [0, 1.0, 0], [-np.sin(t), 0, np.cos(t)]])

        return rz(a) @ ry(b) @ rz(c)
    if R.shape == () and n == 1:
        t = float(R)
        return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    if R.shape != (n + 1, n + 1):
        raise ValueError(f"rotation must be a {n + 1}x{n + 1} matrix")
    return R


def _ellipsoid_values(grid, axes, R):
    axes = np.asarray(axes, dtype=float)
    if axes.shape != (grid.n + 1,) or np.any(axes <= 0):
        raise ValueError(f"ellipsoid needs {grid.n + 1} positive axes, got {axes.tolist()}")
    y = grid.nodes @ R
    return np.sqrt(np.sum((axes * y) ** 2, axis=1))


def _raw(kind: str, params: Mapping, grid: SphereGrid) -> tuple[np.ndarray, bool]:
    if kind == "sphere":
        radius = float(params.get("radius", 1.0))
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        return np.full(grid.size, radius), True
    if kind == "ellipsoid":
        return _ellipsoid_values(grid, params["axes"], _rotation(params, grid.n)), True
    if kind == "perturbed":
        base = params.get("base", {"kind": "sphere"})
        u, sym = _raw(base.get("kind", "sphere"), base, grid)
        poly = SphericalPolynomial.from_mapping(grid.n, params["modes"])
        return u + float(params["eps"]) * poly.on(grid), sym and poly.is_even
    if kind == "translate":
        base = params.get("base", {"kind": "sphere"})
        u, sym = _raw(base.get("kind", "sphere"), base, grid)
        v = np.asarray(params["vector"], dtype=float)
        if v.shape != (grid.n + 1,):
            raise ValueError(f"translation vector must have {grid.n + 1} entries")
        return u + grid.nodes @ v, sym and not np.any(v)
    raise ValueError(f"unknown shape kind {kind!r}")


def make_shape(kind: str, params: Mapping | None, grid: SphereGrid, eps_convex: float = 1e-12) -> SupportField:
    """Build a validated support field.

    Kinds: ``sphere`` (radius), ``ellipsoid`` (axes, optional rotation),
    ``perturbed`` (base, eps, modes) and ``translate`` (base, vector). ``modes``
    maps monomial strings such as ``"x3^2"`` or ``"x1*x2"`` to coefficients.
    The symmetric flag is set exactly when the construction is even.

    Raises
    ------
    NonConvexError
        If the result is not uniformly convex or does not enclose the origin;
        the message carries the offending ``lambda_min``.
    """
    params = dict(params or {})
    u, sym = _raw(kind, params, grid)
    if not np.all(u > 0):
        raise NonConvexError(f"{kind}: support function not positive (origin outside the body)")
    body = SupportField(grid, u, sym)
    curvature(body, eps_convex)
    return body


def random_even_polynomial(grid, rng, degree=4):
    """Random even polynomial normalised to sup-norm 1 on the grid."""
    n = grid.n
    x = grid.nodes
    vals = np.zeros(grid.size)
    for d in range(2, degree + 1, 2):
        for combo in combinations_with_replacement(range(n + 1), d):
            vals += rng.normal() * np.prod(x[:, list(combo)], axis=1)
    vals -= vals.mean()
    return vals / np.max(np.abs(vals))


def random_even_body(grid: SphereGrid, rng: np.random.Generator, amplitude: float = 0.05,
                     stretch: float = 0.15) -> SupportField:
    """Random origin-symmetric body: a rotated ellipsoid plus an even polynomial bump."""
    for _ in range(100):
        axes = np.exp(rng.uniform(-stretch, stretch, grid.n + 1))
        Q, _ = np.linalg.qr(rng.normal(size=(grid.n + 1, grid.n + 1)))
        u = _ellipsoid_values(grid, axes, Q)
        u = u + amplitude * random_even_polynomial(grid, rng)
        try:
            body = SupportField(grid, u, True)
            curvature(body)
            return body
        except NonConvexError:
            continue
    raise MinkflowError("could not draw a convex random body")


def random_body(grid: SphereGrid, rng: np.random.Generator, amplitude: float = 0.05,
                shift: float = 0.1) -> SupportField:
    """Random body without symmetry: an even body plus a translation and a cubic bump."""
    even = random_even_body(grid, rng, amplitude)
    v = rng.uniform(-shift, shift, grid.n + 1)
    cubic = np.prod(grid.nodes[:, rng.integers(0, grid.n + 1, 3)], axis=1)
    u = even.u + grid.nodes @ v + 0.5 * amplitude * cubic
    body = SupportField(grid, u, False)
    curvature(body)
    return body
