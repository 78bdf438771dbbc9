"""Grids, quadrature and covariant finite differences on S^1 and S^2.

The n=2 grid is a latitude-longitude grid whose colatitudes sit at cell
centres, ``theta_j = (j + 1/2) pi / N_theta``, so no node lies on a pole.
Stencils that reach past a pole use the antipodal continuation
``g(-theta, phi) = g(theta, phi + pi)``; that same continuation turns a
field into a doubly periodic function of ``(theta, phi)``, which is what the
spectral interpolant below is built on.

Vector and matrix fields are stored in the local orthonormal frame
``(e_theta, e_phi)`` (n=2) or ``(e_theta,)`` (n=1) with shapes ``(N, n)`` and
``(N, n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from minkflow.errors import GridError

__all__ = [
    "SphereGrid",
    "SpectralInterpolant",
    "build_grid",
    "covariant_hessian",
    "gradient",
    "integrate",
    "laplacian",
    "polar_filter",
    "sphere_area",
    "tangent_to_ambient",
]


def sphere_area(n: int) -> float:
    """|S^n| for n in {1, 2}."""
    if n == 1:
        return 2.0 * np.pi
    if n == 2:
        return 4.0 * np.pi
    raise GridError(f"invalid dimension n={n}; only n=1 and n=2 are supported")


def _fejer_weights(m: int) -> np.ndarray:
    """Fejer's first rule on the colatitude midpoints, mirrored exactly.

    Integrates ``int_0^pi F(theta) sin(theta) dtheta`` with spectral accuracy
    for smooth ``F``; the weights sum to 2.
    """
    theta = (np.arange(m) + 0.5) * np.pi / m
    k = np.arange(1, m // 2 + 1)
    w = (2.0 / m) * (1.0 - 2.0 * (np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)).sum(axis=1))
    half = w[: m // 2]
    return np.concatenate([half, half[::-1]])


def _check_counts(n, n_theta, n_phi):
    if n not in (1, 2):
        raise GridError(f"invalid dimension n={n}; only n=1 and n=2 are supported")
    if n_theta < 8:
        raise GridError(f"resolution too small: N_theta={n_theta} < 8")
    if n_theta % 2:
        raise GridError(f"N_theta={n_theta} is odd; antipodal pairing needs an even count")
    if n == 2:
        if n_phi is None or n_phi < 16:
            raise GridError(f"resolution too small: N_phi={n_phi} < 16")
        if n_phi % 2:
            raise GridError(f"N_phi={n_phi} is odd; antipodal pairing needs an even count")


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Discretisation of S^n.

    Node ``i`` of an n=2 grid is ring ``i // n_phi`` and column ``i % n_phi``.
    Coordinates of antipodal nodes are exact negatives of each other, and so
    are the per-ring trigonometric tables (``cos_theta``, ``cot_theta``) of
    mirrored rings.
    """

    n: int
    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    sin_theta: np.ndarray
    cos_theta: np.ndarray
    nodes: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    quad_weights: np.ndarray
    antipode_index: np.ndarray
    h_theta: float
    h_phi: float
    h_min: float

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_theta, self.n_phi) if self.n == 2 else (self.n_theta,)

    @property
    def area(self) -> float:
        return sphere_area(self.n)

    @cached_property
    def cot_theta(self) -> np.ndarray:
        half = self.cos_theta[: self.n_theta // 2] / self.sin_theta[: self.n_theta // 2]
        return np.concatenate([half, -half[::-1]])

    @cached_property
    def frames(self) -> np.ndarray:
        """Tangent frame vectors, shape (N, n, n+1)."""
        if self.n == 1:
            return self.e_theta[:, None, :]
        return np.stack([self.e_theta, self.e_phi], axis=1)

    @cached_property
    def _filter_gain(self) -> np.ndarray:
        m = np.arange(self.n_phi // 2 + 1)
        symbol = (30.0 - 32.0 * np.cos(m * self.h_phi) + 2.0 * np.cos(2.0 * m * self.h_phi)) / 12.0
        cap = symbol.max() * self.sin_theta[:, None] ** 2
        gain = np.ones((self.n_theta, m.size))
        hot = symbol[None, :] > cap
        gain[hot] = (cap / np.where(hot, symbol[None, :], 1.0))[hot]
        return gain

    def check_field(self, g, name="field") -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape != (self.size,):
            raise GridError(f"{name} has shape {g.shape}, expected ({self.size},)")
        return g

    def describe(self) -> dict:
        return {"n": self.n, "n_theta": self.n_theta, "n_phi": self.n_phi}


def build_grid(n: int, n_theta: int, n_phi: int | None = None) -> SphereGrid:
    """Build the n=1 uniform circle grid or the offset n=2 latitude-longitude grid."""
    _check_counts(n, n_theta, n_phi)
    if n == 1:
        h = 2.0 * np.pi / n_theta
        half = n_theta // 2
        t = np.arange(half) * h
        c, s = np.cos(t), np.sin(t)
        cos_t = np.concatenate([c, -c])
        sin_t = np.concatenate([s, -s])
        nodes = np.stack([cos_t, sin_t], axis=1)
        e_theta = np.stack([-sin_t, cos_t], axis=1)
        idx = np.arange(n_theta)
        return SphereGrid(
            n=1, n_theta=n_theta, n_phi=0,
            theta=np.arange(n_theta) * h, phi=np.zeros(0),
            sin_theta=sin_t, cos_theta=cos_t, nodes=nodes,
            e_theta=e_theta, e_phi=np.zeros((n_theta, 2)),
            quad_weights=np.full(n_theta, h), antipode_index=(idx + half) % n_theta,
            h_theta=h, h_phi=h, h_min=h,
        )

    h_t = np.pi / n_theta
    h_p = 2.0 * np.pi / n_phi
    th_half = (np.arange(n_theta // 2) + 0.5) * h_t
    st_half, ct_half = np.sin(th_half), np.cos(th_half)
    sin_t = np.concatenate([st_half, st_half[::-1]])
    cos_t = np.concatenate([ct_half, -ct_half[::-1]])
    ph_half = np.arange(n_phi // 2) * h_p
    cp_half, sp_half = np.cos(ph_half), np.sin(ph_half)
    cos_p = np.concatenate([cp_half, -cp_half])
    sin_p = np.concatenate([sp_half, -sp_half])

    S, CP = np.meshgrid(sin_t, cos_p, indexing="ij")
    C, SP = np.meshgrid(cos_t, sin_p, indexing="ij")
    nodes = np.stack([S * CP, S * SP, C], axis=-1).reshape(-1, 3)
    e_theta = np.stack([C * CP, C * SP, -S], axis=-1).reshape(-1, 3)
    e_phi = np.stack([-SP, CP, np.zeros_like(SP)], axis=-1).reshape(-1, 3)

    j, k = np.meshgrid(np.arange(n_theta), np.arange(n_phi), indexing="ij")
    antipode = ((n_theta - 1 - j) * n_phi + (k + n_phi // 2) % n_phi).reshape(-1)
    weights = np.outer(_fejer_weights(n_theta), np.full(n_phi, h_p)).reshape(-1)

    return SphereGrid(
        n=2, n_theta=n_theta, n_phi=n_phi,
        theta=(np.arange(n_theta) + 0.5) * h_t, phi=np.arange(n_phi) * h_p,
        sin_theta=sin_t, cos_theta=cos_t, nodes=nodes,
        e_theta=e_theta, e_phi=e_phi, quad_weights=weights,
        antipode_index=antipode, h_theta=h_t, h_phi=h_p, h_min=min(h_t, h_p),
    )


def integrate(grid: SphereGrid, g) -> float:
    g = grid.check_field(g)
    return float(np.dot(g, grid.quad_weights))


# -- finite differences -------------------------------------------------------

def _pad(grid: SphereGrid, g: np.ndarray, w: int) -> np.ndarray:
    """Ghost rows by antipodal continuation, ghost columns by periodicity."""
    a = g.reshape(grid.shape)
    shift = grid.n_phi // 2
    top = [np.roll(a[i], shift) for i in range(w - 1, -1, -1)]
    bottom = [np.roll(a[-1 - i], shift) for i in range(w)]
    a = np.vstack([np.array(top), a, np.array(bottom)])
    return np.concatenate([a[:, -w:], a, a[:, :w]], axis=1)


def _padded_sin(grid: SphereGrid, w: int) -> np.ndarray:
    s = grid.sin_theta
    return np.concatenate([-s[:w][::-1], s, -s[-w:][::-1]])


def _d1(a, axis, h, w, order=2):
    """Centred first difference of a padded array, written difference-first so
    that reflected stencils give exactly negated results."""
    def sl(off):
        idx = [slice(None)] * a.ndim
        n = a.shape[axis]
        idx[axis] = slice(w + off, n - w + off)
        return a[tuple(idx)]

    if order == 2:
        return (sl(1) - sl(-1)) / (2.0 * h)
    return (8.0 * (sl(1) - sl(-1)) - (sl(2) - sl(-2))) / (12.0 * h)


def _d2(a, axis, h, w, order=2):
    def sl(off):
        idx = [slice(None)] * a.ndim
        n = a.shape[axis]
        idx[axis] = slice(w + off, n - w + off)
        return a[tuple(idx)]

    c = sl(0)
    if order == 2:
        return ((sl(1) - c) + (sl(-1) - c)) / h**2
    return (16.0 * ((sl(1) - c) + (sl(-1) - c)) - ((sl(2) - c) + (sl(-2) - c))) / (12.0 * h**2)


def _interior(a, w, axis):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(w, a.shape[axis] - w)
    return a[tuple(idx)]


def gradient(grid: SphereGrid, g) -> np.ndarray:
    """Covariant gradient in the orthonormal frame, shape (N, n)."""
    g = grid.check_field(g)
    if grid.n == 1:
        w = 2
        a = np.concatenate([g[-w:], g, g[:w]])
        return _d1(a, 0, grid.h_theta, w, order=4)[:, None]
    w = 2
    a = _pad(grid, g, w)
    g_t = _interior(_d1(a, 0, grid.h_theta, w, order=4), w, 1)
    g_p = _interior(_d1(a, 1, grid.h_phi, w, order=4), w, 0)
    q = g_p / grid.sin_theta[:, None]
    return np.stack([g_t.reshape(-1), q.reshape(-1)], axis=1)


def covariant_hessian(grid: SphereGrid, g) -> np.ndarray:
    """Covariant Hessian in the orthonormal frame, shape (N, n, n).

    n=2 components::

        H_tt = g_tt
        H_tp = d_theta (g_phi / sin theta)
        H_pp = g_phiphi / sin^2 theta + cot theta g_theta

    ``H_tp`` is the derivative of a field that stays smooth through the poles.
    All stencils are fourth-order centred differences; near the poles the two
    terms of ``H_pp`` are each O(1/h) and cancel, which caps the observed
    order at the first rings at two.
    """
    g = grid.check_field(g)
    if grid.n == 1:
        w = 2
        a = np.concatenate([g[-w:], g, g[:w]])
        return _d2(a, 0, grid.h_theta, w, order=4)[:, None, None]
    ht, hp = grid.h_theta, grid.h_phi
    w = 2
    a = _pad(grid, g, w)
    g_tt = _interior(_d2(a, 0, ht, w, order=4), w, 1)
    g_pp = _interior(_d2(a, 1, hp, w, order=4), w, 0)
    g_t = _interior(_d1(a, 0, ht, w, order=4), w, 1)
    q = _d1(a, 1, hp, w, order=4) / _padded_sin(grid, w)[:, None]
    h_tp = _d1(q, 0, ht, w, order=4)
    s = grid.sin_theta[:, None]
    h_pp = g_pp / s**2 + grid.cot_theta[:, None] * g_t
    H = np.empty((grid.size, 2, 2))
    H[:, 0, 0] = g_tt.reshape(-1)
    H[:, 0, 1] = H[:, 1, 0] = h_tp.reshape(-1)
    H[:, 1, 1] = h_pp.reshape(-1)
    return H


def laplacian(grid: SphereGrid, g) -> np.ndarray:
    return np.trace(covariant_hessian(grid, g), axis1=1, axis2=2)


def tangent_to_ambient(grid: SphereGrid, v) -> np.ndarray:
    """Frame components (N, n) to ambient vectors (N, n+1)."""
    return np.einsum("ia,iak->ik", np.asarray(v), grid.frames)


def polar_filter(grid: SphereGrid, g) -> np.ndarray:
    """Damp longitudinal wavenumbers that the rings near a pole cannot carry.

    Each ring's Fourier coefficients are scaled by a gain in (0, 1] chosen so
    that the ring's effective longitudinal stiffness never exceeds the
    equator's; the gain is 1 wherever the mode is resolved. Because every gain
    is positive, a filtered tendency vanishes exactly where the raw one does.
    Identity for n=1.
    """
    g = grid.check_field(g)
    if grid.n == 1:
        return g
    spec = np.fft.rfft(g.reshape(grid.shape), axis=1)
    return np.fft.irfft(spec * grid._filter_gain, n=grid.n_phi, axis=1).reshape(-1)


# -- spectral interpolation -----------------------------------------------------

class SpectralInterpolant:
    """Trigonometric interpolant of a grid field, evaluable anywhere on S^n.

    For n=2 the field is extended to ``theta in [0, 2 pi)`` by the antipodal
    continuation (a double Fourier sphere); the extension is smooth and doubly
    periodic, so the interpolant and its derivatives converge spectrally for
    smooth data.
    """

    def __init__(self, grid: SphereGrid, values):
        self.grid = grid
        g = grid.check_field(values)
        if grid.n == 1:
            m = grid.n_theta
            k = np.fft.fftfreq(m, 1.0 / m)
            c = np.fft.fft(g) / m
            c[np.abs(k) == m // 2] = 0.0
            self._k = k
            self._c = c
            return
        a = g.reshape(grid.shape)
        ext = np.vstack([a, np.roll(a[::-1], grid.n_phi // 2, axis=1)])
        m, p = ext.shape
        kt = np.fft.fftfreq(m, 1.0 / m)
        kp = np.fft.fftfreq(p, 1.0 / p)
        c = np.fft.fft2(ext) / (m * p)
        c *= np.exp(-1j * kt * (0.5 * grid.h_theta))[:, None]
        c[np.abs(kt) == m // 2, :] = 0.0
        c[:, np.abs(kp) == p // 2] = 0.0
        self._kt, self._kp, self._c = kt, kp, c

    def evaluate(self, points, order: int = 0):
        """Value (and frame gradient / covariant Hessian) at unit vectors.

        Returns ``(value, grad, hess, frames)``; ``grad`` and ``hess`` are
        ``None`` below the requested order. ``frames`` has shape (T, n, n+1).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grid.n == 1:
            return self._evaluate_circle(pts, order)
        x, y, z = pts.T
        th = np.arccos(np.clip(z, -1.0, 1.0))
        ph = np.arctan2(y, x)
        st = np.maximum(np.sin(th), 1e-12)
        ct = np.cos(th)
        cp, sp = np.cos(ph), np.sin(ph)
        frames = np.stack([
            np.stack([ct * cp, ct * sp, -st], axis=1),
            np.stack([-sp, cp, np.zeros_like(sp)], axis=1),
        ], axis=1)

        Et = np.exp(1j * np.outer(th, self._kt))
        Ep = np.exp(1j * np.outer(ph, self._kp))
        ikt, ikp = 1j * self._kt, 1j * self._kp
        A0 = Et @ self._c

        def comb(A, b):
            return np.real(np.sum(A * Ep * ikp**b, axis=1))

        val = comb(A0, 0)
        if order == 0:
            return val, None, None, frames
        A1 = (Et * ikt) @ self._c
        g_t, g_p = comb(A1, 0), comb(A0, 1)
        grad = np.stack([g_t, g_p / st], axis=1)
        if order == 1:
            return val, grad, None, frames
        A2 = (Et * ikt**2) @ self._c
        g_tt, g_tp, g_pp = comb(A2, 0), comb(A1, 1), comb(A0, 2)
        cot = ct / st
        hess = np.empty((pts.shape[0], 2, 2))
        hess[:, 0, 0] = g_tt
        hess[:, 0, 1] = hess[:, 1, 0] = (g_tp - cot * g_p) / st
        hess[:, 1, 1] = g_pp / st**2 + cot * g_t
        return val, grad, hess, frames

    def _evaluate_circle(self, pts, order):
        th = np.arctan2(pts[:, 1], pts[:, 0])
        frames = np.stack([-np.sin(th), np.cos(th)], axis=1)[:, None, :]
        E = np.exp(1j * np.outer(th, self._k))
        ik = 1j * self._k
        val = np.real(E @ self._c)
        grad = np.real(E @ (ik * self._c))[:, None] if order >= 1 else None
        hess = np.real(E @ (ik**2 * self._c))[:, None, None] if order >= 2 else None
        return val, grad, hess, frames

    def __call__(self, points):
        return self.evaluate(points, 0)[0]
