"""Linear operators on the periodic grid and on compactly supported data in R^3.

Periodic side: heat semigroup, Leray projection, convective term and the
pressure Poisson solve, all mode-wise in Fourier space.

Whole-space side: the Gaussian heat kernel applied by direct lattice
quadrature, and the Helmholtz projector written as a principal-value
singular integral.  No FFT is used for the whole-space convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .fields import Field, GridSpec, ScalarField, VectorField, forward, inverse

TAIL_MASS = 1e-10
MASS_TOLERANCE = 1e-6


# ------------------------------------------------------------ periodic box

def heat_evolve_torus(f: Field, t: float) -> Field:
    """Apply exp(t * Laplacian): every mode is multiplied by exp(-|k|^2 t)."""
    if not t >= 0:
        raise ValueError(f"heat evolution needs t >= 0, got {t}")
    if t == 0:
        return f._new(spectral=f.spectral)
    return f._new(spectral=f.spectral * np.exp(-f.grid.wavenumbers().k2 * t)[None])


@lru_cache(maxsize=16)
def _unit_wavevectors(n: int, length: float):
    wn = GridSpec(n, length).wavenumbers()
    mag = np.sqrt(wn.kd2)
    safe = np.where(mag > 0, mag, 1.0)
    return tuple(np.where(mag > 0, k / safe, 0.0) for k in wn.kd)


def leray_project_hat(grid: GridSpec, vh: np.ndarray) -> np.ndarray:
    """(I - k k^T/|k|^2) applied mode-wise; modes with |k| = 0 pass through."""
    ex, ey, ez = _unit_wavevectors(grid.n, grid.length)
    s = ex * vh[0] + ey * vh[1] + ez * vh[2]
    return np.stack([vh[0] - ex * s, vh[1] - ey * s, vh[2] - ez * s])


def leray_project(v: VectorField) -> VectorField:
    return VectorField(v.grid, spectral=leray_project_hat(v.grid, v.spectral))


_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _product_spectra(grid: GridSpec, uh: np.ndarray, dealias: bool) -> dict:
    """Spectra of u_i u_j (i <= j), formed in physical space."""
    mask = grid.wavenumbers().dealias
    if dealias:
        uh = uh * mask[None]
    u = inverse(grid, uh)
    prods = np.stack([u[i] * u[j] for i, j in _PAIRS])
    ph = forward(grid, prods)
    if dealias:
        ph *= mask[None]
    return {pair: ph[m] for m, pair in enumerate(_PAIRS)}


def convective_hat(grid: GridSpec, uh: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Coefficients of u.grad(u), written as d_j(u_j u_i) (equal for solenoidal u)."""
    kd = grid.wavenumbers().kd
    ph = _product_spectra(grid, uh, dealias)

    def p(i, j):
        return ph[(i, j) if i <= j else (j, i)]

    return np.stack([1j * (kd[0] * p(0, i) + kd[1] * p(1, i) + kd[2] * p(2, i))
                     for i in range(3)])


def convective_term(u: VectorField, dealias: bool = True) -> VectorField:
    return VectorField(u.grid, spectral=convective_hat(u.grid, u.spectral, dealias))


def pressure_solve(u: VectorField, dealias: bool = True) -> ScalarField:
    """Zero-mean p with -Lap p = sum_ij D_i D_j (u_i u_j)."""
    wn = u.grid.wavenumbers()
    kd, k2 = wn.kd, wn.kd2
    ph = _product_spectra(u.grid, u.spectral, dealias)
    rhs = np.zeros(u.grid.spectral_shape, dtype=np.complex128)
    for (i, j), val in ph.items():
        w = 1.0 if i == j else 2.0
        rhs -= w * kd[i] * kd[j] * val
    safe = np.where(k2 > 0, k2, 1.0)
    p = np.where(k2 > 0, rhs / safe, 0.0)
    return ScalarField(u.grid, spectral=p[None])


# ------------------------------------------------------------ whole space

class KernelResolutionError(ValueError):
    """The lattice cannot resolve the heat kernel to the required mass accuracy."""


@dataclass(frozen=True)
class HeatKernel:
    """Gaussian heat kernel (4 pi t)^(-N/2) exp(-|x|^2 / 4t)."""

    t: float
    dim: int = 3

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"heat kernel needs t > 0, got {self.t}")

    @property
    def peak(self) -> float:
        return (4 * math.pi * self.t) ** (-self.dim / 2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return self.peak * np.exp(-r2 / (4 * self.t))

    def truncation_radius(self, tail: float = TAIL_MASS) -> float:
        """Radius outside of which the kernel carries mass below ``tail``."""
        return float(stats.chi(self.dim).isf(tail)) * math.sqrt(2 * self.t)

    def profile(self, s: np.ndarray, order: int = 0) -> np.ndarray:
        """One-dimensional factor (and its derivatives up to order 2)."""
        t = self.t
        g = (4 * math.pi * t) ** -0.5 * np.exp(-s * s / (4 * t))
        if order == 0:
            return g
        if order == 1:
            return -s / (2 * t) * g
        if order == 2:
            return (s * s / (4 * t * t) - 1 / (2 * t)) * g
        raise ValueError("kernel derivatives are supported up to order 2 per axis")

    def lattice_mass(self, h: float, radius: float | None = None) -> float:
        """Rectangle-rule mass of the kernel on a lattice centred at a node."""
        rho = self.truncation_radius() if radius is None else radius
        m = np.arange(-math.floor(rho / h), math.floor(rho / h) + 1) * h
        inside = np.sum(self.profile(m)) * h
        return float(inside ** self.dim)

    def check_lattice(self, h: float) -> float:
        mass = self.lattice_mass(h)
        if not (1 - MASS_TOLERANCE <= mass <= 1 + MASS_TOLERANCE):
            raise KernelResolutionError(
                f"lattice spacing {h:g} cannot resolve the heat kernel at t={self.t:g}: "
                f"quadrature mass {mass:.9f} outside [1-{MASS_TOLERANCE:g}, 1]")
        return mass


def smooth_bump(r: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """C-infinity radial bump exp(1 - 1/(1 - (r/radius)^2)), zero for r >= radius."""
    s = np.asarray(r, dtype=float) / radius
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class CompactField:
    """Samples on the lattice -R + j*h (j = 0..m-1) of a compactly supported field.

    ``values`` has shape (ncomp, m, m, m).  ``support`` is the declared radius
    outside of which the samples vanish.
    """

    values: np.ndarray
    spacing: float
    radius: float
    support: float
    _nonzero: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 3:
            v = v[None]
        m = v.shape[-1]
        if v.ndim != 4 or v.shape[1:] != (m, m, m):
            raise ValueError("compact field values must be (ncomp, m, m, m)")
        if not self.support < self.radius:
            raise ValueError("support radius must be smaller than the lattice half-width")
        if abs((m - 1) * self.spacing - 2 * self.radius) > 1e-9 * self.radius:
            raise ValueError("lattice must span [-R, R] exactly")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        pts = self.points()
        r = np.sqrt(np.sum(pts ** 2, axis=-1))
        outside = r > self.support * (1 + 1e-12)
        if np.any(np.abs(v[:, outside]) > 1e-14):
            raise ValueError("samples do not vanish outside the declared support")
        idx = np.nonzero(np.any(v != 0, axis=0).ravel())[0]
        object.__setattr__(self, "_nonzero", (pts.reshape(-1, 3)[idx],
                                              v.reshape(v.shape[0], -1)[:, idx]))

    @classmethod
    def from_function(cls, func: Callable, radius: float, spacing: float, support: float):
        """Sample ``func(x, y, z) -> array (ncomp, ...)`` on the lattice."""
        m = int(round(2 * radius / spacing)) + 1
        axis = -radius + spacing * np.arange(m)
        x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
        vals = np.asarray(func(x, y, z), dtype=float)
        r = np.sqrt(x * x + y * y + z * z)
        vals = np.where(r <= support, vals, 0.0)
        return cls(vals, spacing, radius, support)

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def axis(self) -> np.ndarray:
        return -self.radius + self.spacing * np.arange(self.m)

    def points(self) -> np.ndarray:
        a = self.axis()
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    def lq_norm(self, q: float) -> float:
        from .fields import lp_from_arrays
        return lp_from_arrays(((1, c) for c in self.values), q, self.spacing ** 3)

    def support_samples(self):
        """(points (P, 3), values (ncomp, P)) restricted to nonzero samples."""
        return self._nonzero


def _chunks(total: int, size: int):
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


def heat_convolve_r3(f: CompactField, t: float, points: np.ndarray,
                     alpha: Sequence[int] = (0, 0, 0), chunk: int = 256) -> np.ndarray:
    """D^alpha of (Phi(., t) * f) at arbitrary points, by lattice quadrature.

    Returns an array of shape (ncomp, M) for ``points`` of shape (M, 3).
    """
    kern = HeatKernel(t)
    kern.check_lattice(f.spacing)
    rho = kern.truncation_radius()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ys, vals = f.support_samples()
    out = np.zeros((f.ncomp, len(pts)))
    cell = f.spacing ** 3
    for sl in _chunks(len(pts), chunk):
        diff = pts[sl, None, :] - ys[None, :, :]
        w = np.ones(diff.shape[:2])
        for d in range(3):
            w *= kern.profile(diff[..., d], alpha[d])
        w[np.sum(diff * diff, axis=-1) > rho * rho] = 0.0
        out[:, sl] = (w @ vals.T).T * cell
    return out


def heat_convolve_r3_grid(f: CompactField, t: float, axes: Sequence[np.ndarray],
                          alpha: Sequence[int] = (0, 0, 0)) -> np.ndarray:
    """Same quadrature evaluated on a tensor grid, exploiting kernel separability.

    Each axis is truncated at the kernel radius, a cube containing the
    truncation ball, so the neglected mass is below the tail criterion.
    Returns shape (ncomp, len(ax0), len(ax1), len(ax2)).
    """
    kern = HeatKernel(t)
    kern.check_lattice(f.spacing)
    rho = kern.truncation_radius()
    y = f.axis()
    mats = []
    for d in range(3):
        s = np.asarray(axes[d], dtype=float)[:, None] - y[None, :]
        mat = kern.profile(s, alpha[d]) * f.spacing
        mat[np.abs(s) > rho] = 0.0
        mats.append(mat)
    return np.einsum("ai,bj,ck,nijk->nabc", *mats, f.values, optimize=True)


def pv_kernel(z: np.ndarray) -> np.ndarray:
    """K_ij(z) = (3 z_i z_j - delta_ij |z|^2) |z|^-5, shape (..., 3, 3)."""
    r2 = np.sum(z * z, axis=-1)
    inv5 = r2 ** -2.5
    k = 3.0 * z[..., :, None] * z[..., None, :]
    k -= np.eye(3) * r2[..., None, None]
    return k * inv5[..., None, None]


@dataclass(frozen=True)
class PVResult:
    values: np.ndarray          # extrapolated w, shape (3, M)
    increment: np.ndarray       # |difference between the last two eps levels|, shape (3, M)
    levels: np.ndarray          # w at every eps level, shape (len(eps), 3, M)
    eps: tuple


def helmholtz_pv_r3(v: CompactField, points: np.ndarray, eps_sequence: Sequence[float],
                    chunk: int = 64) -> PVResult:
    """Divergence-free part of a compact field via a principal-value integral.

    With K_ij the second derivatives of 1/|z|,

        w_j(x) = (2/3) v_j(x) + (1/4 pi) sum_i p.v. integral K_ij(x - y) v_i(y) dy.

    The 2/3 accounts for the point mass -(4 pi / 3) delta_ij delta(z) that
    D_i D_j |z|^-1 carries besides its principal value when the singular
    set is excised with balls; without it a solenoidal v would map to 4v/3.
    The excised integral is approximated on the sample lattice for each
    eps in ``eps_sequence`` and extrapolated to eps = 0 assuming an
    O(eps^2) remainder.  Points inside the support should be lattice nodes
    so that the symmetric lattice cancels the kernel's angular mean.
    """
    eps = tuple(float(e) for e in eps_sequence)
    if len(eps) < 2:
        raise ValueError("eps_sequence needs at least two levels")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_sequence must be strictly decreasing")
    if eps[-1] < 2 * v.spacing * (1 - 1e-12):
        raise ValueError(f"eps floor {eps[-1]:g} is below twice the lattice spacing {v.spacing:g}")
    if v.ncomp != 3:
        raise ValueError("the projector acts on 3-component fields")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ys, vals = v.support_samples()
    cell = v.spacing ** 3
    levels = np.zeros((len(eps), 3, len(pts)))
    e2 = np.array(eps) ** 2
    for sl in _chunks(len(pts), chunk):
        z = pts[sl, None, :] - ys[None, :, :]
        r2 = np.sum(z * z, axis=-1)
        safe = np.where(r2 > 0, r2, 1.0)
        inv5 = safe ** -2.5
        # sum_i K_ij v_i = (3 z_j (z.v) - |z|^2 v_j) / |z|^5
        zv = np.einsum("mpd,dp->mp", z, vals)
        contrib = (3.0 * z * zv[..., None] - r2[..., None] * vals.T[None]) * inv5[..., None]
        for lev, e in enumerate(e2):
            keep = r2 >= e * (1 - 1e-12)
            levels[lev, :, sl] = np.einsum("mp,mpd->dm", keep, contrib) * cell
    local = _sample_at(v, pts)
    levels = (2.0 / 3.0) * local[None] + levels / (4 * math.pi)
    a, b = e2[-2], e2[-1]
    extrap = levels[-1] + (levels[-1] - levels[-2]) * b / (a - b)
    return PVResult(extrap, np.abs(levels[-1] - levels[-2]), levels, eps)


def _sample_at(v: CompactField, pts: np.ndarray) -> np.ndarray:
    """Lattice value at lattice nodes; zero away from nodes outside the support."""
    idx = (pts + v.radius) / v.spacing
    near = np.rint(idx)
    on_node = np.all(np.abs(idx - near) < 1e-9, axis=-1)
    out = np.zeros((v.ncomp, len(pts)))
    ni = near.astype(int)
    inside = on_node & np.all((ni >= 0) & (ni < v.m), axis=-1)
    out[:, inside] = v.values[:, ni[inside, 0], ni[inside, 1], ni[inside, 2]]
    r = np.sqrt(np.sum(pts ** 2, axis=-1))
    bad = ~inside & (r <= v.support)
    if np.any(bad):
        raise ValueError("points inside the support must be lattice nodes")
    return out
