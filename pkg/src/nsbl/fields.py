"""Periodic-grid fields, spectral transforms and norm functionals.

Norm convention used throughout the package: for a field with components
u_1..u_m the Lq norm sums q-th powers over components,

    ||u||_q = (sum_i  integral |u_i|^q dx)^(1/q),

and ||u||_inf is the maximum of |u_i| over components and grid points.
Derivative norms ||D^n u||_q sum over every ordered index string
j_1..j_n as well as over components; the sup variant takes the maximum
over index strings.  Every constant quoted elsewhere in the package is
tied to this convention, not to the pointwise Euclidean magnitude.

Spectral coefficients are normalised as the sample average times the
Fourier phase (``rfftn(x) / n**3``), so a constant field c has coefficient
c at k=0.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from ._workers import fft_backend, fft_workers

INF = math.inf
DEFAULT_ORDERS = (0, 1, 2, 3)
DEFAULT_EXPONENTS = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, INF)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0, L)^3 with n points per axis."""

    n: int
    length: float = 2 * math.pi

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"grid n must be an integer >= 4, got {self.n}")
        if self.n % 2:
            raise ValueError(f"grid n must be even, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"grid length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def volume(self) -> float:
        return self.length ** 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Meshgrid of physical coordinates, each of shape (n, n, n)."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    def wavenumbers(self) -> "Wavenumbers":
        return _wavenumbers(self.n, self.length)


@dataclass(frozen=True)
class Wavenumbers:
    """Broadcastable wavenumber arrays for the half (rfft) spectrum."""

    k: tuple[np.ndarray, np.ndarray, np.ndarray]       # true wavenumbers
    kd: tuple[np.ndarray, np.ndarray, np.ndarray]      # Nyquist zeroed, for derivatives
    k2: np.ndarray                                     # |k|^2 with true wavenumbers
    kd2: np.ndarray                                    # |kd|^2
    dealias: np.ndarray                                # boolean 2/3-rule mask
    weight: np.ndarray                                 # Hermitian multiplicity of each rfft mode


@lru_cache(maxsize=16)
def _wavenumbers(n: int, length: float) -> Wavenumbers:
    scale = 2 * math.pi / length
    m_full = np.fft.fftfreq(n, 1.0 / n)
    m_half = np.fft.rfftfreq(n, 1.0 / n)
    shapes = [(n, 1, 1), (1, n, 1), (1, 1, n // 2 + 1)]
    ms = [m_full, m_full, m_half]
    k, kd = [], []
    for m, shp in zip(ms, shapes):
        kk = (scale * m).reshape(shp)
        kdd = kk.copy()
        kdd[np.abs(m.reshape(shp)) == n // 2] = 0.0
        k.append(kk)
        kd.append(kdd)
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    kd2 = kd[0] ** 2 + kd[1] ** 2 + kd[2] ** 2
    cut = n / 3.0
    dealias = ((np.abs(ms[0]).reshape(shapes[0]) < cut)
               & (np.abs(ms[1]).reshape(shapes[1]) < cut)
               & (np.abs(ms[2]).reshape(shapes[2]) < cut))
    weight = np.full(n // 2 + 1, 2.0)
    weight[0] = 1.0
    weight[-1] = 1.0
    weight = np.broadcast_to(weight.reshape(shapes[2]), (n, n, n // 2 + 1))
    for arr in (*k, *kd, k2, kd2, dealias, weight):
        if isinstance(arr, np.ndarray) and arr.flags.owndata:
            arr.setflags(write=False)
    return Wavenumbers(tuple(k), tuple(kd), k2, kd2, dealias, weight)


def forward(grid: GridSpec, x: np.ndarray) -> np.ndarray:
    """Physical samples (..., n, n, n) to normalised half-spectrum coefficients."""
    return fft_backend().rfftn(x, axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def inverse(grid: GridSpec, xh: np.ndarray) -> np.ndarray:
    """Inverse of :func:`forward`."""
    return fft_backend().irfftn(xh, s=grid.shape, axes=(-3, -2, -1), norm="forward",
                                workers=fft_workers())


class Field:
    """Immutable field holding physical samples and/or spectral coefficients.

    Arrays carry a leading component axis.  The missing representation is
    computed lazily and cached; both arrays are read-only.
    """

    ncomp = 0

    __slots__ = ("grid", "_phys", "_hat")

    def __init__(self, grid: GridSpec, physical=None, spectral=None):
        if physical is None and spectral is None:
            raise ValueError("a field needs physical samples or spectral coefficients")
        self.grid = grid
        self._phys = self._prepare(physical, grid.shape, np.float64)
        self._hat = self._prepare(spectral, grid.spectral_shape, np.complex128)

    def _prepare(self, arr, shape, dtype):
        if arr is None:
            return None
        a = np.array(arr, dtype=dtype, copy=True)
        if a.shape == shape and self.ncomp == 1:
            a = a[None]
        if a.shape != (self.ncomp, *shape):
            raise ValueError(f"expected array of shape {(self.ncomp, *shape)}, got {a.shape}")
        a.setflags(write=False)
        return a

    @property
    def representation(self) -> str:
        if self._phys is not None and self._hat is not None:
            return "both"
        return "physical" if self._phys is not None else "spectral"

    @property
    def physical(self) -> np.ndarray:
        if self._phys is None:
            a = inverse(self.grid, self._hat)
            a.setflags(write=False)
            self._phys = a
        return self._phys

    @property
    def spectral(self) -> np.ndarray:
        if self._hat is None:
            a = forward(self.grid, self._phys)
            a.setflags(write=False)
            self._hat = a
        return self._hat

    def _new(self, physical=None, spectral=None):
        return type(self)(self.grid, physical=physical, spectral=spectral)

    def __mul__(self, c: float):
        return self._new(physical=self.physical * c) if self._phys is not None \
            else self._new(spectral=self.spectral * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field"):
        _same_grid(self, other)
        return self._new(spectral=self.spectral + other.spectral)

    def __sub__(self, other: "Field"):
        _same_grid(self, other)
        return self._new(spectral=self.spectral - other.spectral)

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n}, L={self.grid.length:g}, {self.representation})"


class VectorField(Field):
    ncomp = 3
    __slots__ = ()


class ScalarField(Field):
    ncomp = 1
    __slots__ = ()

    @property
    def values(self) -> np.ndarray:
        return self.physical[0]


def _same_grid(a: Field, b: Field):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def zeros(grid: GridSpec, kind=VectorField) -> Field:
    return kind(grid, physical=np.zeros((kind.ncomp, *grid.shape)))


def to_spectral(f: Field) -> Field:
    """Return the same field with its spectral representation populated."""
    f.spectral
    return f


def to_physical(f: Field) -> Field:
    f.physical
    return f


# ---------------------------------------------------------------- norms

def _check_q(q: float) -> float:
    q = float(q)
    if not q >= 1:
        raise ValueError(f"exponent q must satisfy q >= 1, got {q}")
    return q


def _power_sum(a: np.ndarray, q: float) -> float:
    """sum |a|^q with cheap paths for the common exponents (pairwise sum)."""
    a = np.abs(a)
    if q == 1:
        return float(a.sum())
    if q == 2:
        return float(np.sum(a * a))
    if q == 1.5:
        return float(np.sum(a * np.sqrt(a)))
    if q == 3:
        return float(np.sum(a * a * a))
    if q == 4:
        a2 = a * a
        return float(np.sum(a2 * a2))
    if q == 6:
        a3 = a * a * a
        return float(np.sum(a3 * a3))
    return float(np.sum(a ** q))


def lp_from_arrays(arrays: Iterable[tuple[float, np.ndarray]], q: float, cell: float) -> float:
    """Lq quadrature of weighted component arrays.

    ``arrays`` yields (multiplicity, samples); multiplicity counts how many
    ordered index strings share the same derivative array.  Exponents in
    (0, 1) are accepted here for quasi-norm use by the inequality checks.
    """
    if q == INF:
        return max((float(np.max(np.abs(a))) for _, a in arrays), default=0.0)
    total = 0.0
    for mult, a in arrays:
        total += mult * _power_sum(a, q)
    return (total * cell) ** (1.0 / q)


def lq_norm(f: Field, q: float) -> float:
    """Component-sum Lq norm of a field (sup over components for q = inf)."""
    q = _check_q(q)
    return lp_from_arrays(((1, c) for c in f.physical), q, f.grid.cell_volume)


def multi_indices(order: int) -> list[tuple[tuple[int, int, int], int]]:
    """Multi-indices of total order ``order`` with their index-string counts."""
    out = []
    for a in itertools.product(range(order + 1), repeat=3):
        if sum(a) == order:
            mult = math.factorial(order) // (
                math.factorial(a[0]) * math.factorial(a[1]) * math.factorial(a[2]))
            out.append((a, mult))
    return out


def derivative_multiplier(grid: GridSpec, alpha: tuple[int, int, int]) -> np.ndarray:
    """Spectral multiplier (i k)^alpha with the Nyquist set removed."""
    kd = grid.wavenumbers().kd
    m = np.ones(grid.spectral_shape, dtype=np.complex128)
    for d in range(3):
        if alpha[d]:
            m = m * (1j * kd[d]) ** alpha[d]
    return m


def derivative_arrays(f: Field, order: int):
    """Yield (multiplicity, physical array) for every D^alpha f_i, |alpha| = order."""
    if order == 0:
        for c in f.physical:
            yield 1, c
        return
    fh = f.spectral
    for alpha, mult in multi_indices(order):
        d = inverse(f.grid, fh * derivative_multiplier(f.grid, alpha)[None])
        for c in d:
            yield mult, c


def dn_lq_norm(f: Field, n: int, q: float) -> float:
    """Norm of the n-th derivative tensor, summed over index strings and components."""
    if int(n) != n or n < 1:
        raise ValueError(f"derivative order n must be an integer >= 1, got {n}")
    q = _check_q(q)
    return lp_from_arrays(derivative_arrays(f, int(n)), q, f.grid.cell_volume)


def j_norm(f: Field, n: int) -> float:
    """J_n = (sum over multi-indices |alpha| = n of ||D^alpha f||^2)^(1/2).

    Unlike ||D^n f||_2 this counts each multi-index once, not once per
    ordered index string; the two agree for n <= 1.
    """
    if n == 0:
        return lq_norm(f, 2)
    total = 0.0
    for alpha, _ in multi_indices(n):
        d = inverse(f.grid, f.spectral * derivative_multiplier(f.grid, alpha)[None])
        total += float(np.sum(d * d))
    return math.sqrt(total * f.grid.cell_volume)


def j_norm_spectral(f: Field, n: int, index_strings: bool = False) -> float:
    """Parseval route for J_n (or for ||D^n f||_2 when ``index_strings``)."""
    wn = f.grid.wavenumbers()
    if index_strings:
        sym = wn.kd2 ** n
    else:
        sym = sum(wn.kd[0] ** (2 * a[0]) * wn.kd[1] ** (2 * a[1]) * wn.kd[2] ** (2 * a[2])
                  for a, _ in multi_indices(n))
    total = float(np.sum(wn.weight * sym * np.sum(np.abs(f.spectral) ** 2, axis=0)))
    return math.sqrt(total * f.grid.volume)


def derivative(f: Field, alpha: tuple[int, int, int]) -> Field:
    return f._new(spectral=f.spectral * derivative_multiplier(f.grid, alpha)[None])


def gradient(phi: ScalarField) -> VectorField:
    kd = phi.grid.wavenumbers().kd
    ph = phi.spectral[0]
    return VectorField(phi.grid, spectral=np.stack([1j * kd[d] * ph for d in range(3)]))


def divergence(f: VectorField) -> ScalarField:
    kd = f.grid.wavenumbers().kd
    fh = f.spectral
    return ScalarField(f.grid, spectral=(1j * (kd[0] * fh[0] + kd[1] * fh[1] + kd[2] * fh[2]))[None])


def curl(f: VectorField) -> VectorField:
    kx, ky, kz = f.grid.wavenumbers().kd
    u, v, w = f.spectral
    return VectorField(f.grid, spectral=np.stack([
        1j * (ky * w - kz * v),
        1j * (kz * u - kx * w),
        1j * (kx * v - ky * u),
    ]))


def laplacian(f: Field) -> Field:
    return f._new(spectral=-f.grid.wavenumbers().kd2[None] * f.spectral)


def inner_product(f: Field, g: Field) -> float:
    """Grid quadrature of sum_j integral f_j g_j dx."""
    _same_grid(f, g)
    if f.ncomp != g.ncomp:
        raise ValueError("inner product needs fields with the same number of components")
    return float(np.sum(f.physical * g.physical)) * f.grid.cell_volume


def spectral_energy(f: Field) -> float:
    """||f||^2 from the coefficients (Parseval)."""
    wn = f.grid.wavenumbers()
    return float(np.sum(wn.weight * np.sum(np.abs(f.spectral) ** 2, axis=0))) * f.grid.volume


def mean(f: Field) -> np.ndarray:
    return np.real(f.spectral[:, 0, 0, 0]).copy()


class NormTable(Mapping):
    """Read-only map (n, q) -> norm value."""

    def __init__(self, entries: Mapping[tuple[int, float], float]):
        self._entries = {(int(n), float(q)): float(v) for (n, q), v in entries.items()}

    def __getitem__(self, key):
        n, q = key
        return self._entries[(int(n), float(q))]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __repr__(self):
        return f"NormTable({self._entries!r})"


def lq_norms(arrays: Iterable[tuple[float, np.ndarray]], exponents, cell: float) -> dict:
    """Several Lq norms of the same weighted arrays, sharing |a| and its powers."""
    qs = [_check_q(q) for q in exponents]
    sums = {q: 0.0 for q in qs if q != INF}
    sup = 0.0
    for mult, a in arrays:
        a = np.abs(a)
        if INF in qs:
            sup = max(sup, float(a.max()))
        a2 = a * a if any(q in sums for q in (2.0, 3.0, 4.0, 6.0)) else None
        a3 = a2 * a if any(q in sums for q in (3.0, 6.0)) else None
        for q in sums:
            if q == 1:
                v = a.sum()
            elif q == 2:
                v = a2.sum()
            elif q == 3:
                v = a3.sum()
            elif q == 4:
                v = np.sum(a2 * a2)
            elif q == 6:
                v = np.sum(a3 * a3)
            else:
                v = _power_sum(a, q)
            sums[q] += mult * float(v)
    return {q: sup if q == INF else (sums[q] * cell) ** (1.0 / q) for q in qs}


def norm_table(f: Field, orders=DEFAULT_ORDERS, exponents=DEFAULT_EXPONENTS) -> NormTable:
    """Evaluate lq_norm / dn_lq_norm across an (order, exponent) lattice.

    Derivative arrays are formed once per order and reused for all exponents.
    """
    out = {}
    for n in orders:
        if int(n) != n or n < 0:
            raise ValueError(f"derivative order must be a nonnegative integer, got {n}")
        for q, v in lq_norms(derivative_arrays(f, int(n)), exponents, f.grid.cell_volume).items():
            out[(n, q)] = v
    return NormTable(out)
