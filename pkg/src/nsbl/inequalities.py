"""Numerical checks of the functional inequalities used by the blow-up estimates.

Each inequality has an identifier, a parameter tuple (q, r, n) and the
exponents that make it scale invariant.  When an explicit constant is
known the check is a pass/fail test; otherwise it runs in measured mode
and reports the raw ratio of the two functionals, which is an empirical
lower bound for the best constant.

Identifiers
-----------
gn-l3             ||v||_3 <= 0.59 ||v||^(1/2) ||Dv||^(1/2)
sobolev-h2        ||v||_inf <= C ||v||_H2
j-norm            J_n^2 <= C (J_m^2 + J_0^2), m > n   (m is passed as r)
sobolev-gradient  ||v||_r <= K ||Dv||_q, r = 3q/(3-q), 3/2 <= q < 3
gagliardo-sup     ||v||_inf <= K ||v||^(1-t) ||Dv||_q^t, t = 3q/(5q-6), 3 < q <= inf
gn-lr-l3          ||v||_r <= K ||v||^(2/r) ||Dv||_3^(1-2/r), 3 <= r < inf
gn-l2-quasi       ||v|| <= K ||v||_(4/q)^(1-d) ||Dv||^d, d = (3q-6)/(3q-2), 2 <= q < inf
sobolev-hessian   ||v||_r <= K ||D^2 v||_q, r = 3q/(3-2q), 1 <= q < 3/2
gn-lq             ||v||_q <= K ||v||^(1-t) ||Dv||^t, t = 3(q-2)/(2q), 2 <= q <= 6
lq-interpolation  ||D^n v||_q <= ||D^n v||^l ||D^n v||_r^(1-l), l = (1/q-1/r)/(1/2-1/r)
dn-gagliardo      ||v||_q <= K ||v||^(1-t) ||D^n v||_r^t, t = (1/2-1/q)/(1/2+n/3-1/r)
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import (INF, Field, GridSpec, ScalarField, VectorField, derivative_arrays,
                     dn_lq_norm, j_norm, lp_from_arrays, lq_norm)
from .operators import smooth_bump

GN_L3_CONSTANT = 0.59
TOL_IDENTITY = 1e-10
TOL_QUADRATURE = 1e-3

IDS = ("gn-l3", "sobolev-h2", "j-norm", "sobolev-gradient", "gagliardo-sup", "gn-lr-l3",
       "gn-l2-quasi", "sobolev-hessian", "gn-lq", "lq-interpolation", "dn-gagliardo")

# ids whose vector-valued best constant equals the scalar one
GAGLIARDO_TYPE = ("gn-l3", "gagliardo-sup", "gn-lr-l3", "gn-lq", "dn-gagliardo", "sobolev-gradient")


class RangeError(ValueError):
    """Parameters outside the range in which an inequality is asserted."""


@dataclass(frozen=True)
class InequalitySpec:
    id: str
    q: float | None = None
    r: float | None = None
    n: int | None = None
    exponents: dict = field(default_factory=dict)
    constant: float | None = None      # None: measured mode
    tolerance: float = TOL_QUADRATURE


@dataclass(frozen=True)
class CheckResult:
    lhs: float
    rhs: float
    ratio: float
    passed: bool | None                # None in measured mode
    fingerprint: str = ""
    spec: InequalitySpec | None = None


def _f(x):
    return None if x is None else float(x)


def _need(cond: bool, msg: str):
    if not cond:
        raise RangeError(msg)


def sobolev_exponent(q: float) -> float:
    """r(q) = 3q/(3-q) for gradients in Lq."""
    return 3 * q / (3 - q)


def hessian_sobolev_exponent(q: float) -> float:
    """r(q) = 3q/(3-2q) for second derivatives in Lq."""
    return 3 * q / (3 - 2 * q)


def interpolation_lambda(q: float, r: float) -> float:
    if q == r:
        return 0.0
    inv_r = 0.0 if r == INF else 1.0 / r
    return (1.0 / q - inv_r) / (0.5 - inv_r)


def gagliardo_sup_theta(q: float) -> float:
    return 0.6 if q == INF else 3 * q / (5 * q - 6)


def gn_lq_theta(q: float) -> float:
    return 1.5 * (q - 2) / q


def quasi_delta(q: float) -> float:
    return (3 * q - 6) / (3 * q - 2)


def dn_theta(q: float, r: float, n: int) -> float:
    inv_q = 0.0 if q == INF else 1.0 / q
    inv_r = 0.0 if r == INF else 1.0 / r
    return (0.5 - inv_q) / (0.5 + n / 3.0 - inv_r)


def exponents_for(id: str, q: float | None = None, r: float | None = None,
                  n: int | None = None) -> InequalitySpec:
    """Validate parameters and compute the exponents of inequality ``id``."""
    q, r = _f(q), _f(r)
    if id == "gn-l3":
        return InequalitySpec(id, exponents={"theta": 0.5}, constant=GN_L3_CONSTANT)
    if id == "sobolev-h2":
        return InequalitySpec(id)
    if id == "j-norm":
        _need(n is not None and r is not None and math.isfinite(r) and n >= 0
              and r == int(r) and r > n,
              "j-norm requires integer orders 0 <= n < m (m passed as r)")
        return InequalitySpec(id, r=r, n=int(n))
    if id == "sobolev-gradient":
        _need(q is not None and 1.5 <= q < 3, "sobolev-gradient requires 3/2 <= q < 3")
        return InequalitySpec(id, q=q, r=sobolev_exponent(q))
    if id == "gagliardo-sup":
        _need(q is not None and 3 < q <= INF, "gagliardo-sup requires 3 < q <= inf")
        return InequalitySpec(id, q=q, exponents={"theta": gagliardo_sup_theta(q)})
    if id == "gn-lr-l3":
        _need(r is not None and 3 <= r < INF, "gn-lr-l3 requires 3 <= r < inf")
        return InequalitySpec(id, r=r, exponents={"theta": 1 - 2 / r})
    if id == "gn-l2-quasi":
        _need(q is not None and 2 <= q < INF, "gn-l2-quasi requires 2 <= q < inf")
        return InequalitySpec(id, q=q, exponents={"delta": quasi_delta(q)})
    if id == "sobolev-hessian":
        _need(q is not None and 1 <= q < 1.5, "sobolev-hessian requires 1 <= q < 3/2")
        return InequalitySpec(id, q=q, r=hessian_sobolev_exponent(q))
    if id == "gn-lq":
        _need(q is not None and 2 <= q <= 6, "gn-lq requires 2 <= q <= 6")
        return InequalitySpec(id, q=q, exponents={"theta": gn_lq_theta(q)})
    if id == "lq-interpolation":
        n = 0 if n is None else n
        _need(q is not None and r is not None and 2 <= q <= r <= INF and (r > 2 or q == r),
              "lq-interpolation requires 2 <= q <= r <= inf")
        _need(int(n) == n and n >= 0, "lq-interpolation requires an integer order n >= 0")
        return InequalitySpec(id, q=q, r=r, n=int(n),
                              exponents={"lambda": interpolation_lambda(q, r)},
                              constant=1.0, tolerance=TOL_IDENTITY)
    if id == "dn-gagliardo":
        _need(n is not None and int(n) == n and n >= 2, "dn-gagliardo requires n >= 2")
        _need(q is not None and 3 <= q <= INF, "dn-gagliardo requires 3 <= q <= inf")
        lower = max(1.0, 3 / n if q == INF else 3 * q / (n * q + 3))
        _need(r is not None and lower <= r <= INF,
              f"dn-gagliardo requires r >= max(1, 3q/(nq+3)) = {lower:g}")
        _need((n, q, r) not in ((2, INF, 1.5), (3, INF, 1.0)),
              "dn-gagliardo excludes (n, q, r) = (2, inf, 3/2) and (3, inf, 1)")
        return InequalitySpec(id, q=q, r=r, n=int(n), exponents={"theta": dn_theta(q, r, int(n))})
    raise RangeError(f"unknown inequality id {id!r}; known: {', '.join(IDS)}")


def fingerprint(f: Field) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(f.physical).tobytes())
    h.update(repr((f.grid.n, f.grid.length)).encode())
    return h.hexdigest()[:16]


def _sides(spec: InequalitySpec, f: Field) -> tuple[float, float]:
    """(lhs functional, rhs functional without constant)."""
    i, q, r, n = spec.id, spec.q, spec.r, spec.n
    th = spec.exponents.get("theta")
    if i == "gn-l3":
        return lq_norm(f, 3), math.sqrt(lq_norm(f, 2) * dn_lq_norm(f, 1, 2))
    if i == "sobolev-h2":
        h2 = math.sqrt(sum(j_norm(f, k) ** 2 for k in range(3)))
        return lq_norm(f, INF), h2
    if i == "j-norm":
        return j_norm(f, n) ** 2, j_norm(f, int(r)) ** 2 + j_norm(f, 0) ** 2
    if i == "sobolev-gradient":
        return lq_norm(f, r), dn_lq_norm(f, 1, q)
    if i == "gagliardo-sup":
        return lq_norm(f, INF), lq_norm(f, 2) ** (1 - th) * dn_lq_norm(f, 1, q) ** th
    if i == "gn-lr-l3":
        return lq_norm(f, r), lq_norm(f, 2) ** (2 / r) * dn_lq_norm(f, 1, 3) ** th
    if i == "gn-l2-quasi":
        d = spec.exponents["delta"]
        quasi = lp_from_arrays(((1, c) for c in f.physical), 4.0 / q, f.grid.cell_volume)
        return lq_norm(f, 2), quasi ** (1 - d) * dn_lq_norm(f, 1, 2) ** d
    if i == "sobolev-hessian":
        return lq_norm(f, r), dn_lq_norm(f, 2, q)
    if i == "gn-lq":
        return lq_norm(f, q), lq_norm(f, 2) ** (1 - th) * dn_lq_norm(f, 1, 2) ** th
    if i == "lq-interpolation":
        lam = spec.exponents["lambda"]
        arrays = list(derivative_arrays(f, n))
        cell = f.grid.cell_volume
        lhs = lp_from_arrays(arrays, q, cell)
        rhs = lp_from_arrays(arrays, 2.0, cell) ** lam * lp_from_arrays(arrays, r, cell) ** (1 - lam)
        return lhs, rhs
    if i == "dn-gagliardo":
        return lq_norm(f, q), lq_norm(f, 2) ** (1 - th) * dn_lq_norm(f, n, r) ** th
    raise RangeError(f"unknown inequality id {i!r}")


def check(spec: InequalitySpec, f: Field, grid: GridSpec | None = None) -> CheckResult:
    """Evaluate both sides of ``spec`` on ``f``."""
    if grid is not None and grid != f.grid:
        raise ValueError(f"field grid {f.grid} does not match the requested grid {grid}")
    lhs, rhs_raw = _sides(spec, f)
    rhs = rhs_raw * (spec.constant if spec.constant is not None else 1.0)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else INF
    passed = None if spec.constant is None else bool(ratio <= 1 + spec.tolerance)
    return CheckResult(lhs, rhs, ratio, passed, fingerprint(f), spec)


@dataclass(frozen=True)
class SurveyResult:
    id: str
    max_ratio: float
    ratios: np.ndarray
    argmax: int


def constant_survey(spec: InequalitySpec, ensemble: Sequence[Field], min_size: int = 30) -> SurveyResult:
    """Maximum ratio over an ensemble: an empirical lower bound for the best constant."""
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if len(ensemble) < min_size:
        raise ValueError(f"ensemble must contain at least {min_size} fields, got {len(ensemble)}")
    raw = InequalitySpec(spec.id, spec.q, spec.r, spec.n, spec.exponents, None, spec.tolerance)
    ratios = np.array([check(raw, f).ratio for f in ensemble])
    k = int(np.argmax(ratios))
    return SurveyResult(spec.id, float(ratios[k]), ratios, k)


# ---------------------------------------------------------------- field protocol

def bump_modulated_field(grid: GridSpec, rng: np.random.Generator, kmax: int = 4,
                         ncomp: int = 1) -> Field:
    """Smooth bump supported in the central eighth of the box times a band-limited random field.

    Keeps the field away from the periodic boundary, so whole-space
    inequalities can be probed on the torus.
    """
    x, y, z = grid.coordinates()
    c = grid.length / 2
    rad = np.sqrt((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2)
    bump = smooth_bump(rad, grid.length / 4)
    wn = grid.wavenumbers()
    m = [np.abs(k) * grid.length / (2 * math.pi) for k in wn.k]
    band = (m[0] <= kmax) & (m[1] <= kmax) & (m[2] <= kmax)
    shape = (ncomp, *grid.spectral_shape)
    coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * band[None]
    from .fields import inverse
    carrier = inverse(grid, coef)
    offset = rng.standard_normal((ncomp, 1, 1, 1))
    vals = (carrier / np.max(np.abs(carrier)) + 0.5 * offset) * bump[None]
    kind = ScalarField if ncomp == 1 else VectorField
    return kind(grid, physical=vals)


def rescale(f: Field, lam: float) -> Field:
    """u -> lam * u(lam x), represented exactly on the box of period L/lam."""
    g = GridSpec(f.grid.n, f.grid.length / lam)
    return type(f)(g, physical=lam * f.physical)
