"""Gronwall-type engines: singular-kernel bounds, comparison-ODE envelopes and
blow-up thresholds for nonlinear integral inequalities, plus a Volterra
fixed-point oracle that saturates each inequality numerically.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special


@dataclass
class BoundResult:
    mode: str
    value: float                               # headline number (K(T)*A, t*, tau* ...)
    constants: dict = field(default_factory=dict)
    window: tuple = (0.0, math.inf)
    bound: Callable | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("bound")
        d["window"] = [_json_num(x) for x in self.window]
        d["value"] = _json_num(self.value)
        d["constants"] = {k: _json_num(v) for k, v in self.constants.items()}
        return d


def _json_num(x):
    if isinstance(x, (list, tuple)):
        return [_json_num(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _positive(name, x):
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"{name} must be positive and finite, got {x}")


# ------------------------------------------------------------------- bounds

def singular_gronwall_bound(A: float, B: float, kappa: float, T: float) -> BoundResult:
    """phi <= A + B int_0^t (t-s)^-kappa phi ds on [0, T]  ==>  phi <= K(T) A.

    Splitting the integral at distance eps from t, with eps chosen so the
    near part costs at most half of max phi, gives
    K(T) = 2 exp(2 B eps^-kappa T), eps = ((1-kappa)/(2B))^(1/(1-kappa)).
    """
    if not A >= 0:
        raise ValueError(f"A must be nonnegative, got {A}")
    _positive("B", B)
    _positive("T", T)
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    eps = ((1 - kappa) / (2 * B)) ** (1 / (1 - kappa))
    k_t = 2 * math.exp(2 * B * eps ** (-kappa) * T)
    return BoundResult("singular-gronwall", k_t * A,
                       {"eps": eps, "K_T": k_t, "A": A, "B": B, "kappa": kappa, "T": T},
                       (0.0, T), lambda t: np.full_like(np.asarray(t, float), k_t * A))


def _check_terms(terms):
    out = []
    for term in terms:
        b, a, be = (float(x) for x in term)
        _positive("kernel coefficient B_j", b)
        if a < 0 or be < 0:
            raise ValueError("kernel exponents must be nonnegative")
        if a + be >= 1:
            raise ValueError(f"alpha+beta>=1 for kernel term {term}")
        out.append((b, a, be))
    if not out:
        raise ValueError("at least one kernel term is required")
    return out


def generalized_gronwall_bound(A: float, terms: Sequence[tuple], T: float) -> BoundResult:
    """phi <= A + sum_j B_j int_0^t s^-a_j (t-s)^-b_j phi ds  ==>  phi <= K(T) A.

    Extension of the single-kernel splitting.  Near t each kernel term is
    bounded by B_j eps_j^(1-a_j-b_j) Beta(1-a_j, 1-b_j) (the worst interval of
    length eps_j is the one starting at 0 because s^-a_j decreases), and
    eps_j is chosen so this is at most 1/(2m) for m terms.  The far part
    has (t-s)^-b_j <= eps_j^-b_j, and the classical Gronwall lemma for the
    kernel 2 sum_j B_j eps_j^-b_j s^-a_j yields

        K(T) = 2 prod_j exp(2 B_j eps_j^-b_j T^(1-a_j) / (1-a_j)).

    For one term with a = 0 this is exactly :func:`singular_gronwall_bound`.
    """
    if not A >= 0:
        raise ValueError(f"A must be nonnegative, got {A}")
    _positive("T", T)
    terms = _check_terms(terms)
    m = len(terms)
    eps_list, log_k = [], math.log(2.0)
    for b, a, be in terms:
        p = 1 - a - be
        eps = (1.0 / (2 * m * b * special.beta(1 - a, 1 - be))) ** (1 / p)
        eps_list.append(eps)
        log_k += 2 * b * eps ** (-be) * T ** (1 - a) / (1 - a)
    k_t = math.exp(log_k)
    return BoundResult("generalized-gronwall", k_t * A,
                       {"eps": eps_list, "K_T": k_t, "A": A, "terms": [list(t) for t in terms], "T": T},
                       (0.0, T), lambda t: np.full_like(np.asarray(t, float), k_t * A))


def ode_blowup_envelope(w0: float, K: float, alpha: float, t0: float = 0.0) -> BoundResult:
    """Comparison solution of w' = K w^alpha and the resulting blow-up envelope.

    v(t) = w0 (1 - K(alpha-1) w0^(alpha-1) (t-t0))^(-1/(alpha-1)) blows up at
    t* = t0 + 1/(K(alpha-1) w0^(alpha-1)).  If w' <= K w^alpha and w blows up
    at T, then w(t) >= c (T-t)^(-1/(alpha-1)) with c = (1/(K(alpha-1)))^(1/(alpha-1)).
    """
    _positive("w0", w0)
    _positive("K", K)
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    g = alpha - 1
    t_star = t0 + 1.0 / (K * g * w0 ** g)
    c = (1.0 / (K * g)) ** (1.0 / g)

    def v(t):
        t = np.asarray(t, dtype=float)
        base = 1 - K * g * w0 ** g * (t - t0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(base > 0, w0 * np.abs(base) ** (-1.0 / g), np.inf)

    return BoundResult("ode-envelope", t_star,
                       {"t_star": t_star, "envelope_constant": c, "envelope_exponent": 1.0 / g,
                        "w0": w0, "K": K, "alpha": alpha, "t0": t0},
                       (t0, t_star), v)


def threshold_constant(lam: float, B: float, alpha: float, kappa: float) -> float:
    """c(lambda) = ((1-kappa)/B * (lambda-1)/lambda^alpha)^(1/(alpha-1))."""
    return ((1 - kappa) / B * (lam - 1) / lam ** alpha) ** (1.0 / (alpha - 1))


def integral_blowup_threshold(w0: float, B: float, alpha: float, kappa: float,
                              t0: float = 0.0, lam: float | None = None) -> BoundResult:
    """Growth threshold for w(t) <= w(t0) + B int_t0^t (t-s)^-kappa w^alpha ds.

    w stays below lam*w0 up to tau* = t0 + [(1-kappa)(lam-1)/(lam^alpha B w0^(alpha-1))]^(1/(1-kappa)),
    so a blow-up time T must satisfy w(t) > c(lam) (T-t)^(-(1-kappa)/(alpha-1)).
    The default lam = alpha/(alpha-1) maximises c(lam), giving
    c = (alpha-1) ((1-kappa)/(B alpha^alpha))^(1/(alpha-1)).
    """
    _positive("w0", w0)
    _positive("B", B)
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if not kappa < 1:
        raise ValueError(f"kappa must be < 1, got {kappa}")
    lam = alpha / (alpha - 1) if lam is None else float(lam)
    if not lam > 1:
        raise ValueError(f"lambda must be > 1, got {lam}")
    tau = t0 + ((1 - kappa) * (lam - 1) / (lam ** alpha * B * w0 ** (alpha - 1))) ** (1 / (1 - kappa))
    c = threshold_constant(lam, B, alpha, kappa)
    expo = (1 - kappa) / (alpha - 1)
    return BoundResult("integral-threshold", tau - t0,
                       {"tau_star": tau, "lambda": lam, "c_lambda": c, "envelope_exponent": expo,
                        "w0": w0, "B": B, "alpha": alpha, "kappa": kappa, "t0": t0},
                       (t0, tau), lambda T_minus_t: c * np.asarray(T_minus_t, float) ** (-expo))


# ------------------------------------------------------------------- oracle

@dataclass(frozen=True)
class IntegralInequalitySpec:
    A: float
    terms: tuple                     # ((B_j, a_j, b_j), ...): kernel s^-a_j (t-s)^-b_j
    T: float
    alpha: float = 1.0               # nonlinearity exponent of phi inside the integral
    kappa: float | None = None       # informational, single-kernel modes

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("A must be nonnegative")
        _positive("T", self.T)
        for b, a, be in self.terms:
            if b < 0 or a < 0:
                raise ValueError("kernel coefficients and s-exponents must be nonnegative")
            if a + be >= 1 or be >= 1:
                raise ValueError(f"alpha+beta>=1 for kernel term {(b, a, be)}")
        if self.alpha < 1:
            raise ValueError("nonlinearity exponent must be >= 1")


@dataclass
class OracleResult:
    t: np.ndarray
    phi: np.ndarray
    residual: float
    diverged_at: float | None


@dataclass
class GronwallCheck:
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    residual: float
    detail: dict = field(default_factory=dict)


def graded_grid(T: float, nodes: int, grading: float = 2.0, t0: float = 0.0) -> np.ndarray:
    """t0 + (T-t0)(i/N)^grading, clustering nodes where the solution has its endpoint singularity."""
    i = np.arange(nodes + 1) / nodes
    return t0 + (T - t0) * i ** grading


def _weights_row(t_i: float, s: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Hat-function weights of s^-a (t_i - s)^-b on the nodes s[0..i].

    Returns (left, right): interval j contributes left[j]*g_j + right[j]*g_{j+1}.
    """
    s0, s1 = s[:-1], s[1:]
    d = s1 - s0
    if a == 0:
        # sigma = t_i - s; int sigma^-b and int sigma^(1-b) over [t_i - s1, t_i - s0]
        lo, hi = t_i - s1, t_i - s0
        lo = np.maximum(lo, 0.0)
        p0 = (hi ** (1 - b) - lo ** (1 - b)) / (1 - b)
        p1 = (hi ** (2 - b) - lo ** (2 - b)) / (2 - b)
        # (s1 - s) = sigma - lo ; (s - s0) = hi - sigma
        left = (p1 - lo * p0) / d
        right = (hi * p0 - p1) / d
        return left, right
    # u = s / t_i, beta-function moments
    x0, x1 = s0 / t_i, np.minimum(s1 / t_i, 1.0)
    pa, pb = 1 - a, 1 - b
    m0 = special.beta(pa, pb) * (special.betainc(pa, pb, x1) - special.betainc(pa, pb, x0))
    m1 = special.beta(pa + 1, pb) * (special.betainc(pa + 1, pb, x1) - special.betainc(pa + 1, pb, x0))
    scale0 = t_i ** (1 - a - b)
    scale1 = t_i ** (2 - a - b)
    int0 = scale0 * m0
    int1 = scale1 * m1
    left = (s1 * int0 - int1) / d
    right = (int1 - s0 * int0) / d
    return left, right


def volterra_oracle(spec: IntegralInequalitySpec, nodes: int = 2000, grading: float = 2.0,
                    tol: float = 1e-13, max_iter: int = 2000, cap: float = 1e12,
                    grid: np.ndarray | None = None) -> OracleResult:
    """Extremal phi = A + sum_j B_j int_0^t s^-a_j (t-s)^-b_j phi^alpha ds.

    Product integration with piecewise-linear phi^alpha on a graded grid.
    The discrete system is lower triangular, so it is solved node by node;
    at each node the implicit diagonal term is resolved by Picard
    iteration.  Divergence (value above ``cap`` or a node iteration that
    does not contract) marks the discrete blow-up time.
    """
    t = graded_grid(spec.T, nodes, grading) if grid is None else np.asarray(grid, float)
    phi = np.full(len(t), np.nan)
    phi[0] = spec.A
    g = np.full(len(t), np.nan)
    g[0] = spec.A ** spec.alpha
    worst = 0.0
    for i in range(1, len(t)):
        hist = spec.A
        diag = 0.0
        for b, a, be in spec.terms:
            if b == 0:
                continue
            left, right = _weights_row(t[i], t[: i + 1], a, be)
            hist += b * (np.dot(left, g[:i]) + np.dot(right[:-1], g[1:i]))
            diag += b * right[-1]
        x = phi[i - 1]
        ok = False
        for _ in range(max_iter):
            x_new = hist + diag * x ** spec.alpha
            if not math.isfinite(x_new) or x_new > cap:
                return OracleResult(t[:i], phi[:i], worst, float(t[i]))
            if abs(x_new - x) <= tol * max(1.0, abs(x_new)):
                x = x_new
                ok = True
                break
            x = x_new
        if not ok:
            if spec.alpha > 1:
                return OracleResult(t[:i], phi[:i], worst, float(t[i]))
            raise RuntimeError(f"Picard iteration did not converge at t={t[i]:g} "
                               f"(residual {abs(x_new - x):.3e})")
        worst = max(worst, abs(hist + diag * x ** spec.alpha - x) / max(1.0, abs(x)))
        phi[i] = x
        g[i] = x ** spec.alpha
    return OracleResult(t, phi, worst, None)


def picard_global(spec: IntegralInequalitySpec, nodes: int = 400, grading: float = 2.0,
                  iterations: int = 2000, tol: float = 1e-14) -> OracleResult:
    """Plain Picard iteration of the whole discrete operator (linear specs only).

    Independent route to the same fixed point as :func:`volterra_oracle`,
    with a dense weight matrix, so meant for modest grids.
    """
    if spec.alpha != 1:
        raise ValueError("global Picard iteration is provided for linear specs only")
    t = graded_grid(spec.T, nodes, grading)
    W = np.zeros((len(t), len(t)))
    for i in range(1, len(t)):
        for b, a, be in spec.terms:
            left, right = _weights_row(t[i], t[: i + 1], a, be)
            W[i, :i] += b * left
            W[i, 1: i + 1] += b * right
    phi = np.full(len(t), spec.A)
    res = math.inf
    for _ in range(iterations):
        new = spec.A + W @ phi
        res = float(np.max(np.abs(new - phi)) / max(1.0, np.max(np.abs(new))))
        phi = new
        if res < tol:
            break
    else:
        raise RuntimeError(f"Picard iteration did not converge (residual {res:.3e})")
    return OracleResult(t, phi, res, None)


def saturate_and_verify(spec: IntegralInequalitySpec, nodes: int = 2000) -> GronwallCheck:
    """Compare the saturated solution of ``spec`` against the engine's claim.

    Linear specs (alpha = 1): max over the grid of phi / (K(T) A).
    Nonlinear single-kernel specs (alpha > 1, kernel (t-s)^-kappa): the
    discrete blow-up time must not precede tau*, and phi must stay below
    lambda*A before tau*; the ratio is (tau* - t0) / (blow-up time - t0).
    """
    if spec.alpha == 1:
        live = [tm for tm in spec.terms if tm[0] > 0]
        if not live:
            k_t = 2.0                   # limit of every K(T) as the coefficients vanish
        elif len(live) == 1 and live[0][1] == 0 and 0 < live[0][2] < 1:
            k_t = singular_gronwall_bound(1.0, live[0][0], live[0][2], spec.T).constants["K_T"]
        else:
            k_t = generalized_gronwall_bound(1.0, live, spec.T).constants["K_T"]
        # linear solutions are finite on [0, T]; large values are genuine growth
        res = volterra_oracle(spec, nodes, cap=math.inf)
        if res.diverged_at is not None:
            raise RuntimeError(f"linear oracle diverged at t={res.diverged_at:g}")
        phi_max = float(np.max(res.phi))
        bound = k_t * spec.A
        if bound > 0:
            ratio = phi_max / bound
        else:
            ratio = 0.0 if phi_max == 0 else math.inf
        return GronwallCheck(phi_max, bound, ratio, bool(ratio < 1), res.residual,
                             {"K_T": k_t, "nodes": len(res.t)})
    if len(spec.terms) != 1 or spec.terms[0][1] != 0:
        raise ValueError("nonlinear mode needs a single (t-s)^-kappa kernel")
    b, _, kappa = spec.terms[0]
    thr = integral_blowup_threshold(spec.A, b, spec.alpha, kappa)
    tau = thr.constants["tau_star"]
    lam = thr.constants["lambda"]
    horizon = spec.T
    res = volterra_oracle(IntegralInequalitySpec(spec.A, spec.terms, horizon, spec.alpha),
                          nodes, grading=1.0)
    t_div = res.diverged_at if res.diverged_at is not None else math.inf
    before = res.t < tau
    below = bool(np.all(res.phi[before] < lam * spec.A))
    ratio = tau / t_div if t_div > 0 else math.inf
    return GronwallCheck(tau, t_div, ratio, bool(ratio <= 1 and below), res.residual,
                         {"tau_star": tau, "lambda": lam, "stays_below_lambda_w0": below,
                          "diverged": res.diverged_at is not None, "horizon": horizon})
