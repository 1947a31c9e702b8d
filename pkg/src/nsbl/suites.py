"""Named property suites behind ``nsbl verify``.

Each suite returns a :class:`SuiteReport`: a list of named checks with the
measured value, the threshold it is compared with and a pass flag.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gronwall as gw
from . import inequalities as iq
from .fields import INF, GridSpec, ScalarField, VectorField, gradient, inverse, lq_norm
from .operators import (CompactField, HeatKernel, heat_convolve_r3, heat_convolve_r3_grid,
                        heat_evolve_torus, helmholtz_pv_r3, leray_project, pressure_solve,
                        smooth_bump)
from .solver import SimConfig, exact_solution, initial_condition, nonlinear_term, simulate


@dataclass
class SuiteCheck:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold, passed, detail=""):
        self.checks.append(SuiteCheck(name, float(value), float(threshold), bool(passed), detail))

    def le(self, name, value, threshold, detail=""):
        self.add(name, value, threshold, value <= threshold, detail)

    def table(self) -> str:
        w = max([len(c.name) for c in self.checks] + [5])
        lines = [f"{'check':<{w}}  {'value':>13}  {'threshold':>13}  result"]
        for c in self.checks:
            lines.append(f"{c.name:<{w}}  {c.value:>13.6g}  {c.threshold:>13.6g}  "
                         f"{'PASS' if c.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else str(x)
        return {"suite": self.suite, "passed": self.passed,
                "checks": [{**asdict(c), "value": num(c.value), "threshold": num(c.threshold)}
                           for c in self.checks]}


def _max_rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / (scale if scale > 0 else 1.0)


# ---------------------------------------------------------------- exact solutions

def suite_exact(n: int = 32, dt: float = 1e-3, t_end: float = 1.0) -> SuiteReport:
    """Shear and ABC decay solutions, Beltrami pressure, vanishing nonlinear terms."""
    rep = SuiteReport("exact")
    for kind, tol in (("shear", 1e-12), ("abc_beltrami", 1e-10)):
        cfg = SimConfig.from_dict({"grid": {"n": n}, "dt": dt, "t_end": t_end,
                                   "ic": {"kind": kind}, "cadence": max(1, int(round(t_end / dt))),
                                   "snapshots": [t_end]})
        traj = simulate(cfg, write=False)
        u = traj.snapshots[max(traj.snapshots)]
        ex = exact_solution(kind, {}, cfg.grid, t_end)
        rep.le(f"{kind}-decay-error", _max_rel(u.physical, ex.physical), tol)
        nl = nonlinear_term(initial_condition(kind, {}, cfg.grid))
        rep.le(f"{kind}-nonlinear-term", float(np.max(np.abs(nl.physical))), tol)
    g = GridSpec(n)
    u = initial_condition("abc_beltrami", {}, g)
    p = pressure_solve(u).physical[0]
    ref = -0.5 * np.sum(u.physical ** 2, axis=0)
    ref -= ref.mean()
    rep.le("abc-pressure", float(np.max(np.abs(p - ref))), 1e-8)
    p0 = pressure_solve(initial_condition("shear", {}, g)).physical[0]
    rep.le("shear-pressure", float(np.max(np.abs(p0))), 1e-12)
    return rep


# ---------------------------------------------------------------- gronwall

def random_singular_specs(rng: np.random.Generator, count: int = 20):
    out = []
    for _ in range(count):
        A = rng.uniform(0.5, 2.0)
        B = rng.uniform(0.2, 1.5)
        kappa = rng.uniform(0.1, 0.7)
        T = rng.uniform(0.2, 1.5)
        out.append(gw.IntegralInequalitySpec(A, ((B, 0.0, kappa),), T, 1.0, kappa))
    return out


def random_nonlinear_specs(rng: np.random.Generator, count: int = 10):
    out = []
    for _ in range(count):
        w0 = rng.uniform(0.5, 2.0)
        B = rng.uniform(0.5, 2.0)
        alpha = float(rng.choice([1.5, 2.0, 3.0]))
        kappa = rng.uniform(0.1, 0.6)
        thr = gw.integral_blowup_threshold(w0, B, alpha, kappa)
        # horizon well past tau* so the discrete solution has room to diverge
        horizon = 40 * thr.constants["tau_star"]
        out.append(gw.IntegralInequalitySpec(w0, ((B, 0.0, kappa),), horizon, alpha, kappa))
    return out


def lambda_scan(B: float, alpha: float, kappa: float, points: int = 4001, lam_max: float = 6.0):
    lams = np.linspace(1.0 + 1e-6, lam_max, points)
    c = np.array([gw.threshold_constant(l, B, alpha, kappa) for l in lams])
    k = int(np.argmax(c))
    return float(lams[k]), float(lams[1] - lams[0])


def suite_gronwall(seed: int = 0, count: int = 20, nonlinear: int = 10) -> SuiteReport:
    rep = SuiteReport("gronwall")
    rng = np.random.default_rng(seed)
    for i, spec in enumerate(random_singular_specs(rng, count)):
        chk = gw.saturate_and_verify(spec)
        rep.add(f"singular-{i:02d}", chk.ratio, 1.0, chk.passed,
                f"A={spec.A:.4g} B={spec.terms[0][0]:.4g} kappa={spec.kappa:.4g} T={spec.T:.4g}")
    multi = gw.IntegralInequalitySpec(1.0, ((0.5, 0.0, 0.5), (0.3, 0.25, 0.25), (0.4, 0.0, 0.0)), 1.0)
    chk = gw.saturate_and_verify(multi)
    rep.add("multi-kernel", chk.ratio, 1.0, chk.passed)
    for i, spec in enumerate(random_nonlinear_specs(rng, nonlinear)):
        chk = gw.saturate_and_verify(spec, nodes=4000)
        rep.add(f"threshold-{i:02d}", chk.ratio, 1.0, chk.passed,
                f"tau*={chk.lhs:.4g} divergence={chk.rhs:.4g}")
    for alpha in (1.5, 2.0, 3.0):
        best, step = lambda_scan(1.0, alpha, 0.5)
        rep.le(f"lambda-scan-alpha{alpha:g}", abs(best - alpha / (alpha - 1)), step)
    env = gw.ode_blowup_envelope(1.0, 1.0 / (16 * math.pi ** 2), 3.0)
    c = math.sqrt(env.constants["envelope_constant"])
    target = math.sqrt(2 * math.pi * math.sqrt(2))
    rep.le("enstrophy-envelope-constant", abs(c - target) / target, 1e-10)
    rep.add("enstrophy-envelope-above-2.98", c, 2.98, c > 2.98)
    for q in (4.0, 6.0):
        kap = (q + 3) / (2 * q)
        B = 1.7
        thr = gw.integral_blowup_threshold(1.0, B, 2.0, kap)
        want = (q - 3) / (8 * q * B)
        rep.le(f"lq-threshold-constant-q{q:g}", abs(thr.constants["c_lambda"] - want) / want, 1e-10)
    return rep


# ---------------------------------------------------------------- inequalities

STANDARD_CHECKS = (
    ("gn-l3", None, None, None),
    ("lq-interpolation", 4.0, INF, 0),
    ("lq-interpolation", 3.0, 6.0, 0),
    ("lq-interpolation", 3.0, INF, 1),
    ("sobolev-h2", None, None, None),
    ("j-norm", None, 2, 1),
    ("sobolev-gradient", 2.0, None, None),
    ("gagliardo-sup", 4.0, None, None),
    ("gagliardo-sup", INF, None, None),
    ("gn-lr-l3", None, 4.0, None),
    ("gn-l2-quasi", 3.0, None, None),
    ("sobolev-hessian", 1.2, None, None),
    ("gn-lq", 4.0, None, None),
    ("dn-gagliardo", 4.0, 2.0, 2),
)


def inequality_rows(size: int = 100, seed: int = 0, n: int = 32, vector: bool = False):
    """One row per (field, check): (id, q, r, n, lhs, rhs, ratio, pass)."""
    if size < 1:
        raise ValueError("ensemble size must be at least 1")
    rng = np.random.default_rng(seed)
    grid = GridSpec(n)
    specs = [iq.exponents_for(i, q, r, k) for i, q, r, k in STANDARD_CHECKS]
    rows = []
    for _ in range(size):
        f = iq.bump_modulated_field(grid, rng, ncomp=3 if vector else 1)
        for spec in specs:
            res = iq.check(spec, f)
            rows.append((spec.id, spec.q, spec.r, spec.n, res.lhs, res.rhs, res.ratio, res.passed))
    return rows


def suite_inequalities(size: int = 100, seed: int = 0, n: int = 32) -> SuiteReport:
    if size < 1:
        raise ValueError("ensemble size must be at least 1")
    rep = SuiteReport("inequalities")
    rows = inequality_rows(size, seed, n)
    by_id = {}
    for row in rows:
        key = (row[0], row[1], row[2], row[3])
        by_id.setdefault(key, []).append(row)
    for (i, q, r, k), rs in by_id.items():
        name = i + "".join(f"-{lbl}{_fmt(v)}" for lbl, v in (("q", q), ("r", r), ("n", k)) if v is not None)
        worst = max(x[6] for x in rs)
        if rs[0][7] is None:
            rep.add(name + " (measured)", worst, INF, True, "no constant given; max ratio recorded")
        else:
            fails = sum(1 for x in rs if not x[7])
            spec = iq.exponents_for(i, q, r, k)
            rep.add(name, worst, 1 + spec.tolerance, fails == 0, f"{fails} failures")
    return rep


def _fmt(v):
    return "inf" if v == INF else f"{v:g}"


# ---------------------------------------------------------------- appendix (heat kernel, projectors)

def gaussian_field(width: float = 1.0, radius: float | None = None, spacing: float = 0.25) -> CompactField:
    """exp(-|x|^2 / (4 width)) on a lattice wide enough that the cut-off is below 1e-14."""
    support = math.sqrt(4 * width * 33.0)
    R = radius if radius is not None else spacing * math.ceil((support + 2 * spacing) / spacing)
    return CompactField.from_function(lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (4 * width)),
                                      R, spacing, support)


def heat_estimate_ratio(q: float, r: float, t: float, width: float = 1.0, spacing: float = 0.25,
                        eval_spacing: float = 0.5) -> float:
    """||e^{t Lap} f||_q / ((4 pi t)^(-lam) ||f||_r) on R^3 for the Gaussian f, lam = (3/2)(1/r - 1/q)."""
    f = gaussian_field(width, spacing=spacing)
    lam = 1.5 * ((1.0 / r) - (0.0 if q == INF else 1.0 / q))
    if q == INF:
        u = heat_convolve_r3(f, t, np.zeros((1, 3)))[0]
        lhs = float(np.max(np.abs(u)))
    else:
        half = math.sqrt(4 * (width + t) * 33.0)
        m = int(math.ceil(half / eval_spacing))
        ax = eval_spacing * np.arange(-m, m + 1)
        u = heat_convolve_r3_grid(f, t, [ax, ax, ax])
        lhs = float((np.sum(np.abs(u) ** q) * eval_spacing ** 3) ** (1.0 / q))
    return lhs / ((4 * math.pi * t) ** (-lam) * f.lq_norm(r))


def sup_decay_slope(times=(1.0, 1.5, 2.0, 3.0, 4.0), width: float = 0.02, spacing: float = 0.05) -> float:
    """Log-log slope of ||e^{t Lap} f||_inf in t for a narrow Gaussian (r = 1 regime)."""
    f = gaussian_field(width, spacing=spacing)
    ax = np.array([-spacing, 0.0, spacing])
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    sups = [float(np.max(np.abs(heat_convolve_r3(f, t, pts)))) for t in times]
    return float(np.polyfit(np.log(times), np.log(sups), 1)[0])


def random_torus_field(grid: GridSpec, rng: np.random.Generator, kmax: int = 6) -> VectorField:
    wn = grid.wavenumbers()
    m = [np.abs(k) * grid.length / (2 * math.pi) for k in wn.k]
    band = (m[0] <= kmax) & (m[1] <= kmax) & (m[2] <= kmax)
    shape = (3, *grid.spectral_shape)
    coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * band[None]
    return VectorField(grid, physical=inverse(grid, coef))


def torus_nonexpansion(count: int = 50, seed: int = 0, n: int = 32, t: float = 0.2):
    """Worst ||e^{t Lap} f||_r / ||f||_r over random fields for r in {1, 2, inf}.

    t must make exp(-t k_max^2) negligible: the truncated discrete kernel is
    only positive (hence an L1 and L-inf contraction) once the cut-off is invisible.
    """
    rng = np.random.default_rng(seed)
    g = GridSpec(n)
    worst = {1.0: 0.0, 2.0: 0.0, INF: 0.0}
    for _ in range(count):
        f = random_torus_field(g, rng, kmax=2)
        u = heat_evolve_torus(f, t)
        for r in worst:
            worst[r] = max(worst[r], lq_norm(u, r) / lq_norm(f, r))
    return worst


def _bump_gradient(x, y, z, radius=1.0):
    r2 = (x * x + y * y + z * z) / radius ** 2
    b = smooth_bump(np.sqrt(r2) * radius, radius)
    s = np.clip(r2, 0.0, 1.0 - 1e-12)
    fac = np.where(r2 < 1, -2.0 / (1.0 - s) ** 2 / radius ** 2, 0.0)
    return b * fac * x, b * fac * y, b * fac * z


def divergence_free_compact(spacing: float = 1 / 16, radius: float = 1.25) -> CompactField:
    """curl of (0, 0, bump): a compactly supported solenoidal field."""
    def func(x, y, z):
        gx, gy, _ = _bump_gradient(x, y, z)
        return np.stack([gy, -gx, 0 * gx])
    return CompactField.from_function(func, radius, spacing, 1.0)


def gradient_compact(spacing: float = 1 / 16, radius: float = 1.25) -> CompactField:
    return CompactField.from_function(lambda x, y, z: np.stack(_bump_gradient(x, y, z)),
                                      radius, spacing, 1.0)


def fourier_projection_on_box(v: CompactField, pad: int = 4) -> np.ndarray:
    """Leray projection of v zero-padded into a periodic box ``pad`` times the lattice width.

    Returns the projected samples on v's own lattice, shape (3, m, m, m).
    """
    n = pad * (v.m - 1)
    n += n % 2
    grid = GridSpec(n, n * v.spacing)
    big = np.zeros((3, n, n, n))
    o = (n - v.m) // 2
    sl = slice(o, o + v.m)
    big[:, sl, sl, sl] = v.values
    return leray_project(VectorField(grid, physical=big)).physical[:, sl, sl, sl]


def pv_projection_error(v: CompactField, stride: int = 3, eps_factors=(4, 3, 2),
                        reference: str = "fourier", expected: np.ndarray | None = None) -> float:
    """Relative L2 distance between the principal-value projection and a reference.

    The comparison runs over interior lattice nodes.  ``fourier``: Fourier projection of v
    in an enlarged periodic box.  ``given``: the lattice array ``expected``.
    """
    h = v.spacing
    pts = v.points()[::stride, ::stride, ::stride].reshape(-1, 3)
    pts = pts[np.linalg.norm(pts, axis=1) < v.support]
    idx = np.rint((pts + v.radius) / h).astype(int)
    if reference == "fourier":
        full = fourier_projection_on_box(v)
    elif reference == "given" and expected is not None:
        full = np.asarray(expected, float)
    else:
        raise ValueError(f"unknown reference {reference!r} (or missing expected array)")
    ref = full[:, idx[:, 0], idx[:, 1], idx[:, 2]]
    res = helmholtz_pv_r3(v, pts, [k * h for k in eps_factors])
    scale = np.linalg.norm(v.values[:, idx[:, 0], idx[:, 1], idx[:, 2]])
    return float(np.linalg.norm(res.values - ref) / scale)


def suite_appendix(seed: int = 0, pv_spacing: float = 1 / 16) -> SuiteReport:
    rep = SuiteReport("appendix")
    for t in (0.1, 1.0, 10.0):
        k = HeatKernel(t)
        mass = k.lattice_mass(0.05 if t < 1 else 0.25)
        rep.add(f"kernel-mass-t{t:g}", mass, 1 - 1e-6, 1 - 1e-6 <= mass <= 1 + 1e-12)
    for q, r in ((INF, 1.0), (INF, 2.0), (2.0, 1.0)):
        worst = max(heat_estimate_ratio(q, r, t) for t in (0.25, 1.0, 4.0))
        rep.le(f"heat-estimate-q{_fmt(q)}-r{_fmt(r)}", worst, 1 + 1e-3)
    slope = sup_decay_slope()
    rep.le("sup-decay-slope-r1", abs(slope + 1.5), 0.05, f"slope={slope:.4f}")
    for r, w in torus_nonexpansion(50, seed).items():
        rep.le(f"torus-nonexpansion-r{_fmt(r)}", w, 1 + 1e-12)
    rng = np.random.default_rng(seed)
    g = GridSpec(16)
    worst_idem = worst_grad = 0.0
    for _ in range(100):
        v = random_torus_field(g, rng)
        pv = leray_project(v)
        worst_idem = max(worst_idem, _max_rel(leray_project(pv).physical, pv.physical))
        phi = random_torus_field(g, rng)
        grad = gradient(ScalarField(g, spectral=phi.spectral[:1]))
        worst_grad = max(worst_grad, float(np.max(np.abs(leray_project(grad).physical)))
                         / max(float(np.max(np.abs(grad.physical))), 1e-300))
    rep.le("projection-idempotence", worst_idem, 1e-12)
    rep.le("projection-gradient-annihilation", worst_grad, 1e-12)
    sol = divergence_free_compact(pv_spacing)
    rep.le("pv-projector-vs-fourier", pv_projection_error(sol), 5e-2)
    grad = gradient_compact(pv_spacing)
    mixed = CompactField(sol.values + grad.values, sol.spacing, sol.radius, sol.support)
    rep.le("pv-projector-mixed-field", pv_projection_error(mixed, reference="given",
                                                           expected=sol.values), 5e-2)
    return rep


SUITES = {
    "exact": suite_exact,
    "gronwall": suite_gronwall,
    "inequalities": suite_inequalities,
    "appendix": suite_appendix,
}
