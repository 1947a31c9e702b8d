"""Per-record monitoring of a Navier-Stokes trajectory and trajectory-level reports.

A :class:`DiagnosticRecord` is computed from one solver state.  Records come
in two weights: *core* records carry the zeroth- and first-order norm rows,
vorticity, accumulators and ratios; *full* records additionally carry the
second- and third-order rows and pressure norms.  ``norm_cadence`` selects
every how many records are full.

Trajectory-level checks (energy balance, enstrophy growth, vorticity L1,
BKM and Prodi-Serrin accumulators, certificates, ratio monitors) read the
record list only.  Envelopes and rate fits implement the lower-bound blow-up
rates as overlays; nothing here asserts blow-up.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize

from .fields import DEFAULT_EXPONENTS, INF, inverse, lp_from_arrays, lq_norms, norm_table
from .inequalities import interpolation_lambda
from .solver import ConfigError, SolverState, Trajectory

CSV_VERSION = "nsbl-diagnostics v1"
PRODUCT_THRESHOLD = 4 * math.pi * math.sqrt(2)
ENSTROPHY_K = 1.0 / 32.0
ENSTROPHY_K_SHARP = 1.0 / (16 * math.pi ** 2)
PRESSURE_EXPONENTS = (1.0, 1.5, 2.0, 3.0, INF)


def _qkey(q: float) -> str:
    if q == INF:
        return "inf"
    return f"{q:g}"


def _parse_q(x, name):
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return INF
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not x >= 1:
        raise ConfigError(f"config.diagnostics.{name}: expected an exponent >= 1 or 'inf'")
    return float(x)


# ---------------------------------------------------------------- options

@dataclass(frozen=True)
class RecordOptions:
    norm_cadence: int = 1
    exponents: tuple = DEFAULT_EXPONENTS
    h_exponent: float = 4.0
    prodi_serrin: tuple = ((INF, 2.0), (4.0, 8.0), (6.0, 4.0))
    eta: tuple = ()                       # ((q, eta_q), ...)
    t_candidate: float | None = None

    @property
    def zero_order_exponents(self) -> tuple:
        qs = set(self.exponents) | {self.h_exponent, 3.0, INF} | {q for q, _ in self.prodi_serrin}
        qs |= {q for q, _ in self.eta}
        return tuple(sorted(qs))

    @classmethod
    def from_config(cls, d: dict | None) -> "RecordOptions":
        d = dict(d or {})
        known = {"norm_cadence", "h_exponent", "prodi_serrin", "eta", "t_candidate"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"config.diagnostics: unknown key(s) {sorted(extra)}")
        nc = d.get("norm_cadence", 1)
        if not isinstance(nc, int) or isinstance(nc, bool) or nc < 1:
            raise ConfigError("config.diagnostics.norm_cadence: expected an integer >= 1")
        hq = _parse_q(d.get("h_exponent", 4.0), "h_exponent")
        if hq == INF:
            raise ConfigError("config.diagnostics.h_exponent: must be finite")
        pairs = []
        for item in d.get("prodi_serrin", [[ "inf", 2], [4, 8], [6, 4]]):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError("config.diagnostics.prodi_serrin: expected [q, r] pairs")
            q = _parse_q(item[0], "prodi_serrin.q")
            r = _parse_q(item[1], "prodi_serrin.r")
            if r == INF:
                raise ConfigError("config.diagnostics.prodi_serrin.r: time exponent must be finite")
            pairs.append((q, r))
        eta = []
        raw = d.get("eta", {})
        if not isinstance(raw, dict):
            raise ConfigError("config.diagnostics.eta: expected an object mapping q to a threshold")
        for k, v in raw.items():
            try:
                q = _parse_q(k if k in ("inf", "Infinity") else float(k), "eta")
            except ValueError:
                raise ConfigError(f"config.diagnostics.eta: bad exponent key {k!r}") from None
            if q < 3:
                raise ConfigError("config.diagnostics.eta: exponents must satisfy q >= 3")
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"config.diagnostics.eta.{k}: expected a positive number")
            eta.append((q, float(v)))
        tc = d.get("t_candidate")
        if tc is not None and (isinstance(tc, bool) or not isinstance(tc, (int, float)) or not tc > 0):
            raise ConfigError("config.diagnostics.t_candidate: expected a positive number")
        return cls(nc, DEFAULT_EXPONENTS, hq, tuple(pairs), tuple(sorted(eta)),
                   None if tc is None else float(tc))


# ---------------------------------------------------------------- records

@dataclass
class DiagnosticRecord:
    time: float
    full: bool
    norms: dict                     # (n, q) -> value
    vorticity_l1: tuple             # per component
    vorticity_l2: float
    vorticity_inf: float
    divergence_sup: float
    pressure: dict                  # q -> value (full records only)
    integrands: dict
    accumulators: dict
    h_exponent: float
    note: str | None = None
    fourier_l1: float = 0.0         # sum_k |u_k| over all modes and components; bounds ||u||_inf

    def norm(self, n: int, q: float) -> float:
        return self.norms[(int(n), float(q))]

    @property
    def energy(self) -> float:
        return 0.5 * self.norm(0, 2) ** 2

    @property
    def enstrophy(self) -> float:
        return self.norm(1, 2) ** 2

    @property
    def product(self) -> float:
        """||u|| * ||Du||."""
        return self.norm(0, 2) * self.norm(1, 2)

    @property
    def smoothing(self) -> float:
        """t^(3/4) ||u||_inf."""
        return self.time ** 0.75 * self.norm(0, INF)

    @property
    def h(self) -> float | None:
        """(||u||_inf^q / ||u||_q^q) * (||u||_3 / ||u||_inf^2)."""
        q = self.h_exponent
        sup, lq, l3 = self.norm(0, INF), self.norm(0, q), self.norm(0, 3)
        if sup == 0 or lq == 0:
            return None
        return (sup / lq) ** q * l3 / sup ** 2

    def scalars(self) -> dict:
        out = {"time": self.time, "full": 1.0 if self.full else 0.0}
        for (n, q) in sorted(self.norms):
            out[f"norm_n{n}_q{_qkey(q)}"] = self.norms[(n, q)]
        for i, v in enumerate(self.vorticity_l1):
            out[f"vort{i + 1}_l1"] = v
        out["vort_l1"] = float(sum(self.vorticity_l1))
        out["vort_l2"] = self.vorticity_l2
        out["vort_inf"] = self.vorticity_inf
        out["div_sup"] = self.divergence_sup
        out["fourier_l1"] = self.fourier_l1
        for q in PRESSURE_EXPONENTS:
            out[f"pressure_q{_qkey(q)}"] = self.pressure.get(q)
        out["energy"] = self.energy
        out["enstrophy"] = self.enstrophy
        for k in sorted(self.accumulators):
            out[f"int_{k}"] = self.accumulators[k]
        out["product"] = self.product
        out["h"] = self.h
        out["smoothing"] = self.smoothing
        return out


def _ps_key(q, r):
    return f"ps_q{_qkey(q)}_r{_qkey(r)}"


def _fourier_l1(uh: np.ndarray, n: int) -> float:
    """Sum of |coefficients| over the full spectrum from the real-FFT half."""
    a = np.abs(uh)
    total = 2.0 * float(np.sum(a))
    total -= float(np.sum(a[..., 0]))
    if n % 2 == 0:
        total -= float(np.sum(a[..., -1]))
    return total


def record(state: SolverState, previous: DiagnosticRecord | None = None,
           options: RecordOptions | None = None, full: bool = True,
           dealias: bool = True) -> DiagnosticRecord:
    """Evaluate every monitored quantity at ``state``.

    Accumulators advance from ``previous`` by the trapezoidal rule; the first
    record starts them at zero.
    """
    opts = options or RecordOptions()
    u = state.u
    grid = u.grid
    cell = grid.cell_volume
    phys = u.physical
    uh = u.spectral
    kd = grid.wavenumbers().kd
    # grads[j][i] = d_j u_i
    grads = [inverse(grid, (1j * kd[j])[None] * uh) for j in range(3)]

    norms = {}
    for q, v in lq_norms([(1, c) for c in phys], opts.zero_order_exponents, cell).items():
        norms[(0, q)] = v
    first = [(1, grads[j][i]) for j in range(3) for i in range(3)]
    for q, v in lq_norms(first, opts.exponents, cell).items():
        norms[(1, q)] = v
    if full:
        higher = norm_table(u, orders=(2, 3), exponents=opts.exponents)
        norms.update({k: v for k, v in higher.items()})

    omega = (grads[1][2] - grads[2][1], grads[2][0] - grads[0][2], grads[0][1] - grads[1][0])
    w_l1 = tuple(lp_from_arrays([(1, w)], 1, cell) for w in omega)
    w_l2 = lp_from_arrays([(1, w) for w in omega], 2, cell)
    w_inf = lp_from_arrays([(1, w) for w in omega], INF, cell)
    div_sup = float(np.max(np.abs(grads[0][0] + grads[1][1] + grads[2][2])))
    fourier_l1 = _fourier_l1(uh, grid.n)

    pressure = {}
    if full:
        p = state.pressure(dealias)
        for q in PRESSURE_EXPONENTS:
            pressure[q] = lp_from_arrays([(1, p.physical[0])], q, cell)

    triple = 0.0
    for i in range(3):
        g2 = grads[0][i] ** 2 + grads[1][i] ** 2 + grads[2][i] ** 2
        triple += float(np.sum(np.abs(phys[i]) * g2))
    integrands = {
        "dissipation": norms[(1, 2.0)] ** 2,
        "bkm": w_inf,
        "triple": triple * cell,
    }
    for q, r in opts.prodi_serrin:
        integrands[_ps_key(q, r)] = norms[(0, q)] ** r

    if previous is None:
        acc = {k: 0.0 for k in integrands}
    else:
        dt = state.t - previous.time
        if not dt > 0:
            raise ValueError("records must advance in time")
        acc = {k: previous.accumulators[k] + 0.5 * dt * (previous.integrands[k] + v)
               for k, v in integrands.items()}

    rec = DiagnosticRecord(state.t, full, norms, w_l1, w_l2, w_inf, div_sup, pressure,
                           integrands, acc, opts.h_exponent, fourier_l1=fourier_l1)
    bad = [k for k, v in rec.scalars().items() if v is not None and not math.isfinite(v)]
    if bad:
        rec.note = "non-finite entries: " + ",".join(bad)
    return rec


def recompute_accumulators(traj: Trajectory) -> dict:
    """Whole-trajectory trapezoidal integrals of every integrand (cross-check)."""
    t = traj.times
    out = {}
    for key in traj.records[0].integrands:
        y = np.array([r.integrands[key] for r in traj.records])
        out[key] = np.concatenate([[0.0], integrate.cumulative_trapezoid(y, t)])
    return out


def _need_records(traj: Trajectory, k: int):
    if len(traj.records) < k:
        raise ValueError(f"need at least {k} records, have {len(traj.records)}")


# ---------------------------------------------------------------- energy

@dataclass
class EnergyBalance:
    times: np.ndarray
    residual: np.ndarray          # relative to 1/2 ||f||^2
    dissipation: np.ndarray
    bound: float                  # 1/2 ||f||^2
    max_residual: float
    dissipation_ok: bool
    monotone_ok: bool


def energy_balance(traj: Trajectory, slack: float = 1e-6, monotone_slack: float = 1e-12) -> EnergyBalance:
    """Discrete energy equality residual and the dissipation budget.

    residual(t) = |E(t) - E(0) + int_0^t ||Du||^2| / E(0) with E = ||u||^2 / 2.
    """
    _need_records(traj, 2)
    recs = traj.records
    e0 = recs[0].energy
    t = np.array([r.time for r in recs])
    e = np.array([r.energy for r in recs])
    d = np.array([r.accumulators["dissipation"] for r in recs])
    scale = e0 if e0 > 0 else 1.0
    res = np.abs(e - e0 + d) / scale
    l2 = np.array([r.norm(0, 2) for r in recs])
    mono = bool(np.all(np.diff(l2) <= monotone_slack * max(l2[0], 1e-300)))
    return EnergyBalance(t, res, d, e0, float(res.max()), bool(d[-1] <= e0 * (1 + slack)), mono)


# ---------------------------------------------------------------- enstrophy

class CadenceError(ValueError):
    pass


@dataclass
class EnstrophyCheck:
    time: float
    lhs: float              # centered difference of ||Du||^2
    rhs: float              # ||Du||^6 / 32 + tolerance
    tolerance: float
    passed: bool
    rhs_sharp: float        # with K = 1/(16 pi^2)
    passed_sharp: bool


def _centered(t, z, i):
    h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
    return (-h2 / (h1 * (h1 + h2)) * z[i - 1] + (h2 - h1) / (h1 * h2) * z[i]
            + h1 / (h2 * (h1 + h2)) * z[i + 1])


def _third_derivative(t, z, i0):
    """6 * third divided difference over four consecutive samples."""
    tt, zz = t[i0:i0 + 4], list(z[i0:i0 + 4])
    for lvl in range(1, 4):
        zz = [(zz[k + 1] - zz[k]) / (tt[k + lvl] - tt[k]) for k in range(len(zz) - 1)]
    return 6.0 * zz[0]


def enstrophy_inequality(traj: Trajectory, K: float = ENSTROPHY_K, safety: float = 4.0,
                         max_jump: float = 0.25) -> list[EnstrophyCheck]:
    """d/dt ||Du||^2 <= K ||Du||^6 at interior records via centered differences.

    The tolerance added to the right side is ``safety`` times the leading
    truncation term h1*h2/6 * |z'''| (third derivative estimated from four
    neighbouring records) plus a rounding allowance.
    """
    _need_records(traj, 4)
    t = np.array([r.time for r in traj.records])
    z = np.array([r.enstrophy for r in traj.records])
    zmax = float(np.max(np.abs(z)))
    jumps = np.abs(np.diff(z)) / np.maximum(np.maximum(z[:-1], z[1:]), 1e-300)
    if np.any(jumps > max_jump):
        i = int(np.argmax(jumps))
        raise CadenceError(f"record cadence too coarse for differencing near t={t[i]:.6g} "
                           f"(relative change {jumps[i]:.3g} per interval)")
    out = []
    eps = np.finfo(float).eps
    for i in range(1, len(t) - 1):
        lhs = _centered(t, z, i)
        i0 = min(max(i - 2, 0), len(t) - 4)
        d3 = _third_derivative(t, z, i0)
        h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
        tol = safety * h1 * h2 / 6.0 * abs(d3) + 64 * eps * zmax / min(h1, h2)
        rhs = K * z[i] ** 3 + tol
        rhs_s = ENSTROPHY_K_SHARP * z[i] ** 3 + tol
        out.append(EnstrophyCheck(float(t[i]), float(lhs), float(rhs), float(tol),
                                  bool(lhs <= rhs), float(rhs_s), bool(lhs <= rhs_s)))
    return out


# ---------------------------------------------------------------- vorticity

@dataclass
class VorticityL1Check:
    time: float
    components: tuple
    component_bounds: tuple
    total: float
    total_bound: float
    passed: bool


def vorticity_l1(traj: Trajectory, rel_slack: float = 1e-12) -> list[VorticityL1Check]:
    """||w_i(t)||_1 <= ||w_i(0)||_1 + ||u0||^2/2 and ||w(t)||_1 <= ||w(0)||_1 + (sqrt3/2)||u0||^2."""
    _need_records(traj, 1)
    r0 = traj.records[0]
    e = r0.norm(0, 2) ** 2
    cb = tuple(c + 0.5 * e for c in r0.vorticity_l1)
    tb = sum(r0.vorticity_l1) + math.sqrt(3) / 2 * e
    out = []
    for r in traj.records:
        ok = all(c <= b * (1 + rel_slack) for c, b in zip(r.vorticity_l1, cb))
        total = float(sum(r.vorticity_l1))
        ok = ok and total <= tb * (1 + rel_slack)
        out.append(VorticityL1Check(r.time, r.vorticity_l1, cb, total, tb, ok))
    return out


# ---------------------------------------------------------------- BKM / Prodi-Serrin

def prodi_serrin_admissible(q: float, r: float) -> bool:
    """2/r + 3/q <= 1."""
    inv_q = 0.0 if q == INF else 1.0 / q
    return 2.0 / r + 3.0 * inv_q <= 1.0 + 1e-12


@dataclass
class AccumulatorReport:
    times: np.ndarray
    bkm: np.ndarray
    prodi_serrin: list            # dicts: q, r, admissible, integral (final), series
    vorticity_l2: np.ndarray
    exponential_bound: np.ndarray # ||w(0)|| exp(sqrt3 * bkm)
    exponential_ok: bool

    def to_dict(self) -> dict:
        return {
            "t_final": float(self.times[-1]),
            "bkm_integral": float(self.bkm[-1]),
            "prodi_serrin": [{k: _json(v) for k, v in d.items() if k != "series"}
                             for d in self.prodi_serrin],
            "exponential_bound_ok": self.exponential_ok,
        }


def bkm_and_prodi_serrin(traj: Trajectory, rel_slack: float = 1e-12) -> AccumulatorReport:
    """Time integrals of ||w||_inf and ||u||_q^r, and the sqrt(3)-exponential vorticity bound."""
    _need_records(traj, 1)
    recs = traj.records
    t = np.array([r.time for r in recs])
    bkm = np.array([r.accumulators["bkm"] for r in recs])
    ps = []
    for key in recs[0].integrands:
        if not key.startswith("ps_"):
            continue
        qs, rs = key[4:].split("_r")
        q = INF if qs == "inf" else float(qs)
        r = float(rs)
        series = np.array([rec.accumulators[key] for rec in recs])
        ps.append({"q": q, "r": r, "admissible": prodi_serrin_admissible(q, r),
                   "integral": float(series[-1]), "series": series})
    wl2 = np.array([r.vorticity_l2 for r in recs])
    bound = wl2[0] * np.exp(math.sqrt(3) * bkm)
    ok = bool(np.all(wl2 <= bound * (1 + rel_slack)))
    return AccumulatorReport(t, bkm, ps, wl2, bound, ok)


# ---------------------------------------------------------------- certificates

@dataclass
class CertificateEntry:
    id: str
    status: str                   # fired | not-fired | inapplicable
    time: float | None
    values: dict
    basis: str                    # what necessary condition is being contraposed


@dataclass
class CertificateReport:
    entries: list
    t_final: float
    breakdown: dict | None
    t_candidate: float | None

    def get(self, cid: str) -> CertificateEntry:
        for e in self.entries:
            if e.id == cid:
                return e
        raise KeyError(cid)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "t_final": self.t_final,
            "breakdown": self.breakdown,
            "t_candidate": _json(self.t_candidate),
            "certificates": [
                {"id": e.id, "status": e.status, "time": _json(e.time),
                 "values": {k: _json(v) for k, v in e.values.items()}, "basis": e.basis}
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _json(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, (np.floating,)):
        return _json(float(x))
    return x


def eta_functional(l2: float, lq: float, q: float) -> float:
    """||u||^((2q-6)/(3q-6)) ||u||_q^(q/(3q-6)); at q = inf the exponents are 2/3 and 1/3."""
    if q == INF:
        a, b = 2.0 / 3.0, 1.0 / 3.0
    else:
        a, b = (2 * q - 6) / (3 * q - 6), q / (3 * q - 6)
    return (l2 ** a if a else 1.0) * lq ** b


def regularity_horizon(f_l2: float) -> float:
    """||f||^4 / (128 pi^2)."""
    return f_l2 ** 4 / (128 * math.pi ** 2)


def smooth_window(df_l2: float) -> float:
    """8 pi^2 ||Df||^-4: the solution is smooth at least this long."""
    return math.inf if df_l2 == 0 else 8 * math.pi ** 2 / df_l2 ** 4


def certificates(traj: Trajectory, eta: dict | None = None,
                 t_candidate: float | None = None) -> CertificateReport:
    """Evaluate every regularity certificate along the recorded trajectory.

    ``eta`` maps an exponent q >= 3 to a threshold eta_q; without it the
    eta-based entries are reported as inapplicable.
    """
    _need_records(traj, 1)
    recs = traj.records
    if eta is None:
        opts = RecordOptions.from_config(traj.config.diagnostics) if traj.config else RecordOptions()
        eta = dict(opts.eta)
        if t_candidate is None:
            t_candidate = opts.t_candidate
    if t_candidate is None and traj.breakdown is not None:
        t_candidate = traj.breakdown["t"]
    r0 = recs[0]
    entries = []

    fired = next((r for r in recs if r.product < PRODUCT_THRESHOLD), None)
    entries.append(CertificateEntry(
        "global-regularity-product", "fired" if fired else "not-fired",
        fired.time if fired else None,
        {"threshold": PRODUCT_THRESHOLD, "product": fired.product if fired else recs[-1].product},
        "||u|| ||Du|| >= 4 pi sqrt2 is necessary for finite-time blow-up"))

    horizon = regularity_horizon(r0.norm(0, 2))
    passed = next((r for r in recs if r.time > horizon), None) if traj.breakdown is None else None
    entries.append(CertificateEntry(
        "regularity-horizon", "fired" if passed else "not-fired",
        passed.time if passed else None, {"horizon": horizon, "f_l2": r0.norm(0, 2)},
        "a blow-up time cannot exceed ||f||^4/(128 pi^2)"))

    window = smooth_window(r0.norm(1, 2))
    entries.append(CertificateEntry(
        "smooth-window", "fired", 0.0, {"tau": window, "df_l2": r0.norm(1, 2)},
        "no blow-up before 8 pi^2 ||Df||^-4"))

    for q in sorted(set([3.0, INF]) | set(eta)):
        cid = f"eta-smallness-q{_qkey(q)}"
        basis = "||u||^a ||u||_q^b < eta_q at some time excludes blow-up"
        if q not in eta:
            entries.append(CertificateEntry(cid, "inapplicable", None, {"q": q}, basis))
            continue
        hit = None
        for r in recs:
            if (0, q) in r.norms and eta_functional(r.norm(0, 2), r.norm(0, q), q) < eta[q]:
                hit = r
                break
        val = eta_functional((hit or r0).norm(0, 2), (hit or r0).norm(0, q), q)
        entries.append(CertificateEntry(cid, "fired" if hit else "not-fired",
                                        hit.time if hit else None,
                                        {"q": q, "eta": eta[q], "functional": val}, basis))

    basis = "||u(0)||_3 < eta_3 excludes blow-up"
    if 3.0 in eta:
        v = r0.norm(0, 3)
        st = "fired" if v < eta[3.0] else "not-fired"
        entries.append(CertificateEntry("eta-initial-l3", st, 0.0 if st == "fired" else None,
                                        {"eta": eta[3.0], "f_l3": v}, basis))
    else:
        entries.append(CertificateEntry("eta-initial-l3", "inapplicable", None, {}, basis))
    return CertificateReport(entries, recs[-1].time, traj.breakdown, t_candidate)


# ---------------------------------------------------------------- exponents and envelopes

def kappa_lq(q: float) -> float:
    """(q-3)/(2q) for ||u||_q, 1/2 at q = inf."""
    return 0.5 if q == INF else (q - 3) / (2 * q)


def kappa_gradient_low(q: float) -> float:
    """(q - 3/2)/q for ||Du||_q, 3/2 <= q < 3."""
    return (q - 1.5) / q


def kappa_gradient_high(q: float) -> float:
    """(5q-6)/(6q) for ||Du||_q, 3 < q <= inf (5/6 at inf)."""
    return 5.0 / 6.0 if q == INF else (5 * q - 6) / (6 * q)


def kappa_gradient_l3(eps: float) -> float:
    return 0.5 - eps


def kappa_hessian(q: float) -> float:
    """(3/2)(q-1)/q for ||D^2 u||_q."""
    return 1.5 * (q - 1) / q


def gamma_ratio(q: float, r: float) -> float:
    """((r-3)/(r-2)) ((r-q)/(qr)) for ||u||_r/||u||_q, 3 <= q < r; 1/q at r = inf."""
    if r == INF:
        return 1.0 / q
    return (r - 3) / (r - 2) * (r - q) / (q * r)


def gamma_gradient_ratio(q: float) -> float:
    """(6-q)/(8q) for ||Du|| / ||u||_q."""
    return (6 - q) / (8 * q)


EXPONENT_TABLE = {
    "u-lq": kappa_lq,
    "du-lq-low": kappa_gradient_low,
    "du-lq-high": kappa_gradient_high,
    "du-l3-eps": kappa_gradient_l3,
    "d2u-lq": kappa_hessian,
    "ratio-lr-lq": gamma_ratio,
    "ratio-du-lq": gamma_gradient_ratio,
    "interp-lambda": interpolation_lambda,
}

GRADIENT_L2_CONSTANT = math.sqrt(2 * math.pi * math.sqrt(2))


@dataclass
class Envelope:
    family: str
    q: float
    n: int
    exponent: float
    constant: float
    t_candidate: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        gap = self.t_candidate - t
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(gap > 0, self.constant * np.abs(gap) ** (-self.exponent), np.inf)


def envelopes(q: float, n: int, t_candidate: float, *, eps: float | None = None,
              C_q: float | None = None) -> Envelope:
    """Lower-bound curve c (T - t)^(-exponent) that ||D^n u||_q must exceed if blow-up at T.

    n = 0: exponent (q-3)/(2q), 3 <= q <= inf; constant (q-3)/(8 q C_q) (1/(8 C_inf) at inf)
           when the Gagliardo constant C_q is supplied, else 1.
    n = 1: (q-3/2)/q for 3/2 <= q < 3 (constant (2 pi sqrt2)^(1/2) at q = 2),
           1/2 - eps at q = 3 (0 < eps <= 1/2), (5q-6)/(6q) for 3 < q <= inf.
    n = 2: (3/2)(q-1)/q for 1 <= q < 3/2 and q = 2.
    """
    if not t_candidate > 0:
        raise ValueError("t_candidate must be positive")
    q = float(q)
    c = 1.0
    if n == 0:
        if not q >= 3:
            raise ValueError(f"velocity envelope needs 3 <= q <= inf, got q={q}")
        fam, k = "u-lq", kappa_lq(q)
        if C_q is not None:
            if not C_q > 0:
                raise ValueError("C_q must be positive")
            c = 1.0 / (8 * C_q) if q == INF else (q - 3) / (8 * q * C_q)
    elif n == 1:
        if 1.5 <= q < 3:
            fam, k = "du-lq-low", kappa_gradient_low(q)
            if q == 2:
                c = GRADIENT_L2_CONSTANT
        elif q == 3:
            if eps is None or not 0 < eps <= 0.5:
                raise ValueError("q = 3 gradient envelope needs 0 < eps <= 1/2")
            fam, k = "du-l3-eps", kappa_gradient_l3(eps)
        elif q > 3:
            fam, k = "du-lq-high", kappa_gradient_high(q)
        else:
            raise ValueError(f"gradient envelope needs q >= 3/2, got q={q}")
    elif n == 2:
        if not (1 <= q < 1.5 or q == 2):
            raise ValueError(f"second-derivative envelope needs 1 <= q < 3/2 or q = 2, got q={q}")
        fam, k = "d2u-lq", kappa_hessian(q)
    else:
        raise ValueError(f"no envelope for derivative order n={n}")
    return Envelope(fam, q, n, k, c, float(t_candidate))


def ratio_envelope(q: float, r: float, t_candidate: float) -> Envelope:
    """Unit-constant envelope for ||u||_r / ||u||_q, 3 <= q < r <= inf."""
    if not (3 <= q < r):
        raise ValueError(f"ratio envelope needs 3 <= q < r <= inf, got q={q}, r={r}")
    return Envelope("ratio-lr-lq", q, 0, gamma_ratio(q, r), 1.0, float(t_candidate))


def gradient_ratio_envelope(q: float, t_candidate: float) -> Envelope:
    """Unit-constant envelope for ||Du|| / ||u||_q, 2 <= q <= 6."""
    if not (2 <= q <= 6):
        raise ValueError(f"gradient ratio envelope needs 2 <= q <= 6, got q={q}")
    return Envelope("ratio-du-lq", q, 1, gamma_gradient_ratio(q), 1.0, float(t_candidate))


# ---------------------------------------------------------------- rate fit

class NonMonotoneWindow(ValueError):
    pass


@dataclass
class RateFit:
    norm_id: str
    kappa_hat: float
    t_hat: float
    log_constant: float
    residual: float               # RMS residual of the log fit
    points: int
    kappa_expected: float | None


def _profile(t, logy, t_hat):
    x = np.log(t_hat - t)
    A = np.column_stack([-x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    r = logy - A @ coef
    return float(r @ r), coef


def fit_rate(series, window=None, norm_id: str = "series",
             kappa_expected: float | None = None) -> RateFit:
    """Fit log y = -kappa log(T - t) + c jointly in (kappa, T, c).

    ``series`` is a pair (times, values); ``window`` an optional (t_lo, t_hi).
    The window must hold at least 10 strictly increasing positive values.
    For fixed T the problem is linear; T is found by a log-spaced scan of
    T - t_last followed by bounded Brent refinement.
    """
    t, y = (np.asarray(a, dtype=float) for a in series)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("series must be two equal-length 1-d arrays")
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if len(t) < 10:
        raise NonMonotoneWindow(f"need at least 10 points in the window, have {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must increase strictly")
    if np.any(y <= 0) or np.any(np.diff(y) <= 0):
        raise NonMonotoneWindow("fit needs a strictly increasing positive window")
    logy = np.log(y)
    span = t[-1] - t[0]
    lo, hi = math.log(1e-8 * span), math.log(100 * span)
    grid = np.linspace(lo, hi, 241)
    ssr = [_profile(t, logy, t[-1] + math.exp(g))[0] for g in grid]
    k = int(np.argmin(ssr))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda g: _profile(t, logy, t[-1] + math.exp(g))[0],
                                   bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    g = res.x if res.fun <= ssr[k] else grid[k]
    t_hat = t[-1] + math.exp(g)
    s, coef = _profile(t, logy, t_hat)
    return RateFit(norm_id, float(coef[0]), float(t_hat), float(coef[1]),
                   math.sqrt(s / len(t)), len(t), kappa_expected)


# ---------------------------------------------------------------- ratio monitors

@dataclass
class RatioSeries:
    name: str
    params: dict
    values: list                  # float or None where undefined
    growing: bool                 # windowed max tracking flag
    check: list | None = None     # per-record pass flags where a bound applies


def _growth_flag(vals, window_frac=0.25, factor=1.1) -> bool:
    v = [x for x in vals if x is not None]
    if len(v) < 8:
        return False
    w = max(2, int(len(v) * window_frac))
    return max(v[-w:]) >= factor * max(v[:-w]) and v[-1] >= max(v[:-1])


def ratio_monitors(traj: Trajectory, pairs=((3.0, INF), (4.0, INF), (3.0, 6.0)),
                   gradient_exponents=(2.0, 3.0, 4.0, 6.0), rel_slack: float = 1e-12) -> dict:
    """Time series of norm ratios and h(t).

    For each (q, r): ||u||_r / ||u||_q, plus the energy interpolation check
    ||u||_r^lam <= ||f||^lam ||u||_r / ||u||_q with lam = 2(r/q-1)/(r-2).
    For each q: ||Du|| / ||u||_q.  Undefined entries (zero norms) are None.
    """
    recs = traj.records
    _need_records(traj, 1)
    f_l2 = recs[0].norm(0, 2)
    out = {"times": [r.time for r in recs]}
    for q, r in pairs:
        if not (2 <= q < r):
            raise ValueError(f"ratio pair needs 2 <= q < r, got ({q}, {r})")
        lam = interpolation_lambda(q, r)
        vals, ok = [], []
        for rec in recs:
            lq, lr = rec.norms.get((0, q)), rec.norms.get((0, r))
            if lq is None or lr is None:
                raise ValueError(f"records lack the L{_qkey(q)} or L{_qkey(r)} norm")
            if lq == 0:
                vals.append(None)
                ok.append(True)
                continue
            vals.append(lr / lq)
            ok.append(lr ** lam <= f_l2 ** lam * lr / lq * (1 + rel_slack))
        name = f"lr_over_lq_q{_qkey(q)}_r{_qkey(r)}"
        out[name] = RatioSeries(name, {"q": q, "r": r, "lambda": lam, "gamma": gamma_ratio(q, r) if q >= 3 else None},
                                vals, _growth_flag(vals), ok)
    for q in gradient_exponents:
        vals = []
        for rec in recs:
            lq = rec.norms.get((0, q))
            if lq is None:
                raise ValueError(f"records lack the L{_qkey(q)} norm")
            vals.append(None if lq == 0 else rec.norm(1, 2) / lq)
        name = f"du_over_lq_q{_qkey(q)}"
        out[name] = RatioSeries(name, {"q": q, "gamma": gamma_gradient_ratio(q)}, vals, _growth_flag(vals))
    hv = [rec.h for rec in recs]
    out["h"] = RatioSeries("h", {"q": recs[0].h_exponent}, hv, _growth_flag(hv))
    return out


# ---------------------------------------------------------------- output files

def csv_columns(traj: Trajectory) -> list[str]:
    cols = []
    for rec in traj.records:
        for k in rec.scalars():
            if k not in cols:
                cols.append(k)
    return cols


COLUMN_NOTES = (
    "time; full=1 when higher-order and pressure norms were evaluated; "
    "norm_n<n>_q<q>=||D^n u||_q (component and index-string sum, sup for q=inf); "
    "vort<i>_l1 and vort_l1/l2/inf=vorticity norms; div_sup=sup|div u|; "
    "fourier_l1=sum of |Fourier coefficients| (an upper bound for ||u||_inf); "
    "pressure_q<q>=||p||_q; energy=||u||^2/2; enstrophy=||Du||^2; "
    "int_dissipation=int ||Du||^2 dt; int_bkm=int ||w||_inf dt; "
    "int_ps_q<q>_r<r>=int ||u||_q^r dt; int_triple=int sum_i int |u_i||grad u_i|^2 dx dt; "
    "product=||u|| ||Du||; h=(||u||_inf/||u||_q)^q ||u||_3/||u||_inf^2; smoothing=t^(3/4)||u||_inf"
)


def write_csv(traj: Trajectory, path) -> None:
    cols = csv_columns(traj)
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    buf.write(f"# {COLUMN_NOTES}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in traj.records:
        s = rec.scalars()
        w.writerow(["" if s.get(c) is None else format(s[c], ".17g") for c in cols])
    _atomic_text(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    cols = rows[0]
    data = np.array([[float(x) if x != "" else np.nan for x in row] for row in rows[1:]])
    return cols, data


def _atomic_text(path, text: str):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_outputs(traj: Trajectory, out_dir) -> list[str]:
    """diagnostics.csv, certificates.json and one NSF1 file per snapshot."""
    from .nsf import write_field

    os.makedirs(out_dir, exist_ok=True)
    files = []
    p = os.path.join(out_dir, "diagnostics.csv")
    write_csv(traj, p)
    files.append(p)
    p = os.path.join(out_dir, "certificates.json")
    _atomic_text(p, certificates(traj).to_json() + "\n")
    files.append(p)
    for t, u in sorted(traj.snapshots.items()):
        p = os.path.join(out_dir, f"snapshot_t{t:.6f}.nsf")
        write_field(p, u)
        files.append(p)
    return files


def summary(traj: Trajectory) -> dict:
    """Compact dictionary of the headline trajectory checks."""
    out = {"records": len(traj.records), "t_final": traj.records[-1].time, "breakdown": traj.breakdown}
    if len(traj.records) >= 2:
        eb = energy_balance(traj)
        out["energy_max_residual"] = eb.max_residual
        out["dissipation_ok"] = eb.dissipation_ok
    acc = bkm_and_prodi_serrin(traj)
    out["bkm_integral"] = float(acc.bkm[-1])
    out["exponential_bound_ok"] = acc.exponential_ok
    out["vorticity_l1_ok"] = all(c.passed for c in vorticity_l1(traj))
    return out
