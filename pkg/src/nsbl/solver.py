"""Pseudo-spectral integration of u_t = Lap u - P(u.grad u) on a periodic box.

Viscosity is 1.  The linear part is integrated exactly with the
multipliers exp(-|k|^2 dt) (integrating-factor RK4); the convective term is
formed in physical space, dealiased with the 2/3 rule and Leray-projected
at every stage.  The velocity is kept mean-free.

Stability: with the linear part exact, the step is limited by advection,
roughly dt * max|u| * k_max < 2.8 with k_max the largest retained
wavenumber.  The time step is fixed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._workers import TransformPlan
from .fields import GridSpec, ScalarField, VectorField, forward, inverse, lq_norm
from .operators import convective_hat, heat_evolve_torus, leray_project_hat, pressure_solve

IC_KINDS = ("shear", "abc_beltrami", "taylor_green", "random_divfree", "zero")
BREAKDOWN_SUP = 1e12


class ConfigError(ValueError):
    """Invalid simulation configuration (field-level message)."""


class NumericalBreakdown(RuntimeError):
    def __init__(self, t: float, reason: str):
        super().__init__(f"numerical breakdown at t={t:.6g}: {reason}")
        self.t = t
        self.reason = reason


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec
    dt: float
    t_end: float
    ic: dict
    dealias: bool = True
    cadence: int = 1
    snapshots: tuple = ()
    out_dir: str | None = None
    diagnostics: dict = field(default_factory=dict)
    heat_only: bool = False

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def seed(self):
        return self.ic.get("seed")

    @property
    def max_wavenumber(self) -> float:
        return (self.grid.n / 3.0) * 2 * math.pi / self.grid.length * math.sqrt(3)

    def to_dict(self) -> dict:
        return {
            "grid": {"n": self.grid.n, "L": self.grid.length},
            "dt": self.dt, "t_end": self.t_end, "ic": self.ic, "dealias": self.dealias,
            "cadence": self.cadence, "snapshots": list(self.snapshots), "out_dir": self.out_dir,
            "diagnostics": self.diagnostics, "heat_only": self.heat_only,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object at top level")
        known = {"grid", "dt", "t_end", "ic", "dealias", "cadence", "snapshots", "out_dir", "diagnostics", "heat_only"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"config: unknown key(s) {sorted(extra)}")
        for key in ("grid", "dt", "t_end", "ic"):
            if key not in d:
                raise ConfigError(f"config.{key}: required")
        g = d["grid"]
        if not isinstance(g, dict) or "n" not in g:
            raise ConfigError("config.grid: expected an object with keys n and L")
        try:
            grid = GridSpec(g["n"], g.get("L", 2 * math.pi))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config.grid: {exc}") from None
        dt = _num(d["dt"], "dt")
        t_end = _num(d["t_end"], "t_end", allow_zero=True)
        if dt <= 0:
            raise ConfigError("config.dt: must be > 0")
        steps = round(t_end / dt)
        if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
            raise ConfigError("config.t_end: must be an integer multiple of dt")
        ic = d["ic"]
        if not isinstance(ic, dict) or "kind" not in ic:
            raise ConfigError("config.ic: expected an object with a 'kind' key")
        if ic["kind"] not in IC_KINDS:
            raise ConfigError(f"config.ic.kind: unknown kind {ic['kind']!r}; expected one of {IC_KINDS}")
        params = ic.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("config.ic.params: expected an object")
        seed = ic.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
            raise ConfigError("config.ic.seed: expected a nonnegative integer")
        dealias = d.get("dealias", True)
        if not isinstance(dealias, bool):
            raise ConfigError("config.dealias: expected true or false")
        cadence = d.get("cadence", 1)
        if not isinstance(cadence, int) or isinstance(cadence, bool) or cadence < 1:
            raise ConfigError("config.cadence: expected an integer >= 1")
        snaps = d.get("snapshots", [])
        if not isinstance(snaps, list):
            raise ConfigError("config.snapshots: expected a list of times")
        snaps = tuple(sorted(_num(s, "snapshots[]", allow_zero=True) for s in snaps))
        if any(s > t_end + 1e-12 for s in snaps):
            raise ConfigError("config.snapshots: times must not exceed t_end")
        out_dir = d.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("config.out_dir: expected a string path")
        diag = d.get("diagnostics", {})
        if not isinstance(diag, dict):
            raise ConfigError("config.diagnostics: expected an object")
        heat_only = d.get("heat_only", False)
        if not isinstance(heat_only, bool):
            raise ConfigError("config.heat_only: expected true or false")
        from .diagnostics import RecordOptions
        RecordOptions.from_config(diag)
        return cls(grid, dt, t_end, {"kind": ic["kind"], "params": params, "seed": seed},
                   dealias, cadence, snaps, out_dir, diag, heat_only)

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: malformed JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from None
        return cls.from_dict(data)


def _num(x, name, allow_zero=False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"config.{name}: expected a finite number")
    if x < 0 or (x == 0 and not allow_zero):
        raise ConfigError(f"config.{name}: must be {'>= 0' if allow_zero else '> 0'}")
    return float(x)


# ------------------------------------------------------------------ state

@dataclass
class SolverState:
    t: float
    u: VectorField
    p: ScalarField | None = None

    def pressure(self, dealias: bool = True) -> ScalarField:
        if self.p is None:
            self.p = pressure_solve(self.u, dealias)
        return self.p


# ------------------------------------------------------------------ initial data

def _finish(grid: GridSpec, uh: np.ndarray, dealias: bool = True) -> VectorField:
    """Project, band-limit, remove the mean and make the field exactly real."""
    uh = leray_project_hat(grid, uh)
    if dealias:
        uh = uh * grid.wavenumbers().dealias[None]
    uh[:, 0, 0, 0] = 0.0
    u = inverse(grid, uh)
    return VectorField(grid, spectral=forward(grid, u))


def initial_condition(kind: str, params: dict | None, grid: GridSpec, seed: int | None = None) -> VectorField:
    """Divergence-free, mean-free initial velocity.

    shear           amplitude * (sin(m k1 x2), 0, 0)
    abc_beltrami    (A sin kz + C cos ky, B sin kx + A cos kz, C sin ky + B cos kx), k = m k1
    taylor_green    amplitude * (sin x cos y cos z, -cos x sin y cos z, 0) at wavenumber m k1
    random_divfree  Gaussian coefficients with shell spectrum k^4 exp(-2 (k/k0)^2),
                    projected, 2/3-band-limited and scaled to the requested rms
    zero            identically zero

    Here k1 = 2 pi / L is the fundamental wavenumber.
    """
    params = dict(params or {})
    k1 = 2 * math.pi / grid.length
    x, y, z = grid.coordinates()
    if kind == "zero":
        return VectorField(grid, physical=np.zeros((3, *grid.shape)))
    if kind == "shear":
        a = float(params.get("amplitude", 1.0))
        k = k1 * int(params.get("mode", 1))
        u = np.stack([a * np.sin(k * y), np.zeros_like(y), np.zeros_like(y)])
        return VectorField(grid, physical=u)
    if kind == "abc_beltrami":
        A, B, C = (float(params.get(c, 1.0)) for c in "ABC")
        k = k1 * int(params.get("mode", 1))
        u = np.stack([A * np.sin(k * z) + C * np.cos(k * y),
                      B * np.sin(k * x) + A * np.cos(k * z),
                      C * np.sin(k * y) + B * np.cos(k * x)])
        return VectorField(grid, physical=u)
    if kind == "taylor_green":
        a = float(params.get("amplitude", 1.0))
        k = k1 * int(params.get("mode", 1))
        u = a * np.stack([np.sin(k * x) * np.cos(k * y) * np.cos(k * z),
                          -np.cos(k * x) * np.sin(k * y) * np.cos(k * z),
                          np.zeros_like(x)])
        return VectorField(grid, physical=u)
    if kind == "random_divfree":
        k0 = float(params.get("k0", 2.0))
        rms = float(params.get("rms", 1.0))
        if k0 <= 0 or rms < 0:
            raise ValueError("random_divfree needs k0 > 0 and rms >= 0")
        rng = np.random.default_rng(seed)
        wn = grid.wavenumbers()
        kmag = np.sqrt(wn.k2)
        # shell spectrum E(k) ~ k^4 exp(-2(k/k0)^2) spread over ~k^2 modes per shell
        amp = kmag * np.exp(-(kmag / k0) ** 2)
        shape = (3, *grid.spectral_shape)
        coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * amp[None]
        u = _finish(grid, coef)
        current = math.sqrt(np.mean(u.physical ** 2))
        if current == 0:
            return u
        return _finish(grid, u.spectral * (rms / current))
    raise ValueError(f"unknown initial condition kind {kind!r}; expected one of {IC_KINDS}")


def exact_solution(kind: str, params: dict | None, grid: GridSpec, t: float) -> VectorField | None:
    """Closed-form solution for shear and Beltrami data (pure exponential decay)."""
    if kind not in ("shear", "abc_beltrami", "zero"):
        return None
    f = initial_condition(kind, params, grid)
    return heat_evolve_torus(f, t)


# ------------------------------------------------------------------ dynamics

def nonlinear_hat(grid: GridSpec, uh: np.ndarray, dealias: bool = True) -> np.ndarray:
    return leray_project_hat(grid, convective_hat(grid, uh, dealias))


def nonlinear_term(u: VectorField, dealias: bool = True) -> VectorField:
    """P(u.grad u): physical products, spectral derivatives, 2/3 rule, Leray projection."""
    return VectorField(u.grid, spectral=nonlinear_hat(u.grid, u.spectral, dealias))


class Stepper:
    """Integrating-factor RK4 with cached multipliers and transform plans.

    With dealiasing on, the stage arithmetic runs on the retained 2/3-rule
    block of coefficients only (about a third of the half spectrum); the
    block is padded with zeros for the inverse transform and cropped after
    the forward one, which is exactly the masked computation.
    """

    _PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    _ROWS = ((0, 1, 2), (1, 3, 4), (2, 4, 5))   # row i of the symmetric product matrix

    def __init__(self, grid: GridSpec, dt: float, dealias: bool = True, linear: bool = False):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.dt, self.dealias, self.linear = grid, dt, dealias, linear
        n = grid.n
        wn = grid.wavenumbers()
        if dealias:
            m = np.fft.fftfreq(n, 1.0 / n)
            pos = int(np.sum((m >= 0) & (np.abs(m) < n / 3.0)))
            neg = int(np.sum((m < 0) & (np.abs(m) < n / 3.0)))
            nz = int(np.sum(np.fft.rfftfreq(n, 1.0 / n) < n / 3.0))
        else:
            pos, neg, nz = n // 2 + 1, n // 2 - 1, n // 2 + 1
        # (block slice, full-array slice) pairs along x and y
        self._blocks = [((slice(0, pos), slice(0, pos)), (slice(pos, pos + neg), slice(n - neg, n)))]
        self._nz = nz
        self.block_shape = (pos + neg, pos + neg, nz)
        self.kd = tuple(self._crop(np.broadcast_to(k, grid.spectral_shape)) for k in wn.kd)
        mag = np.sqrt(self._crop(wn.kd2))
        safe = np.where(mag > 0, mag, 1.0)
        self.unit = tuple(np.where(mag > 0, k / safe, 0.0) for k in self.kd)
        k2 = self._crop(wn.k2)
        self.e_full = np.exp(-k2 * dt)
        self.e_half = np.exp(-k2 * dt / 2)
        self.plan = TransformPlan(n, 6, 3) if not linear else None

    def _pairs(self):
        for a, A in self._blocks[0]:
            for b, B in self._blocks[0]:
                yield a, A, b, B

    def _crop(self, full: np.ndarray) -> np.ndarray:
        lead = full.shape[:-3]
        out = np.empty((*lead, *self.block_shape), dtype=full.dtype)
        nz = self._nz
        for a, A, b, B in self._pairs():
            out[..., a, b, :] = full[..., A, B, :nz]
        return out

    def _pad_into(self, dest: np.ndarray, block: np.ndarray):
        dest.fill(0)
        nz = self._nz
        for a, A, b, B in self._pairs():
            dest[..., A, B, :nz] = block[..., a, b, :]

    def restrict(self, uh: np.ndarray) -> np.ndarray:
        return self._crop(uh)

    def extend(self, w: np.ndarray) -> np.ndarray:
        out = np.empty((w.shape[0], *self.grid.spectral_shape), dtype=np.complex128)
        self._pad_into(out, w)
        return out

    def rhs(self, w: np.ndarray) -> np.ndarray:
        """-P(u.grad u) on the working block."""
        if self.linear:
            return np.zeros_like(w)
        plan = self.plan
        self._pad_into(plan.spec_in, w)
        u = plan.inverse()
        pr = plan.real_in
        for m, (i, j) in enumerate(self._PAIRS):
            np.multiply(u[i], u[j], out=pr[m])
        ph = self._crop(plan.forward())
        ph *= 1.0 / self.grid.n ** 3
        kx, ky, kz = self.kd
        c = [kx * ph[r[0]] + ky * ph[r[1]] + kz * ph[r[2]] for r in self._ROWS]
        ex, ey, ez = self.unit
        s = ex * c[0] + ey * c[1] + ez * c[2]
        out = np.empty_like(w)
        out[0] = -1j * (c[0] - ex * s)
        out[1] = -1j * (c[1] - ey * s)
        out[2] = -1j * (c[2] - ez * s)
        return out

    def advance_block(self, w: np.ndarray) -> np.ndarray:
        dt, E, Eh = self.dt, self.e_full, self.e_half
        k1 = self.rhs(w)
        k2 = self.rhs(Eh * (w + 0.5 * dt * k1))
        k3 = self.rhs(Eh * w + 0.5 * dt * k2)
        k4 = self.rhs(E * w + dt * Eh * k3)
        out = E * w + (dt / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)
        out[:, 0, 0, 0] = 0.0
        return out

    def advance(self, uh: np.ndarray) -> np.ndarray:
        """One step on full half-spectrum coefficients (modes outside the block are dropped)."""
        return self.extend(self.advance_block(self.restrict(uh)))


def _check_finite(uh: np.ndarray, t: float):
    s = float(np.max(np.abs(uh)))
    if not math.isfinite(s):
        raise NumericalBreakdown(t, "non-finite coefficients")
    if s > BREAKDOWN_SUP:
        raise NumericalBreakdown(t, f"coefficient magnitude {s:.3e} above {BREAKDOWN_SUP:g}")


def step(state: SolverState, dt: float, dealias: bool = True, stepper: Stepper | None = None) -> SolverState:
    """Advance one integrating-factor RK4 step."""
    st = stepper if stepper is not None else Stepper(state.u.grid, dt, dealias)
    uh = st.advance(state.u.spectral)
    t = state.t + dt
    _check_finite(uh, t)
    return SolverState(t, VectorField(state.u.grid, spectral=uh))


# ------------------------------------------------------------------ trajectories

@dataclass
class Trajectory:
    config: SimConfig | None
    initial: VectorField
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)      # time -> VectorField
    breakdown: dict | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def append(self, rec):
        if self.records and not rec.time > self.records[-1].time:
            raise ValueError("trajectory times must increase strictly")
        self.records.append(rec)


def simulate(config: SimConfig, progress: Callable | None = None, write: bool = True) -> Trajectory:
    """Run the step loop, record diagnostics at the cadence and store snapshots.

    A numerical breakdown stops the loop; the partial trajectory is returned
    with ``breakdown`` describing the event.  When ``config.out_dir`` is set
    and ``write`` is true the output files are written.
    """
    from . import diagnostics

    grid = config.grid
    f = initial_condition(config.ic["kind"], config.ic.get("params"), grid, config.ic.get("seed"))
    traj = Trajectory(config, f)
    opts = diagnostics.RecordOptions.from_config(config.diagnostics)
    state = SolverState(0.0, f)
    stepper = Stepper(grid, config.dt, config.dealias, linear=config.heat_only)
    snap_steps = {int(round(s / config.dt)): s for s in config.snapshots}
    prev = None
    nrec = 0

    def take(state, prev, nrec):
        full = nrec % opts.norm_cadence == 0
        rec = diagnostics.record(state, prev, opts, full=full, dealias=config.dealias)
        traj.append(rec)
        return rec

    prev = take(state, prev, nrec)
    nrec += 1
    if 0 in snap_steps:
        traj.snapshots[0.0] = f
    w = stepper.restrict(f.spectral)
    for n in range(1, config.steps + 1):
        t = n * config.dt
        try:
            w = stepper.advance_block(w)
            _check_finite(w, t)
        except NumericalBreakdown as exc:
            traj.breakdown = {"t": exc.t, "reason": exc.reason, "last_record": prev.time}
            break
        if n % config.cadence == 0 or n == config.steps or n in snap_steps:
            state = SolverState(t, VectorField(grid, spectral=stepper.extend(w)))
            if n in snap_steps:
                traj.snapshots[t] = state.u
            if n % config.cadence == 0 or n == config.steps:
                prev = take(state, prev, nrec)
                nrec += 1
                if not all(math.isfinite(v) for v in prev.scalars().values() if v is not None):
                    traj.breakdown = {"t": t, "reason": "non-finite diagnostics", "last_record": t}
                    break
        if progress is not None:
            progress(n, t)
    if write and config.out_dir:
        diagnostics.write_outputs(traj, config.out_dir)
    return traj


def duhamel_residual(traj: Trajectory, t: float, dealias: bool = True) -> float:
    """|| u(t) - e^{t Lap} f + int_0^t e^{(t-s) Lap} P(u.grad u)(s) ds || / ||u(t)||.

    The time integral uses the trapezoidal rule over the stored snapshots
    in [0, t]; the snapshot at t itself must be present.
    """
    times = sorted(s for s in traj.snapshots if s <= t + 1e-12)
    if t == 0:
        return 0.0
    if len(times) < 2 or abs(times[0]) > 1e-12 or abs(times[-1] - t) > 1e-9:
        raise ValueError("insufficient snapshots: need snapshots at 0 and at t")
    grid = traj.initial.grid
    k2 = grid.wavenumbers().k2[None]
    integral = np.zeros((3, *grid.spectral_shape), dtype=np.complex128)
    vals = [np.exp(-k2 * (t - s)) * nonlinear_hat(grid, traj.snapshots[s].spectral, dealias)
            for s in times]
    for a, b, va, vb in zip(times[:-1], times[1:], vals[:-1], vals[1:]):
        integral += 0.5 * (b - a) * (va + vb)
    u_t = traj.snapshots[times[-1]]
    resid = u_t.spectral - np.exp(-k2 * t) * traj.initial.spectral + integral
    num = lq_norm(VectorField(grid, spectral=resid), 2)
    den = lq_norm(u_t, 2)
    return num / den if den > 0 else num
