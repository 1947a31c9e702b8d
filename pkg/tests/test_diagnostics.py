import json
import math

import numpy as np
import pytest

from nsbl import diagnostics as D
from nsbl.fields import INF
from nsbl.solver import ConfigError, SimConfig, simulate


def run(ic, n=16, dt=2e-3, t_end=0.1, cadence=1, **extra):
    cfg = SimConfig.from_dict({"grid": {"n": n}, "dt": dt, "t_end": t_end, "ic": ic,
                               "cadence": cadence, **extra})
    return simulate(cfg, write=False)


@pytest.fixture(scope="module")
def random_run():
    return run({"kind": "random_divfree", "params": {"rms": 1.0}, "seed": 2}, n=32)


@pytest.fixture(scope="module")
def shear_run():
    return run({"kind": "shear"}, dt=1e-2, t_end=1.2, cadence=2)


def test_energy_balance(random_run):
    eb = D.energy_balance(random_run)
    assert eb.max_residual < 1e-4
    assert eb.dissipation_ok and eb.monotone_ok
    assert eb.bound == pytest.approx(0.5 * random_run.records[0].norm(0, 2) ** 2)


def test_accumulators_match_whole_trajectory_integral(random_run):
    full = D.recompute_accumulators(random_run)
    for key, series in full.items():
        got = np.array([r.accumulators[key] for r in random_run.records])
        assert np.allclose(got, series, rtol=1e-12, atol=1e-14)


def test_enstrophy_inequality_holds(random_run):
    checks = D.enstrophy_inequality(random_run)
    assert len(checks) == len(random_run.records) - 2
    assert all(c.passed for c in checks)
    assert all(c.tolerance >= 0 for c in checks)


def test_enstrophy_cadence_error():
    traj = run({"kind": "shear"}, dt=0.05, t_end=1.0, cadence=4)
    with pytest.raises(D.CadenceError, match="cadence"):
        D.enstrophy_inequality(traj)


def test_vorticity_identities(random_run):
    for rec in random_run.records:
        assert rec.norm(1, 2) == pytest.approx(rec.vorticity_l2, rel=1e-10)
        assert rec.divergence_sup < 1e-10
    assert all(c.passed for c in D.vorticity_l1(random_run))
    acc = D.bkm_and_prodi_serrin(random_run)
    assert acc.exponential_ok
    assert np.all(np.diff(acc.bkm) > 0)
    adm = {(p["q"], p["r"]): p["admissible"] for p in acc.prodi_serrin}
    assert adm == {(INF, 2.0): True, (4.0, 8.0): True, (6.0, 4.0): True}
    json.dumps(acc.to_dict())


def test_prodi_serrin_admissibility():
    assert D.prodi_serrin_admissible(6.0, 4.0) and D.prodi_serrin_admissible(INF, 2.0)
    assert not D.prodi_serrin_admissible(4.0, 4.0)


def test_shear_product_certificate(shear_run):
    rep = D.certificates(shear_run)
    e = rep.get("global-regularity-product")
    crossing = 0.5 * math.log(4 * math.pi ** 3 / (4 * math.pi * math.sqrt(2)))
    cadence_dt = 2e-2
    assert e.status == "fired"
    assert crossing <= e.time <= crossing + cadence_dt
    assert e.values["product"] < D.PRODUCT_THRESHOLD
    # the record before the firing one is still above the threshold
    before = [r for r in shear_run.records if r.time < e.time][-1]
    assert before.product >= D.PRODUCT_THRESHOLD


def test_other_certificates(shear_run):
    rep = D.certificates(shear_run)
    horizon = rep.get("regularity-horizon")
    assert horizon.values["horizon"] == pytest.approx(math.pi ** 4 / 8, rel=1e-12)
    assert horizon.status == "not-fired"
    window = rep.get("smooth-window")
    assert window.values["tau"] == pytest.approx(1 / (2 * math.pi ** 4), rel=1e-12)
    assert rep.get("eta-smallness-q3").status == "inapplicable"
    rep = D.certificates(shear_run, eta={3.0: 1e6})
    assert rep.get("eta-smallness-q3").status == "fired"
    assert rep.get("eta-initial-l3").status == "fired"
    d = json.loads(rep.to_json())
    assert {c["id"] for c in d["certificates"]} >= {"global-regularity-product", "smooth-window"}
    with pytest.raises(KeyError):
        rep.get("nope")


def test_eta_functional_exponents():
    # q = 6: a = 6/12, b = 6/12
    assert D.eta_functional(4.0, 9.0, 6.0) == pytest.approx(2.0 * 3.0)
    assert D.eta_functional(8.0, 27.0, INF) == pytest.approx(4.0 * 3.0)
    assert D.eta_functional(5.0, 7.0, 3.0) == pytest.approx(7.0)


def test_exponent_table():
    fixtures = {
        "u-lq": [(6.0, 0.25), (INF, 0.5), (4.0, 0.125)],
        "du-lq-low": [(2.0, 0.25), (1.5, 0.0), (2.5, 0.4)],
        "du-lq-high": [(6.0, 2 / 3), (INF, 5 / 6), (4.0, 14 / 24)],
        "d2u-lq": [(1.0, 0.0), (2.0, 0.75), (1.2, 0.25)],
        "ratio-du-lq": [(2.0, 0.25), (3.0, 0.125), (6.0, 0.0)],
    }
    for key, pts in fixtures.items():
        for q, want in pts:
            assert D.EXPONENT_TABLE[key](q) == pytest.approx(want, rel=1e-14, abs=1e-15)
    assert D.EXPONENT_TABLE["ratio-lr-lq"](3.0, INF) == pytest.approx(1 / 3)
    assert D.EXPONENT_TABLE["ratio-lr-lq"](3.0, 6.0) == pytest.approx(0.75 * 0.5 / 3)
    assert D.EXPONENT_TABLE["du-l3-eps"](0.1) == pytest.approx(0.4)


def test_envelopes():
    env = D.envelopes(2.0, 1, 1.0)
    assert env.constant == pytest.approx(math.sqrt(2 * math.pi * math.sqrt(2)), rel=1e-14)
    assert env.exponent == 0.25
    assert env(np.array([0.0]))[0] == pytest.approx(env.constant)
    assert np.isinf(env(np.array([1.0, 2.0]))).all()
    assert D.envelopes(INF, 0, 1.0, C_q=0.5).constant == pytest.approx(0.25)
    assert D.envelopes(6.0, 0, 1.0, C_q=1.0).constant == pytest.approx(3 / 48)
    assert D.ratio_envelope(3.0, INF, 1.0).exponent == pytest.approx(1 / 3)
    assert D.gradient_ratio_envelope(2.0, 1.0).exponent == pytest.approx(0.25)
    for args in ((2.0, 0, 1.0), (1.0, 1, 1.0), (3.0, 1, 1.0), (2.5, 2, 1.0), (3.0, 0, 0.0), (3.0, 4, 1.0)):
        with pytest.raises(ValueError):
            D.envelopes(*args)
    with pytest.raises(ValueError):
        D.ratio_envelope(4.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        D.gradient_ratio_envelope(8.0, 1.0)


@pytest.mark.parametrize("kappa", [0.25, 0.5, 5 / 6])
def test_fit_rate_recovers_synthetic(kappa):
    T = 1.3
    t = np.linspace(0.0, 1.25, 200)
    y = 2.5 * (T - t) ** (-kappa)
    fit = D.fit_rate((t, y))
    assert abs(fit.kappa_hat - kappa) < 1e-6
    assert abs(fit.t_hat - T) < 1e-6
    assert fit.log_constant == pytest.approx(math.log(2.5), abs=1e-5)


def test_fit_rate_rejects_bad_windows():
    t = np.linspace(0, 1, 50)
    with pytest.raises(D.NonMonotoneWindow):
        D.fit_rate((t, np.cos(t)))
    with pytest.raises(D.NonMonotoneWindow):
        D.fit_rate((t, np.exp(t)), window=(0.0, 0.1))
    with pytest.raises(ValueError):
        D.fit_rate((t, np.exp(t[:-1])))


def test_ratio_monitors(random_run):
    mon = D.ratio_monitors(random_run)
    s = mon["lr_over_lq_q3_rinf"]
    assert all(s.check)
    assert s.params["gamma"] == pytest.approx(1 / 3)
    assert len(mon["times"]) == len(s.values)
    assert mon["h"].values[0] > 0
    with pytest.raises(ValueError):
        D.ratio_monitors(random_run, pairs=((4.0, 3.0),))


def test_ratio_monitors_zero_field():
    traj = run({"kind": "zero"}, dt=1e-2, t_end=0.05)
    mon = D.ratio_monitors(traj)
    assert all(v is None for v in mon["lr_over_lq_q3_rinf"].values)
    assert all(v is None for v in mon["h"].values)


def test_csv_round_trip(random_run, tmp_path):
    p = tmp_path / "d.csv"
    D.write_csv(random_run, p)
    text = p.read_text().splitlines()
    assert text[0] == f"# {D.CSV_VERSION}"
    cols, data = D.read_csv(p)
    assert data.shape == (len(random_run.records), len(cols))
    for row, rec in zip(data, random_run.records):
        s = rec.scalars()
        for c, v in zip(cols, row):
            if s.get(c) is None:
                assert math.isnan(v)
            else:
                assert v == s[c]


def test_csv_is_deterministic(tmp_path):
    ic = {"kind": "random_divfree", "seed": 7}
    a, b = run(ic, t_end=0.02), run(ic, t_end=0.02)
    D.write_csv(a, tmp_path / "a.csv")
    D.write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_core_and_full_records():
    traj = run({"kind": "random_divfree", "seed": 1}, t_end=0.02,
               diagnostics={"norm_cadence": 5})
    flags = [r.full for r in traj.records]
    assert flags == [i % 5 == 0 for i in range(len(flags))]
    core = traj.records[1]
    assert (2, 2.0) not in core.norms and not core.pressure
    assert (3, 2.0) in traj.records[0].norms and traj.records[0].pressure


@pytest.mark.parametrize("bad", [
    {"norm_cadence": 1.5}, {"h_exponent": "inf"}, {"prodi_serrin": [[4, "inf"]]},
    {"prodi_serrin": [4]}, {"eta": {"2": 1.0}}, {"eta": {"3": -1}}, {"t_candidate": 0},
    {"colour": 1},
])
def test_record_options_validation(bad):
    with pytest.raises(ConfigError):
        D.RecordOptions.from_config(bad)


def test_summary(random_run):
    s = D.summary(random_run)
    assert s["records"] == len(random_run.records)
    assert s["dissipation_ok"] and s["exponential_bound_ok"] and s["vorticity_l1_ok"]
    assert s["breakdown"] is None


def test_fourier_l1_monitor(random_run, shear_run):
    # unit shear: two coefficients of modulus 1/2, so the sum equals the sup norm
    assert shear_run.records[0].fourier_l1 == pytest.approx(1.0, rel=1e-14)
    for rec in random_run.records:
        assert rec.norm(0, INF) <= rec.fourier_l1 * (1 + 1e-12)
    assert "fourier_l1" in random_run.records[0].scalars()
