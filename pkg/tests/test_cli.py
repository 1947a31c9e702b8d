import csv
import io
import json
import math

import pytest

from nsbl import cli


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def gronwall(capsys, *flags):
    code = cli.main(["gronwall", *flags])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def test_gronwall_singular(capsys):
    code, res, _ = gronwall(capsys, "--A", "1", "--B", "1", "--kappa", "0.5", "--T", "1")
    assert code == 0
    assert res["mode"] == "singular-gronwall"
    assert res["value"] == pytest.approx(2 * math.exp(8), rel=1e-14)


def test_gronwall_envelope_constant(capsys):
    K = 1 / (16 * math.pi ** 2)
    code, res, _ = gronwall(capsys, "--w0", "1", "--K", repr(K), "--alpha", "3")
    assert code == 0
    c = res["constants"]["envelope_constant"]
    assert c == pytest.approx(2 * math.pi * math.sqrt(2), rel=1e-12)
    assert math.sqrt(c) == pytest.approx(2.981, abs=1e-3)
    # the rounded K quoted alongside the formula lands on the same constant to 4 digits
    code, res, _ = gronwall(capsys, "--w0", "1", "--K", "0.0063326", "--alpha", "3")
    assert res["constants"]["envelope_constant"] == pytest.approx(8.886, abs=1e-3)


def test_gronwall_threshold_and_generalized(capsys):
    code, res, _ = gronwall(capsys, "--w0", "1", "--B", "1", "--alpha", "2", "--kappa", "0.5")
    assert code == 0 and res["mode"] == "integral-threshold"
    assert res["constants"]["c_lambda"] == pytest.approx(0.125, rel=1e-13)
    code, res, _ = gronwall(capsys, "--A", "1", "--term", "1,0,0.5", "--term", "0.5,0.25,0.25", "--T", "1")
    assert code == 0 and res["mode"] == "generalized-gronwall"


@pytest.mark.parametrize("flags,needle", [
    (["--alpha", "1"], "incomplete"),
    (["--w0", "1", "--K", "1", "--alpha", "1"], "domain"),
    (["--A", "1", "--B", "1", "--kappa", "0.5"], "incomplete"),
    (["--A", "1", "--w0", "1"], "engine"),
    ([], "no flags"),
    (["--A", "1", "--term", "1,0.6,0.5", "--T", "1"], "alpha+beta>=1"),
])
def test_gronwall_usage_errors(capsys, flags, needle):
    code, _, err = gronwall(capsys, *flags)
    assert code == cli.EXIT_USAGE
    assert needle in err


def test_select_engine_ambiguity(monkeypatch):
    monkeypatch.setitem(cli.ENGINES, "twin", ({"A", "B", "kappa", "T"}, set()))
    with pytest.raises(cli.UsageError, match="ambiguous"):
        cli.select_engine({"A", "B", "kappa", "T"})


def test_gronwall_manifest(capsys, tmp_path):
    m = tmp_path / "g.json"
    assert cli.main(["gronwall", "--A", "1", "--B", "1", "--kappa", "0.5", "--T", "1",
                     "--manifest", str(m)]) == 0
    d = json.loads(m.read_text())
    assert d["command"] == "gronwall" and d["exit_status"] == 0


def test_bad_arguments_exit_2(capsys):
    assert cli.main(["nosuch"]) == 2
    assert cli.main(["gronwall", "--term", "1,2"]) == 2


def shear_config(out):
    return {"grid": {"n": 16}, "dt": 1e-2, "t_end": 1.2, "ic": {"kind": "shear"},
            "cadence": 2, "snapshots": [1.2], "out_dir": str(out)}


def test_simulate_shear(capsys, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", shear_config(tmp_path / "run"))
    assert cli.main(["simulate", cfg]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["breakdown"] is None
    run = tmp_path / "run"
    names = sorted(p.name for p in run.iterdir())
    assert names == ["certificates.json", "diagnostics.csv", "manifest.json", "snapshot_t1.200000.nsf"]
    certs = json.loads((run / "certificates.json").read_text())
    prod = next(c for c in certs["certificates"] if c["id"] == "global-regularity-product")
    crossing = 0.5 * math.log(4 * math.pi ** 3 / (4 * math.pi * math.sqrt(2)))
    assert prod["status"] == "fired" and crossing <= prod["time"] <= crossing + 0.02
    man = json.loads((run / "manifest.json").read_text())
    assert man["exit_status"] == 0 and man["command"] == "simulate"
    assert set(man["outputs"]) == set(names)
    assert {"numpy", "scipy", "python", "nsbl"} <= set(man["versions"])
    assert man["started"] <= man["finished"]


def test_simulate_out_dir_override(capsys, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", shear_config(tmp_path / "ignored") | {"t_end": 0.1, "snapshots": []})
    assert cli.main(["simulate", cfg, "--out-dir", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "diagnostics.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_simulate_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert cli.main(["simulate", str(bad)]) == 2
    assert "malformed JSON" in capsys.readouterr().err
    cfg = write_json(tmp_path / "cfg.json", {"grid": {"n": 16}, "dt": -1, "t_end": 1, "ic": {"kind": "zero"}})
    assert cli.main(["simulate", cfg]) == 2
    assert "config.dt" in capsys.readouterr().err
    assert cli.main(["simulate", str(tmp_path / "missing.json")]) == 2


def test_simulate_breakdown_exit_3(capsys, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {
        "grid": {"n": 16}, "dt": 0.5, "t_end": 20.0, "out_dir": str(tmp_path / "run"),
        "ic": {"kind": "random_divfree", "params": {"rms": 1e4}, "seed": 0}})
    assert cli.main(["simulate", cfg]) == cli.EXIT_BREAKDOWN
    assert "numerical breakdown" in capsys.readouterr().err
    run = tmp_path / "run"
    assert (run / "diagnostics.csv").exists() and (run / "certificates.json").exists()
    assert json.loads((run / "manifest.json").read_text())["exit_status"] == 3


def test_random_run_is_reproducible_and_replayable(capsys, tmp_path):
    base = {"grid": {"n": 16}, "dt": 1e-2, "t_end": 0.1, "ic": {"kind": "random_divfree", "seed": 7}}
    for name in ("a", "b"):
        cfg = write_json(tmp_path / f"{name}.json", base | {"out_dir": str(tmp_path / name)})
        assert cli.main(["simulate", cfg]) == 0
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    # replay straight from the manifest into a fresh directory
    man = str(tmp_path / "a" / "manifest.json")
    assert cli.main(["simulate", man, "--out-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "diagnostics.csv").read_bytes() == a


def test_verify_suites(capsys, tmp_path):
    rep = tmp_path / "g.json"
    assert cli.main(["verify", "gronwall", "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    assert "suite gronwall: PASS" in out
    d = json.loads(rep.read_text())
    assert d["suite"] == "gronwall" and all(c["passed"] for c in d["checks"])
    man = json.loads((tmp_path / "g.manifest.json").read_text())
    assert man["exit_status"] == 0 and man["outputs"] == [str(rep)]


def test_verify_usage_errors(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["verify", "nosuch"]) == 2
    assert "unknown suite" in capsys.readouterr().err
    assert cli.main(["verify", "inequalities", "--size", "0"]) == 2
    assert cli.main(["verify", "gronwall", "--size", "5"]) == 2
    assert not list(tmp_path.iterdir())


def test_verify_reports_failure(capsys, tmp_path, monkeypatch):
    from nsbl import suites

    def failing(**_):
        rep = suites.SuiteReport("exact", [])
        rep.add("forced", 1.0, 0.5, False)
        return rep

    monkeypatch.setitem(suites.SUITES, "exact", failing)
    assert cli.main(["verify", "exact", "--report", str(tmp_path / "e.json")]) == cli.EXIT_FAIL
    assert "suite exact: FAIL" in capsys.readouterr().out


def test_verify_inequalities_csv(capsys, tmp_path):
    m = tmp_path / "m.json"
    code = cli.main(["verify-inequalities", "--size", "2", "--n", "16", "--manifest", str(m)])
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert code == 0
    assert rows[0] == ["id", "q", "r", "n", "lhs", "rhs", "ratio", "pass"]
    assert len(rows) > 2
    assert {r[7] for r in rows[1:]} <= {"true", "measured"}
    assert "gn-l3" in {r[0] for r in rows[1:]}
    assert json.loads(m.read_text())["seed"] == 0
    assert cli.main(["verify-inequalities", "--size", "0"]) == 2
