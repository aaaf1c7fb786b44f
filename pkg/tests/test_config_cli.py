import csv
import json
import math

import pytest

from grazing.cli import compare_files, main
from grazing.config import RunManifest, parse_decimal, read_config, resolve
from grazing.errors import InvalidParameters
from grazing.model import a_graz


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- configuration ---------------------------------------------------------------------

def test_parse_decimal():
    assert parse_decimal(" 0.854 ") == 0.854
    assert parse_decimal("1e-3") == 1e-3
    for bad in ("nan", "inf", "-Infinity", "abc", ""):
        with pytest.raises(InvalidParameters):
            parse_decimal(bad)


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# oscillator\nzeta = 0.03\nomega = 0.8\nrel_tol = 1e-11\n")
    assert read_config(path) == {"zeta": 0.03, "omega": 0.8, "rel_tol": 1e-11}
    cfg = resolve(path, {"zeta": 0.05, "epsilon": None})
    assert cfg["zeta"] == 0.05            # flag beats file
    assert cfg["omega"] == 0.8            # file beats default
    assert cfg["epsilon"] == 0.9          # default survives a None flag


def test_unknown_config_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("zeta = 0.02\nspring = 3\n")
    with pytest.raises(InvalidParameters, match="spring"):
        read_config(path)


def test_manifest_round_trip(tmp_path):
    m = RunManifest("theory", {"zeta": 0.02}, ["a.json"], 1.5, args={"argv": ["theory"]})
    m.write(tmp_path / "m.json")
    assert RunManifest.read(tmp_path / "m.json") == m


# -- commands --------------------------------------------------------------------------

@pytest.mark.parametrize("p,n,sn,pd", [(1, 3, "-282.4", "12.15"), (2, 1, "-244.5", "21.35")])
def test_theory_command(tmp_path, capsys, p, n, sn, pd):
    code, out, _ = run(capsys, "theory", "--p", str(p), "--n", str(n), "--zeta", "0.02",
                       "--epsilon", "0.9", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert (f"{doc['coeffs']['c_sn']:.4g}", f"{doc['coeffs']['c_pd']:.4g}") == (sn, pd)
    assert doc["provenance"]["c_sn"] == "closed-form"
    saved = json.loads((tmp_path / f"theory_p{p}_n{n}.json").read_text())
    assert saved == doc
    manifest = RunManifest.read(tmp_path / "manifest_theory.json")
    assert manifest.command == "theory" and manifest.config["zeta"] == 0.02
    assert manifest.outputs == [str((tmp_path / f"theory_p{p}_n{n}.json").resolve())]


def test_theory_numeric_method(tmp_path, capsys):
    code, out, _ = run(capsys, "theory", "--p", "2", "--n", "1", "--method", "numeric",
                       "--out", str(tmp_path))
    doc = json.loads(out)
    assert code == 0
    assert doc["coeffs"]["c_sn"] == pytest.approx(-244.5, rel=1e-3)
    assert doc["provenance"]["xi_p"] == "numeric"


def test_missing_flag_is_a_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "theory", "--p", "2", "--out", str(tmp_path))
    assert code == 2 and "usage" in err


def test_bad_number_is_a_usage_error(tmp_path, capsys):
    code, _, _ = run(capsys, "theory", "--p", "2", "--n", "1", "--zeta", "nan", "--out", str(tmp_path))
    assert code == 2


def test_bad_config_key_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("gamma = 2\n")
    code, _, _ = run(capsys, "theory", "--p", "2", "--n", "1", "--config", str(cfg),
                     "--out", str(tmp_path))
    assert code == 2


def test_off_resonance_is_a_domain_error(tmp_path, capsys):
    code, _, err = run(capsys, "theory", "--p", "2", "--n", "1", "--omega", "0.85",
                       "--out", str(tmp_path))
    assert code == 3 and "NotAtResonance" in err


def test_resonance_outside_window_is_a_domain_error(tmp_path, capsys):
    code, _, _ = run(capsys, "curves", "--p", "2", "--n", "1", "--omega-min", "0.9",
                     "--out", str(tmp_path))
    assert code == 3


def test_numerical_failure_exit_code(tmp_path, capsys):
    # a search horizon shorter than one forcing period cannot reach the section
    cfg = tmp_path / "c.cfg"
    cfg.write_text("max_period_multiples = 0.3\n")
    code, _, err = run(capsys, "mps", "--p", "2", "--amp", "0.33", "--omega", "0.854",
                       "--config", str(cfg), "--out", str(tmp_path))
    assert code == 4 and "NoSectionCrossing" in err


def test_grazing_curve_export(tmp_path, capsys):
    code, _, _ = run(capsys, "curves", "--kind", "GZ", "--omega-min", "0.3", "--omega-max", "1.0",
                     "--points", "15", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "curve_GZ.csv").open()))
    assert len(rows) == 15
    for r in rows:
        assert float(r["amp"]) == pytest.approx(a_graz(float(r["omega"]), 0.02), abs=1e-15)


def test_curves_command(tmp_path, capsys):
    code, out, _ = run(capsys, "curves", "--p", "2", "--n", "1", "--threads", "2",
                       "--out", str(tmp_path))
    assert code == 0
    rep = json.loads(out)
    sn, pd = rep["curves"]["SN"], rep["curves"]["PD"]
    assert abs(sn["rel_deviation"]) < 0.05 and abs(pd["rel_deviation"]) < 0.05
    assert sn["mu_sign"] == -1 and pd["mu_sign"] == 1
    header = (tmp_path / "curve_SN_p2_n1.csv").read_text().splitlines()[0]
    assert header == "kind,p,mu,eta,amp,omega,y_imp,z_imp,residual"


def test_branch_command(tmp_path, capsys):
    code, out, _ = run(capsys, "branch", "--p", "2", "3", "--omega", "0.854", "--threads", "2",
                       "--out", str(tmp_path))
    assert code == 0
    rep = json.loads(out)
    ag = a_graz(0.854, 0.02)
    ev3 = {e["kind"]: e["amp"] for e in rep["branches"]["3"]["events"]}
    ev2 = {e["kind"]: e["amp"] for e in rep["branches"]["2"]["events"]}
    assert set(ev3) == {"SN", "GZ"} and set(ev2) == {"PD"}
    assert ev3["SN"] < ag < ev3["GZ"] < ev2["PD"]
    rows = list(csv.DictReader((tmp_path / "branch_p3.csv").open()))
    assert rows[0]["p"] == "3" and float(rows[0]["amp"]) < ag
    assert json.loads((tmp_path / "events_p2.json").read_text())[0]["kind"] == "PD"


def test_mps_command(tmp_path, capsys):
    code, out, _ = run(capsys, "mps", "--p", "2", "--amp", "0.33", "--omega", "0.854",
                       "--out", str(tmp_path))
    doc = json.loads(out)
    assert code == 0 and doc["admissible"] is True and doc["residual"] < 1e-10
    assert doc["amp"] == 0.33


def test_mps_amp_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("amp = 0.272\nomega = 0.854\n")
    code, out, _ = run(capsys, "mps", "--p", "3", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["admissible"] is True


def test_scan_command_and_manifest_recheck(tmp_path, capsys):
    argv = ["scan", "--omega", "0.854", "--amp-min", "0.26", "--amp-max", "0.33", "--points", "2",
            "--n-initial", "2", "--transient", "500", "--record", "20", "--out", str(tmp_path)]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    classes = json.loads(out)
    assert classes[0]["classes"] == ["periodic(q=1, m=0)"]
    assert classes[1]["classes"] == ["periodic(q=2, m=1)"]
    first = (tmp_path / "scan.csv").read_text()
    run(capsys, *argv)
    assert (tmp_path / "scan.csv").read_text() == first
    code, out, _ = run(capsys, "verify", "--manifest", str(tmp_path / "manifest_scan.json"),
                       "--out", str(tmp_path / "v"))
    assert code == 0 and "PASS" in out and "1/1 checks passed" in out


def test_manifest_recheck_detects_changes(tmp_path, capsys):
    run(capsys, "theory", "--p", "2", "--n", "1", "--out", str(tmp_path))
    target = tmp_path / "theory_p2_n1.json"
    doc = json.loads(target.read_text())
    doc["coeffs"]["c_sn"] *= 1.01
    target.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify", "--manifest", str(tmp_path / "manifest_theory.json"),
                       "--out", str(tmp_path / "v"))
    assert code == 1 and "FAIL" in out


def test_compare_files_tolerates_nulls(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps({"x": None, "y": [1.0, 2.0], "wall_time": 3}))
    b.write_text(json.dumps({"x": None, "y": [1.0, 2.0], "wall_time": 9}))
    assert compare_files(a, b) == 0.0
    b.write_text(json.dumps({"x": None, "y": [1.0, 2.5]}))
    assert math.isinf(compare_files(a, b))


def test_epsilon_one_warns_and_output_is_strict_json(tmp_path, capsys):
    code, out, _ = run(capsys, "theory", "--p", "1", "--n", "3", "--epsilon", "1",
                       "--out", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["warnings"]
    assert "NaN" not in out and "Infinity" not in out
    json.loads((tmp_path / "theory_p1_n3.json").read_text(),
               parse_constant=lambda c: pytest.fail(f"non-strict JSON constant {c}"))


def test_fast_verify_suite(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--fast", "--out", str(tmp_path))
    assert code == 0, out
    assert "FAIL" not in out
