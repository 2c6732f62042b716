import csv
import io
import json

import numpy as np
import pytest

from sdid.cli import main
from sdid.core import CovariateKind, PanelDataset, SubgroupContrast
from sdid.errors import ConfigError, DataError
from sdid.estimators import EffectModEstimate, Method
from sdid.io import bin_covariate, dump_panel, emit_report, estimate_row, load_panel
from sdid.simlab import DgpSpec, LevelSpec, NoiseSpec

HAND = "unit_id,covariate,y_pre,y_post\n1,A,0,2\n2,A,1,3\n3,B,0,1\n4,B,2,3\n"


@pytest.fixture
def hand_csv(tmp_path):
    p = tmp_path / "hand.csv"
    p.write_text(HAND)
    return p


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_load_wide(tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,covariate,y_pre,y_post\n1,A,0,1\n2,B,1,1\n3,A,2,5\n")
    panel, report = load_panel(p)
    assert isinstance(panel, PanelDataset) and len(panel) == 3 and report.n_kept == 3


def test_load_long_two_periods(tmp_path):
    p = write(tmp_path, "l.csv", "unit_id,covariate,time,y\n1,A,0,1.5\n1,A,1,4\n2,B,1,2\n2,B,0,1\n")
    panel, _ = load_panel(p, treatment_time=1)
    assert isinstance(panel, PanelDataset)
    assert list(panel.y_pre) == [1.5, 1.0] and list(panel.y_post) == [4.0, 2.0]


def test_load_long_unbalanced(tmp_path):
    p = write(tmp_path, "l.csv", "unit_id,covariate,time,y\n1,A,0,1\n1,A,1,4\n2,B,0,1\n")
    with pytest.raises(DataError, match="'2'"):
        load_panel(p, treatment_time=1)


def test_load_missing_columns(tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,group,y_pre\n1,A,0\n")
    with pytest.raises(DataError, match=r"\['covariate', 'y_post'\]"):
        load_panel(p)


def test_load_unparseable_row_number(tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,covariate,y_pre,y_post\n1,A,0,1\n2,B,x,1\n")
    with pytest.raises(DataError, match="row 3"):
        load_panel(p)


def test_load_custom_covariate_and_continuous(tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,age,y_pre,y_post\n1,30.5,0,1\n2,41,1,1\n")
    panel, _ = load_panel(p, covariate="age", kind="continuous")
    assert panel.covariate_kind is CovariateKind.CONTINUOUS and list(panel.x) == [30.5, 41.0]


@pytest.mark.parametrize("kind", ["categorical", "continuous"])
def test_dump_load_round_trip(tmp_path, kind):
    g = np.random.default_rng(0)
    n = 50
    x = g.choice(["A", "B,C", 'q"uote'], n) if kind == "categorical" else g.normal(size=n) * 1e3
    panel = PanelDataset(tuple(f"id{i}" for i in range(n)), x, g.normal(size=n) / 3, g.normal(size=n) * 1e-7, kind)
    path = tmp_path / "dump.csv"
    dump_panel(panel, path)
    back, _ = load_panel(path, kind=kind)
    assert back.same_as(panel)


def test_bin_covariate():
    x = np.arange(12.0)
    panel = PanelDataset(tuple(map(str, range(12))), x, np.zeros(12), x, CovariateKind.CONTINUOUS)
    binned, edges = bin_covariate(panel, 3)
    assert binned.levels == ("bin1", "bin2", "bin3") and len(edges) == 2
    assert [list(binned.x).count(b) for b in binned.levels] == [4, 4, 4]
    with pytest.raises(ConfigError):
        bin_covariate(binned, 3)


def _minimal_report(result, command="estimate"):
    return {"tool": "sdid", "version": "0", "command": command, "result": result}


def test_emit_minimal_estimate_json():
    est = EffectModEstimate(SubgroupContrast("A", "B"), 1.0, Method.SUBGROUP_MEANS)
    doc = json.loads(emit_report(_minimal_report({"estimates": [estimate_row(est)]}), "json"))
    row = doc["result"]["estimates"][0]
    assert row["point"] == 1.0
    assert row["se"] is None and row["ci_lower"] is None and row["ci_upper"] is None


def test_emit_rejects_unknown_format():
    with pytest.raises(ConfigError):
        emit_report(_minimal_report({"estimates": []}), "xml")


def test_cli_estimate_hand(capsys, hand_csv):
    code, out, _ = run_cli(capsys, "estimate", "--data", hand_csv, "--contrast", "A,B", "--deterministic")
    assert code == 0
    doc = json.loads(out)
    est = doc["result"]["estimates"][0]
    assert est["point"] == 1.0 and est["n_a"] == 2 and est["n_b"] == 2
    assert doc["version"] and doc["seed"] == 0 and doc["config"]["contrast"] == ["A", "B"]
    assert "generated_at" not in doc
    assert doc["assumption_notes"] and est["assumption_notes"]


def test_cli_timestamp_only_without_deterministic(capsys, hand_csv):
    _, out, _ = run_cli(capsys, "estimate", "--data", hand_csv, "--contrast", "A,B")
    assert "generated_at" in json.loads(out)


def test_cli_deterministic_bytes(capsys, hand_csv, monkeypatch):
    args = ("estimate", "--data", hand_csv, "--contrast", "A,B", "--deterministic", "--bootstrap", "100",
            "--stratified", "--seed", "3")
    outs = []
    for threads in ("1", "4", "1"):
        monkeypatch.setenv("SDID_THREADS", threads)
        outs.append(run_cli(capsys, *args)[1])
    assert outs[0] == outs[1] == outs[2]


def test_cli_unknown_level_exit_2(capsys, hand_csv):
    code, out, err = run_cli(capsys, "estimate", "--data", hand_csv, "--contrast", "A,Z")
    assert code == 2 and out == ""
    assert "['A', 'B']" in err


@pytest.mark.parametrize(
    "args",
    [["estimate", "--contrast", "A,B"], ["estimate", "--data", "x.csv", "--contrast", "A"],
     ["estimate", "--data", "x.csv", "--contrast", "A,B", "--ci", "1.5"], ["frobnicate"]],
)
def test_cli_usage_errors_exit_1(capsys, args):
    with pytest.raises(SystemExit) as exc:
        code = main(args)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_cli_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, "estimate", "--data", tmp_path / "nope.csv", "--contrast", "A,B")
    assert code == 2 and "cannot read" in err


def test_cli_numerical_failure_exit_3(capsys, tmp_path):
    p = write(tmp_path, "c.csv", "unit_id,covariate,y_pre,y_post\n1,2,0,1\n2,2,0,2\n3,2,0,3\n")
    code, _, err = run_cli(capsys, "estimate", "--data", p, "--kind", "continuous", "--contrast", "2,2",
                           "--basis", "poly:1")
    assert code == 3 and "rank-deficient" in err


def test_cli_all_pairs_csv(capsys, tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,covariate,y_pre,y_post\n" + "".join(
        f"{i},{'ABC'[i % 3]},0,{i % 3 + (i % 2)}\n" for i in range(30)))
    code, out, _ = run_cli(capsys, "estimate", "--data", p, "--reference", "C", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["contrast"] for r in rows] == ["A vs C", "B vs C"]
    assert {"point", "se", "ci_lower", "ci_upper", "level", "method", "n_a", "n_b", "p_value"} <= set(rows[0])


def test_cli_text_has_caution(capsys, hand_csv):
    code, out, _ = run_cli(capsys, "estimate", "--data", hand_csv, "--contrast", "A,B", "--format", "text")
    assert code == 0 and "point=1" in out and "extremely strong and untestable" in out


def test_cli_continuous_with_bootstrap_and_bin(capsys, tmp_path):
    g = np.random.default_rng(1)
    x = g.uniform(0, 10, 200)
    body = "".join(f"u{i},{float(x[i])!r},0,{float(2 * x[i] + g.normal())!r}\n" for i in range(200))
    p = write(tmp_path, "c.csv", "unit_id,covariate,y_pre,y_post\n" + body)
    code, out, _ = run_cli(capsys, "estimate", "--data", p, "--kind", "continuous", "--contrast", "8,2",
                           "--basis", "poly:2", "--bootstrap", "200", "--deterministic")
    est = json.loads(out)["result"]["estimates"][0]
    assert code == 0 and est["point"] == pytest.approx(12.0, abs=1.0) and est["boot_se"] > 0
    assert est["se"] == est["boot_se"]
    code, out, _ = run_cli(capsys, "estimate", "--data", p, "--kind", "continuous", "--bin", "4",
                           "--contrast", "bin4,bin1", "--deterministic")
    doc = json.loads(out)
    assert code == 0 and doc["result"]["binning"]["bins"] == 4


def test_cli_pretrends(capsys, tmp_path):
    g = np.random.default_rng(2)
    lines = ["unit_id,covariate,time,y"]
    for i in range(60):
        lv = "A" if i < 30 else "B"
        for t in range(4):
            lines.append(f"{i},{lv},{t},{float(t + g.normal())!r}")
    p = write(tmp_path, "long.csv", "\n".join(lines) + "\n")
    code, out, _ = run_cli(capsys, "pretrends", "--data", p, "--treatment-time", "3", "--contrast", "A,B",
                           "--deterministic")
    doc = json.loads(out)["result"]
    assert code == 0 and len(doc["per_interval"]) == 2 and doc["joint_df"] == 2
    assert [e["period"] for e in doc["event_study"]] == [0, 1, 3]


def _dgp_file(tmp_path):
    spec = DgpSpec(levels=(LevelSpec("A", 0.5, alpha=1, beta=2), LevelSpec("B", 0.5, beta=1)), tau=3,
                   noise=NoiseSpec(sd_pre=1, sd_post=1), n=200, seed=4)
    return write(tmp_path, "dgp.json", spec.to_json())


def test_cli_simulate(capsys, tmp_path):
    cfg = _dgp_file(tmp_path)
    ledger, reps = tmp_path / "ledger.csv", tmp_path / "reps.csv"
    code, out, _ = run_cli(capsys, "simulate", "--config", cfg, "--reps", "20", "--seed", "1", "--deterministic",
                           "--ledger", ledger, "--reps-out", reps)
    doc = json.loads(out)["result"]
    assert code == 0 and doc["reps"] == 20 and doc["oracle"]["true_effect_modification"] == 1.0
    led = list(csv.DictReader(ledger.open()))
    assert len(led) == 200 and {"y1_untreated", "y1_treated"} <= set(led[0])
    assert len(list(csv.DictReader(reps.open()))) == 20
    code, out, _ = run_cli(capsys, "simulate", "--config", cfg, "--reps", "20", "--seed", "1", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and float(rows[0]["mean_estimate"]) == pytest.approx(doc["mean_estimate"])


def test_cli_simulate_deterministic_across_threads(capsys, tmp_path, monkeypatch):
    cfg = _dgp_file(tmp_path)
    args = ("simulate", "--config", cfg, "--reps", "6", "--seed", "2", "--bootstrap", "50", "--deterministic")
    monkeypatch.setenv("SDID_THREADS", "1")
    a = run_cli(capsys, *args)[1]
    monkeypatch.setenv("SDID_THREADS", "2")
    b = run_cli(capsys, *args)[1]
    assert a == b


def test_cli_validate_and_dump(capsys, tmp_path):
    p = write(tmp_path, "w.csv", "unit_id,covariate,y_pre,y_post\n1,A,0,1\n2,B,,1\n3,A,2,5\n")
    code, _, err = run_cli(capsys, "validate", "--data", p)
    assert code == 2 and "unit '2'" in err
    dump = tmp_path / "dump.csv"
    code, out, _ = run_cli(capsys, "validate", "--data", p, "--missing", "drop", "--dump-panel", dump,
                           "--deterministic")
    doc = json.loads(out)["result"]
    assert code == 0 and doc["n_kept"] == 2 and doc["dropped"][0]["unit_id"] == "2"
    assert doc["dropped"][0]["row"] == 3
    back, _ = load_panel(dump)
    assert back.unit_ids == ("1", "3")
