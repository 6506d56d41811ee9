"""End-to-end tests for the command line front end."""

import csv
import json

import pytest

from imkit.cli import main
from imkit.const import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK


def _rows(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_plausibility_gaussian_mean(tmp_path):
    out = tmp_path / "pl.csv"
    code = main(
        ["plausibility", "--model", "gaussian-mean", "--x", "0", "--grid=-3:3:601", "--output", str(out)]
    )
    assert code == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["theta_1", "pl"]
    assert len(rows) == 602
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["model"] == "gaussian-mean"
    assert summary["alpha"] == 0.05
    [(lo, hi)] = summary["region"]
    assert lo == pytest.approx(-1.959964, abs=0.01)
    assert hi == pytest.approx(1.959964, abs=0.01)
    assert summary["argmax"] == [pytest.approx(0.0, abs=1e-12)]


def test_plausibility_json_output(tmp_path):
    out = tmp_path / "pl.json"
    code = main(
        ["plausibility", "--x", "0.5", "--grid=-2:3:51", "--format", "json", "--output", str(out)]
    )
    assert code == EXIT_OK
    payload = json.loads(out.read_text())
    assert len(payload["pl"]) == 51
    assert max(payload["pl"]) == pytest.approx(1.0, abs=0.05)


def test_plausibility_errors(tmp_path):
    out = str(tmp_path / "pl.csv")
    assert main(["plausibility", "--grid=-3:3:61", "--output", out]) == EXIT_CONFIG_ERROR
    assert main(["plausibility", "--model", "poisson", "--x", "0", "--grid=-3:3:61"]) == EXIT_CONFIG_ERROR
    assert main(["plausibility", "--x", "0", "--grid", "3:1:10", "--output", out]) == EXIT_CONFIG_ERROR


def test_unknown_flag_exits_with_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["plausibility", "--bogus"])
    assert info.value.code == 2


def test_simulate_is_reproducible(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        args = ["simulate", "--model", "gaussian-mean", "--param", "n=5", "--seed", "7", "--output", str(out)]
        assert main(args) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    rows = _rows(first)
    assert rows[0] == ["x"]
    assert len(rows) == 6


def test_simulate_brownian_with_statistics(tmp_path):
    out, q_out = tmp_path / "y.csv", tmp_path / "q.csv"
    code = main(
        ["simulate", "--model", "brownian", "--param", "n=4", "--output", str(out), "--q-output", str(q_out)]
    )
    assert code == EXIT_OK
    assert _rows(out)[0] == ["y"]
    assert len(_rows(out)) == 6
    assert len(_rows(q_out)) == 5


def test_simulated_brownian_data_feed_plausibility(tmp_path):
    y = tmp_path / "y.csv"
    assert main(["simulate", "--model", "brownian", "--param", "n=6", "--output", str(y)]) == EXIT_OK
    out = tmp_path / "ratio.csv"
    code = main(
        [
            "plausibility", "--model", "brownian-ratio", "--param", "n=6", "--data", str(y),
            "--grid", "0.01:5:50", "--n-draws", "20000", "--output", str(out),
        ]
    )
    assert code == EXIT_OK
    assert len(_rows(out)) == 51


def test_validity_reports(tmp_path):
    out = tmp_path / "validity.json"
    assert main(["validity", "--n-sim", "2000", "--output", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["pass"] is True
    assert report["n_sim"] == 2000
    assert report["theta_true"] == [0.0]
    assert report["ks_one_sided"] <= report["critical_value"]

    narrow = tmp_path / "narrow.json"
    code = main(["validity", "--n-sim", "2000", "--prs-scale", "0.5", "--output", str(narrow)])
    assert code == EXIT_OK
    assert json.loads(narrow.read_text())["pass"] is False


def test_validity_rejects_zero_simulations(tmp_path):
    assert main(["validity", "--n-sim", "0", "--output", str(tmp_path / "v.json")]) == EXIT_CONFIG_ERROR


def test_validity_csv_report(tmp_path):
    out = tmp_path / "validity.csv"
    assert main(["validity", "--n-sim", "1000", "--format", "csv", "--output", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["key", "value"]
    assert ["pass", "true"] in rows


def test_characteristics_brownian(tmp_path):
    out = tmp_path / "eta.csv"
    code = main(
        [
            "characteristics", "--model", "brownian", "--param", "n=5", "--sample-size", "5",
            "--tol", "1e-5", "--output", str(out),
        ]
    )
    assert code == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["u_1", "u_2", "u_3", "u_4", "u_5", "invariant_u3", "invariant_u4", "invariant_u5"]
    assert len(rows) == 6
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["certified"] is True
    assert len(summary["variables"]) == 3


def test_characteristics_user_field(tmp_path):
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"field": [["u1"]], "u0": [1.0]}))
    out = tmp_path / "trajectory.csv"
    assert main(["characteristics", "--field-file", str(field), "--output", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["tau_1", "u_1"]
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["half_width"] > 0


def test_characteristics_unbounded_field(tmp_path):
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"field": [["log(u1)"]], "u0": [0.5]}))
    code = main(["characteristics", "--field-file", str(field), "--output", str(tmp_path / "t.csv")])
    assert code == EXIT_NUMERICAL_ERROR


def test_classify_catalog_model(tmp_path):
    out = tmp_path / "classify.json"
    code = main(
        [
            "classify", "--model", "gaussian-location-scale", "--u-range=-2:2",
            "--theta-range=-1:1", "--theta-range", "0.5:2", "--output", str(out),
        ]
    )
    assert code == EXIT_OK
    assert json.loads(out.read_text())["verdict"] == "regular: location-scale"


def test_classify_expression_model(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"n": 2, "parameters": ["theta"], "map": "theta + u"}))
    out = tmp_path / "classify.json"
    code = main(
        [
            "classify", "--model", "expression", "--model-file", str(model), "--u-range", "0.5:2",
            "--theta-range", "0.5:2", "--output", str(out),
        ]
    )
    assert code == EXIT_OK
    assert json.loads(out.read_text())["verdict"] == "regular: location"


def test_classify_needs_coordinate_form(tmp_path):
    code = main(
        ["classify", "--model", "brownian", "--u-range", "0.5:2", "--theta-range", "0.5:2",
         "--output", str(tmp_path / "c.json")]
    )
    assert code == EXIT_CONFIG_ERROR


def test_config_file_drives_run(tmp_path):
    config = tmp_path / "run.json"
    out = tmp_path / "pl.csv"
    config.write_text(
        json.dumps({"model": "gaussian-mean", "x": [1.0], "grid": ["-2:4:61"], "output": str(out)})
    )
    assert main(["plausibility", "--config", str(config)]) == EXIT_OK
    assert len(_rows(out)) == 62
