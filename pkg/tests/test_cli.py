import csv
import json

import numpy as np
import pytest

from wqte.cli import main
from wqte.data import ColumnSchema, load_csv, write_csv
from wqte.simlab import gen_dataset, parse_scenario, scenario_with


def run_cli(*argv) -> int:
    return main(list(argv))


class TestSimulate:
    def test_writes_dataset_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        code = run_cli("simulate", "--scenario", "binary-weak-d1-nointer-pareto5",
                       "--n", "2000", "--seed", "7", "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["y", "z", "x1"]
        assert len(rows) == 2001
        manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
        assert manifest["config"]["seed"] == 7
        assert manifest["truth"]["tau=0.95"]["qte"] == 1.0

    def test_deterministic_given_seed(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run_cli("simulate", "--scenario", "cat-weak-d1-nointer-pareto5",
                           "--n", "500", "--seed", "11", "--out", str(out)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_scenario_usage_error(self, tmp_path, capsys):
        code = run_cli("simulate", "--scenario", "bogus", "--out",
                       str(tmp_path / "x.csv"))
        assert code == 2
        assert "scenario" in capsys.readouterr().err

    def test_missing_out_is_usage_error(self):
        assert run_cli("simulate", "--scenario", "binary-weak-d1-nointer-pareto5") == 2


@pytest.fixture(scope="module")
def synthetic_continuous_csv(tmp_path_factory):
    """Dose-response data in raw (exponentiated) form, log-scale effect 0.6."""
    tmp = tmp_path_factory.mktemp("est")
    rng = np.random.default_rng(123)
    n = 1200
    precip = rng.standard_normal(n)
    log_p = 0.5 * precip + rng.standard_normal(n)
    log_cu = 0.6 * log_p + 0.4 * precip + rng.standard_normal(n)
    path = tmp / "river.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cu", "p", "precip"])
        for i in range(n):
            writer.writerow([format(10.0 ** log_cu[i], ".17g"),
                             format(10.0 ** log_p[i], ".17g"),
                             format(precip[i], ".17g")])
    return path


class TestEstimate:
    def test_table_schema_and_slope_recovery(self, tmp_path, synthetic_continuous_csv):
        out = tmp_path / "est.csv"
        code = run_cli("estimate", "--input", str(synthetic_continuous_csv),
                       "--outcome-col", "cu", "--exposure-col", "p",
                       "--log10", "p,cu", "--confounders", "precip",
                       "--tau", "0.95", "--methods", "psreg,ipw,ow",
                       "--bins", "10", "--b", "60", "--seed", "5",
                       "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert set(rows[0]) == {"method", "estimand", "tau", "point", "se",
                                "ci_lo", "ci_hi"}
        for row in rows:
            point, se = float(row["point"]), float(row["se"])
            assert abs(point - 0.6) <= 3.0 * se
            assert float(row["ci_lo"]) <= point <= float(row["ci_hi"])
        manifest = json.loads((tmp_path / "est.csv.manifest.json").read_text())
        assert manifest["load_report"]["n"] == 1200

    def test_bad_tau_usage_error(self, tmp_path, synthetic_continuous_csv, capsys):
        code = run_cli("estimate", "--input", str(synthetic_continuous_csv),
                       "--outcome-col", "cu", "--exposure-col", "p",
                       "--confounders", "precip", "--tau", "1.5",
                       "--out", str(tmp_path / "x.csv"))
        assert code == 2

    def test_missing_input_file_is_data_error(self, tmp_path):
        code = run_cli("estimate", "--input", str(tmp_path / "nope.csv"),
                       "--outcome-col", "cu", "--exposure-col", "p",
                       "--out", str(tmp_path / "x.csv"))
        assert code == 3

    def test_binary_estimate_with_config_file(self, tmp_path):
        scenario = scenario_with(parse_scenario("binary-weak-d1-nointer-pareto5"),
                                 n=1500, seed=21)
        data_path = tmp_path / "bin.csv"
        write_csv(gen_dataset(scenario), data_path)
        config = {
            "input": str(data_path), "outcome_col": "y", "exposure_col": "z",
            "exposure_kind": "binary", "confounders": "x1",
            "methods": "ipw", "b": 60, "seed": 3,
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "est.json"
        code = run_cli("estimate", "--config", str(cfg_path), "--format", "json",
                       "--out", str(out))
        assert code == 0
        records = json.loads(out.read_text())
        assert records[0]["method"] == "ipw_qr"
        point, se = records[0]["point"], records[0]["se"]
        assert abs(point - 1.0) <= 3.0 * se  # self-consistency at the known effect

    def test_flag_overrides_config(self, tmp_path, synthetic_continuous_csv):
        config = {"input": str(synthetic_continuous_csv), "outcome_col": "cu",
                  "exposure_col": "p", "confounders": "precip",
                  "log10": "p,cu", "methods": "naive", "b": 0, "seed": 1}
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "o.csv"
        assert run_cli("estimate", "--config", str(cfg_path), "--methods", "ipw",
                       "--out", str(out)) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["method"] == "ipw_qr"

    def test_unknown_config_key_rejected(self, tmp_path, synthetic_continuous_csv):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"inptu": "typo.csv"}))
        assert run_cli("estimate", "--config", str(cfg_path),
                       "--out", str(tmp_path / "o.csv")) == 2


class TestBench:
    def test_bench_report_and_manifest(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run_cli("bench", "--scenario", "binary-weak-d1-nointer-pareto5",
                       "--methods", "ipw,naive", "--r", "4", "--n", "400",
                       "--seed", "17", "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {row["method"] for row in rows} == {"ipw", "naive"}
        manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
        assert manifest["R"] == 4 and manifest["seed"] == 17

    def test_thread_flag_does_not_change_output(self, tmp_path):
        outs = []
        for threads, name in (("1", "t1.csv"), ("3", "t3.csv")):
            out = tmp_path / name
            assert run_cli("bench", "--scenario", "binary-weak-d1-nointer-pareto5",
                           "--methods", "ow", "--r", "6", "--n", "300",
                           "--seed", "19", "--threads", threads,
                           "--out", str(out)) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestBalance:
    def test_balance_table_output(self, tmp_path):
        scenario = scenario_with(parse_scenario("binary-strong-d1-nointer-pareto5"),
                                 n=2000, seed=23)
        data_path = tmp_path / "bin.csv"
        write_csv(gen_dataset(scenario), data_path)
        out = tmp_path / "balance.csv"
        code = run_cli("balance", "--input", str(data_path), "--outcome-col", "y",
                       "--exposure-col", "z", "--confounders", "x1",
                       "--scheme", "ipw", "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["covariate"] == "x1"
        assert abs(float(rows[0]["smd_weighted"])) < abs(float(rows[0]["smd_unweighted"]))


def test_entropy_seed_recorded_when_missing(tmp_path):
    out = tmp_path / "sim.csv"
    assert run_cli("simulate", "--scenario", "binary-weak-d1-nointer-pareto5",
                   "--n", "50", "--out", str(out)) == 0
    manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    assert isinstance(manifest["seed"], int)
