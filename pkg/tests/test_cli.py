"""CLI subcommands, exit codes, and output idempotence."""

import json

import pytest

from gridflex.cli import EXIT_CAP, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from gridflex.model import load_scenario, save_scenario
from gridflex import workload


@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    code = main(
        [
            "generate",
            "--devices", "20",
            "--classes", "L,L,M,M,H",
            "--seed", "7",
            "--out", str(path),
        ]
    )
    assert code == EXIT_OK
    return path


@pytest.fixture()
def micro_file(tmp_path):
    from gridflex.model import save_scenario

    scenario = workload.micro_instances(1, seed=3)[0]
    path = tmp_path / "micro.json"
    save_scenario(scenario, path)
    return path


class TestGenerate:
    def test_writes_valid_scenario(self, scenario_file):
        scenario = load_scenario(scenario_file)
        assert len(scenario.devices) > 0

    def test_idempotent_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        args = ["generate", "--devices", "20", "--seed", "5"]
        assert main(args + ["--out", str(p1)]) == EXIT_OK
        assert main(args + ["--out", str(p2)]) == EXIT_OK
        assert p1.read_bytes() == p2.read_bytes()

    def test_infeasible_band_exit_code(self, tmp_path):
        code = main(
            ["generate", "--devices", "2", "--classes", "H,H,H,H,H",
             "--seed", "0", "--out", str(tmp_path / "x.json")]
        )
        assert code == EXIT_VALIDATION


class TestRun:
    def test_run_and_validate_round_trip(self, scenario_file, tmp_path):
        out = tmp_path / "result.json"
        code = main(["run", str(scenario_file), "--scheduler", "edf", "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["scheduler"] == "edf"
        code = main(["validate", str(scenario_file), str(out)])
        assert code == EXIT_OK

    def test_run_idempotent_modulo_timing(self, scenario_file, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (out1, out2):
            assert main(["run", str(scenario_file), "--out", str(out)]) == EXIT_OK
        d1, d2 = json.loads(out1.read_text()), json.loads(out2.read_text())
        d1.pop("slot_wall_s")
        d2.pop("slot_wall_s")
        assert d1 == d2

    def test_table_format(self, scenario_file, capsys):
        assert main(["run", str(scenario_file), "--format", "table"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "total loss" in out

    def test_unknown_scheduler_usage_error(self, scenario_file):
        assert main(["run", str(scenario_file), "--scheduler", "fifo"]) == EXIT_USAGE

    def test_missing_file(self):
        assert main(["run", "/nonexistent/sc.json"]) == EXIT_USAGE

    def test_mobility_flag(self, scenario_file, tmp_path):
        out = tmp_path / "m.json"
        assert main(["run", str(scenario_file), "--mobility", "off", "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["mobility_enabled"] is False


class TestValidateCommand:
    def test_corrupted_result_fails(self, scenario_file, tmp_path):
        out = tmp_path / "result.json"
        main(["run", str(scenario_file), "--out", str(out)])
        doc = json.loads(out.read_text())
        dev_id = sorted(doc["decisions"])[0]
        doc["decisions"][dev_id][0] = "S:1:99"
        out.write_text(json.dumps(doc))
        assert main(["validate", str(scenario_file), str(out)]) == EXIT_VALIDATION


class TestSolveExact:
    def test_micro_instance(self, micro_file, tmp_path):
        out = tmp_path / "exact.json"
        code = main(["solve-exact", str(micro_file), "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert "optimal_loss" in doc

    def test_cap_exceeded_exit_code(self, micro_file):
        assert main(["solve-exact", str(micro_file), "--node-budget", "1"]) == EXIT_CAP

    def test_refuses_large_scenario(self, scenario_file):
        assert main(["solve-exact", str(scenario_file)]) == EXIT_CAP


class TestIngest:
    def test_bundled_replica(self, tmp_path):
        out = tmp_path / "ev.json"
        code = main(["ingest", "bundled", "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        scenario = load_scenario(out)
        assert scenario.config.horizon_slots == 48
        assert len(scenario.devices) > 500

    def test_csv_file(self, tmp_path):
        csv_path = tmp_path / "sessions.csv"
        csv_path.write_text(
            "arrival,departure,kwh,station\n"
            "2020-05-04T09:00:00,2020-05-04T17:00:00,10.0,ST-01\n"
        )
        out = tmp_path / "sc.json"
        assert main(["ingest", str(csv_path), "--out", str(out)]) == EXIT_OK
        assert len(load_scenario(out).devices) == 1


class TestExperiments:
    def test_baseline_compare(self, scenario_file, tmp_path):
        out = tmp_path / "cmp.json"
        code = main(
            ["experiment", "baseline-compare", "--scenario", str(scenario_file),
             "--out", str(out)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert set(doc["losses"]) == {"heuristic", "edf", "hp"}

    def test_baseline_compare_requires_scenario(self):
        assert main(["experiment", "baseline-compare"]) == EXIT_USAGE

    def test_oracle_gap(self, tmp_path):
        out = tmp_path / "gap.json"
        code = main(
            ["experiment", "oracle-gap", "--samples", "5", "--seed", "2",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert len(doc["rows"]) == 5
        assert doc["median_ratio"] >= 1.0 - 1e-9

    def test_mobility_delta_table(self, tmp_path):
        out = tmp_path / "delta.tsv"
        code = main(
            ["experiment", "mobility-delta", "--counts", "20", "--samples", "2",
             "--seed", "1", "--format", "table", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert out.read_text().startswith("device_count")
