"""Engine packaging: validator gate, replay, determinism, experiments."""

import json

import pytest

from gridflex import engine, workload
from gridflex.engine import (
    GroupStats,
    InvalidScenarioError,
    baseline_compare,
    improvement_report,
    metrics_table,
    mobility_delta_experiment,
    replay_loss,
    run,
    sample_grid,
)
from gridflex.model import (
    DeviceRequest,
    MovementMatrix,
    PowerModeSet,
    Scenario,
    SystemConfig,
)


def small_scenario(seed=0):
    return workload.generate(
        workload.GenSpec(num_devices=20, class_combo=("L", "L", "M", "M", "H"), seed=seed)
    )


@pytest.fixture(scope="module")
def congested():
    return small_scenario(seed=42)


class TestRun:
    def test_empty_scenario_zero_loss(self):
        cfg = SystemConfig(1, (10.0,), 4, 0.5, MovementMatrix.line(1))
        result = run(Scenario("empty", cfg, ()), "heuristic")
        assert result.total_loss == 0.0

    def test_unknown_scheduler(self, congested):
        with pytest.raises(KeyError):
            run(congested, "fifo")

    def test_invalid_scenario_rejected(self):
        cfg = SystemConfig(1, (10.0,), 4, 0.5, MovementMatrix.line(1))
        bad = DeviceRequest(
            id="x", arrival_slot=0, deadline_slot=4, mobile=False,
            initial_energy_kwh=0.0, demand_kwh=-1.0, criticality=1.6,
            modes=PowerModeSet((1.0,)), home=0,
        )
        with pytest.raises(InvalidScenarioError):
            run(Scenario("bad", cfg, (bad,)), "heuristic")

    def test_mobility_defaults_per_scheduler(self, congested):
        assert run(congested, "heuristic").mobility_enabled is True
        assert run(congested, "edf").mobility_enabled is False
        assert run(congested, "hp").mobility_enabled is False

    def test_total_equals_per_device_sum(self, congested):
        result = run(congested, "heuristic")
        assert result.total_loss == pytest.approx(
            sum(row["loss_total"] for row in result.per_device.values()), abs=1e-9
        )

    def test_repeat_run_identical_bytes(self, congested):
        a = run(congested, "heuristic").canonical_json()
        b = run(congested, "heuristic").canonical_json()
        assert a == b

    def test_parallelism_does_not_change_bytes(self, congested, monkeypatch):
        monkeypatch.setenv("GRIDFLEX_THREADS", "1")
        serial = run(congested, "heuristic").canonical_json()
        monkeypatch.setenv("GRIDFLEX_THREADS", "8")
        parallel = run(congested, "heuristic").canonical_json()
        assert serial == parallel

    def test_canonical_json_has_no_timing(self, congested):
        doc = json.loads(run(congested, "heuristic").canonical_json())
        assert "slot_wall_s" not in doc
        assert "slot_wall_s" in run(congested, "heuristic").to_dict()


class TestReplay:
    @pytest.mark.parametrize("scheduler", ["heuristic", "edf", "hp"])
    def test_replay_reproduces_total_exactly(self, congested, scheduler):
        result = run(congested, scheduler)
        assert replay_loss(congested, result.decisions) == result.total_loss

    def test_replay_with_mobility_moves(self):
        # engineered so a mobile device actually migrates
        cfg = SystemConfig(2, (2.0, 2.0), 12, 0.5, MovementMatrix.line(2, 0.15))
        devices = (
            DeviceRequest("a", 0, 6, False, 0.0, 6.0, 1.6, PowerModeSet((2.0,)), 0),
            DeviceRequest("b", 0, 6, True, 1.0, 6.0, 1.8, PowerModeSet((2.0,)), 0),
        )
        scenario = Scenario("mover", cfg, devices)
        result = run(scenario, "heuristic", mobility=True)
        assert any("M" in a for a in json.loads(result.canonical_json())["decisions"]["b"])
        assert replay_loss(scenario, result.decisions) == pytest.approx(
            result.total_loss, abs=1e-9
        )


class TestConservation:
    def test_energy_bounds(self, congested):
        result = run(congested, "heuristic")
        cfg = congested.config
        for j in range(cfg.num_aggregators):
            served = sum(row[j] for row in result.utilization_kw) * cfg.slot_hours
            assert served <= cfg.budgets_kw[j] * cfg.slot_hours * cfg.horizon_slots + 1e-6
        for dev in congested.devices:
            row = result.per_device[dev.id]
            assert row["progress_kwh"] <= dev.demand_kwh + row["extra_demand_kwh"] + 1e-9


class TestImprovementReport:
    def _fake(self, name, loss):
        return engine.RunResult(
            scenario_id="x", scheduler=name, mobility_enabled=False,
            total_loss=loss, per_device={}, decisions={}, utilization_kw=[], slot_wall_s=[],
        )

    def test_percentage_arithmetic(self):
        results = {
            "heuristic": self._fake("heuristic", 1606.63),
            "edf": self._fake("edf", 3939.27),
            "hp": self._fake("hp", 3757.18),
        }
        report = improvement_report(results)
        assert report["edf"] == pytest.approx(59.21, abs=0.01)
        assert report["hp"] == pytest.approx(57.24, abs=0.01)

    def test_equal_losses_zero_percent(self):
        results = {
            "heuristic": self._fake("heuristic", 5.0),
            "edf": self._fake("edf", 5.0),
        }
        assert improvement_report(results)["edf"] == pytest.approx(0.0)

    def test_zero_baseline_is_na(self):
        results = {
            "heuristic": self._fake("heuristic", 0.0),
            "edf": self._fake("edf", 0.0),
        }
        assert improvement_report(results)["edf"] == "n/a"


class TestExperiments:
    def test_all_stationary_spec_zero_deltas(self):
        specs = [
            workload.GenSpec(num_devices=20, mobile_fraction=0.0, seed=s)
            for s in range(3)
        ]
        summary = mobility_delta_experiment(specs)
        for values in summary.samples.values():
            assert all(v == 0.0 for v in values)

    def test_summary_grouping_and_table(self):
        specs = sample_grid([20], samples_per_count=4, seed=1)
        summary = mobility_delta_experiment(specs)
        assert sum(s.count for s in summary.groups.values()) == 4
        table = metrics_table(summary)
        assert table.startswith("device_count\tmobile_fraction")
        assert len(table.strip().splitlines()) == 1 + len(summary.groups)

    def test_baseline_compare_keys(self, congested):
        results = baseline_compare(congested)
        assert set(results) == {"heuristic", "edf", "hp"}

    def test_group_stats(self):
        stats = GroupStats.from_samples([1.0, 2.0, 3.0, 4.0])
        assert stats.count == 4
        assert stats.mean == pytest.approx(2.5)
        assert stats.median == pytest.approx(2.5)
        assert stats.q25 <= stats.median <= stats.q75
