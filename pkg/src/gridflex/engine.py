"""Horizon runner, result packaging, and experiment harnesses.

`run` wraps a scheduler over one scenario, gates the output through the
independent feasibility validator, and packages a deterministic result
document. Experiments (mobility delta, baseline comparison, oracle gap)
fan independent runs over a thread pool capped by `GRIDFLEX_THREADS` and
merge results in input order, so parallelism never changes output bytes.
"""

from __future__ import annotations

import json
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from . import baselines, exact, heuristic, utility, workload
from .model import (
    Action,
    Scenario,
    decode_action,
    encode_action,
    validate_config,
)

RESULT_SCHEMA_VERSION = 1

T = TypeVar("T")
R = TypeVar("R")


class InfeasibleRunError(RuntimeError):
    """The validator rejected a scheduler's output; the run is discarded."""


class InvalidScenarioError(ValueError):
    """The scenario failed model validation."""


def worker_count() -> int:
    env = os.environ.get("GRIDFLEX_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            pass
    return os.cpu_count() or 1


def _parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    workers = min(worker_count(), max(len(items), 1))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunResult:
    scenario_id: str
    scheduler: str
    mobility_enabled: bool
    total_loss: float
    per_device: dict[str, dict[str, float]]
    decisions: dict[str, list[Action]]
    utilization_kw: list[list[float]]  # [slot][aggregator]
    slot_wall_s: list[float]

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "scheduler": self.scheduler,
            "mobility_enabled": self.mobility_enabled,
            "total_loss": self.total_loss,
            "per_device": {k: self.per_device[k] for k in sorted(self.per_device)},
            "decisions": {
                k: [encode_action(a) for a in self.decisions[k]]
                for k in sorted(self.decisions)
            },
            "utilization_kw": self.utilization_kw,
        }
        if include_timing:
            doc["slot_wall_s"] = self.slot_wall_s
        return doc

    def canonical_json(self) -> str:
        """Deterministic serialization with environment-dependent timing removed."""
        return json.dumps(self.to_dict(include_timing=False), sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def decisions_from_dict(doc: dict) -> dict[str, list[Action]]:
    return {
        dev_id: [decode_action(a) for a in row]
        for dev_id, row in doc["decisions"].items()
    }


def run(
    scenario: Scenario,
    scheduler: str = "heuristic",
    mobility: bool | None = None,
    upgrade_policy: str = heuristic.UPGRADE_ROUND_ROBIN,
) -> RunResult:
    """Execute one scheduler over one scenario with the validator gate.

    `mobility=None` uses the scheduler's default (on for the heuristic,
    off for the baselines). Raises `InvalidScenarioError` on model
    violations and `InfeasibleRunError` if the resulting decision matrix
    fails any feasibility constraint (the engine cannot emit infeasible
    results).
    """
    violations = validate_config(scenario.config, scenario.devices)
    if violations:
        raise InvalidScenarioError(
            "; ".join(str(v) for v in violations[:5])
            + (f" (+{len(violations) - 5} more)" if len(violations) > 5 else "")
        )
    spec = baselines.get_scheduler(scheduler)
    mobility_enabled = spec.mobility_default if mobility is None else mobility

    horizon = heuristic.run_horizon(
        scenario.config,
        scenario.devices,
        rank_fn=spec.rank_fn,
        mobility_enabled=mobility_enabled,
        upgrade_policy=upgrade_policy,
    )

    report = exact.validate_schedule(horizon.decisions, scenario.config, list(scenario.devices))
    if not report.all_pass:
        raise InfeasibleRunError(
            f"scheduler {scheduler} produced an infeasible schedule:\n{report.summary()}"
        )

    per_device = {}
    for dev_id in sorted(horizon.states):
        st = horizon.states[dev_id]
        per_device[dev_id] = {
            "loss_total": st.loss_total,
            "deadline_loss": st.deadline_loss_total,
            "mobility_loss_weighted": 2.0 * st.mobility_loss_raw,
            "stationary_penalty": st.stationary_penalty_total,
            "progress_kwh": st.progress_kwh,
            "extra_demand_kwh": st.extra_demand_kwh,
            "completed": st.completed,
        }
    total = sum(per_device[dev_id]["loss_total"] for dev_id in sorted(per_device))

    return RunResult(
        scenario_id=scenario.scenario_id,
        scheduler=scheduler,
        mobility_enabled=mobility_enabled,
        total_loss=total,
        per_device=per_device,
        decisions=horizon.decisions,
        utilization_kw=horizon.committed_kw,
        slot_wall_s=horizon.slot_wall_s,
    )


def replay_loss(scenario: Scenario, decisions: dict[str, list[Action]]) -> float:
    """Recompute the total loss of a decision matrix from scratch.

    Walks devices in id order and slots in order, using only the pure
    loss functions; must reproduce a RunResult's total exactly.
    """
    total = 0.0
    by_id = scenario.device_map()
    for dev_id in sorted(decisions):
        dev = by_id[dev_id]
        total += utility.replay_device_loss(
            dev.modes,
            dev.demand_kwh,
            dev.deadline_slot,
            dev.criticality,
            dev.mobile,
            decisions[dev_id],
            scenario.config,
        )
    return total


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupStats:
    count: int
    mean: float
    variance: float
    median: float
    q25: float
    q75: float

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "GroupStats":
        values = sorted(samples)
        q = statistics.quantiles(values, n=4) if len(values) >= 2 else [values[0]] * 3
        return cls(
            count=len(values),
            mean=statistics.fmean(values),
            variance=statistics.pvariance(values) if len(values) > 1 else 0.0,
            median=statistics.median(values),
            q25=q[0],
            q75=q[2],
        )


@dataclass
class ExperimentSummary:
    """Loss-delta statistics keyed by (device count, mobile fraction)."""

    groups: dict[tuple[int, float], GroupStats]
    samples: dict[tuple[int, float], list[float]]

    def by_device_count(self) -> dict[int, GroupStats]:
        merged: dict[int, list[float]] = {}
        for (count, _frac), values in self.samples.items():
            merged.setdefault(count, []).extend(values)
        return {c: GroupStats.from_samples(v) for c, v in sorted(merged.items())}

    def to_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "groups": [
                {
                    "device_count": count,
                    "mobile_fraction": frac,
                    **stats.__dict__,
                }
                for (count, frac), stats in sorted(self.groups.items())
            ],
            "by_device_count": [
                {"device_count": count, **stats.__dict__}
                for count, stats in self.by_device_count().items()
            ],
        }


DEFAULT_CLASS_COMBOS = (
    ("L", "L", "L", "M", "H"),
    ("L", "L", "M", "M", "H"),
    ("L", "M", "M", "M", "H"),
    ("L", "L", "M", "H", "H"),
)

DEFAULT_MOBILE_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


def sample_grid(
    device_counts: Sequence[int],
    samples_per_count: int,
    seed: int = 0,
    class_combos: Sequence[tuple[str, ...]] = DEFAULT_CLASS_COMBOS,
    mobile_fractions: Sequence[float] = DEFAULT_MOBILE_FRACTIONS,
) -> list[workload.GenSpec]:
    """Rotate class combinations and mobile fractions across seeded samples."""
    specs = []
    for count in device_counts:
        for s in range(samples_per_count):
            specs.append(
                workload.GenSpec(
                    num_devices=count,
                    class_combo=class_combos[s % len(class_combos)],
                    mobile_fraction=mobile_fractions[s % len(mobile_fractions)],
                    seed=seed * 100_000 + count * 1_000 + s,
                )
            )
    return specs


def mobility_delta_experiment(specs: Iterable[workload.GenSpec]) -> ExperimentSummary:
    """loss(mobility on) - loss(mobility off) for the heuristic, per sample."""
    spec_list = list(specs)

    def one(spec: workload.GenSpec) -> tuple[tuple[int, float], float]:
        scenario = workload.generate(spec)
        with_mob = run(scenario, "heuristic", mobility=True)
        without = run(scenario, "heuristic", mobility=False)
        return (spec.num_devices, spec.mobile_fraction), with_mob.total_loss - without.total_loss

    results = _parallel_map(one, spec_list)
    samples: dict[tuple[int, float], list[float]] = {}
    for key, delta in results:
        samples.setdefault(key, []).append(delta)
    groups = {key: GroupStats.from_samples(vals) for key, vals in samples.items()}
    return ExperimentSummary(groups=groups, samples=samples)


def improvement_report(results: dict[str, RunResult]) -> dict[str, str | float]:
    """Percent improvement of the heuristic over each baseline.

    (baseline - heuristic) / baseline * 100; 'n/a' when a baseline's loss
    is zero.
    """
    heuristic_loss = results["heuristic"].total_loss
    out: dict[str, str | float] = {}
    for name, result in results.items():
        if name == "heuristic":
            continue
        if result.total_loss == 0.0:
            out[name] = "n/a"
        else:
            out[name] = (result.total_loss - heuristic_loss) / result.total_loss * 100.0
    return out


def baseline_compare(
    scenario: Scenario, schedulers: Sequence[str] = ("heuristic", "edf", "hp")
) -> dict[str, RunResult]:
    results = _parallel_map(lambda s: run(scenario, s), list(schedulers))
    return dict(zip(schedulers, results))


def oracle_gap_experiment(
    count: int, seed: int = 0, caps: exact.ExactCaps = exact.ExactCaps()
) -> exact.GapReport:
    scenarios = workload.micro_instances(count, seed=seed)
    instances = [exact.ExactInstance(s, caps) for s in scenarios]
    return exact.gap_report(instances)


def metrics_table(summary: ExperimentSummary) -> str:
    """Flat tab-separated table of the summary, ready for plotting."""
    lines = ["device_count\tmobile_fraction\tcount\tmean\tvariance\tmedian\tq25\tq75"]
    for (count, frac), stats in sorted(summary.groups.items()):
        lines.append(
            f"{count}\t{frac}\t{stats.count}\t{stats.mean:.6g}\t{stats.variance:.6g}"
            f"\t{stats.median:.6g}\t{stats.q25:.6g}\t{stats.q75:.6g}"
        )
    return "\n".join(lines) + "\n"
