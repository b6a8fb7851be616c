"""Independent schedule validator and a small-instance exact solver.

The validator replays a decision matrix against the eight feasibility
rules (single action, presence, budget, stationary/moving exclusivity,
transit continuity and duration, service bound) without trusting any
scheduler bookkeeping. The solver enumerates joint per-slot actions
depth-first with an admissible lower bound (accumulated loss plus each
device's solo full-rate future deadline loss), so its result is a true
optimum usable as an oracle against the heuristic and baselines.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from . import utility
from .model import (
    EPS,
    Action,
    DeviceRequest,
    IDLE,
    Move,
    Scenario,
    Serve,
    SystemConfig,
)

_BUDGET_TOL = 1e-9


class ScheduleFormatError(ValueError):
    """Decision matrix is structurally malformed (missing device or slot)."""


class CapExceededError(RuntimeError):
    """Instance exceeds the enumeration guardrails; solve refused."""


# ---------------------------------------------------------------------------
# Feasibility validation
# ---------------------------------------------------------------------------

CONSTRAINT_DESCRIPTIONS = {
    "i": "serve uses a mode from the device's set at the device's current aggregator",
    "ii": "one state per device-slot; no actions before arrival",
    "iii": "per-aggregator served power within the budget every slot",
    "iv": "no service while in transit",
    "v": "moves depart from the device's current cluster on a single edge",
    "vi": "a transit spans exactly its edge delay in consecutive move slots",
    "vii": "the transit window is uninterrupted by service",
    "viii": "served energy stays within demand plus movement-incurred extra demand",
}

CONSTRAINT_ORDER = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")


@dataclass
class ConstraintCheck:
    name: str
    description: str
    passed: bool = True
    witness: tuple[str, int] | None = None

    def record(self, device_id: str, slot: int) -> None:
        key = (slot, device_id)
        if self.passed or key < (self.witness[1], self.witness[0]):
            self.passed = False
            self.witness = (device_id, slot)


@dataclass
class FeasibilityReport:
    checks: dict[str, ConstraintCheck]

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[ConstraintCheck]:
        return [c for c in self.checks.values() if not c.passed]

    def summary(self) -> str:
        lines = []
        for name in CONSTRAINT_ORDER:
            check = self.checks[name]
            if check.passed:
                lines.append(f"({name}) pass")
            else:
                dev, slot = check.witness
                lines.append(f"({name}) FAIL at device={dev} slot={slot}: {check.description}")
        return "\n".join(lines)


def validate_schedule(
    decisions: dict[str, list[Action]],
    cfg: SystemConfig,
    devices: list[DeviceRequest] | tuple[DeviceRequest, ...],
) -> FeasibilityReport:
    """Replay a decision matrix and report pass/fail for every rule.

    The matrix must contain one row of `horizon_slots` actions per
    device; anything else raises `ScheduleFormatError` (structural, not a
    constraint failure). Violations carry the earliest (device, slot)
    witness per constraint.
    """
    tau = cfg.horizon_slots
    by_id = {d.id: d for d in devices}
    if set(decisions) != set(by_id):
        missing = sorted(set(by_id) - set(decisions))
        extra = sorted(set(decisions) - set(by_id))
        raise ScheduleFormatError(f"device rows mismatch: missing={missing} extra={extra}")
    for dev_id, row in decisions.items():
        if len(row) != tau:
            raise ScheduleFormatError(
                f"device {dev_id} has {len(row)} slots, expected {tau}"
            )

    checks = {
        name: ConstraintCheck(name, CONSTRAINT_DESCRIPTIONS[name])
        for name in CONSTRAINT_ORDER
    }
    load: dict[tuple[int, int], float] = {}

    for dev_id in sorted(decisions):
        dev = by_id[dev_id]
        row = decisions[dev_id]
        progress = 0.0
        extra = 0.0
        location = dev.home
        transit: tuple[int, int, int] | None = None  # origin, target, remaining

        for t, action in enumerate(row):
            if transit is not None:
                origin, target, remaining = transit
                if isinstance(action, Move) and (action.origin, action.target) == (origin, target):
                    remaining -= 1
                    transit = None if remaining == 0 else (origin, target, remaining)
                    if transit is None:
                        location = target
                    continue
                # transit interrupted before its delay elapsed
                checks["vi"].record(dev_id, t)
                if isinstance(action, Serve):
                    checks["iv"].record(dev_id, t)
                    checks["vii"].record(dev_id, t)
                if isinstance(action, Move):
                    checks["v"].record(dev_id, t)
                # best-effort recovery: assume the device reached its target
                location = target
                transit = None

            if isinstance(action, Move):
                if t < dev.arrival_slot:
                    checks["ii"].record(dev_id, t)
                bad_edge = False
                if not (
                    0 <= action.origin < cfg.num_aggregators
                    and 0 <= action.target < cfg.num_aggregators
                ):
                    checks["v"].record(dev_id, t)
                    bad_edge = True
                elif action.origin == action.target:
                    checks["v"].record(dev_id, t)
                    bad_edge = True
                elif action.origin != location:
                    checks["v"].record(dev_id, t)
                    location = action.origin  # trust the move for further replay
                if bad_edge:
                    continue
                opt = cfg.movement.option(action.origin, action.target)
                extra += opt.delay_slots * opt.cost_kwh_per_slot
                if opt.delay_slots == 1:
                    location = action.target
                else:
                    transit = (action.origin, action.target, opt.delay_slots - 1)

            elif isinstance(action, Serve):
                if t < dev.arrival_slot:
                    checks["i"].record(dev_id, t)
                if not 1 <= action.mode_index <= dev.modes.count:
                    checks["i"].record(dev_id, t)
                    continue
                if not 0 <= action.aggregator < cfg.num_aggregators:
                    checks["i"].record(dev_id, t)
                    continue
                if action.aggregator != location:
                    checks["i"].record(dev_id, t)
                power = dev.modes.power(action.mode_index)
                load[(t, action.aggregator)] = load.get((t, action.aggregator), 0.0) + power
                deficit = dev.demand_kwh + extra - progress
                if deficit <= EPS:
                    checks["viii"].record(dev_id, t)
                progress = min(progress + power * cfg.slot_hours, dev.demand_kwh + extra)

        if transit is not None:
            # transit ran into the end of the horizon
            checks["vi"].record(dev_id, tau - 1)

    for (t, j), total in sorted(load.items()):
        if total > cfg.budget(j) + _BUDGET_TOL:
            overloaded = [
                dev_id
                for dev_id in sorted(decisions)
                if isinstance(decisions[dev_id][t], Serve)
                and decisions[dev_id][t].aggregator == j
            ]
            checks["iii"].record(overloaded[-1] if overloaded else "?", t)

    return FeasibilityReport(checks)


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactCaps:
    """Enumeration guardrails; instances beyond these are refused."""

    max_devices: int = 4
    max_slots: int = 8
    max_modes: int = 3
    max_aggregators: int = 3
    node_budget: int = 10**8


@dataclass(frozen=True)
class ExactInstance:
    scenario: Scenario
    caps: ExactCaps = ExactCaps()


@dataclass
class ExactResult:
    loss: float
    decisions: dict[str, list[Action]]
    nodes: int


class _Searcher:
    """Depth-first joint-action search with backtracking state."""

    def __init__(self, cfg: SystemConfig, devices: list[DeviceRequest], node_budget: int):
        self.cfg = cfg
        self.devices = devices
        self.node_budget = node_budget
        self.tau = cfg.horizon_slots
        self.K = len(devices)
        self.nodes = 0

        self.progress = [0.0] * self.K
        self.extra = [0.0] * self.K
        # location: aggregator index, or ("T", origin, target, arrival)
        self.loc: list = [d.home for d in devices]
        self.actions = [[IDLE] * self.tau for _ in range(self.K)]
        self.residual = [0.0] * cfg.num_aggregators

        self.best_loss = math.inf
        self.best_actions: list[list[Action]] | None = None

    # -- admissible lower bound -------------------------------------------------

    def _future_floor(self, t_next: int) -> float:
        """Unavoidable loss from slot t_next on: per device, remaining transit
        cost plus deadline losses under solo full-rate service."""
        total = 0.0
        for k, dev in enumerate(self.devices):
            progress = self.progress[k]
            deficit = dev.demand_kwh - progress
            loc = self.loc[k]
            start = max(t_next, dev.arrival_slot)
            if isinstance(loc, tuple):
                _, origin, target, arrival = loc
                remaining = arrival - t_next
                if remaining > 0:
                    total += (
                        2.0
                        * remaining
                        * self.cfg.movement.option(origin, target).cost_kwh_per_slot
                    )
                start = max(start, arrival)
            if deficit <= EPS:
                continue
            rate = dev.modes.max_kw * self.cfg.slot_hours
            for t in range(t_next, self.tau):
                if t >= start:
                    deficit -= rate
                total += utility.deadline_loss(
                    dev.demand_kwh - max(deficit, 0.0),
                    dev.demand_kwh,
                    t,
                    dev.deadline_slot,
                    dev.criticality,
                    self.cfg.beta_max,
                )
                if deficit <= EPS:
                    break
        return total

    # -- search -----------------------------------------------------------------

    def solve(self) -> ExactResult:
        self._enter_slot(0, 0.0)
        if self.best_actions is None:
            raise RuntimeError("search completed without a feasible schedule")
        decisions = {
            dev.id: list(self.best_actions[k]) for k, dev in enumerate(self.devices)
        }
        # rescore through the replay path so the reported optimum is
        # float-identical to any engine-scored schedule it ties with
        loss = sum(
            utility.replay_device_loss(
                dev.modes,
                dev.demand_kwh,
                dev.deadline_slot,
                dev.criticality,
                dev.mobile,
                decisions[dev.id],
                self.cfg,
            )
            for dev in sorted(self.devices, key=lambda d: d.id)
        )
        return ExactResult(loss, decisions, self.nodes)

    def _enter_slot(self, t: int, acc: float) -> None:
        if t == self.tau:
            if acc < self.best_loss:
                self.best_loss = acc
                self.best_actions = [list(row) for row in self.actions]
            return
        if acc + self._future_floor(t) >= self.best_loss:
            return
        # transit arrivals happen at slot start
        arrived: list[tuple[int, tuple]] = []
        for k in range(self.K):
            loc = self.loc[k]
            if isinstance(loc, tuple) and loc[3] == t:
                arrived.append((k, loc))
                self.loc[k] = loc[2]
        saved_residual = self.residual[:]
        for j in range(self.cfg.num_aggregators):
            self.residual[j] = self.cfg.budgets_kw[j]
        self._branch_device(t, 0, acc)
        self.residual = saved_residual
        for k, loc in arrived:
            self.loc[k] = loc

    def _branch_device(self, t: int, k: int, acc: float) -> None:
        if k == self.K:
            slot_add = 0.0
            for i, dev in enumerate(self.devices):
                action = self.actions[i][t]
                if isinstance(action, Move):
                    slot_add += (
                        2.0
                        * self.cfg.movement.option(action.origin, action.target).cost_kwh_per_slot
                    )
                slot_add += utility.deadline_loss(
                    self.progress[i],
                    dev.demand_kwh,
                    t,
                    dev.deadline_slot,
                    dev.criticality,
                    self.cfg.beta_max,
                )
            if acc + slot_add < self.best_loss:
                self._enter_slot(t + 1, acc + slot_add)
            return

        dev = self.devices[k]
        loc = self.loc[k]

        self.nodes += 1
        if self.nodes > self.node_budget:
            raise CapExceededError(
                f"node budget {self.node_budget} exceeded; instance too large"
            )

        # forced: not yet arrived
        if t < dev.arrival_slot:
            self.actions[k][t] = IDLE
            self._branch_device(t, k + 1, acc)
            return

        # forced: mid-transit
        if isinstance(loc, tuple):
            _, origin, target, _arrival = loc
            self.actions[k][t] = Move(origin, target)
            self._branch_device(t, k + 1, acc)
            self.actions[k][t] = IDLE
            return

        deficit = dev.demand_kwh + self.extra[k] - self.progress[k]

        # serve options, highest mode first so good leaves are found early
        if deficit > EPS:
            for mode_index in range(dev.modes.count, 0, -1):
                power = dev.modes.power(mode_index)
                if power > self.residual[loc] + _BUDGET_TOL:
                    continue
                delivered = min(power * self.cfg.slot_hours, deficit)
                self.actions[k][t] = Serve(mode_index, loc)
                self.residual[loc] -= power
                self.progress[k] += delivered
                self._branch_device(t, k + 1, acc)
                self.progress[k] -= delivered
                self.residual[loc] += power
                self.actions[k][t] = IDLE

        # idle
        self.actions[k][t] = IDLE
        self._branch_device(t, k + 1, acc)

        # moves (mobile devices only; affordable, completing within the horizon)
        if dev.mobile and deficit > EPS:
            available = dev.initial_energy_kwh + self.progress[k] - self.extra[k]
            options = []
            for target in range(self.cfg.num_aggregators):
                if target == loc:
                    continue
                opt = self.cfg.movement.option(loc, target)
                cost = opt.delay_slots * opt.cost_kwh_per_slot
                if cost > available + EPS:
                    continue
                if t + opt.delay_slots > self.tau - 1:
                    continue
                options.append((cost, target, opt))
            for cost, target, opt in sorted(options):
                self.actions[k][t] = Move(loc, target)
                self.extra[k] += cost
                if opt.delay_slots == 1:
                    self.loc[k] = target
                else:
                    self.loc[k] = ("T", loc, target, t + opt.delay_slots)
                self._branch_device(t, k + 1, acc)
                self.loc[k] = loc
                self.extra[k] -= cost
                self.actions[k][t] = IDLE


def solve_exact(instance: ExactInstance) -> ExactResult:
    """Globally minimal cumulative loss over all feasible decision matrices.

    Refuses (raises `CapExceededError`) when the instance breaches the
    size caps or the search expands more nodes than the budget allows;
    never truncates silently. Moves by non-mobile devices are excluded
    from the branch space: the stationary penalty is configured to
    dominate every other reachable loss, so no optimal schedule contains
    one.
    """
    scenario = instance.scenario
    caps = instance.caps
    cfg = scenario.config
    devices = sorted(scenario.devices, key=lambda d: d.id)

    if len(devices) > caps.max_devices:
        raise CapExceededError(f"{len(devices)} devices > cap {caps.max_devices}")
    if cfg.horizon_slots > caps.max_slots:
        raise CapExceededError(f"{cfg.horizon_slots} slots > cap {caps.max_slots}")
    if cfg.num_aggregators > caps.max_aggregators:
        raise CapExceededError(
            f"{cfg.num_aggregators} aggregators > cap {caps.max_aggregators}"
        )
    for dev in devices:
        if dev.modes.count > caps.max_modes:
            raise CapExceededError(
                f"device {dev.id} has {dev.modes.count} modes > cap {caps.max_modes}"
            )

    searcher = _Searcher(cfg, devices, caps.node_budget)
    return searcher.solve()


# ---------------------------------------------------------------------------
# Oracle gap reporting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapRow:
    scenario_id: str
    exact_loss: float
    heuristic_loss: float
    ratio: float


@dataclass(frozen=True)
class GapReport:
    rows: tuple[GapRow, ...]

    @property
    def median_ratio(self) -> float:
        return statistics.median(r.ratio for r in self.rows) if self.rows else math.nan

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=math.nan)


def gap_report(instances: list[ExactInstance], mobility_enabled: bool = True) -> GapReport:
    """Exact-vs-heuristic loss per instance with ratio statistics.

    Propagates `CapExceededError` from any refused instance.
    """
    from .heuristic import run_scenario

    rows = []
    for instance in instances:
        exact_result = solve_exact(instance)
        heuristic_result = run_scenario(
            instance.scenario, mobility_enabled=mobility_enabled
        )
        h_loss = heuristic_result.total_loss
        e_loss = exact_result.loss
        if e_loss <= EPS and h_loss <= EPS:
            ratio = 1.0
        elif e_loss <= EPS:
            ratio = math.inf
        else:
            ratio = h_loss / e_loss
        rows.append(GapRow(instance.scenario.scenario_id, e_loss, h_loss, ratio))
    return GapReport(tuple(rows))
