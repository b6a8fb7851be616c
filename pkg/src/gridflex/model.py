"""Domain model for the two-tier aggregator/device scheduling system.

Pure data types plus load-time validation. Units:
- Power: kW
- Energy: kWh
- Time: integer slot indices 0..horizon-1, each slot `slot_hours` long

No scheduling logic lives here; schedulers and the simulation engine own
all mutation of runtime state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

EPS = 1e-9

# Default prohibitive penalty for moving a stationary device; also the
# per-term clamp applied to deadline losses so long horizons cannot overflow.
DEFAULT_BETA_MAX = 1e9

SCENARIO_SCHEMA_VERSION = 1


class UnknownAggregatorError(LookupError):
    """Raised when an aggregator id is outside the configured range."""


class ScenarioFormatError(ValueError):
    """Raised when a scenario document is structurally malformed."""


# ---------------------------------------------------------------------------
# Movement options
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MovementOption:
    """Delay (slots) and per-slot energy cost (kWh) of one directed move."""

    delay_slots: int
    cost_kwh_per_slot: float


@dataclass(frozen=True)
class MovementMatrix:
    """Directed movement options between every ordered aggregator pair.

    The diagonal is pinned to (0, 0); off-diagonal entries must have a
    delay of at least one slot and a non-negative per-slot cost. Lookup
    is total over valid aggregator indices.
    """

    num_aggregators: int
    table: tuple[tuple[MovementOption, ...], ...]

    def __post_init__(self):
        if self.num_aggregators < 1:
            raise ScenarioFormatError("movement matrix needs >= 1 aggregator")
        if len(self.table) != self.num_aggregators:
            raise ScenarioFormatError("movement matrix row count mismatch")
        for i, row in enumerate(self.table):
            if len(row) != self.num_aggregators:
                raise ScenarioFormatError("movement matrix column count mismatch")
            for j, opt in enumerate(row):
                if i == j:
                    if opt.delay_slots != 0 or opt.cost_kwh_per_slot != 0.0:
                        raise ScenarioFormatError(
                            f"movement matrix diagonal ({i},{j}) must be (0, 0)"
                        )
                else:
                    if opt.delay_slots < 1:
                        raise ScenarioFormatError(
                            f"movement delay {i}->{j} must be >= 1 slot"
                        )
                    if opt.cost_kwh_per_slot < 0:
                        raise ScenarioFormatError(
                            f"movement cost {i}->{j} must be >= 0"
                        )

    def _check(self, aggregator: int) -> None:
        if not 0 <= aggregator < self.num_aggregators:
            raise UnknownAggregatorError(f"unknown aggregator id {aggregator}")

    def option(self, origin: int, target: int) -> MovementOption:
        self._check(origin)
        self._check(target)
        return self.table[origin][target]

    def total_cost(self, origin: int, target: int) -> float:
        """Total energy cost of one move: delay * per-slot cost; 0 on the diagonal."""
        opt = self.option(origin, target)
        return opt.delay_slots * opt.cost_kwh_per_slot

    @classmethod
    def line(cls, num_aggregators: int, cost_kwh_per_slot: float = 0.15) -> "MovementMatrix":
        """Line topology: delay equals index distance, flat per-slot cost."""
        rows = []
        for i in range(num_aggregators):
            row = []
            for j in range(num_aggregators):
                if i == j:
                    row.append(MovementOption(0, 0.0))
                else:
                    row.append(MovementOption(abs(i - j), cost_kwh_per_slot))
            rows.append(tuple(row))
        return cls(num_aggregators, tuple(rows))

    @classmethod
    def uniform(
        cls, num_aggregators: int, delay_slots: int, cost_kwh_per_slot: float
    ) -> "MovementMatrix":
        rows = []
        for i in range(num_aggregators):
            row = []
            for j in range(num_aggregators):
                if i == j:
                    row.append(MovementOption(0, 0.0))
                else:
                    row.append(MovementOption(delay_slots, cost_kwh_per_slot))
            rows.append(tuple(row))
        return cls(num_aggregators, tuple(rows))


def movement_total_cost(matrix: MovementMatrix, origin: int, target: int) -> float:
    """Total kWh cost of a move between two aggregators (delay x per-slot cost)."""
    return matrix.total_cost(origin, target)


# ---------------------------------------------------------------------------
# Device power modes and requests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerModeSet:
    """Discrete power levels of one device.

    `levels_kw` holds the non-zero modes; mode index 0 is the implicit
    0 kW (unserved) mode, so `power(i)` maps index 1..n onto the list.
    Well-formedness (strictly ascending, positive, non-empty) is checked
    by `validate_config`, not at construction, so malformed inputs can be
    reported as violations instead of exceptions.
    """

    levels_kw: tuple[float, ...]

    @property
    def count(self) -> int:
        """Number of non-zero modes."""
        return len(self.levels_kw)

    def power(self, index: int) -> float:
        if index == 0:
            return 0.0
        return self.levels_kw[index - 1]

    @property
    def min_kw(self) -> float:
        """Lowest non-zero mode."""
        return self.levels_kw[0]

    @property
    def max_kw(self) -> float:
        return self.levels_kw[-1]

    def is_well_formed(self) -> bool:
        if not self.levels_kw:
            return False
        prev = 0.0
        for level in self.levels_kw:
            if level <= prev:
                return False
            prev = level
        return True


@dataclass(frozen=True)
class DeviceRequest:
    """One device's demand request.

    Fields mirror the scenario schema: arrival/deadline in slot indices,
    energies in kWh, `criticality` the positive rate at which deadline
    losses grow, `modes` the device's discrete power levels, and `home`
    the aggregator the device starts at.
    """

    id: str
    arrival_slot: int
    deadline_slot: int
    mobile: bool
    initial_energy_kwh: float
    demand_kwh: float
    criticality: float
    modes: PowerModeSet
    home: int

    @property
    def total_energy_kwh(self) -> float:
        """Initial charge plus demanded energy (derived, never stored)."""
        return self.initial_energy_kwh + self.demand_kwh


# ---------------------------------------------------------------------------
# Per-slot decisions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Serve:
    """Draw power at mode `mode_index` (1-based into the device's modes)
    from `aggregator` for one slot."""

    mode_index: int
    aggregator: int


@dataclass(frozen=True)
class Move:
    """Spend one slot in transit on the directed edge origin -> target."""

    origin: int
    target: int


@dataclass(frozen=True)
class Idle:
    pass


IDLE = Idle()

Action = Union[Serve, Move, Idle]


@dataclass(frozen=True)
class SlotDecision:
    device_id: str
    slot: int
    action: Action


def encode_action(action: Action) -> str:
    if isinstance(action, Serve):
        return f"S:{action.mode_index}:{action.aggregator}"
    if isinstance(action, Move):
        return f"M:{action.origin}:{action.target}"
    return "I"


def decode_action(text: str) -> Action:
    if text == "I":
        return IDLE
    parts = text.split(":")
    if parts[0] == "S" and len(parts) == 3:
        return Serve(int(parts[1]), int(parts[2]))
    if parts[0] == "M" and len(parts) == 3:
        return Move(int(parts[1]), int(parts[2]))
    raise ScenarioFormatError(f"unknown action encoding {text!r}")


# ---------------------------------------------------------------------------
# System configuration and scenario container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemConfig:
    num_aggregators: int
    budgets_kw: tuple[float, ...]
    horizon_slots: int
    slot_hours: float
    movement: MovementMatrix
    beta_max: float = DEFAULT_BETA_MAX

    def budget(self, aggregator: int) -> float:
        if not 0 <= aggregator < self.num_aggregators:
            raise UnknownAggregatorError(f"unknown aggregator id {aggregator}")
        return self.budgets_kw[aggregator]


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    config: SystemConfig
    devices: tuple[DeviceRequest, ...]

    def device_map(self) -> dict[str, DeviceRequest]:
        return {d.id: d for d in self.devices}


# ---------------------------------------------------------------------------
# Runtime state (owned by the engine; everything above is immutable)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtCluster:
    aggregator: int


@dataclass(frozen=True)
class InTransit:
    origin: int
    target: int
    arrival_slot: int


Location = Union[AtCluster, InTransit]


@dataclass
class DeviceState:
    """Mutable runtime state of one device during a horizon run.

    `extra_demand_kwh` is the movement energy the grid must re-supply on
    top of the demanded energy; it is committed in full when a move
    starts. `progress_kwh` counts all energy delivered and is capped at
    `target_kwh`.
    """

    request: DeviceRequest
    location: Location
    progress_kwh: float = 0.0
    extra_demand_kwh: float = 0.0
    loss_accum: float = 0.0
    deadline_loss_total: float = 0.0
    mobility_loss_raw: float = 0.0
    stationary_penalty_total: float = 0.0
    served_history: list[SlotDecision] = field(default_factory=list)

    @property
    def target_kwh(self) -> float:
        """Total energy the device still intends to draw over the horizon."""
        return self.request.demand_kwh + self.extra_demand_kwh

    @property
    def deficit_kwh(self) -> float:
        return max(self.target_kwh - self.progress_kwh, 0.0)

    @property
    def completed(self) -> bool:
        return self.deficit_kwh <= EPS

    @property
    def available_energy_kwh(self) -> float:
        """Energy on board: initial charge plus delivered minus spent moving."""
        return self.request.initial_energy_kwh + self.progress_kwh - self.extra_demand_kwh

    @property
    def net_utility_kwh(self) -> float:
        """Delivered energy net of movement spend, floored at -initial charge."""
        return max(
            self.progress_kwh - self.extra_demand_kwh,
            -self.request.initial_energy_kwh,
        )

    @property
    def loss_total(self) -> float:
        """Accumulated utility loss: deadline + 2x mobility + stationary penalty.

        Slot-order accumulation so a replay of the decision row reproduces
        the value bit-for-bit; the component fields are report-only.
        """
        return self.loss_accum


@dataclass
class AggregatorState:
    """Per-slot bookkeeping for one aggregator."""

    index: int
    budget_kw: float
    members: set[str] = field(default_factory=set)
    committed_kw: float = 0.0
    served_energy_kwh: float = 0.0

    @property
    def residual_kw(self) -> float:
        return max(self.budget_kw - self.committed_kw, 0.0)

    def reset_slot(self) -> None:
        self.committed_kw = 0.0


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    device_id: str | None
    field: str
    rule: str

    def __str__(self) -> str:
        scope = self.device_id if self.device_id is not None else "<config>"
        return f"{scope}: {self.field}: {self.rule}"


def validate_config(cfg: SystemConfig, devices: Iterable[DeviceRequest]) -> list[Violation]:
    """Check every model invariant; returns violations as data (total function).

    An empty list means the scenario is safe to hand to any scheduler.
    """
    out: list[Violation] = []

    if cfg.num_aggregators < 1:
        out.append(Violation(None, "num_aggregators", "J >= 1"))
    if len(cfg.budgets_kw) != cfg.num_aggregators:
        out.append(Violation(None, "budgets_kw", "one budget per aggregator"))
    for j, b in enumerate(cfg.budgets_kw):
        if not b > 0:
            out.append(Violation(None, f"budgets_kw[{j}]", "budget > 0"))
    if cfg.horizon_slots < 1:
        out.append(Violation(None, "horizon_slots", "horizon >= 1 slot"))
    if not cfg.slot_hours > 0:
        out.append(Violation(None, "slot_hours", "slot length > 0"))
    if not cfg.beta_max > 0:
        out.append(Violation(None, "beta_max", "penalty constant > 0"))
    if cfg.movement.num_aggregators != cfg.num_aggregators:
        out.append(Violation(None, "movement", "matrix size matches aggregator count"))

    seen: set[str] = set()
    for dev in devices:
        if not dev.id:
            out.append(Violation(dev.id, "id", "non-empty id"))
        if dev.id in seen:
            out.append(Violation(dev.id, "id", "unique id"))
        seen.add(dev.id)

        if not dev.modes.is_well_formed():
            out.append(
                Violation(dev.id, "modes", "non-empty, strictly ascending, positive")
            )
        if dev.arrival_slot < 0:
            out.append(Violation(dev.id, "arrival_slot", "R_k >= 0"))
        if not dev.arrival_slot < dev.deadline_slot:
            out.append(Violation(dev.id, "deadline_slot", "R_k < T_k"))
        if dev.deadline_slot > cfg.horizon_slots:
            out.append(Violation(dev.id, "deadline_slot", "T_k <= horizon"))
        if not dev.demand_kwh > 0:
            out.append(Violation(dev.id, "demand_kwh", "E_k > 0"))
        if dev.initial_energy_kwh < 0:
            out.append(Violation(dev.id, "initial_energy_kwh", "I_k >= 0"))
        if not dev.criticality > 0:
            out.append(Violation(dev.id, "criticality", "criticality > 0"))
        if not 0 <= dev.home < cfg.num_aggregators:
            out.append(Violation(dev.id, "home", "home aggregator exists"))

        if dev.modes.is_well_formed() and dev.arrival_slot < dev.deadline_slot:
            window = dev.deadline_slot - dev.arrival_slot
            cap = dev.modes.max_kw * cfg.slot_hours * window
            if dev.demand_kwh > cap + EPS:
                out.append(
                    Violation(
                        dev.id,
                        "demand_kwh",
                        f"demand {dev.demand_kwh:g} exceeds max deliverable "
                        f"{cap:g} within the window",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Scenario (de)serialization
# ---------------------------------------------------------------------------


def _movement_to_dict(mm: MovementMatrix) -> dict:
    pairs = []
    for i in range(mm.num_aggregators):
        for j in range(mm.num_aggregators):
            if i == j:
                continue
            opt = mm.table[i][j]
            pairs.append(
                {
                    "from": i,
                    "to": j,
                    "delay_slots": opt.delay_slots,
                    "cost_kwh_per_slot": opt.cost_kwh_per_slot,
                }
            )
    return {"num_aggregators": mm.num_aggregators, "pairs": pairs}


def _movement_from_dict(doc: dict) -> MovementMatrix:
    try:
        n = int(doc["num_aggregators"])
        listed = {
            (int(p["from"]), int(p["to"])): MovementOption(
                int(p["delay_slots"]), float(p["cost_kwh_per_slot"])
            )
            for p in doc["pairs"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad movement matrix: {exc}") from exc
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i == j:
                row.append(MovementOption(0, 0.0))
            else:
                if (i, j) not in listed:
                    raise ScenarioFormatError(f"missing movement pair {i}->{j}")
                row.append(listed[(i, j)])
        rows.append(tuple(row))
    return MovementMatrix(n, tuple(rows))


def scenario_to_dict(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "id": scenario.scenario_id,
        "config": {
            "num_aggregators": cfg.num_aggregators,
            "budgets_kw": list(cfg.budgets_kw),
            "horizon_slots": cfg.horizon_slots,
            "slot_hours": cfg.slot_hours,
            "beta_max": cfg.beta_max,
            "movement": _movement_to_dict(cfg.movement),
        },
        "devices": [
            {
                "id": d.id,
                "arrival_slot": d.arrival_slot,
                "deadline_slot": d.deadline_slot,
                "mobile": d.mobile,
                "initial_energy_kwh": d.initial_energy_kwh,
                "demand_kwh": d.demand_kwh,
                "criticality": d.criticality,
                "modes_kw": list(d.modes.levels_kw),
                "home": d.home,
            }
            for d in scenario.devices
        ],
    }


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        cfg_doc = doc["config"]
        cfg = SystemConfig(
            num_aggregators=int(cfg_doc["num_aggregators"]),
            budgets_kw=tuple(float(b) for b in cfg_doc["budgets_kw"]),
            horizon_slots=int(cfg_doc["horizon_slots"]),
            slot_hours=float(cfg_doc["slot_hours"]),
            movement=_movement_from_dict(cfg_doc["movement"]),
            beta_max=float(cfg_doc.get("beta_max", DEFAULT_BETA_MAX)),
        )
        devices = tuple(
            DeviceRequest(
                id=str(d["id"]),
                arrival_slot=int(d["arrival_slot"]),
                deadline_slot=int(d["deadline_slot"]),
                mobile=bool(d["mobile"]),
                initial_energy_kwh=float(d["initial_energy_kwh"]),
                demand_kwh=float(d["demand_kwh"]),
                criticality=float(d["criticality"]),
                modes=PowerModeSet(tuple(float(m) for m in d["modes_kw"])),
                home=int(d["home"]),
            )
            for d in doc["devices"]
        )
        return Scenario(str(doc["id"]), cfg, devices)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad scenario document: {exc}") from exc


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True))


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
