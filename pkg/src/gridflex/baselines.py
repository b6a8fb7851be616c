"""Reference schedulers: earliest-deadline and highest-power ranking.

Both reuse the heuristic's two-pass serving mechanism so the ranking
function is the only varied factor. A scheduler spec also fixes whether
device mobility is active by default; baselines keep devices in their
home clusters unless explicitly enabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .heuristic import (
    UPGRADE_ROUND_ROBIN,
    AggregatorState,
    RankFn,
    heuristic_rank,
    schedule_slot,
)
from .model import DeviceState, Serve


def edf_rank(cluster: Sequence[DeviceState], slot: int) -> list[DeviceState]:
    """Nearest deadline first; ties by device id."""
    return sorted(cluster, key=lambda d: (d.request.deadline_slot, d.request.id))


def hp_rank(cluster: Sequence[DeviceState], slot: int) -> list[DeviceState]:
    """Largest outstanding demand first; ties by device id."""
    return sorted(cluster, key=lambda d: (-d.deficit_kwh, d.request.id))


def edf_schedule_slot(
    agg: AggregatorState,
    cluster: Sequence[DeviceState],
    slot: int,
    slot_hours: float,
    upgrade_policy: str = UPGRADE_ROUND_ROBIN,
) -> dict[str, Serve]:
    return schedule_slot(agg, cluster, slot, slot_hours, edf_rank, upgrade_policy)


def hp_schedule_slot(
    agg: AggregatorState,
    cluster: Sequence[DeviceState],
    slot: int,
    slot_hours: float,
    upgrade_policy: str = UPGRADE_ROUND_ROBIN,
) -> dict[str, Serve]:
    return schedule_slot(agg, cluster, slot, slot_hours, hp_rank, upgrade_policy)


@dataclass(frozen=True)
class SchedulerSpec:
    """A named scheduler: ranking function plus its default mobility mode."""

    name: str
    rank_fn: RankFn
    mobility_default: bool


SCHEDULERS: dict[str, SchedulerSpec] = {
    "heuristic": SchedulerSpec("heuristic", heuristic_rank, mobility_default=True),
    "edf": SchedulerSpec("edf", edf_rank, mobility_default=False),
    "hp": SchedulerSpec("hp", hp_rank, mobility_default=False),
}


def get_scheduler(name: str) -> SchedulerSpec:
    try:
        return SCHEDULERS[name]
    except KeyError:
        raise KeyError(
            f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}"
        ) from None


def set_mobility_enabled(spec: SchedulerSpec, enabled: bool) -> SchedulerSpec:
    """Copy of the scheduler spec with mobility forced on or off."""
    return SchedulerSpec(spec.name, spec.rank_fn, mobility_default=enabled)
