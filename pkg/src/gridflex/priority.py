"""Priority scoring and deterministic ranking for the online heuristic.

The score is a pure function of deficit and deadline distance; ranking
breaks ties on criticality (higher first), then on the smallest non-zero
power mode (easier to fit), then on device id so the order is total and
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass


def priority(progress_kwh: float, demand_kwh: float, slot: int, deadline_slot: int) -> float:
    """Urgency score: deficit ratio scaled by deadline distance.

    Overdue devices score deficit_ratio * slots_late; devices ahead of
    their deadline score deficit_ratio / slots_remaining; exactly at the
    deadline the score is the deficit ratio itself. Callers exclude
    fully-served devices, so the score is non-negative.
    """
    ratio = (demand_kwh - progress_kwh) / demand_kwh
    if slot > deadline_slot:
        return ratio * (slot - deadline_slot)
    if slot < deadline_slot:
        return ratio / (deadline_slot - slot)
    return ratio


@dataclass(frozen=True)
class PriorityEntry:
    device_id: str
    value: float
    criticality: float
    min_mode_kw: float


def rank(entries: list[PriorityEntry]) -> list[PriorityEntry]:
    """Descending by score; ties by higher criticality, then smaller
    minimum mode, then id."""
    return sorted(
        entries,
        key=lambda e: (-e.value, -e.criticality, e.min_mode_kw, e.device_id),
    )
