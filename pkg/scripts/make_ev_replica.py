#!/usr/bin/env python3
"""Regenerate the bundled synthetic charging-session file.

Produces src/gridflex/data/ev_sessions_2020_replica.csv: a year of
workplace-style charging sessions spread over twenty stations. Arrivals
and departures follow a handful of shift patterns (with a few minutes of
jitter), which is what badge-hours charging looks like once times land
on half-hour slots: many vehicles share arrival and departure slots, and
the fleet mixes short top-ups with long full-day charges.

The file stands in for real testbed data, which is not redistributed
here; it is committed so tests and experiments are bit-stable, and this
script documents exactly how it was drawn.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

SEED = 20200101
N_SESSIONS = 760
N_STATIONS = 20

# (arrival hour, departure hour, weight): the site is badge-hours dominated,
# plus service vans parked into the evening and an after-hours fleet
SHIFT_PATTERNS = (
    (9.17, 17.17, 0.78),
    (8.7, 22.0, 0.08),
    (18.6, 23.2, 0.14),
)
VAN_PATTERN = 1

OUT = (
    Path(__file__).resolve().parents[1]
    / "src"
    / "gridflex"
    / "data"
    / "ev_sessions_2020_replica.csv"
)


def main() -> None:
    rng = np.random.Generator(np.random.PCG64(SEED))
    weights = np.array([p[2] for p in SHIFT_PATTERNS])
    weights = weights / weights.sum()
    rows = []
    for _ in range(N_SESSIONS):
        day = int(rng.integers(0, 366))
        date = datetime(2020, 1, 1) + timedelta(days=day)

        pattern = int(rng.choice(len(SHIFT_PATTERNS), p=weights))
        start_h, end_h, _ = SHIFT_PATTERNS[pattern]
        arrival = date + timedelta(
            minutes=round(start_h * 60 + float(rng.normal(0.0, 7.0)))
        )
        departure = date + timedelta(
            minutes=round(end_h * 60 + float(rng.normal(0.0, 7.0)))
        )
        if departure <= arrival:
            departure = arrival + timedelta(minutes=30)

        stay_h = (departure - arrival).total_seconds() / 3600.0
        if pattern == VAN_PATTERN:
            # service vans run routes all day and need a real recharge
            kwh = float(np.clip(rng.normal(27.0, 5.0), 18.0, 35.0))
        else:
            # commuter top-ups dominate; everything stays well under the
            # stay's deliverable energy so sessions are individually easy
            kwh = float(np.clip(rng.gamma(shape=2.0, scale=2.5), 2.0, min(13.0, 1.6 * stay_h)))
        kwh = max(kwh, 2.0)
        station = f"ST-{int(rng.integers(1, N_STATIONS + 1)):02d}"
        rows.append(
            (
                arrival.isoformat(timespec="minutes"),
                departure.isoformat(timespec="minutes"),
                f"{kwh:.2f}",
                station,
            )
        )

    rows.sort()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arrival", "departure", "kwh", "station"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} sessions to {OUT}")


if __name__ == "__main__":
    main()
