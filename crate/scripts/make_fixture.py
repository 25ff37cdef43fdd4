#!/usr/bin/env python3
"""Generate the synthetic dockless-trip fixture in the Austin export layout.

Usage: python3 scripts/make_fixture.py [rows] [out_path]

The output is deterministic for a given row count. About 3% of rows are
deliberately dirty (unparseable fields, too short, too long, zero duration,
unknown vehicle) so the ingest and filter paths are exercised.
"""

import csv
import datetime as dt
import math
import random
import sys

HEADER = [
    "ID", "Device ID", "Vehicle Type", "Trip Duration", "Trip Distance",
    "Start Time", "End Time", "Month", "Hour", "Day of Week", "Year",
    "Council District (Start)", "Council District (End)",
    "Census Tract Start", "Census Tract End",
]

FIRST = dt.datetime(2018, 12, 3)
LAST = dt.datetime(2019, 5, 20, 23, 59, 59)

# relative trip volume by hour of day
HOUR_WEIGHTS = [2, 1, 1, 1, 1, 2, 3, 5, 7, 6, 6, 7, 9, 9, 9, 9, 10, 11, 10, 8, 7, 5, 4, 3]


def mean_speed(vehicle, start):
    weekend = start.weekday() >= 5
    hour = start.hour
    if vehicle == "bicycle":
        base = 3.0 if weekend else 3.45
        base += 0.15 if hour < 11 else -0.1
    else:
        base = 2.3 if weekend else 2.55
        base += 0.3 if 3 <= hour < 12 else -0.2
    return base


def fmt(t):
    return t.strftime("%m/%d/%Y %I:%M:%S %p")


def row(rng, i):
    span = int((LAST - FIRST).total_seconds() // 86400)
    day = FIRST + dt.timedelta(days=rng.randint(0, span))
    hour = rng.choices(range(24), weights=HOUR_WEIGHTS)[0]
    start = day.replace(hour=hour, minute=rng.randint(0, 59), second=rng.randint(0, 59))
    vehicle = "bicycle" if rng.random() < 0.35 else "scooter"
    speed = max(0.4, rng.gauss(mean_speed(vehicle, start), 0.8))
    duration = max(2, int(round(math.exp(rng.gauss(math.log(500), 0.6)))))
    distance = int(round(speed * duration))

    start_text = fmt(start)
    duration_text = str(duration)
    distance_text = str(distance)
    if rng.random() < 0.03:
        kind = rng.randrange(6)
        if kind == 0:
            distance_text = "abc"
        elif kind == 1:
            distance_text = str(rng.randint(0, 150))
        elif kind == 2:
            duration_text = str(rng.randint(86400, 100000))
        elif kind == 3:
            duration_text = "0"
        elif kind == 4:
            start_text = "not a date"
        else:
            vehicle = "moped"

    end = start + dt.timedelta(seconds=duration)
    district = rng.randint(1, 10)
    tract = "48453%06d" % rng.randint(0, 999999)
    return [
        "%08x-%04x" % (rng.getrandbits(32), i),
        "%012x" % rng.getrandbits(48),
        vehicle,
        duration_text,
        distance_text,
        start_text,
        fmt(end),
        start.month,
        start.hour,
        (start.weekday() + 1) % 7,
        start.year,
        district,
        max(1, min(10, district + rng.choice([-1, 0, 0, 1]))),
        tract,
        tract,
    ]


def main():
    rows = int(sys.argv[1]) if len(sys.argv) > 1 else 10000
    out = sys.argv[2] if len(sys.argv) > 2 else "crates/core/tests/fixtures/austin_synthetic_10k.csv"
    rng = random.Random(20190520)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(HEADER)
        for i in range(rows):
            writer.writerow(row(rng, i))


if __name__ == "__main__":
    main()
