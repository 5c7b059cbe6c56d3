"""Regenerates the two-sensor, 60-day synthetic fixture.

    python3 generate.py

Writes sensors.csv, poi.csv, weather.csv, flows_periodic/flows.csv (noiseless,
weekly periodic) and flows_noisy/<sensor>.csv (multiplicative noise plus a
30-hour outage on the second sensor).
"""

import csv
import math
import random
from datetime import datetime, timedelta
from pathlib import Path

HERE = Path(__file__).resolve().parent
START = datetime(2018, 11, 20)
DAYS = 60
SENSORS = {
    "400001": dict(scale=1.0, district=3, county="Sacramento", city="Sacramento", freeway="US50-E",
                   lane=4, direction="E", lat=38.5682, lon=-121.4721),
    "400002": dict(scale=0.6, district=3, county="Yolo", city="Davis", freeway="I80-W",
                   lane=3, direction="W", lat=38.5513, lon=-121.7380),
}
CATEGORIES = ["bus_station", "fast_food", "fuel", "hospital", "school", "supermarket", "cinema"]
OUTAGE = ("400002", datetime(2018, 12, 10, 2), 30)


def quarter_count(sensor, ts):
    """Deterministic count for the 15-minute interval starting at ts."""
    h = ts.hour + ts.minute / 60.0
    daily = 12 + 60 * math.exp(-((h - 8) ** 2) / 4) + 70 * math.exp(-((h - 17.5) ** 2) / 5) + 25 * math.sin(math.pi * h / 24)
    weekday = [1.0, 1.02, 1.04, 1.03, 1.08, 0.72, 0.6][ts.weekday()]
    return max(1, int(round(daily * weekday * SENSORS[sensor]["scale"])))


def timestamps():
    t = START
    end = START + timedelta(days=DAYS)
    while t < end:
        yield t
        t += timedelta(minutes=15)


def write_flows():
    periodic = HERE / "flows_periodic"
    noisy = HERE / "flows_noisy"
    periodic.mkdir(exist_ok=True)
    noisy.mkdir(exist_ok=True)
    rng = random.Random(7)
    with open(periodic / "flows.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sensor_id", "timestamp", "count"])
        for s in SENSORS:
            for ts in timestamps():
                w.writerow([s, ts.strftime("%Y-%m-%d %H:%M"), quarter_count(s, ts)])
    out_sensor, out_start, out_hours = OUTAGE
    for s in SENSORS:
        with open(noisy / f"{s}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["sensor_id", "timestamp", "count"])
            for ts in timestamps():
                value = max(0, int(round(quarter_count(s, ts) * rng.gauss(1.0, 0.08))))
                if s == out_sensor and out_start <= ts < out_start + timedelta(hours=out_hours):
                    value = 0
                w.writerow([s, ts.strftime("%Y-%m-%d %H:%M"), value])


def write_sensors():
    with open(HERE / "sensors.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sensor_id", "district", "county", "city", "freeway", "lane", "direction", "latitude", "longitude"])
        for s, m in SENSORS.items():
            w.writerow([s, m["district"], m["county"], m["city"], m["freeway"], m["lane"], m["direction"], m["lat"], m["lon"]])


def write_poi():
    rng = random.Random(11)
    with open(HERE / "poi.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sensor_id", "direction", "category", "radius_km", "count"])
        for s in SENSORS:
            for d in ["east", "west", "north", "south"]:
                for c in CATEGORIES:
                    base = rng.randint(0, 6)
                    for r in [1, 3, 5]:
                        w.writerow([s, d, c, r, base * r + rng.randint(0, 2)])


def write_weather():
    rng = random.Random(3)
    conditions = ["Sunny"] * 6 + ["Rain", "Foggy"]
    with open(HERE / "weather.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "condition", "temp_c", "visibility_miles"])
        for day in range(DAYS):
            date = START + timedelta(days=day)
            if day % 17 == 5:
                continue  # gap exercised by nearest-day fill
            cond = rng.choice(conditions)
            for hour in (6, 12, 18):
                temp = round(8 + 6 * math.sin(math.pi * hour / 24) + rng.uniform(-2, 2), 1)
                vis = 2.0 if cond == "Foggy" else 10.0
                w.writerow([date.strftime("%Y-%m-%d"), cond, temp, vis])


if __name__ == "__main__":
    write_flows()
    write_sensors()
    write_poi()
    write_weather()
