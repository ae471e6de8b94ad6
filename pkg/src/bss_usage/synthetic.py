"""Deterministic synthetic raw data in each city's native format.

Used as the desk-scale stand-in for the real feeds: five trip-record cities
written in their own column layouts and one snapshot city (TYO) written as
minute-level availability readings.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .ingest import CITY_TIMEZONES

CITIES = ("NY", "LON", "TYO", "BOS", "CHI", "DC")
TRIP_HEADER = [
    "ride_id", "rideable_type", "started_at", "ended_at",
    "start_station_name", "start_station_id", "end_station_name", "end_station_id",
    "start_lat", "start_lng", "end_lat", "end_lng", "member_casual",
]
LON_HEADER = [
    "Number", "Start date", "Start station number", "Start station",
    "End date", "End station number", "End station", "Bike number",
    "Bike model", "Total duration", "Total duration (ms)",
]


@dataclass(frozen=True)
class CityProfile:
    n_stations: int = 60
    trips_per_weekday: int = 400
    trips_per_weekend: int = 250
    morning_peak: float = 8.0
    evening_peak: float = 18.0
    # how far weekend station popularity drifts from weekday popularity
    weekend_shuffle: float = 0.3


PROFILES = {
    "NY": CityProfile(n_stations=80, trips_per_weekday=600, trips_per_weekend=400, morning_peak=7.5),
    "LON": CityProfile(n_stations=60, weekend_shuffle=1.5),
    "TYO": CityProfile(n_stations=40, trips_per_weekday=300, trips_per_weekend=120),
    "BOS": CityProfile(n_stations=50, trips_per_weekday=250, trips_per_weekend=150),
    "CHI": CityProfile(n_stations=60, trips_per_weekday=250, trips_per_weekend=150),
    "DC": CityProfile(n_stations=50, trips_per_weekday=250, trips_per_weekend=150),
}


def hourly_profile(weekend: bool, profile: CityProfile, friday: bool = False) -> np.ndarray:
    """Minute-of-day intensity: bimodal commute on weekdays, one broad
    midday hump on weekends, low overnight."""
    t = np.arange(1440) / 60.0
    base = 0.05 + 0.25 * np.exp(-0.5 * ((t - 14.0) / 4.0) ** 2)
    if weekend:
        lam = base + 1.0 * np.exp(-0.5 * ((t - 14.0) / 3.0) ** 2)
    else:
        lam = (
            base
            + 1.2 * np.exp(-0.5 * ((t - profile.morning_peak) / 1.0) ** 2)
            + 1.4 * np.exp(-0.5 * ((t - profile.evening_peak) / 1.3) ** 2)
        )
        if friday:
            lam = 0.6 * lam + 0.4 * (base + np.exp(-0.5 * ((t - 15.0) / 3.0) ** 2))
    lam[t < 5.0] *= 0.2
    return lam / lam.sum()


def station_weights(n, rng, alpha=0.3, beta=None, gamma=1.5):
    k = np.arange(1, n + 1, dtype=float)
    beta = beta if beta is not None else np.log(2.0) / (n / 2.0) ** gamma
    return k ** (-alpha) * np.exp(-beta * k**gamma)


def simulate_trips(city, start: date, days: int, rng, profile: CityProfile):
    """Trips as tuples (start_dt, start_station, end_dt, end_station)."""
    n = profile.n_stations
    ids = [f"{city}{i:04d}" for i in range(n)]
    w_wd = station_weights(n, rng)
    order = np.argsort(np.arange(n) + rng.normal(0, profile.weekend_shuffle * n / 4, n))
    w_we = np.empty(n)
    w_we[order] = np.sort(w_wd)[::-1]
    trips = []
    for d in range(days):
        day = start + timedelta(days=d)
        weekend = day.weekday() >= 5
        lam = hourly_profile(weekend, profile, friday=day.weekday() == 4)
        n_trips = rng.poisson(profile.trips_per_weekend if weekend else profile.trips_per_weekday)
        w = w_we if weekend else w_wd
        p = w / w.sum()
        minutes = rng.choice(1440, size=n_trips, p=lam)
        origin = rng.choice(n, size=n_trips, p=p)
        dest = rng.choice(n, size=n_trips, p=p)
        dur = rng.integers(3, 40, size=n_trips)
        secs = rng.integers(0, 60, size=n_trips)
        midnight = datetime(day.year, day.month, day.day)
        for m, o, de, du, s in zip(minutes, origin, dest, dur, secs):
            t0 = midnight + timedelta(minutes=int(m), seconds=int(s))
            trips.append((t0, ids[o], t0 + timedelta(minutes=int(du)), ids[de]))
    trips.sort()
    return ids, trips


def _coords(ids, rng):
    return {s: (40.0 + rng.random() * 0.2, -74.0 + rng.random() * 0.2) for s in ids}


def write_trip_csv(city, trips, ids, path, rng, n_malformed=3):
    coords = _coords(ids, rng)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRIP_HEADER)
        for i, (t0, s0, t1, s1) in enumerate(trips):
            (la0, ln0), (la1, ln1) = coords[s0], coords[s1]
            w.writerow([
                f"{city}-{i:08d}", "classic_bike",
                t0.strftime("%Y-%m-%d %H:%M:%S"), t1.strftime("%Y-%m-%d %H:%M:%S"),
                f"Station {s0}", s0, f"Station {s1}", s1,
                f"{la0:.6f}", f"{ln0:.6f}", f"{la1:.6f}", f"{ln1:.6f}", "member",
            ])
        # a few bad rows of the kinds real feeds contain
        for j in range(n_malformed):
            t0, s0, t1, _ = trips[j]
            w.writerow([f"{city}-bad{j}", "classic_bike", t0.strftime("%Y-%m-%d %H:%M:%S"),
                        t1.strftime("%Y-%m-%d %H:%M:%S"), f"Station {s0}", s0, "", "", "", "", "", "", "member"])


def write_london_csv(trips, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LON_HEADER)
        for i, (t0, s0, t1, s1) in enumerate(trips):
            dur = int((t1 - t0).total_seconds())
            w.writerow([
                130000000 + i, t0.strftime("%Y-%m-%d %H:%M"), s0, f"Station {s0}",
                t1.strftime("%Y-%m-%d %H:%M"), s1, f"Station {s1}", 10000 + i % 500,
                "CLASSIC", f"{dur // 60}m {dur % 60}s", dur * 1000,
            ])
        w.writerow([139999999, "not a date", "LON0001", "Station LON0001",
                    "2023-09-28 10:00", "LON0002", "Station LON0002", 1, "CLASSIC", "1m", 60000])


def write_snapshot_csv(trips, ids, start: date, days: int, path, heartbeat=5, stock=200):
    """Availability readings per station: one whenever the count changes and
    at least every ``heartbeat`` minutes otherwise."""
    origin = datetime(start.year, start.month, start.day)
    n_min = days * 1440
    index = {s: i for i, s in enumerate(ids)}
    delta = np.zeros((len(ids), n_min + 40), dtype=np.int64)
    for t0, s0, t1, s1 in trips:
        m0 = int((t0 - origin).total_seconds() // 60)
        m1 = int((t1 - origin).total_seconds() // 60)
        delta[index[s0], m0] -= 1
        delta[index[s1], m1] += 1
    level = stock + np.cumsum(delta[:, :n_min], axis=1)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["station_id", "observed_at", "bikes_available"])
        for m in range(n_min):
            stamp = (origin + timedelta(minutes=m)).strftime("%Y-%m-%dT%H:%M:00+09:00")
            col = level[:, m]
            prev = level[:, m - 1] if m else None
            for i, s in enumerate(ids):
                if m % heartbeat == 0 or prev is None or col[i] != prev[i]:
                    w.writerow([s, stamp, int(col[i])])


def generate_fixture(out_dir, start: date = date(2023, 10, 2), days: int = 14, seed: int = 0) -> Path:
    """Write raw files for all six cities plus a pipeline config; returns the
    config path."""
    out_dir = Path(out_dir)
    raw = out_dir / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    end = start + timedelta(days=days - 1)
    cities = []
    for city in CITIES:
        profile = PROFILES[city]
        city_rng = np.random.default_rng(rng.integers(2**63))
        # trips may end after the window closes; one spare day keeps snapshots whole
        ids, trips = simulate_trips(city, start, days, city_rng, profile)
        entry = {
            "id": city,
            "timezone": CITY_TIMEZONES[city],
            "period": [start.isoformat(), end.isoformat()],
            "period_days": days,
        }
        if city == "TYO":
            write_snapshot_csv(trips, ids, start, days + 1, raw / "tyo_station_status.csv")
            entry.update(snapshot=True, input_glob="raw/tyo_*.csv")
        elif city == "LON":
            half = len(trips) // 2
            write_london_csv(trips[:half], raw / "lon_journeys_a.csv")
            write_london_csv(trips[half:], raw / "lon_journeys_b.csv")
            entry.update(schema="LON", input_glob="raw/lon_*.csv")
        else:
            write_trip_csv(city, trips, ids, raw / f"{city.lower()}_tripdata.csv", city_rng)
            entry.update(schema=city, input_glob=f"raw/{city.lower()}_*.csv")
        cities.append(entry)
    config = {
        "cities": cities,
        "bin_width": 60,
        "direction": "rental",
        "top_k_edges": 50,
        "seed": seed,
        "epsilon": 1e-9,
        "output_dir": "out",
    }
    path = out_dir / "config.json"
    path.write_text(json.dumps(config, indent=2) + "\n")
    return path
