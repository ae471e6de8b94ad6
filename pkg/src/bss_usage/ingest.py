"""Raw bike-share data -> canonical per-station, per-minute usage events.

Two raw shapes are supported:

* trip records (one row per ride), parsed through a per-city column map
  (:class:`CitySchema`), and
* minute-resolution station snapshots (``station_id, observed_at,
  bikes_available``), from which activity is inferred by signed deltas.

All timestamps are city-local civil time truncated to the minute.  Aware
timestamps in the input are converted to the city timezone and then made
naive; naive timestamps are taken to already be local.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
WEEKDAY = "weekday"
WEEKEND = "weekend"

DEFAULT_MAX_GAP = 5
DEFAULT_MALFORMED_THRESHOLD = 0.01

CITY_TIMEZONES = {
    "NY": "America/New_York",
    "LON": "Europe/London",
    "TYO": "Asia/Tokyo",
    "BOS": "America/New_York",
    "CHI": "America/Chicago",
    "DC": "America/New_York",
}

REQUIRED_FIELDS = ("trip_id", "start_station", "start_time", "end_station", "end_time")
COORD_FIELDS = ("start_lat", "start_lng", "end_lat", "end_lng")


class IngestError(Exception):
    """Raised when a raw file cannot be turned into records."""


class SchemaError(IngestError):
    pass


class MalformedRowsError(IngestError):
    def __init__(self, path, n_rows, malformed, threshold):
        self.path = path
        self.n_rows = n_rows
        self.malformed = malformed
        self.threshold = threshold
        head = "; ".join(f"line {m.line}: {m.reason}" for m in malformed[:10])
        super().__init__(
            f"{path}: {len(malformed)} of {n_rows} rows malformed "
            f"(threshold {threshold:.2%}); first: {head}"
        )


class UnsortedSnapshotsError(IngestError):
    pass


class OutOfPeriodError(IngestError):
    pass


# ---------------------------------------------------------------------------
# domain types


def _check_coord(coord):
    if coord is None:
        return
    lat, lng = coord
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lng <= 180.0):
        raise ValueError(f"coordinate out of range: {coord}")


@dataclass(frozen=True, slots=True)
class TripRecord:
    trip_id: str
    start_station: str
    start_time: datetime
    end_station: str
    end_time: datetime
    start_coord: tuple[float, float] | None = None
    end_coord: tuple[float, float] | None = None

    def __post_init__(self):
        if self.end_time < self.start_time:
            raise ValueError(f"trip {self.trip_id}: end_time before start_time")
        _check_coord(self.start_coord)
        _check_coord(self.end_coord)


@dataclass(frozen=True, slots=True)
class StationSnapshot:
    station_id: str
    observed_at: datetime
    bikes_available: int

    def __post_init__(self):
        if self.bikes_available < 0:
            raise ValueError("bikes_available must be non-negative")


@dataclass(frozen=True, slots=True, order=True)
class UsageEvent:
    # field order gives the canonical (minute, station_id) sort
    minute: datetime
    station_id: str
    rentals: int = 0
    returns: int = 0

    def __post_init__(self):
        if self.rentals < 0 or self.returns < 0:
            raise ValueError("counts must be non-negative")
        if self.rentals + self.returns < 1:
            raise ValueError("zero-activity events are not materialized")

    @property
    def total(self) -> int:
        return self.rentals + self.returns


@dataclass(frozen=True)
class DatasetSummary:
    city: str
    period: tuple[date, date]
    weekday_total: int
    weekend_total: int
    weekday_stations: int
    weekend_stations: int
    total_stations: int

    def to_dict(self) -> dict:
        return {
            "city": self.city,
            "period": [self.period[0].isoformat(), self.period[1].isoformat()],
            "weekday_total": self.weekday_total,
            "weekend_total": self.weekend_total,
            "weekday_stations": self.weekday_stations,
            "weekend_stations": self.weekend_stations,
            "total_stations": self.total_stations,
        }


@dataclass(frozen=True)
class MalformedRow:
    line: int
    reason: str


@dataclass
class ParseResult:
    """Records parsed from one file plus what was rejected along the way."""

    path: str
    records: list
    n_rows: int
    malformed: list[MalformedRow] = field(default_factory=list)
    duplicates: int = 0

    def report(self) -> dict:
        return {
            "path": self.path,
            "rows": self.n_rows,
            "records": len(self.records),
            "malformed": len(self.malformed),
            "duplicates": self.duplicates,
            "malformed_sample": [
                {"line": m.line, "reason": m.reason} for m in self.malformed[:20]
            ],
        }


@dataclass(frozen=True)
class Gap:
    station_id: str
    start: datetime
    end: datetime

    @property
    def minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


# ---------------------------------------------------------------------------
# calendar


def day_name(d: date) -> str:
    return DAY_NAMES[d.weekday()]


def day_class(d: date) -> str:
    """Mon-Fri is a weekday, Sat-Sun a weekend.  Holidays are not special."""
    return WEEKEND if d.weekday() >= 5 else WEEKDAY


@dataclass(frozen=True)
class Calendar:
    """Inclusive date range whose days are classed as weekday or weekend."""

    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("calendar end precedes start")

    @classmethod
    def from_strings(cls, start: str, end: str) -> "Calendar":
        return cls(date.fromisoformat(start), date.fromisoformat(end))

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def __contains__(self, d: date) -> bool:
        return self.start <= d <= self.end

    def classify(self, d: date) -> str:
        if d not in self:
            raise OutOfPeriodError(f"{d} outside calendar {self.start}..{self.end}")
        return day_class(d)

    def dates(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range(self.n_days)]


# ---------------------------------------------------------------------------
# schemas


@dataclass(frozen=True)
class CitySchema:
    """Column map for one city's trip files.

    ``columns`` maps a TripRecord field name (plus the optional coordinate
    fields ``start_lat`` .. ``end_lng``) to a header name or a 0-based column
    position.  ``time_format`` is a strptime pattern; ``None`` means ISO-8601.
    """

    id: str
    columns: Mapping[str, str | int]
    time_format: str | None = None
    delimiter: str = ","
    timezone: str | None = None

    def __post_init__(self):
        missing = [f for f in REQUIRED_FIELDS if f not in self.columns]
        if missing:
            raise SchemaError(f"schema {self.id!r} lacks columns for {missing}")
        unknown = set(self.columns) - set(REQUIRED_FIELDS) - set(COORD_FIELDS)
        if unknown:
            raise SchemaError(f"schema {self.id!r} maps unknown fields {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CitySchema":
        return cls(
            id=d["id"],
            columns=dict(d["columns"]),
            time_format=d.get("time_format"),
            delimiter=d.get("delimiter", ","),
            timezone=d.get("timezone"),
        )


def builtin_schema_ids() -> list[str]:
    pkg = resources.files("bss_usage") / "schemas"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_schema(ref: str | Path) -> CitySchema:
    """Load a schema from a JSON file path or by built-in id (``NY``, ``LON``, ...)."""
    p = Path(ref)
    if p.suffix == ".json" and p.exists():
        text = p.read_text()
    else:
        res = resources.files("bss_usage") / "schemas" / f"{str(ref).upper()}.json"
        if not res.is_file():
            raise SchemaError(
                f"unknown schema id {ref!r}; built-ins are {builtin_schema_ids()}"
            )
        text = res.read_text()
    try:
        return CitySchema.from_dict(json.loads(text))
    except (KeyError, json.JSONDecodeError) as exc:
        raise SchemaError(f"bad schema descriptor {ref}: {exc}") from exc


# ---------------------------------------------------------------------------
# parsing


def _read_raw(path, delimiter=",") -> pd.DataFrame:
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, sep=delimiter, on_bad_lines="error"
        )
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _column(df: pd.DataFrame, ref: str | int, path) -> pd.Series:
    if isinstance(ref, int):
        if ref >= df.shape[1]:
            raise SchemaError(f"{path}: column position {ref} out of range")
        return df.iloc[:, ref].str.strip()
    if ref not in df.columns:
        raise SchemaError(f"{path}: missing column {ref!r}")
    return df[ref].str.strip()


def _to_local_minutes(raw: pd.Series, fmt: str | None, timezone: str | None) -> pd.Series:
    ts = pd.to_datetime(raw, format=fmt or "ISO8601", errors="coerce")
    if getattr(ts.dt, "tz", None) is not None:
        if timezone is None:
            raise IngestError("aware timestamps need a city timezone")
        ts = ts.dt.tz_convert(timezone).dt.tz_localize(None)
    return ts.dt.floor("min")


def _coord_series(df, schema, name, path):
    if name not in schema.columns:
        return None, None
    raw = _column(df, schema.columns[name], path)
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna() & (raw != "")
    return vals, bad


def _finish(path, n_rows, malformed, records, threshold, duplicates=0) -> ParseResult:
    if n_rows and len(malformed) > threshold * n_rows:
        raise MalformedRowsError(str(path), n_rows, malformed, threshold)
    if malformed:
        log.info("%s: %d malformed rows skipped", path, len(malformed))
    return ParseResult(str(path), records, n_rows, malformed, duplicates)


def parse_trip_file(
    path,
    schema: CitySchema | str,
    timezone: str | None = None,
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD,
) -> ParseResult:
    """Parse one trip CSV into TripRecords, in file order.

    Rows with missing stations, unparseable times, ``end < start`` or
    out-of-range coordinates are collected in ``ParseResult.malformed``.
    More than ``malformed_threshold`` of the rows being malformed is a
    hard error.
    """
    if not isinstance(schema, CitySchema):
        schema = load_schema(schema)
    timezone = timezone or schema.timezone
    df = _read_raw(path, schema.delimiter)
    n = len(df)
    cols = schema.columns

    trip_id = _column(df, cols["trip_id"], path)
    s_station = _column(df, cols["start_station"], path)
    e_station = _column(df, cols["end_station"], path)
    s_time = _to_local_minutes(_column(df, cols["start_time"], path), schema.time_format, timezone)
    e_time = _to_local_minutes(_column(df, cols["end_time"], path), schema.time_format, timezone)

    reason = np.full(n, "", dtype=object)

    def flag(mask, why):
        mask = np.asarray(mask, dtype=bool) & (reason == "")
        reason[mask] = why

    flag(s_station == "", "missing start station")
    flag(e_station == "", "missing end station")
    flag(s_time.isna(), "unparseable start time")
    flag(e_time.isna(), "unparseable end time")
    flag((e_time < s_time).fillna(False), "end before start")

    coords = {}
    for name in COORD_FIELDS:
        vals, bad = _coord_series(df, schema, name, path)
        if vals is None:
            continue
        flag(bad, f"non-numeric {name}")
        limit = 90.0 if name.endswith("lat") else 180.0
        flag((vals.abs() > limit).fillna(False), f"{name} out of range")
        coords[name] = vals.to_numpy(dtype=float)

    ok = reason == ""
    malformed = [MalformedRow(int(i) + 2, reason[i]) for i in np.flatnonzero(~ok)]

    idx = np.flatnonzero(ok)
    starts = s_time.to_numpy()[idx].astype("datetime64[m]").tolist()
    ends = e_time.to_numpy()[idx].astype("datetime64[m]").tolist()
    tid = trip_id.to_numpy()[idx]
    ss = s_station.to_numpy()[idx]
    es = e_station.to_numpy()[idx]

    def pairs(lat, lng):
        if lat not in coords or lng not in coords:
            return [None] * len(idx)
        la, ln = coords[lat][idx], coords[lng][idx]
        return [
            None if (np.isnan(a) or np.isnan(b)) else (float(a), float(b))
            for a, b in zip(la, ln)
        ]

    sc = pairs("start_lat", "start_lng")
    ec = pairs("end_lat", "end_lng")
    records = [
        TripRecord(str(t), str(a), st, str(b), et, c0, c1)
        for t, a, st, b, et, c0, c1 in zip(tid, ss, starts, es, ends, sc, ec)
    ]
    return _finish(path, n, malformed, records, malformed_threshold)


def parse_snapshot_file(
    path,
    timezone: str | None = None,
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD,
) -> ParseResult:
    """Parse a ``station_id, observed_at, bikes_available`` CSV.

    Output is grouped by station and sorted by time; repeated readings for
    the same station and minute keep the first one in file order.
    """
    df = _read_raw(path)
    n = len(df)
    for col in ("station_id", "observed_at", "bikes_available"):
        if col not in df.columns:
            raise SchemaError(f"{path}: missing column {col!r}")
    station = df["station_id"].str.strip()
    observed = _to_local_minutes(df["observed_at"].str.strip(), None, timezone)
    bikes = pd.to_numeric(df["bikes_available"].str.strip(), errors="coerce")

    reason = np.full(n, "", dtype=object)
    for mask, why in (
        (station == "", "missing station"),
        (observed.isna(), "unparseable observed_at"),
        (bikes.isna(), "non-numeric bikes_available"),
        ((bikes < 0) | (bikes % 1 != 0), "bikes_available not a non-negative integer"),
    ):
        m = np.asarray(mask.fillna(False), dtype=bool) & (reason == "")
        reason[m] = why
    ok = reason == ""
    malformed = [MalformedRow(int(i) + 2, reason[i]) for i in np.flatnonzero(~ok)]

    good = pd.DataFrame(
        {"station": station[ok], "t": observed[ok], "n": bikes[ok].astype(np.int64)}
    )
    before = len(good)
    good = good.drop_duplicates(subset=["station", "t"], keep="first")
    good = good.sort_values(["station", "t"], kind="stable")
    records = [
        StationSnapshot(str(s), t, int(b))
        for s, t, b in zip(
            good["station"].to_numpy(),
            good["t"].to_numpy().astype("datetime64[m]").tolist(),
            good["n"].to_numpy(),
        )
    ]
    return _finish(path, n, malformed, records, malformed_threshold, before - len(good))


# ---------------------------------------------------------------------------
# events


def _materialize(counts: Mapping[tuple[datetime, str], list[int]]) -> list[UsageEvent]:
    return [
        UsageEvent(minute, station, r, t)
        for (minute, station), (r, t) in sorted(counts.items())
    ]


def trips_to_events(trips: Iterable[TripRecord]) -> list[UsageEvent]:
    """One rental at (start station, start minute) and one return at (end
    station, end minute) per trip, aggregated and sorted by (minute, station)."""
    rentals = Counter()
    returns = Counter()
    for t in trips:
        rentals[(t.start_time, t.start_station)] += 1
        returns[(t.end_time, t.end_station)] += 1
    counts = {k: [v, 0] for k, v in rentals.items()}
    for k, v in returns.items():
        counts.setdefault(k, [0, 0])[1] = v
    return _materialize(counts)


def snapshots_to_events(
    snapshots: Iterable[StationSnapshot], max_gap: int = DEFAULT_MAX_GAP
) -> tuple[list[UsageEvent], list[Gap]]:
    """Infer activity from availability deltas between consecutive readings.

    A drop of d bikes is d rentals and a rise is d returns, both stamped at
    the later reading.  Readings more than ``max_gap`` minutes apart emit
    nothing and are reported as gaps.  Stations may interleave, but each
    station's readings must be strictly increasing in time.
    """
    limit = timedelta(minutes=max_gap)
    last: dict[str, StationSnapshot] = {}
    counts = {}
    gaps = []
    for s in snapshots:
        prev = last.get(s.station_id)
        last[s.station_id] = s
        if prev is None:
            continue
        if s.observed_at <= prev.observed_at:
            raise UnsortedSnapshotsError(
                f"station {s.station_id}: {s.observed_at} does not follow {prev.observed_at}"
            )
        if s.observed_at - prev.observed_at > limit:
            gaps.append(Gap(s.station_id, prev.observed_at, s.observed_at))
            continue
        delta = s.bikes_available - prev.bikes_available
        if delta < 0:
            counts[(s.observed_at, s.station_id)] = [-delta, 0]
        elif delta > 0:
            counts[(s.observed_at, s.station_id)] = [0, delta]
    return _materialize(counts), gaps


def merge_events(*streams: Iterable[UsageEvent]) -> list[UsageEvent]:
    """Combine event streams (e.g. one per file); the result does not depend
    on stream order."""
    counts = {}
    for stream in streams:
        for e in stream:
            c = counts.setdefault((e.minute, e.station_id), [0, 0])
            c[0] += e.rentals
            c[1] += e.returns
    return _materialize(counts)


def restrict_to_period(
    events: Iterable[UsageEvent], calendar: Calendar
) -> tuple[list[UsageEvent], int]:
    kept = []
    dropped = 0
    for e in events:
        if e.minute.date() in calendar:
            kept.append(e)
        else:
            dropped += 1
    return kept, dropped


def summarize(events: Sequence[UsageEvent], calendar: Calendar, city: str = "") -> DatasetSummary:
    totals = {WEEKDAY: 0, WEEKEND: 0}
    stations = {WEEKDAY: set(), WEEKEND: set()}
    for e in events:
        cls = calendar.classify(e.minute.date())
        totals[cls] += e.total
        stations[cls].add(e.station_id)
    return DatasetSummary(
        city=city,
        period=(calendar.start, calendar.end),
        weekday_total=totals[WEEKDAY],
        weekend_total=totals[WEEKEND],
        weekday_stations=len(stations[WEEKDAY]),
        weekend_stations=len(stations[WEEKEND]),
        total_stations=len(stations[WEEKDAY] | stations[WEEKEND]),
    )
