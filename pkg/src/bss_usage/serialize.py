"""File formats for every artifact the pipeline reads or writes.

Floats in CSV are written with 17 significant digits; JSON uses Python's
shortest round-trip repr.  Either way a value read back is bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .divergence import JsdMatrix
from .ingest import DAY_NAMES, UsageEvent
from .jsdnet import JsdNetwork, node_label
from .rankdist import RankDistribution, RankEntry
from .rankmodel import RankCorrespondence, RankPair, Simulation
from .timeseries import DayDistribution, from_counts

EVENT_COLUMNS = ["station_id", "minute", "rentals", "returns"]
DIST_COLUMNS = ["city", "day", "direction", "bin_index", "probability", "count"]
RANK_COLUMNS = ["rank", "station_id", "count", "proportion"]
CORR_COLUMNS = ["station_id", "weekday_rank", "weekend_rank"]
NODE_COLUMNS = ["label", "city", "day", "community"]
EDGE_COLUMNS = ["src", "dst", "weight", "in_top_k"]
SIM_COLUMNS = ["k", "mean", "stderr"]


class FormatError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _writer(path):
    f = open(path, "w", newline="")
    return f, csv.writer(f, lineterminator="\n")


def _read_rows(path, columns) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c for c in columns if c not in reader.fieldnames]:
            raise FormatError(f"{path}: expected columns {columns}, got {reader.fieldnames}")
        return list(reader)


# -- events ---------------------------------------------------------------


def write_events_csv(events: Iterable[UsageEvent], path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([e.station_id, e.minute.strftime("%Y-%m-%dT%H:%M"), e.rentals, e.returns])


def read_events_csv(path) -> list[UsageEvent]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != EVENT_COLUMNS:
            raise FormatError(f"{path}: expected header {EVENT_COLUMNS}, got {header}")
        return [
            UsageEvent(datetime.fromisoformat(m), s, int(r), int(t))
            for s, m, r, t in reader
        ]


# -- distributions --------------------------------------------------------


def write_distributions_csv(dists: Iterable[DayDistribution], path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(DIST_COLUMNS)
        for d in dists:
            for i, (p, c) in enumerate(zip(d.probs, d.counts)):
                w.writerow([d.city, d.day, d.direction, i, fmt(p), int(c)])


def read_distributions_csv(path) -> dict[tuple[str, str, str], DayDistribution]:
    """Keyed (city, day, direction), in file order."""
    counts = defaultdict(list)
    for row in _read_rows(path, DIST_COLUMNS):
        key = (row["city"], row["day"], row["direction"])
        if int(row["bin_index"]) != len(counts[key]):
            raise FormatError(f"{path}: bins out of order for {key}")
        counts[key].append(int(row["count"]))
    out = {}
    for key, c in counts.items():
        if 1440 % len(c):
            raise FormatError(f"{path}: {len(c)} bins do not tile a day")
        out[key] = from_counts(*key, 1440 // len(c), c)
    return out


def day_distributions(dists: Mapping, city: str, direction: str) -> list[DayDistribution]:
    """The Mon..Sun distributions of one city and direction from a mapping
    as returned by :func:`read_distributions_csv`."""
    try:
        return [dists[(city, day, direction)] for day in DAY_NAMES]
    except KeyError as exc:
        raise FormatError(f"no {direction} distribution for {city} {exc.args[0][1]}") from exc


# -- JSD matrix -----------------------------------------------------------


def write_matrix_csv(m: JsdMatrix, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["label", *m.labels])
        for label, row in zip(m.labels, m.values):
            w.writerow([label, *(fmt(v) for v in row)])


def read_matrix_csv(path) -> JsdMatrix:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "label":
        raise FormatError(f"{path}: not a matrix CSV")
    labels = rows[0][1:]
    if [r[0] for r in rows[1:]] != labels:
        raise FormatError(f"{path}: row labels do not match header")
    return JsdMatrix(tuple(labels), np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def matrix_to_dict(m: JsdMatrix, city: str | None = None) -> dict:
    d = {"labels": list(m.labels), "values": m.values.tolist()}
    if city is not None:
        d["city"] = city
    return d


# -- network --------------------------------------------------------------


def write_network(net: JsdNetwork, top: list, out_dir, extra: Mapping | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = net.labels
    community = net.community or {}
    top_set = {(i, j) for i, j, _ in top}
    f, w = _writer(out_dir / "nodes.csv")
    with f:
        w.writerow(NODE_COLUMNS)
        for node, label in zip(net.nodes, labels):
            city, day = node if isinstance(node, tuple) else (label, "")
            w.writerow([label, city, day, community.get(node, "")])
    f, w = _writer(out_dir / "edges.csv")
    with f:
        w.writerow(EDGE_COLUMNS)
        for i, j, x in net.edges:
            w.writerow([labels[i], labels[j], fmt(x), int((i, j) in top_set)])
    bundle = {
        "nodes": [
            {"label": label, "community": community.get(node)}
            for node, label in zip(net.nodes, labels)
        ],
        "edges": [
            {"src": labels[i], "dst": labels[j], "weight": x, "in_top_k": (i, j) in top_set}
            for i, j, x in net.edges
        ],
        "modularity": net.modularity,
    }
    bundle.update(extra or {})
    write_json(bundle, out_dir / "network.json")
    return [out_dir / "nodes.csv", out_dir / "edges.csv", out_dir / "network.json"]


def read_network_dir(path) -> tuple[list[dict], list[dict]]:
    path = Path(path)
    return _read_rows(path / "nodes.csv", NODE_COLUMNS), _read_rows(path / "edges.csv", EDGE_COLUMNS)


# -- ranks ----------------------------------------------------------------


def write_rank_csv(dist: RankDistribution, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(RANK_COLUMNS)
        for e in dist.entries:
            w.writerow([e.rank, e.station_id, e.count, fmt(e.proportion)])


def read_rank_csv(path, day_class: str) -> RankDistribution:
    rows = _read_rows(path, RANK_COLUMNS)
    return RankDistribution(
        day_class,
        [RankEntry(int(r["rank"]), r["station_id"], int(r["count"]), float(r["proportion"])) for r in rows],
    )


def write_correspondence_csv(corr: RankCorrespondence, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(CORR_COLUMNS)
        for p in corr.pairs:
            w.writerow([p.station_id, p.x, p.y])


def read_correspondence_csv(path) -> RankCorrespondence:
    rows = _read_rows(path, CORR_COLUMNS)
    pairs = [RankPair(r["station_id"], int(r["weekday_rank"]), int(r["weekend_rank"])) for r in rows]
    if not pairs:
        raise FormatError(f"{path}: empty correspondence")
    return RankCorrespondence(
        tuple(pairs), max(p.x for p in pairs), max(p.y for p in pairs)
    )


def write_simulation_csv(sim: Simulation, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(SIM_COLUMNS)
        for k, m, s in zip(sim.k, sim.mean, sim.stderr):
            w.writerow([int(k), fmt(m), fmt(s)])


def node_name(city: str, day: str) -> str:
    return node_label((city, day))
