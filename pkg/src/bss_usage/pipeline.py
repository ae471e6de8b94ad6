"""Config-driven orchestration of all analysis stages.

Layout of an output directory::

    manifest.json
    cities/<ID>/events.csv, summary.json, ingest_report.json
    cities/<ID>/distributions.csv
    cities/<ID>/jsd_matrix.csv, jsd_matrix.json
    cities/<ID>/rank_weekday.csv, rank_weekend.csv, rank_fit.json
    cities/<ID>/correspondence.csv, rank_model.json
    network/nodes.csv, edges.csv, network.json
    plots/fig1_<ID>.csv ... fig5_<ID>.csv, fig3.csv

Every stage reads only files written by earlier stages, so each one can be
re-run on its own from the CLI.
"""

from __future__ import annotations

import glob
import hashlib
import json
import logging
import platform
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import serialize as io
from .divergence import jsd_day_matrix
from .ingest import (
    CITY_TIMEZONES,
    DEFAULT_MALFORMED_THRESHOLD,
    DEFAULT_MAX_GAP,
    WEEKDAY,
    WEEKEND,
    Calendar,
    IngestError,
    load_schema,
    merge_events,
    parse_snapshot_file,
    parse_trip_file,
    restrict_to_period,
    snapshots_to_events,
    summarize,
    trips_to_events,
)
from .jsdnet import DEFAULT_EPSILON, build_network, louvain, top_edges
from .rankdist import RankFit, evaluate_rank_model, fit_rank_distribution, rank_stations
from .rankmodel import RankModelFit, fit_rank_model, rank_correspondence, should_fit
from .timeseries import DIRECTIONS, RENTAL, RETURN, distribution_set

log = logging.getLogger(__name__)

STAGES = ("ingest", "distributions", "jsd_matrix", "jsd_network", "rank_fit", "rank_model")
FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5")
DEFAULT_PERIOD_DAYS = 30


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, city, cause):
        self.stage = stage
        self.city = city
        self.cause = cause
        where = f" for {city}" if city else ""
        super().__init__(f"stage {stage!r} failed{where}: {cause}")


class PlotDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class CityConfig:
    id: str
    period: tuple[str, str]
    input_glob: str
    timezone: str | None = None
    schema: str | None = None
    snapshot: bool = False
    period_days: int = DEFAULT_PERIOD_DAYS
    max_gap: int = DEFAULT_MAX_GAP
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD

    @property
    def calendar(self) -> Calendar:
        return Calendar.from_strings(*self.period)

    @property
    def tz(self) -> str | None:
        return self.timezone or CITY_TIMEZONES.get(self.id.upper())


@dataclass(frozen=True)
class PipelineConfig:
    cities: tuple[CityConfig, ...]
    bin_width: int = 60
    direction: str = RENTAL
    top_k_edges: int = 50
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    resolution: float = 1.0
    output_dir: str = "out"
    force_rank_model: bool = False
    workers: int = 1
    base_dir: str = field(default=".", compare=False)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def input_files(self, city: CityConfig) -> list[Path]:
        pattern = str(self.resolve(city.input_glob))
        return [Path(p) for p in sorted(glob.glob(pattern))]

    def schema_ref(self, city: CityConfig):
        """Schema file path (resolved against the config directory) or built-in id."""
        if city.schema is None or not city.schema.endswith(".json"):
            return city.schema
        return self.resolve(city.schema)

    def hashable(self) -> dict:
        """Everything that can change results; output location and worker
        count are excluded."""
        d = asdict(self)
        for k in ("output_dir", "workers", "base_dir"):
            d.pop(k)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _city_from_dict(d) -> CityConfig:
    try:
        period = tuple(d["period"])
        return CityConfig(
            id=str(d["id"]),
            period=(str(period[0]), str(period[1])),
            input_glob=d["input_glob"],
            timezone=d.get("timezone"),
            schema=d.get("schema") or d.get("schema_path"),
            snapshot=bool(d.get("snapshot", False)),
            period_days=int(d.get("period_days", DEFAULT_PERIOD_DAYS)),
            max_gap=int(d.get("max_gap", DEFAULT_MAX_GAP)),
            malformed_threshold=float(d.get("malformed_threshold", DEFAULT_MALFORMED_THRESHOLD)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"bad city entry {d!r}: {exc}") from exc


def config_from_dict(d: dict, base_dir=".") -> PipelineConfig:
    if not d.get("cities"):
        raise ConfigError("config lists no cities")
    known = {f for f in PipelineConfig.__dataclass_fields__} - {"cities", "base_dir"}
    unknown = set(d) - known - {"cities"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw = {k: d[k] for k in known if k in d}
    return PipelineConfig(
        cities=tuple(_city_from_dict(c) for c in d["cities"]), base_dir=str(base_dir), **kw
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(d, base_dir=path.parent)


def validate(config: PipelineConfig) -> None:
    """Raise ConfigError on anything detectable before running a stage."""
    if 1440 % config.bin_width or config.bin_width <= 0:
        raise ConfigError(f"bin_width {config.bin_width} does not divide 1440")
    if config.direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")
    if config.top_k_edges < 0 or config.epsilon <= 0:
        raise ConfigError("top_k_edges must be >= 0 and epsilon > 0")
    ids = [c.id for c in config.cities]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate city ids")
    for c in config.cities:
        try:
            cal = c.calendar
        except ValueError as exc:
            raise ConfigError(f"{c.id}: bad period {c.period}: {exc}") from exc
        if cal.n_days != c.period_days:
            raise ConfigError(f"{c.id}: period spans {cal.n_days} days, expected {c.period_days}")
        if not config.input_files(c):
            raise ConfigError(f"{c.id}: no input files match {c.input_glob!r}")
        if not c.snapshot:
            if c.schema is None:
                raise ConfigError(f"{c.id}: trip city needs a schema")
            try:
                load_schema(config.schema_ref(c))
            except IngestError as exc:
                raise ConfigError(f"{c.id}: {exc}") from exc
        if c.tz is None:
            raise ConfigError(f"{c.id}: no timezone configured")


def derive_seed(seed: int, stage: str) -> int:
    """Sub-seed for one stage, keyed by its name."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


# ---------------------------------------------------------------------------
# stages (each reads files, writes files, returns the paths it wrote)


def stage_ingest(city: CityConfig, files, out_dir, schema_ref=None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    streams = []
    gaps = []
    if city.snapshot:
        for f in files:
            res = parse_snapshot_file(f, city.tz, city.malformed_threshold)
            events, g = snapshots_to_events(res.records, city.max_gap)
            streams.append(events)
            gaps.extend(g)
            reports.append(res.report())
    else:
        schema = load_schema(schema_ref or city.schema)
        for f in files:
            res = parse_trip_file(f, schema, city.tz, city.malformed_threshold)
            streams.append(trips_to_events(res.records))
            reports.append(res.report())
    cal = city.calendar
    events, dropped = restrict_to_period(merge_events(*streams), cal)
    summary = summarize(events, cal, city.id)
    for r in reports:
        r["path"] = Path(r["path"]).name
    io.write_events_csv(events, out_dir / "events.csv")
    io.write_json(summary.to_dict(), out_dir / "summary.json")
    io.write_json(
        {
            "files": reports,
            "events": len(events),
            "events_outside_period": dropped,
            "gaps": len(gaps),
            "gap_minutes_total": sum(g.minutes for g in gaps),
        },
        out_dir / "ingest_report.json",
    )
    return [out_dir / "events.csv", out_dir / "summary.json", out_dir / "ingest_report.json"]


def stage_distributions(events_path, city: str, bin_width: int, directions, out_path) -> list[Path]:
    events = io.read_events_csv(events_path)
    dists = distribution_set(events, city, bin_width, directions)
    io.write_distributions_csv(dists.values(), out_path)
    return [Path(out_path)]


def stage_jsd_matrix(dist_path, city: str, direction: str, out_csv, out_json) -> list[Path]:
    dists = io.read_distributions_csv(dist_path)
    m = jsd_day_matrix(io.day_distributions(dists, city, direction))
    io.write_matrix_csv(m, out_csv)
    io.write_json({**io.matrix_to_dict(m, city), "direction": direction}, out_json)
    return [Path(out_csv), Path(out_json)]


def stage_rank_fit(events_path, out_dir, calendar: Calendar | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    events = io.read_events_csv(events_path)
    fits = {}
    written = []
    for cls in (WEEKDAY, WEEKEND):
        dist = rank_stations(events, cls, calendar)
        path = out_dir / f"rank_{cls}.csv"
        io.write_rank_csv(dist, path)
        written.append(path)
        fits[cls] = fit_rank_distribution(dist).to_dict()
    io.write_json(fits, out_dir / "rank_fit.json")
    return written + [out_dir / "rank_fit.json"]


def stage_rank_model(rank_dir, city: str, out_dir, force: bool = False) -> list[Path]:
    rank_dir, out_dir = Path(rank_dir), Path(out_dir)
    weekday = io.read_rank_csv(rank_dir / "rank_weekday.csv", WEEKDAY)
    weekend = io.read_rank_csv(rank_dir / "rank_weekend.csv", WEEKEND)
    corr = rank_correspondence(weekday, weekend)
    io.write_correspondence_csv(corr, out_dir / "correspondence.csv")
    if should_fit(city, force):
        result = fit_rank_model(corr).to_dict()
    else:
        result = {"skipped": True, "reason": f"{city} is excluded from the rank model by default"}
    io.write_json(result, out_dir / "rank_model.json")
    return [out_dir / "correspondence.csv", out_dir / "rank_model.json"]


def stage_jsd_network(
    dist_paths: dict[str, Path],
    direction: str,
    out_dir,
    seed: int,
    top_k: int = 50,
    epsilon: float = DEFAULT_EPSILON,
    resolution: float = 1.0,
) -> list[Path]:
    nodes = {}
    for city, path in dist_paths.items():
        dists = io.read_distributions_csv(path)
        for d in io.day_distributions(dists, city, direction):
            nodes[(city, d.day)] = d
    net = build_network(nodes, epsilon)
    result = louvain(net, seed=seed, resolution=resolution)
    net = net.with_communities(result.assignment, result.modularity)
    top = top_edges(net, top_k)
    return io.write_network(
        net,
        top,
        out_dir,
        extra={
            "level_modularity": result.level_modularity,
            "seed": seed,
            "resolution": resolution,
            "epsilon": epsilon,
            "top_k": top_k,
            "direction": direction,
        },
    )


# ---------------------------------------------------------------------------
# plot data


def emit_plot_data(stage_output, figure: str, out_path) -> Path:
    """Reshape a stage output into a tidy CSV for one figure.

    ``stage_output`` is the distributions CSV (fig1), the JSD matrix CSV
    (fig2), the network directory (fig3), or a city directory holding the
    rank files (fig4) or correspondence and model files (fig5).

    Columns:
      fig1  city, day, direction, bin_index, bin_start_minute, probability
      fig2  day_row, day_col, jsd
      fig3  src, dst, weight, in_top_k, src_community, dst_community
      fig4  rank, proportion, day_class, fitted_value
      fig5  station_id, x, y, fitted_y
    """
    if figure not in FIGURES:
        raise PlotDataError(f"unknown figure {figure!r}; choose from {FIGURES}")
    src = Path(stage_output)
    if not src.exists():
        raise PlotDataError(f"{src} does not exist")
    rows = []
    try:
        if figure == "fig1":
            dists = io.read_distributions_csv(src)
            header = ["city", "day", "direction", "bin_index", "bin_start_minute", "probability"]
            for (city, day, direction), d in dists.items():
                for i, p in enumerate(d.probs):
                    rows.append([city, day, direction, i, i * d.bin_width, io.fmt(p)])
        elif figure == "fig2":
            m = io.read_matrix_csv(src)
            header = ["day_row", "day_col", "jsd"]
            for i, a in enumerate(m.labels):
                for j, b in enumerate(m.labels):
                    rows.append([a, b, io.fmt(m.values[i, j])])
        elif figure == "fig3":
            nodes, edges = io.read_network_dir(src)
            comm = {n["label"]: n["community"] for n in nodes}
            header = ["src", "dst", "weight", "in_top_k", "src_community", "dst_community"]
            for e in edges:
                rows.append([e["src"], e["dst"], e["weight"], e["in_top_k"], comm[e["src"]], comm[e["dst"]]])
        elif figure == "fig4":
            fits = io.read_json(src / "rank_fit.json")
            header = ["rank", "proportion", "day_class", "fitted_value"]
            for cls in (WEEKDAY, WEEKEND):
                dist = io.read_rank_csv(src / f"rank_{cls}.csv", cls)
                fit = RankFit.from_dict(fits[cls])
                fitted = evaluate_rank_model(fit, dist.ranks)
                for e, fv in zip(dist.entries, np.atleast_1d(fitted)):
                    rows.append([e.rank, io.fmt(e.proportion), cls, io.fmt(fv)])
        else:
            corr = io.read_correspondence_csv(src / "correspondence.csv")
            model = io.read_json(src / "rank_model.json")
            header = ["station_id", "x", "y", "fitted_y"]
            fit = None if model.get("skipped") else RankModelFit.from_dict(model)
            for p in corr.pairs:
                rows.append([p.station_id, p.x, p.y, io.fmt(fit.predict(p.x)) if fit else ""])
    except (KeyError, ValueError, OSError) as exc:
        raise PlotDataError(f"{src} does not match the {figure} input schema: {exc}") from exc
    f, w = io._writer(out_path)
    with f:
        w.writerow(header)
        w.writerows(rows)
    return Path(out_path)


# ---------------------------------------------------------------------------
# orchestration


def _rel(paths, root: Path) -> list[dict]:
    return [{"path": Path(p).relative_to(root).as_posix(), "sha256": io.sha256_file(p)} for p in paths]


def _run_city(config: PipelineConfig, city: CityConfig, out: Path) -> list[dict]:
    """All per-city stages except the cross-city network; returns stage
    records.  Raises StageError carrying the records completed so far."""
    cdir = out / "cities" / city.id
    cdir.mkdir(parents=True, exist_ok=True)
    done = []
    directions = tuple(dict.fromkeys((RENTAL, RETURN, config.direction)))
    steps = [
        ("ingest", lambda: stage_ingest(city, config.input_files(city), cdir, config.schema_ref(city))),
        ("distributions", lambda: stage_distributions(
            cdir / "events.csv", city.id, config.bin_width, directions, cdir / "distributions.csv")),
        ("jsd_matrix", lambda: stage_jsd_matrix(
            cdir / "distributions.csv", city.id, config.direction,
            cdir / "jsd_matrix.csv", cdir / "jsd_matrix.json")),
        ("rank_fit", lambda: stage_rank_fit(cdir / "events.csv", cdir, city.calendar)),
        ("rank_model", lambda: stage_rank_model(cdir, city.id, cdir, config.force_rank_model)),
    ]
    for name, fn in steps:
        log.info("%s: %s", city.id, name)
        try:
            paths = fn()
        except Exception as exc:
            done.append({"stage": name, "city": city.id, "status": "failed", "error": str(exc), "outputs": []})
            raise StageError(name, city.id, exc) from exc
        done.append({"stage": name, "city": city.id, "status": "ok", "outputs": _rel(paths, out)})
    return done


def _run_city_safe(args):
    config, city, out = args
    try:
        return _run_city(config, city, out), None
    except StageError as exc:
        return None, (exc.stage, exc.city, str(exc.cause))


def _versions() -> dict:
    import pandas

    return {
        "bss_usage": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pandas.__version__,
    }


def run_pipeline(config: PipelineConfig, output_dir=None) -> dict:
    """Run every stage for every city and write ``manifest.json``.

    Raises ConfigError before any work if validation fails, and StageError
    (after writing a manifest marked incomplete) if a stage fails.
    """
    validate(config)
    out = Path(output_dir) if output_dir is not None else config.resolve(config.output_dir)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)

    inputs = []
    for city in config.cities:
        for f in config.input_files(city):
            inputs.append({"city": city.id, "path": Path(f).name, "sha256": io.sha256_file(f)})

    manifest = {
        "config_hash": config.config_hash,
        "config": config.hashable(),
        "versions": _versions(),
        "inputs": inputs,
        "stages": [],
        "plot_data": [],
        "complete": False,
    }
    failure = None
    jobs = [(config, c, out) for c in config.cities]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_city_safe, jobs))
    else:
        results = [_run_city_safe(j) for j in jobs]
    for records, err in results:
        if err is not None:
            failure = failure or err
            manifest["stages"].append({"stage": err[0], "city": err[1], "status": "failed", "error": err[2]})
        else:
            manifest["stages"].extend(records)

    if failure is None:
        try:
            paths = stage_jsd_network(
                {c.id: out / "cities" / c.id / "distributions.csv" for c in config.cities},
                config.direction,
                out / "network",
                seed=derive_seed(config.seed, "jsd_network"),
                top_k=config.top_k_edges,
                epsilon=config.epsilon,
                resolution=config.resolution,
            )
            manifest["stages"].append({"stage": "jsd_network", "city": None, "status": "ok", "outputs": _rel(paths, out)})
        except Exception as exc:
            failure = ("jsd_network", None, str(exc))
            manifest["stages"].append({"stage": "jsd_network", "city": None, "status": "failed", "error": str(exc)})

    if failure is None:
        plots = out / "plots"
        plots.mkdir()
        made = []
        for c in config.cities:
            cdir = out / "cities" / c.id
            made.append(emit_plot_data(cdir / "distributions.csv", "fig1", plots / f"fig1_{c.id}.csv"))
            made.append(emit_plot_data(cdir / "jsd_matrix.csv", "fig2", plots / f"fig2_{c.id}.csv"))
            made.append(emit_plot_data(cdir, "fig4", plots / f"fig4_{c.id}.csv"))
            made.append(emit_plot_data(cdir, "fig5", plots / f"fig5_{c.id}.csv"))
        made.append(emit_plot_data(out / "network", "fig3", plots / "fig3.csv"))
        manifest["plot_data"] = _rel(made, out)
        manifest["complete"] = True

    io.write_json(manifest, out / "manifest.json")
    if failure is not None:
        stage, city, msg = failure
        raise StageError(stage, city, msg)
    return manifest
