"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

from . import pipeline
from . import serialize as io
from .fitting import ConvergenceError
from .ingest import CITY_TIMEZONES, DEFAULT_MALFORMED_THRESHOLD, DEFAULT_MAX_GAP, IngestError, WEEKDAY, WEEKEND, Calendar
from .rankdist import fit_rank_distribution, rank_stations
from .rankmodel import fit_rank_model, rank_correspondence, should_fit, simulate_assignment
from .timeseries import DIRECTIONS, RENTAL, RETURN

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3

log = logging.getLogger("bss_usage")


class ValidationError(Exception):
    pass


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="bss", parents=[common], description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="raw files -> canonical event CSV")
    p.add_argument("--city", required=True)
    p.add_argument("--schema", help="schema JSON file or built-in id; omit with --snapshot")
    p.add_argument("--snapshot", action="store_true", help="inputs are station snapshot CSVs")
    p.add_argument("--input", required=True, help="glob of input files")
    p.add_argument("--timezone")
    p.add_argument("--period", nargs=2, metavar=("START", "END"))
    p.add_argument("--max-gap", type=int, default=DEFAULT_MAX_GAP)
    p.add_argument("--malformed-threshold", type=float, default=DEFAULT_MALFORMED_THRESHOLD)

    p = sub.add_parser("distributions", parents=[common], help="events -> time-of-day distributions")
    p.add_argument("--events", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--bin", type=int, default=60)
    p.add_argument("--direction", choices=DIRECTIONS, action="append",
                   help="repeatable; default rental and return")

    p = sub.add_parser("jsd-matrix", parents=[common], help="7x7 day JSD matrix for one city")
    p.add_argument("--dist", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--direction", choices=DIRECTIONS, default=RENTAL)

    p = sub.add_parser("jsd-network", parents=[common], help="city-day JSD network + Louvain")
    p.add_argument("--dist-dir", required=True, help="directory of <CITY>.csv or <CITY>/distributions.csv")
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--direction", choices=DIRECTIONS, default=RENTAL)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--resolution", type=float, default=1.0)

    p = sub.add_parser("rank-fit", parents=[common], help="station ranks + truncated power-law fit")
    p.add_argument("--events", required=True)
    p.add_argument("--day-class", choices=(WEEKDAY, WEEKEND), required=True)
    p.add_argument("--rank-out", help="also write the rank CSV here")
    p.add_argument("--period", nargs=2, metavar=("START", "END"))

    p = sub.add_parser("rank-compare", parents=[common], help="weekday/weekend rank correspondence")
    p.add_argument("--events", required=True)
    p.add_argument("--period", nargs=2, metavar=("START", "END"))

    p = sub.add_parser("model-fit", parents=[common], help="fit (a, b) to a correspondence CSV")
    p.add_argument("--correspondence", required=True)
    p.add_argument("--city", default="")
    p.add_argument("--force", action="store_true", help="fit even for excluded cities")

    p = sub.add_parser("simulate-model", parents=[common], help="Monte Carlo of the rank model")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s1", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=10_000)

    sub.add_parser("run", parents=[common], help="full pipeline from --config")

    p = sub.add_parser("plot-data", parents=[common], help="tidy CSV for one figure")
    p.add_argument("--figure", choices=pipeline.FIGURES, required=True)
    p.add_argument("--input", required=True, help="stage output file or directory")
    return parser


def _need_out(args) -> Path:
    if not args.out:
        raise ValidationError(f"{args.command} needs --out")
    return Path(args.out)


def _calendar(period):
    return Calendar.from_strings(*period) if period else None


def _cmd_ingest(args):
    files = sorted(glob.glob(args.input))
    if not files:
        raise ValidationError(f"no files match {args.input!r}")
    if not args.snapshot and not args.schema:
        raise ValidationError("trip data needs --schema")
    out = _need_out(args)
    if args.period:
        period = tuple(args.period)
    else:
        period = ("0001-01-01", "9999-12-31")
    city = pipeline.CityConfig(
        id=args.city, period=period, input_glob=args.input,
        timezone=args.timezone or CITY_TIMEZONES.get(args.city.upper()),
        schema=args.schema, snapshot=args.snapshot, max_gap=args.max_gap,
        malformed_threshold=args.malformed_threshold,
    )
    tmp = out.parent / (out.stem + "_ingest")
    paths = pipeline.stage_ingest(city, files, tmp, args.schema)
    paths[0].replace(out)
    paths[1].replace(out.with_suffix(".summary.json"))
    paths[2].replace(out.with_suffix(".report.json"))
    tmp.rmdir()


def _cmd_distributions(args):
    directions = tuple(args.direction or (RENTAL, RETURN))
    pipeline.stage_distributions(args.events, args.city, args.bin, directions, _need_out(args))


def _cmd_jsd_matrix(args):
    out = _need_out(args)
    pipeline.stage_jsd_matrix(args.dist, args.city, args.direction, out, out.with_suffix(".json"))


def _cmd_jsd_network(args):
    root = Path(args.dist_dir)
    paths = {}
    for p in sorted(root.glob("*.csv")):
        paths[p.stem] = p
    for p in sorted(root.glob("*/distributions.csv")):
        paths[p.parent.name] = p
    if len(paths) < 1:
        raise ValidationError(f"no distribution files under {root}")
    seed = args.seed if args.seed is not None else 0
    pipeline.stage_jsd_network(
        paths, args.direction, _need_out(args), seed=seed, top_k=args.top,
        epsilon=args.epsilon, resolution=args.resolution,
    )


def _cmd_rank_fit(args):
    events = io.read_events_csv(args.events)
    dist = rank_stations(events, args.day_class, _calendar(args.period))
    if args.rank_out:
        io.write_rank_csv(dist, args.rank_out)
    io.write_json(fit_rank_distribution(dist).to_dict(), _need_out(args))


def _cmd_rank_compare(args):
    events = io.read_events_csv(args.events)
    cal = _calendar(args.period)
    corr = rank_correspondence(rank_stations(events, WEEKDAY, cal), rank_stations(events, WEEKEND, cal))
    io.write_correspondence_csv(corr, _need_out(args))


def _cmd_model_fit(args):
    if not should_fit(args.city, args.force):
        raise ValidationError(f"{args.city} is excluded from the rank model; pass --force to fit anyway")
    corr = io.read_correspondence_csv(args.correspondence)
    io.write_json(fit_rank_model(corr).to_dict(), _need_out(args))


def _cmd_simulate(args):
    seed = args.seed if args.seed is not None else 0
    sim = simulate_assignment(args.n, args.m, args.a, args.s1, seed, args.trials)
    io.write_simulation_csv(sim, _need_out(args))


def _cmd_run(args):
    if not args.config:
        raise ValidationError("run needs --config")
    config = pipeline.load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    manifest = pipeline.run_pipeline(config, args.out)
    log.info("pipeline complete, config hash %s", manifest["config_hash"])


def _cmd_plot_data(args):
    pipeline.emit_plot_data(args.input, args.figure, _need_out(args))


COMMANDS = {
    "ingest": _cmd_ingest,
    "distributions": _cmd_distributions,
    "jsd-matrix": _cmd_jsd_matrix,
    "jsd-network": _cmd_jsd_network,
    "rank-fit": _cmd_rank_fit,
    "rank-compare": _cmd_rank_compare,
    "model-fit": _cmd_model_fit,
    "simulate-model": _cmd_simulate,
    "run": _cmd_run,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (ValidationError, pipeline.ConfigError, pipeline.PlotDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (pipeline.StageError, IngestError, ConvergenceError, ValueError, OSError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
