"""Generate the synthetic fixture, run the full pipeline, print a digest."""

import argparse
import json
from datetime import date
from pathlib import Path

from bss_usage import serialize as io
from bss_usage.pipeline import load_config, run_pipeline
from bss_usage.synthetic import generate_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("work_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg_path = generate_fixture(args.work_dir, date(2023, 10, 2), 14, args.seed)
    config = load_config(cfg_path)
    out = Path(args.work_dir) / "out"
    from dataclasses import replace

    manifest = run_pipeline(replace(config, workers=args.workers), out)
    print("config hash", manifest["config_hash"])

    print(f"{'city':5} {'wd total':>9} {'we total':>9} {'alpha wd':>9} {'alpha we':>9} {'a':>6}")
    for c in config.cities:
        cdir = out / "cities" / c.id
        s = io.read_json(cdir / "summary.json")
        fit = io.read_json(cdir / "rank_fit.json")
        model = io.read_json(cdir / "rank_model.json")
        a = "-" if model.get("skipped") else f"{model['a']:.3f}"
        print(f"{c.id:5} {s['weekday_total']:9d} {s['weekend_total']:9d} "
              f"{fit['weekday']['alpha']:9.3f} {fit['weekend']['alpha']:9.3f} {a:>6}")

    nodes, _ = io.read_network_dir(out / "network")
    groups = {}
    for n in nodes:
        groups.setdefault(n["community"], []).append(n["label"])
    net = json.loads((out / "network" / "network.json").read_text())
    print(f"\n{len(groups)} communities, modularity {net['modularity']:.4f}")
    for c, labels in sorted(groups.items()):
        print(f"  {c}: {' '.join(labels)}")


if __name__ == "__main__":
    main()
