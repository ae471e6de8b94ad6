"""Run the pipeline over the downloaded city datasets and compare the
results with the reference targets in tests/data/real_data_targets.json.

Usage: python scripts/reproduce_real_data.py CONFIG [--out DIR]

The config uses the same schema as the synthetic one, one entry per city
with its collection period (period_days 30) and the glob of its raw files.
"""

import argparse
import json
from pathlib import Path

from bss_usage import serialize as io
from bss_usage.pipeline import load_config, run_pipeline

TARGETS = Path(__file__).resolve().parent.parent / "tests" / "data" / "real_data_targets.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--out", default="real_out")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    from dataclasses import replace

    config = replace(load_config(args.config), workers=args.workers)
    out = Path(args.out)
    run_pipeline(config, out)
    targets = json.loads(TARGETS.read_text())

    for c in config.cities:
        cdir = out / "cities" / c.id
        s = io.read_json(cdir / "summary.json")
        want = targets["totals"].get(c.id, {})
        print(f"{c.id}: totals", {k: (s[k], want.get(k)) for k in want})
        m = io.read_matrix_csv(cdir / "jsd_matrix.csv")
        print(f"  JSD Mon-Tue {m['Mon', 'Tue']:.4f}  Mon-Sat {m['Mon', 'Sat']:.4f}  Fri-Sat {m['Fri', 'Sat']:.4f}")
        fit = io.read_json(cdir / "rank_fit.json")
        for cls in ("weekday", "weekend"):
            ref = targets["alpha"].get(c.id, {}).get(cls)
            print(f"  {cls} alpha {fit[cls]['alpha']:.3f} (target {ref}) "
                  f"beta {fit[cls]['beta']:.3g} gamma {fit[cls]['gamma']:.3f}")
        model = io.read_json(cdir / "rank_model.json")
        if not model.get("skipped"):
            print(f"  a {model['a']:.3f} (target {targets['a'].get(c.id)}) b {model['b']:.2f}")

    nodes, _ = io.read_network_dir(out / "network")
    groups = {}
    for n in nodes:
        groups.setdefault(n["community"], []).append(n["label"])
    print(f"\n{len(groups)} communities")
    for c, labels in sorted(groups.items()):
        print(f"  {c}: {' '.join(labels)}")


if __name__ == "__main__":
    main()
