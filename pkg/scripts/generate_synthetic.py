"""Write the synthetic six-city raw data and a pipeline config."""

import argparse
from datetime import date

from bss_usage.synthetic import generate_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--start", default="2023-10-02", help="first day (ISO date)")
    ap.add_argument("--days", type=int, default=14)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = generate_fixture(args.out_dir, date.fromisoformat(args.start), args.days, args.seed)
    print(cfg)


if __name__ == "__main__":
    main()
