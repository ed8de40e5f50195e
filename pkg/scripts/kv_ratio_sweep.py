"""KV quantum value, classical bound and their ratio over an (n, eta) grid.

    python scripts/kv_ratio_sweep.py --sizes 2 4 8 16 32 64 --etas 0.1 0.25 0.4 > kv.csv

Also adds the eta = 1/2 - 1/log2 n point for every n >= 8, where the ratio grows
fastest. Brute-force values are filled in wherever exact enumeration is cheap.
"""

import argparse
import math
import sys

from bellforge import runner


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64, 128])
    ap.add_argument("--etas", type=float, nargs="+", default=[0.1, 0.25, 0.4])
    args = ap.parse_args()
    rows = []
    for n in args.sizes:
        etas = sorted(set(args.etas) | ({0.5 - 1 / math.log2(n)} if n >= 8 else set()))
        cfg = runner.ExperimentConfig.from_dict({"game": {"name": "kv", "n": n, "eta": etas[0]},
                                                 "sweep": {"eta": etas}})
        rows += runner.sweep_rows(cfg)
    sys.stdout.write(runner.rows_to_csv(rows))


if __name__ == "__main__":
    main()
