"""Advantage over 1/2 of the classical HM_nl strategies as n grows.

    python scripts/hmnl_advantage.py --trials 200000 --seed 0

The argmax strategy is evaluated exactly up to n=16 and by Monte Carlo above.
The halfspace strategy is reported against its closed form. The last column is
sqrt(n) times the halfspace advantage, which should level off.
"""

import argparse
import math

from bellforge.games import hm_nl_game
from bellforge.strategies import (
    eval_monte_carlo,
    halfspace_value,
    hmnl_argmax_strategy,
    hmnl_argmax_value,
    hmnl_halfspace_strategy,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32, 64, 128, 256])
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("n,argmax,argmax_stderr,halfspace_mc,halfspace_stderr,halfspace_closed,scaled_halfspace_adv")
    for n in args.sizes:
        G = hm_nl_game(n, "full", cap=max(n, 8))
        if n <= 16:
            argmax, argmax_err = hmnl_argmax_value(n), 0.0
        else:
            r = eval_monte_carlo(G, hmnl_argmax_strategy(n), args.trials, seed=args.seed)
            argmax, argmax_err = r.estimate, r.stderr
        h = eval_monte_carlo(G, hmnl_halfspace_strategy(n), args.trials, seed=args.seed)
        closed = halfspace_value(n)
        print(f"{n},{argmax:.6f},{argmax_err:.6f},{h.estimate:.6f},{h.stderr:.6f},{closed:.6f},"
              f"{(closed - 0.5) * math.sqrt(n):.4f}")


if __name__ == "__main__":
    main()
