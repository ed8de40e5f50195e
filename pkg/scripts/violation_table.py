"""Classical value, entangled value and violation ratio for every game family.

    python scripts/violation_table.py [--out table.csv]

Classical values come from brute force where it is exact, otherwise from the
proven KV bound (marked in the ``classical_kind`` column).
"""

import argparse
import math
from pathlib import Path

from bellforge import optimize, runner
from bellforge.games import chsh_game, hm_nl_game, kv_game
from bellforge.quantum import kv_quantum_value


def rows():
    out = []
    G = chsh_game()
    out.append(("chsh", "", "", G, optimize.brute_force_classical_value(G), math.cos(math.pi / 8) ** 2))
    for n in (2, 4, 8):
        G = hm_nl_game(n) if n < 8 else hm_nl_game(n, "reduced")
        out.append(("hm_nl", n, "", G, optimize.brute_force_classical_value(G), 1.0))
    for n in (2, 4, 8, 16, 32, 64, 256, 1024):
        eta = round(max(0.5 - 1 / math.log2(n), 0.1), 6)
        if n <= 4:
            G, classical = kv_game(n, eta), optimize.brute_force_classical_value(kv_game(n, eta))
        else:
            G, classical = {"name": "kv", "n": n, "eta": eta}, optimize.kv_classical_bound(n, eta)
        out.append(("kv", n, eta, G, classical, kv_quantum_value(n, eta)))
    table = []
    for name, n, eta, G, classical, q in out:
        mode = "deviation" if name == "hm_nl" else "ratio"
        r = optimize.violation_report(G, classical, q, mode=mode).to_dict()
        table.append({
            "game": name, "n": n, "eta": eta,
            "classical": r["classical"]["value"], "classical_kind": r["classical"]["kind"],
            "quantum": q, "mode": mode, "ratio": r["ratio"],
        })
    return table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    table = rows()
    for r in table:
        print(f"{r['game']:>6} n={r['n']!s:>3} eta={r['eta']!s:<6} classical={r['classical']:.6f} "
              f"({r['classical_kind']}) quantum={r['quantum']:.6f} {r['mode']}={r['ratio']:.4f}")
    if args.out:
        args.out.write_text(runner.rows_to_csv(table))


if __name__ == "__main__":
    main()
