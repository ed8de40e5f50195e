"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS criterion N`` or ``FAIL criterion N`` line (also
repeated in the pytest terminal summary). Run ``pytest tests/test_acceptance.py -v -s``
to see the lines inline.
"""

import csv
import io
import itertools
import json
import math

import numpy as np
from scipy.stats import binom, chisquare

from bellforge import bitcore, cli
from bellforge.games import chsh_game, hm_nl_game, kv_game
from bellforge.optimize import (
    brute_force_classical_value,
    hypercontractivity_check,
    kv_classical_bound,
    local_search_classical,
    violation_report,
)
from bellforge.quantum import (
    chsh_quantum_strategy,
    hm_quantum_outcomes,
    hm_quantum_protocol,
    hmnl_quantum_strategy,
    joint_outcome_distribution,
    kv_quantum_strategy,
    kv_quantum_value,
    kv_quantum_value_by_z,
    quantum_value_exact,
)
from bellforge.strategies import (
    CosetSelector,
    DeterministicStrategy,
    eval_exact,
    eval_monte_carlo,
    eval_protocol_exact,
    eval_protocol_monte_carlo,
    halfspace_value,
    hm_comm_protocol,
    hm_wins,
    hmnl_argmax_strategy,
    hmnl_argmax_value,
    hmnl_halfspace_strategy,
    hmnl_to_hm_reduction,
    kv_eval_fwht,
    kv_selectors,
    random_selector,
)

ETA_GRID = [0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5]
P_MIN = 1e-3


def direct_kv_values(n, eta, choices_a, choices_b):
    """Win probability of every selector pair by summing over (u, z).

    ``choices_*`` hold the chosen element of each coset, shape (pairs, n_cosets),
    ordered like ``all_coset_reps``. The player wins iff a ^ b == z.
    """
    reps = bitcore.all_coset_reps(n)
    u = np.arange(1 << n)
    rep_index = np.searchsorted(reps, bitcore.coset_rep(u, n))
    pz = eta ** bitcore.popcount(u) * (1 - eta) ** (n - bitcore.popcount(u))
    total = np.zeros((len(choices_a), len(choices_b)))
    for z in range(1 << n):
        if pz[z] == 0:
            continue
        a, b = choices_a[:, rep_index[u]], choices_b[:, rep_index[u ^ z]]
        total += pz[z] * ((a[:, None, :] ^ b[None, :, :]) == z).sum(axis=-1)
    return total / (1 << n)


def all_choices(n):
    reps = bitcore.all_coset_reps(n)
    words = bitcore.hadamard_subgroup(n).as_array()
    idx = np.array(list(itertools.product(range(n), repeat=len(reps))))
    return reps[None, :] ^ words[idx]


def test_criterion_1_chsh_calibration(verdict):
    c = brute_force_classical_value(chsh_game())
    q = quantum_value_exact(chsh_game(), chsh_quantum_strategy())
    verdict(1, "CHSH calibration", [
        (f"classical={c.value!r} == 0.75 (exact={c.exact})", c.value == 0.75 and c.exact),
        (f"quantum={q:.12f} vs cos^2(pi/8)", abs(q - math.cos(math.pi / 8) ** 2) <= 1e-9),
    ])


def test_criterion_2_hm_quantum_protocol(verdict):
    failures, runs = 0, 0
    for n in (2, 4):
        for M in bitcore.full_matchings(n):
            for xv in range(1 << n):
                x = bitcore.ints_to_bits(np.array([xv]), n)[0]
                for seed in range(8):
                    (i, j), v = hm_quantum_protocol(n, x, M, seed)
                    runs += 1
                    failures += (i, j) not in M or v != x[i] ^ x[j]
    rng = np.random.default_rng(20240808)
    x = rng.integers(0, 2, (10_000, 8))
    partner = bitcore.random_partners(rng, 8, 10_000)
    sampled = int(np.count_nonzero(~hm_wins(x, partner, hm_quantum_outcomes(x, partner, rng))))
    verdict(2, "HM quantum protocol always correct", [
        (f"exhaustive n in {{2,4}}: {failures} failures in {runs} runs", failures == 0),
        (f"n=8: {sampled} failures in 10^4 seeded runs", sampled == 0),
    ])


def test_criterion_3_hmnl_quantum_strategy(verdict):
    parts = []
    for n in (2, 4, 8):
        v = quantum_value_exact(hm_nl_game(n), hmnl_quantum_strategy(n))
        parts.append((f"n={n} value={v:.15f}", abs(v - 1.0) <= 1e-12))
    G = hm_nl_game(16, "full", cap=16)
    rng = np.random.default_rng(16)
    s = G.sample(rng, 10_000)
    a, rows = hmnl_quantum_strategy(16).run_circuit(s.x, s.y, rng)
    bad = int(np.count_nonzero(~G.check(s.x, s.y, s.aux, a, rows)))
    parts.append((f"n=16: {bad} of 10^4 sampled transcripts violate the predicate", bad == 0))
    verdict(3, "HM_nl quantum strategy wins always", parts)


def test_criterion_4_kv_quantum_value(verdict):
    worst, floor_ok = 0.0, True
    for n in (2, 4, 8):
        S = kv_quantum_strategy(n)
        for eta in (0.0, 0.1, 0.25, 0.4, 0.5):
            v = quantum_value_exact(kv_game(n, eta), S)
            formula = (1 - 2 * eta) ** 2 + 4 * eta * (1 - eta) / n
            worst = max(worst, abs(v - formula), abs(v - kv_quantum_value_by_z(n, eta)),
                        abs(kv_quantum_value(n, eta) - formula))
            floor_ok &= v >= (1 - 2 * eta) ** 2 - 1e-12
    verdict(4, "KV quantum value", [
        (f"max deviation from closed form and z-enumeration = {worst:.2e}", worst <= 1e-9),
        ("value >= (1-2eta)^2 on the grid", floor_ok),
    ])


def test_criterion_5_kv_classical_bound(verdict):
    worst = -np.inf
    for n in (2, 4):
        for eta in ETA_GRID:
            res = brute_force_classical_value(kv_game(n, eta))
            assert res.exact
            worst = max(worst, res.value - kv_classical_bound(n, eta))
    rng = np.random.default_rng(8)
    worst_random = -np.inf
    for k in range(1000):
        eta = ETA_GRID[k % len(ETA_GRID)]
        A, B = random_selector(8, rng), random_selector(8, rng)
        worst_random = max(worst_random, kv_eval_fwht(A, B, eta) - kv_classical_bound(8, eta))
    worst_ls, consistent = -np.inf, True
    for seed in range(50):
        eta = ETA_GRID[1 + seed % (len(ETA_GRID) - 1)]
        G = kv_game(8, eta)
        res = local_search_classical(G, seed=seed, restarts=2, bound=math.inf)
        A, B = kv_selectors(G, res.witness)
        v = kv_eval_fwht(A, B, eta)
        consistent &= abs(v - res.value) <= 1e-9
        worst_ls = max(worst_ls, v - kv_classical_bound(8, eta))
    verdict(5, "KV classical bound", [
        (f"brute force n in {{2,4}}: max(value - bound) = {worst:.3e}", worst <= 1e-12),
        (f"n=8 random pairs: max(value - bound) = {worst_random:.3e}", worst_random <= 1e-12),
        (f"n=8 local-search witnesses: max(value - bound) = {worst_ls:.3e}", worst_ls <= 1e-12),
        ("witness FWHT values match local-search values", consistent),
    ])


def test_criterion_6_fwht_equivalence(verdict):
    eta = 0.2
    choices = all_choices(4)
    selectors = [CosetSelector.from_choice(4, c) for c in choices]
    fwht = np.array([[kv_eval_fwht(A, B, eta) for B in selectors] for A in selectors])
    direct = direct_kv_values(4, eta, choices, choices)
    err4 = float(np.max(np.abs(fwht - direct)))
    rng = np.random.default_rng(6)
    err8 = 0.0
    for _ in range(100):
        A, B = random_selector(8, rng), random_selector(8, rng)
        d = direct_kv_values(8, 0.3, A.choice()[None], B.choice()[None])[0, 0]
        err8 = max(err8, abs(kv_eval_fwht(A, B, 0.3) - d))
    verdict(6, "FWHT oracle equivalence", [
        (f"n=4 all {len(selectors) ** 2} pairs: max error {err4:.2e}", err4 <= 1e-9),
        (f"n=8 100 random pairs: max error {err8:.2e}", err8 <= 1e-9),
    ])


def test_criterion_7_violation_ratio(verdict):
    n = 16
    eta = 0.5 - 1 / math.log2(n)
    report = violation_report(kv_game(n, eta), kv_classical_bound(n, eta), kv_quantum_value(n, eta))
    ratios = {m: kv_quantum_value(m, 0.25) / kv_classical_bound(m, 0.25) for m in (4, 8, 16, 32)}
    increasing = all(ratios[a] < ratios[b] for a, b in itertools.pairwise(ratios))
    trend = ", ".join(f"n={m}: {r:.4f}" for m, r in ratios.items())
    verdict(7, "KV violation ratio at desk scale", [
        (f"n=16 eta={eta}: ratio={report.ratio:.6f} >= 0.74", eta == 0.25 and report.ratio >= 0.74),
        (f"ratio increasing in n at eta=0.25 ({trend})", increasing),
    ])


def test_criterion_8_hmnl_classical(verdict):
    adv = {n: hmnl_argmax_value(n) - 0.5 for n in (4, 8, 16)}
    assert abs(hmnl_argmax_value(8) - eval_exact(hm_nl_game(8), hmnl_argmax_strategy(8))) <= 1e-12
    parts = [
        (f"argmax advantages {', '.join(f'n={n}: {a:.5f}' for n, a in adv.items())} positive and decreasing",
         all(a > 0 for a in adv.values()) and adv[4] > adv[8] > adv[16]),
    ]
    for n in (4, 16, 64):
        G = hm_nl_game(n) if n <= bitcore.FULL_MATCHING_CAP else hm_nl_game(n, "full", cap=n)
        r = eval_monte_carlo(G, hmnl_halfspace_strategy(n), 10**6, seed=n)
        exact = halfspace_value(n)
        parts.append((f"halfspace n={n}: MC {r.estimate:.5f} +- {r.stderr:.5f} vs {exact:.5f}",
                      abs(r.estimate - exact) <= 3 * r.stderr))
    verdict(8, "HM_nl classical strategies", parts)


def test_criterion_9_hm_communication(verdict):
    r = eval_protocol_monte_carlo(hm_comm_protocol(16, 4), 16, 10**6, seed=2024)
    worst, count = 0.0, 0
    rng = np.random.default_rng(9)
    for n in (2, 4):
        G = hm_nl_game(n)
        pool = [hmnl_argmax_strategy(n)] + [
            DeterministicStrategy.from_tables(G, rng.integers(0, n, G.n_x), rng.integers(0, n, G.n_y))
            for _ in range(100)
        ]
        for S in pool:
            worst = max(worst, abs(eval_protocol_exact(hmnl_to_hm_reduction(S, n), n) - eval_exact(G, S)))
            count += 1
    verdict(9, "HM communication protocol", [
        (f"n=16 c=4: {r.estimate:.5f}, (value - 1/2)/stderr = {(r.estimate - 0.5) / r.stderr:.2f}",
         r.estimate - 0.5 >= 2 * r.stderr),
        (f"reduction preserves value on {count} strategies, max error {worst:.1e}", worst <= 1e-12),
    ])


def sampler_pvalues():
    out = {}
    rng = np.random.default_rng(10)
    for G in (chsh_game(), hm_nl_game(4), kv_game(4, 0.3)):
        s = G.sample(rng, 60_000)
        counts = np.bincount(G.x_index(s.x) * G.n_y + G.y_index(s.y), minlength=G.n_x * G.n_y)
        exp = G.input_distribution().ravel() * len(s.x)
        keep = exp > 0
        out[f"{G.name} inputs"] = chisquare(counts[keep], exp[keep]).pvalue if counts[~keep].sum() == 0 else 0.0
    s = kv_game(8, 0.25).sample(rng, 100_000)
    counts = np.bincount(bitcore.popcount(s.aux), minlength=9)
    exp = binom.pmf(np.arange(9), 8, 0.25) * len(s.aux)
    keep = exp > 5
    out["kv noise weight"] = chisquare(counts[keep], exp[keep] * counts[keep].sum() / exp[keep].sum()).pvalue
    p = bitcore.random_partners(rng, 4, 30_000)
    lookup = {tuple(m.partner()): k for k, m in enumerate(bitcore.full_matchings(4))}
    out["random matchings"] = chisquare(np.bincount([lookup[tuple(r)] for r in p], minlength=3)).pvalue
    S = chsh_quantum_strategy()
    ones = np.ones(50_000, dtype=np.int64)
    a, b = S.play(chsh_game(), ones, ones, rng)
    P = joint_outcome_distribution(S, [1], [1])[0].ravel()
    out["chsh quantum outcomes"] = chisquare(np.bincount(2 * a + b, minlength=4), P * len(a)).pvalue
    x = rng.integers(0, 2, 8)
    partner = bitcore.reduced_matchings(8)[2].partner()
    res = hm_quantum_outcomes(np.tile(x, (40_000, 1)), np.tile(partner, (40_000, 1)), rng)
    counts = np.bincount(res[:, 0], minlength=8)
    mins = np.flatnonzero(partner > np.arange(8))
    out["hm quantum outcomes"] = chisquare(counts[mins]).pvalue if counts.sum() == counts[mins].sum() else 0.0
    return out


def reports_reproducible(tmp_path):
    cases = [
        ("value", {"game": {"name": "hm_nl", "n": 8}, "seed": 3, "evaluator": {"method": "mc", "trials": 50_000},
                   "strategies": ["hmnl-argmax", "hmnl-halfspace", "hmnl-quantum"]}),
        ("value", {"game": {"name": "hm", "n": 16, "c": 4}, "seed": 4, "evaluator": {"method": "mc", "trials": 20_000},
                   "strategies": ["hm-protocol", "hm-quantum"]}),
        ("brute", {"game": {"name": "kv", "n": 8, "eta": 0.25}, "seed": 5}),
        ("bounds", {"game": {"name": "hm_nl", "n": 8}}),
        ("violate", {"game": {"name": "kv", "n": 16, "eta": 0.25}}),
        ("sweep", {"game": {"name": "kv", "n": 2, "eta": 0.0}, "sweep": {"n": [2, 4, 8], "eta": [0.1, 0.25]},
                   "seed": 6}),
    ]
    mismatched = []
    for k, (sub, doc) in enumerate(cases):
        cfg = tmp_path / f"case{k}.json"
        cfg.write_text(json.dumps(doc))
        texts = []
        for rep in range(2):
            out = tmp_path / f"case{k}-{rep}.out"
            assert cli.main([sub, "--config", str(cfg), "--out", str(out)]) == 0
            text = out.read_text()
            if sub == "sweep":
                assert len(list(csv.DictReader(io.StringIO(text)))) == 6
            else:
                parsed = json.loads(text)
                parsed.pop("meta")
                text = json.dumps(parsed, sort_keys=True)
            texts.append(text)
        if texts[0] != texts[1]:
            mismatched.append(f"{sub}#{k}")
    return mismatched


def test_criterion_10_property_suites(verdict, tmp_path, monkeypatch):
    rng = np.random.default_rng(1010)
    rhos = np.round(np.arange(1, 10) / 10, 1)
    hyper_fail = 0
    for _ in range(1000):
        F = rng.normal(size=256) * (rng.random(256) < rng.uniform(0.1, 1.0))
        hyper_fail += sum(not hypercontractivity_check(F, rho).holds for rho in rhos)
    parseval, involution = 0.0, 0.0
    for _ in range(100):
        F = rng.normal(size=1 << int(rng.integers(0, 13)))
        spec = bitcore.fwht(F)
        parseval = max(parseval, abs(np.sum(spec.coefficients**2) - np.mean(F**2)))
        involution = max(involution, float(np.max(np.abs(spec.inverse() - F))))
    pvalues = sampler_pvalues()
    worst_sampler = min(pvalues, key=pvalues.get)
    mismatched = reports_reproducible(tmp_path)
    monkeypatch.setenv("BELLFORGE_WORKERS", "3")
    threaded = eval_monte_carlo(kv_game(8, 0.25), kv_quantum_strategy(8), 150_000, seed=77)
    monkeypatch.setenv("BELLFORGE_WORKERS", "1")
    serial = eval_monte_carlo(kv_game(8, 0.25), kv_quantum_strategy(8), 150_000, seed=77)
    verdict(10, "property suites", [
        (f"hypercontractivity: {hyper_fail} failures in 1000 functions on m=8 x rho in {{0.1..0.9}}", hyper_fail == 0),
        (f"Parseval error {parseval:.1e}, involution error {involution:.1e} on 100 tables",
         parseval <= 1e-9 and involution <= 1e-9),
        (f"{len(pvalues)} samplers chi^2 consistent (min p={pvalues[worst_sampler]:.3g} for {worst_sampler})",
         pvalues[worst_sampler] > P_MIN),
        (f"reports byte-reproducible modulo meta (mismatched: {mismatched or 'none'})", not mismatched),
        ("Monte Carlo independent of worker count", threaded.estimate == serial.estimate),
    ])
