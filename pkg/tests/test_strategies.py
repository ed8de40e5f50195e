import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellforge import bitcore, strategies
from bellforge.errors import InvalidOutputError
from bellforge.games import StrategyBehavior, chsh_game, functional_value, game_to_functional, hm_nl_game, kv_game
from bellforge.strategies import (
    CosetSelector,
    DeterministicStrategy,
    SharedRandomnessStrategy,
    eval_exact,
    eval_monte_carlo,
    eval_protocol_exact,
    eval_protocol_monte_carlo,
    hm_comm_protocol,
    hmnl_argmax_strategy,
    hmnl_argmax_value,
    hmnl_halfspace_strategy,
    hmnl_to_hm_reduction,
    kv_eval_fwht,
    kv_maxweight_selectors,
    kv_maxweight_strategy,
    kv_strategy_from_selectors,
    random_selector,
)

CHSH_ZERO = DeterministicStrategy(lambda x: np.zeros_like(x), lambda y: np.zeros_like(y), "zeros")


def chsh_table_strategy(k):
    """Deterministic CHSH strategy number k in [0, 16)."""
    A = np.array([(k >> 3) & 1, (k >> 2) & 1])
    B = np.array([(k >> 1) & 1, k & 1])
    return A, B


# -- exact evaluation -------------------------------------------------------------


def test_eval_exact_examples():
    assert eval_exact(chsh_game(), CHSH_ZERO) == pytest.approx(0.75)
    G = hm_nl_game(2)

    def alice(x):
        x = np.atleast_2d(x).astype(np.int64)
        return x[:, 0] ^ x[:, 1]

    def bob(y):
        y = np.atleast_2d(y)
        return np.tile([0, 1, 0], (len(y), 1))

    assert eval_exact(G, DeterministicStrategy(alice, bob)) == pytest.approx(1.0)
    A = random_selector(8, np.random.default_rng(0))
    assert eval_exact(kv_game(8, 0.0), kv_strategy_from_selectors(A, A)) == pytest.approx(1.0)


def test_invalid_outputs_are_errors():
    bad = DeterministicStrategy(lambda x: np.full(len(x), 2), lambda y: np.zeros_like(y))
    with pytest.raises(InvalidOutputError):
        eval_exact(chsh_game(), bad)
    with pytest.raises(InvalidOutputError):
        eval_monte_carlo(chsh_game(), bad, 100, seed=0)
    G = kv_game(4, 0.2)
    outside = DeterministicStrategy(lambda x: np.asarray(x) ^ 1, lambda y: np.asarray(y))
    with pytest.raises(InvalidOutputError):
        eval_monte_carlo(G, outside, 100, seed=0)


# -- Monte Carlo ------------------------------------------------------------------


def test_mc_chsh_optimal_classical():
    r = eval_monte_carlo(chsh_game(), CHSH_ZERO, 10**6, seed=1)
    assert abs(r.estimate - 0.75) <= 3 * r.stderr
    assert r.stderr == pytest.approx(math.sqrt(r.estimate * (1 - r.estimate) / 10**6))


def test_mc_reproducible_and_order_independent():
    G = kv_game(8, 0.25)
    S = kv_maxweight_strategy(8)
    r1 = eval_monte_carlo(G, S, 150_000, seed=42, workers=1)
    r2 = eval_monte_carlo(G, S, 150_000, seed=42, workers=1)
    r3 = eval_monte_carlo(G, S, 150_000, seed=42, workers=3)
    assert r1 == r2 == r3
    assert eval_monte_carlo(G, S, 150_000, seed=43).wins != r1.wins


def test_mc_rejects_zero_trials():
    with pytest.raises(ValueError):
        eval_monte_carlo(chsh_game(), CHSH_ZERO, 0, seed=0)


def test_mc_kv_maxweight_below_bound():
    n, eta = 8, 0.25
    r = eval_monte_carlo(kv_game(n, eta), kv_maxweight_strategy(n), 200_000, seed=7)
    assert r.estimate <= n ** (-eta / (1 - eta)) + 3 * r.stderr


def test_mc_matches_exact_kv():
    G = kv_game(8, 0.2)
    S = kv_maxweight_strategy(8)
    r = eval_monte_carlo(G, S, 200_000, seed=9)
    assert abs(r.estimate - eval_exact(G, S)) <= 3.5 * r.stderr


# -- coset selectors and the FWHT path ---------------------------------------------


@pytest.mark.parametrize("n", [2, 4, 8])
def test_selector_invariant_exhaustive(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        A = random_selector(n, rng)
        H = bitcore.hadamard_subgroup(n).as_array()
        u = np.arange(1 << n)
        assert np.all(sum(A.table[u ^ h] for h in H) == 1)


def test_invalid_selector_rejected():
    t = np.zeros(16, dtype=np.uint8)
    with pytest.raises(InvalidOutputError):
        CosetSelector(4, t)
    t[[0, 5]] = 1  # two members of H, nothing elsewhere
    with pytest.raises(InvalidOutputError):
        CosetSelector(4, t)


def test_fwht_examples():
    A = random_selector(8, np.random.default_rng(1))
    assert kv_eval_fwht(A, A, 0.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 4])
def test_fwht_matches_enumeration(n):
    rng = np.random.default_rng(2)
    G = kv_game(n, 0.2)
    for _ in range(20):
        A, B = random_selector(n, rng), random_selector(n, rng)
        assert kv_eval_fwht(A, B, 0.2) == pytest.approx(eval_exact(G, kv_strategy_from_selectors(A, B)), abs=1e-9)


def test_fwht_matches_enumeration_n8():
    rng = np.random.default_rng(3)
    G = kv_game(8, 0.3)
    M = game_to_functional(G).entries
    for _ in range(10):
        A, B = random_selector(8, rng), random_selector(8, rng)
        S = kv_strategy_from_selectors(A, B)
        ta, tb = S.tabulate(G)
        direct = M[np.arange(32)[:, None], np.arange(32)[None, :], ta[:, None], tb[None, :]].sum()
        assert kv_eval_fwht(A, B, 0.3) == pytest.approx(direct, abs=1e-9)
        np.testing.assert_array_equal(strategies.kv_selectors(G, S)[0].table, A.table)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 8, 16]), st.sampled_from([0.0, 0.1, 0.2, 0.3, 0.4, 0.5]), st.integers(0, 2**32 - 1))
def test_fwht_value_below_classical_bound(n, eta, seed):
    rng = np.random.default_rng(seed)
    A, B = random_selector(n, rng), random_selector(n, rng)
    assert kv_eval_fwht(A, B, eta) <= n ** (-eta / (1 - eta)) + 1e-9


# -- max-weight heuristic ---------------------------------------------------------


def test_maxweight_tie_break_is_lexicographic():
    # among the weight-2 members 0011 < 0101 < 0110
    assert strategies.maxweight_choice(np.array([0]), 4)[0] == 0b0011
    assert strategies.maxweight_choice(np.array([0b1000]), 4)[0] == 0b1011
    choice = strategies.maxweight_choice(bitcore.all_coset_reps(8), 8)
    w = bitcore.popcount(choice)
    H = bitcore.hadamard_subgroup(8).as_array()
    members = bitcore.all_coset_reps(8)[:, None] ^ H[None, :]
    assert np.all(w == bitcore.popcount(members).max(axis=1))


def test_maxweight_zero_noise_wins():
    assert eval_exact(kv_game(8, 0.0), kv_maxweight_strategy(8)) == pytest.approx(1.0)
    A, B = kv_maxweight_selectors(16)
    assert kv_eval_fwht(A, B, 0.0) == pytest.approx(1.0)


def test_maxweight_mc_below_bound():
    n, eta = 8, 0.1
    r = eval_monte_carlo(kv_game(n, eta), kv_maxweight_strategy(n), 200_000, seed=5)
    assert r.estimate <= 8 ** (-1 / 9) + 3 * r.stderr


# -- HM_nl classical strategies ---------------------------------------------------


def test_argmax_n2_is_perfect():
    x = bitcore.ints_to_bits(np.arange(4), 2).astype(np.int64)
    np.testing.assert_array_equal(strategies.argmax_alice(x, 2), x[:, 0] ^ x[:, 1])
    assert eval_exact(hm_nl_game(2), hmnl_argmax_strategy(2)) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [4, 8])
def test_argmax_exact_paths_agree(n):
    for family in ("full", "reduced"):
        v = eval_exact(hm_nl_game(n, family), hmnl_argmax_strategy(n))
        assert hmnl_argmax_value(n, family) == pytest.approx(v, abs=1e-12)
        assert v > 0.5


def test_argmax_advantage_decreasing():
    exact = {n: hmnl_argmax_value(n) for n in (8, 16)}
    mc = {}
    for n in (32, 64, 256):
        G = hm_nl_game(n, "full", cap=n)
        mc[n] = eval_monte_carlo(G, hmnl_argmax_strategy(n), 100_000, seed=n)
    value = {**exact, **{n: r.estimate for n, r in mc.items()}}
    for n in (8, 16, 64):
        slack = 3 * mc[4 * n].stderr
        assert value[n] - 0.5 > value[4 * n] - 0.5 + slack
        assert value[4 * n] - 0.5 > 3 * mc[4 * n].stderr


def test_halfspace_closed_form_n4():
    assert strategies.halfspace_value(4) == pytest.approx(7 / 12, abs=1e-12)


def test_halfspace_mc_n4():
    r = eval_monte_carlo(hm_nl_game(4), hmnl_halfspace_strategy(4), 200_000, seed=3)
    assert abs(r.estimate - 7 / 12) <= 3 * r.stderr


@pytest.mark.parametrize("n,trials", [(64, 10**6), (256, 400_000), (1024, 200_000)])
def test_halfspace_scaled_advantage(n, trials):
    r = eval_monte_carlo(hm_nl_game(n, "full", cap=n), hmnl_halfspace_strategy(n), trials, seed=n)
    assert 0.1 <= (r.estimate - 0.5) * math.sqrt(n) <= 0.2


def test_halfspace_strict_sign_rule():
    S = hmnl_halfspace_strategy(2)
    r = {"w": np.zeros((1, 2)), "a": np.array([1])}
    x = np.zeros((1, 2), dtype=np.uint8)
    assert S.alice(x, r)[0] == 1  # <w, u> = 0 is not positive
    assert S.bob(np.array([[1, 0]]), r)[0, 2] == 1


# -- shared randomness ------------------------------------------------------------


def test_shared_randomness_average_of_instances():
    G = chsh_game()
    M = game_to_functional(G)

    def draw(rng, size):
        return {"k": rng.integers(0, 16, size)}

    def alice(x, r):
        return (r["k"] >> (3 - np.asarray(x))) & 1

    def bob(y, r):
        return (r["k"] >> (1 - np.asarray(y))) & 1

    S = SharedRandomnessStrategy(draw, alice, bob)
    seeds = range(10)
    values = [eval_exact(G, S.instance(s)) for s in seeds]
    mixture = np.zeros((2, 2, 2, 2))
    for s in seeds:
        k = int(S.draw(np.random.default_rng(s), 1)["k"][0])
        A, B = chsh_table_strategy(k)
        mixture += StrategyBehavior.deterministic(A, B, 2, 2).table / len(seeds)
    assert functional_value(M, StrategyBehavior(mixture)) == pytest.approx(np.mean(values), abs=1e-12)
    assert max(values) >= np.mean(values)
    full = np.mean([eval_exact(G, DeterministicStrategy.from_tables(G, *chsh_table_strategy(k))) for k in range(16)])
    r = eval_monte_carlo(G, S, 200_000, seed=0)
    assert abs(r.estimate - full) <= 3 * r.stderr


# -- Hidden Matching one-way protocols --------------------------------------------


def test_hm_protocol_preconditions():
    for n, c in [(8, 4), (16, 3), (16, 2), (16, 6)]:
        with pytest.raises(ValueError):
            hm_comm_protocol(n, c)


def test_hm_protocol_message_budget():
    P = hm_comm_protocol(64, 6)
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, (500, 64))
    msg = P.encode(x, P.draw(rng, 500))
    assert P.c == 6
    assert np.all((msg >= 0) & (msg < 1 << 6))


def test_hm_protocol_beats_half():
    r = eval_protocol_monte_carlo(hm_comm_protocol(16, 4), 16, 10**6, seed=2024)
    assert r.estimate - 0.5 >= 2 * r.stderr


def test_hm_protocol_zero_beta_floor():
    r = eval_protocol_monte_carlo(hm_comm_protocol(16, 4, beta=0.0), 16, 200_000, seed=1)
    assert r.estimate >= 0.5 - 3 * r.stderr


def test_reduction_preserves_argmax_value():
    for n in (2, 4, 8):
        S = hmnl_argmax_strategy(n)
        P = hmnl_to_hm_reduction(S, n)
        assert P.c == int(math.log2(n))
        assert eval_protocol_exact(P, n) == pytest.approx(eval_exact(hm_nl_game(n), S), abs=1e-12)
    assert eval_protocol_exact(hmnl_to_hm_reduction(hmnl_argmax_strategy(2), 2), 2) == 1.0


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 4]), st.integers(0, 2**32 - 1))
def test_reduction_preserves_random_strategies(n, seed):
    G = hm_nl_game(n)
    rng = np.random.default_rng(seed)
    S = DeterministicStrategy.from_tables(G, rng.integers(0, n, G.n_x), rng.integers(0, n, G.n_y))
    P = hmnl_to_hm_reduction(S, n)
    assert eval_protocol_exact(P, n) == pytest.approx(eval_exact(G, S), abs=1e-12)


# -- serialization ----------------------------------------------------------------


def test_strategy_json_roundtrip():
    G = kv_game(4, 0.1)
    S = kv_maxweight_strategy(4)
    doc = strategies.strategy_to_dict(G, S)
    S2 = strategies.strategy_from_dict(G, doc)
    assert eval_exact(G, S2) == eval_exact(G, S)
    assert doc["game"]["name"] == "kv"


def test_mc_result_dict():
    r = eval_monte_carlo(chsh_game(), CHSH_ZERO, 1000, seed=5)
    assert r.to_dict() == {"estimate": r.estimate, "stderr": r.stderr, "trials": 1000, "seed": 5}
