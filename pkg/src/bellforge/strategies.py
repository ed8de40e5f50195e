"""Classical strategies, one-way protocols, and their evaluation."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import bitcore
from .bitcore import coset_rep, log2_exact, parity
from .errors import InvalidOutputError
from .games import Game, HMNLGame, KVGame

MC_CHUNK = 1 << 16


def default_workers() -> int:
    return max(1, int(os.environ.get("BELLFORGE_WORKERS", "1")))


# -- strategy types -----------------------------------------------------------


@dataclass(frozen=True)
class DeterministicStrategy:
    """Vectorized maps from natural-form inputs to natural-form outputs."""

    alice: Callable[[np.ndarray], np.ndarray]
    bob: Callable[[np.ndarray], np.ndarray]
    name: str = "deterministic"

    @classmethod
    def from_tables(cls, game: Game, alice_table, bob_table, name: str = "table") -> "DeterministicStrategy":
        A = np.asarray(alice_table, dtype=np.int64)
        B = np.asarray(bob_table, dtype=np.int64)
        if A.shape != (game.n_x,) or B.shape != (game.n_y,):
            raise ValueError("tables must cover every input index")
        if np.any((A < 0) | (A >= game.k_a)) or np.any((B < 0) | (B >= game.k_b)):
            raise InvalidOutputError("table entry outside the output index set")

        def alice(x):
            return game.decode_a(x, A[game.x_index(x)])

        def bob(y):
            return game.decode_b(y, B[game.y_index(y)])

        s = cls(alice, bob, name)
        object.__setattr__(s, "tables", (A, B))
        return s

    def tabulate(self, game: Game) -> tuple[np.ndarray, np.ndarray]:
        """Index-form tables (validated) over the game's full input sets."""
        X, Y = game.alice_inputs(), game.bob_inputs()
        return game.a_index(X, self.alice(X)), game.b_index(Y, self.bob(Y))


@dataclass(frozen=True)
class SharedRandomnessStrategy:
    """A distribution over deterministic strategies indexed by shared randomness.

    ``draw(rng, size)`` returns a dict of per-trial random arrays; the players'
    maps receive the row belonging to their trial.
    """

    draw: Callable[[np.random.Generator, int], dict]
    alice: Callable[[np.ndarray, dict], np.ndarray]
    bob: Callable[[np.ndarray, dict], np.ndarray]
    name: str = "shared-randomness"

    def instance(self, seed: int) -> DeterministicStrategy:
        """The deterministic strategy induced by one shared draw."""
        r = self.draw(np.random.default_rng(seed), 1)

        def rep(v, size):
            return {k: np.repeat(arr, size, axis=0) for k, arr in v.items()}

        return DeterministicStrategy(
            lambda x: self.alice(x, rep(r, len(x))),
            lambda y: self.bob(y, rep(r, len(y))),
            f"{self.name}[seed={seed}]",
        )


@dataclass(frozen=True)
class CosetSelector:
    """Indicator A: {0,1}^n -> {0,1} choosing one element of every coset of H."""

    n: int
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.uint8)
        if t.shape != (1 << self.n,):
            raise ValueError(f"selector table must have 2^{self.n} entries")
        object.__setattr__(self, "table", t)
        if not self.is_valid():
            raise InvalidOutputError("selector does not pick exactly one element per coset")

    def is_valid(self) -> bool:
        words = bitcore.hadamard_subgroup(self.n).as_array()
        u = np.arange(1 << self.n, dtype=np.int64)
        counts = np.zeros(1 << self.n, dtype=np.int64)
        for h in words:
            counts += self.table[u ^ h]
        return bool(np.all(counts == 1))

    @classmethod
    def from_choice(cls, n: int, choice: np.ndarray) -> "CosetSelector":
        """Build from the chosen element of each coset (ordered like all_coset_reps)."""
        t = np.zeros(1 << n, dtype=np.uint8)
        t[np.asarray(choice, dtype=np.int64)] = 1
        return cls(n, t)

    def choice(self) -> np.ndarray:
        """Chosen element for each canonical representative, in rep order."""
        chosen = np.flatnonzero(self.table)
        order = np.argsort(coset_rep(chosen, self.n), kind="stable")
        return chosen[order]

    def as_alice(self) -> Callable[[np.ndarray], np.ndarray]:
        reps = bitcore.all_coset_reps(self.n)
        picks = self.choice()

        def play(x):
            return picks[np.searchsorted(reps, np.asarray(x, dtype=np.int64))]

        return play


def kv_strategy_from_selectors(A: CosetSelector, B: CosetSelector, name: str = "selectors") -> DeterministicStrategy:
    return DeterministicStrategy(A.as_alice(), B.as_alice(), name)


def kv_selectors(game: KVGame, S: DeterministicStrategy) -> tuple[CosetSelector, CosetSelector]:
    reps = game.alice_inputs()
    a = np.asarray(S.alice(reps), dtype=np.int64)
    b = np.asarray(S.bob(reps), dtype=np.int64)
    game.a_index(reps, a)
    game.b_index(reps, b)
    return CosetSelector.from_choice(game.n, a), CosetSelector.from_choice(game.n, b)


@dataclass(frozen=True)
class OneWayProtocol:
    """Alice sends ``c`` bits; Bob answers ((i, j), v) from the message and his matching.

    ``decode`` returns rows (i, j, v).  ``draw`` supplies shared randomness and
    is None for deterministic protocols.
    """

    c: int
    encode: Callable[[np.ndarray, Any], np.ndarray]
    decode: Callable[[np.ndarray, np.ndarray, Any], np.ndarray]
    draw: Callable[[np.random.Generator, int], Any] | None = None
    name: str = "protocol"


# -- evaluation ---------------------------------------------------------------


def eval_exact(G: Game, S: DeterministicStrategy) -> float:
    """Sum of Pr(x, y, aux) * Pr[win] over the game's exact enumerator."""
    A, B = S.tabulate(G)
    e = G.enumerate()
    total = 0.0
    chunk = 1 << 16
    for s in range(0, len(e.prob), chunk):
        sl = slice(s, s + chunk)
        acc = G.accept(e.x[sl], e.y[sl], e.aux[sl])
        rows = np.arange(len(acc))
        total += float(np.dot(e.prob[sl], acc[rows, A[e.x[sl]], B[e.y[sl]]]))
    return total


@dataclass(frozen=True)
class MCResult:
    estimate: float
    stderr: float
    trials: int
    seed: int
    wins: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "trials": self.trials, "seed": self.seed}


def chunk_rng(seed: int, k: int) -> np.random.Generator:
    """Counter-based stream for chunk k: independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


def run_chunks(count_wins: Callable[[np.random.Generator, int], int], trials: int, seed: int,
               workers: int | None = None) -> MCResult:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    sizes = [min(MC_CHUNK, trials - s) for s in range(0, trials, MC_CHUNK)]
    jobs = [(chunk_rng(seed, k), size) for k, size in enumerate(sizes)]
    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            wins = sum(pool.map(lambda job: count_wins(*job), jobs))
    else:
        wins = sum(count_wins(*job) for job in jobs)
    p = wins / trials
    return MCResult(p, math.sqrt(p * (1 - p) / trials), trials, int(seed), int(wins))


def play(G: Game, S, sample, rng: np.random.Generator):
    """Outputs of any strategy kind on a batch of natural-form inputs."""
    if hasattr(S, "play"):
        return S.play(G, sample.x, sample.y, rng)
    if isinstance(S, SharedRandomnessStrategy):
        r = S.draw(rng, len(sample.x))
        return S.alice(sample.x, r), S.bob(sample.y, r)
    return S.alice(sample.x), S.bob(sample.y)


def eval_monte_carlo(G: Game, S, trials: int, seed: int, workers: int | None = None) -> MCResult:
    def count(rng, size):
        sample = G.sample(rng, size)
        a, b = play(G, S, sample, rng)
        return int(np.count_nonzero(G.check(sample.x, sample.y, sample.aux, a, b)))

    return run_chunks(count, trials, seed, workers)


def kv_eval_fwht(A: CosetSelector, B: CosetSelector, eta: float) -> float:
    """n * E_{u,z}[A(u) B(u ^ z)]: the KV winning probability of the selector pair."""
    if A.n != B.n:
        raise ValueError("selectors are for different n")
    for s in (A, B):
        if not s.is_valid():
            raise InvalidOutputError("invalid coset selector")
    return A.n * bitcore.noisy_correlation(A.table.astype(float), B.table.astype(float), eta)


# -- Khot-Vishnoi strategies ----------------------------------------------------


def maxweight_choice(x, n: int) -> np.ndarray:
    """Highest-weight member of each coset; ties go to the smallest string."""
    x = np.asarray(x, dtype=np.int64)
    members = np.sort(x[..., None] ^ bitcore.hadamard_subgroup(n).as_array(), axis=-1)
    w = bitcore.popcount(members)
    return np.take_along_axis(members, np.argmax(w, axis=-1)[..., None], axis=-1)[..., 0]


def kv_maxweight_strategy(n: int) -> DeterministicStrategy:
    log2_exact(n)

    def pick(x):
        return maxweight_choice(x, n)

    return DeterministicStrategy(pick, pick, "kv-maxweight")


def kv_maxweight_selectors(n: int) -> tuple[CosetSelector, CosetSelector]:
    sel = CosetSelector.from_choice(n, maxweight_choice(bitcore.all_coset_reps(n), n))
    return sel, sel


def random_selector(n: int, rng: np.random.Generator) -> CosetSelector:
    reps = bitcore.all_coset_reps(n)
    words = bitcore.hadamard_subgroup(n).as_array()
    return CosetSelector.from_choice(n, reps ^ words[rng.integers(0, n, len(reps))])


# -- non-local Hidden Matching strategies ----------------------------------------


def _index_parities(n: int) -> np.ndarray:
    """(-1)^{a.j} for a, j in [n]."""
    idx = np.arange(n, dtype=np.int64)
    return 1 - 2 * parity(idx[:, None] & idx[None, :])


def argmax_alice(x: np.ndarray, n: int) -> np.ndarray:
    """argmax_a |{j != 0 : a.j = x_0 ^ x_j}|, smallest a on ties."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    s = (1 - 2 * (x[:, :1] ^ x)).astype(float)  # (-1)^{x_0 ^ x_j}; float for BLAS, sums stay exact
    corr = s[:, 1:] @ _index_parities(n)[:, 1:].T.astype(float)  # (N, a)
    return np.argmax(corr, axis=1)


def hmnl_argmax_strategy(n: int) -> DeterministicStrategy:
    log2_exact(n)

    def bob(partner):
        partner = np.atleast_2d(np.asarray(partner, dtype=np.int64))
        zeros = np.zeros(len(partner), dtype=np.int64)
        return np.stack([zeros, partner[:, 0], zeros], axis=1)

    return DeterministicStrategy(lambda x: argmax_alice(x, n), bob, "hmnl-argmax")


def partner_of_zero_distribution(n: int, family: str) -> np.ndarray:
    """Pr[M pairs index 0 with j] under the family's uniform distribution."""
    p = np.zeros(n)
    if family == "full":
        p[1:] = 1.0 / (n - 1)
    elif family == "reduced":
        p[n // 2:] = 2.0 / n
    else:
        raise ValueError(f"unknown matching family {family!r}")
    return p


def hmnl_argmax_value(n: int, family: str = "full") -> float:
    """Exact value of the argmax strategy by enumerating all x.

    Bob's answer depends on M only through the partner j of index 0, so the
    matching average collapses to the partner distribution.
    """
    log2_exact(n)
    if n > 20:
        raise ValueError("exact x-enumeration is limited to n <= 20")
    pj = partner_of_zero_distribution(n, family)
    total = 0.0
    H = parity(np.arange(n)[:, None] & np.arange(n)[None, :])
    for start in range(0, 1 << n, 1 << 14):
        xs = np.arange(start, min(1 << n, start + (1 << 14)), dtype=np.int64)
        bits = bitcore.ints_to_bits(xs, n).astype(np.int64)
        a = argmax_alice(bits, n)
        hit = H[a] == (bits[:, :1] ^ bits)
        total += float(np.sum(hit @ pj))
    return total / (1 << n)


def hmnl_halfspace_strategy(n: int) -> SharedRandomnessStrategy:
    """Shared Gaussian direction w; sign tests against the two unit vectors."""
    log2_exact(n)

    def draw(rng, size):
        return {"w": rng.standard_normal((size, n)), "a": rng.integers(0, n, size)}

    def alice(x, r):
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        u = (1 - 2 * (x[:, :1] ^ x)) / math.sqrt(n)
        positive = np.einsum("ij,ij->i", r["w"], u) > 0
        return np.where(positive, 0, r["a"])

    def bob(partner, r):
        partner = np.atleast_2d(np.asarray(partner, dtype=np.int64))
        j = partner[:, 0]
        d = (r["w"][np.arange(len(j)), j] <= 0).astype(np.int64)
        return np.stack([np.zeros_like(j), j, d], axis=1)

    return SharedRandomnessStrategy(draw, alice, bob, "hmnl-halfspace")


def halfspace_value(n: int) -> float:
    return 0.75 - math.acos(1.0 / math.sqrt(n)) / (2.0 * math.pi)


# -- Hidden Matching one-way protocols --------------------------------------------


def hm_wins(x: np.ndarray, partner: np.ndarray, out: np.ndarray) -> np.ndarray:
    """v == x_i ^ x_j, with (i, j) required to be in the matching."""
    x = np.atleast_2d(x)
    partner = np.atleast_2d(partner)
    out = np.atleast_2d(np.asarray(out, dtype=np.int64))
    i, j, v = out[:, 0], out[:, 1], out[:, 2]
    rows = np.arange(len(x))
    if np.any(partner[rows, i] != j) or np.any(i == j):
        raise InvalidOutputError("Bob's pair is not in his matching")
    if np.any((v != 0) & (v != 1)):
        raise InvalidOutputError("Bob's bit must be 0 or 1")
    return v == (x[rows, i] ^ x[rows, j])


def hm_comm_protocol(n: int, c: int, beta: float | None = None) -> OneWayProtocol:
    """Classical c-bit protocol predicting x_i ^ x_j from two sampled substrings.

    Shared randomness picks disjoint blocks S1, S2 of size sqrt(n) and
    2^(c/2) - 1 random guesses per block; message value 2^(c/2) - 1 means
    "no guess within the distance threshold".
    """
    log2_exact(n)
    root = math.isqrt(n)
    if root * root != n:
        raise ValueError(f"n must be a perfect square, got {n}")
    if c % 2 or not 4 <= c <= root:
        raise ValueError(f"c must be even with 4 <= c <= sqrt(n), got c={c}")
    half = c // 2
    L = (1 << half) - 1
    if beta is None:
        beta = 0.5 * math.sqrt(half)
    threshold = root / 2 - beta * n**0.25

    def draw(rng, size):
        perm = np.argsort(rng.random((size, n)), axis=1)
        return {
            "S1": perm[:, :root],
            "S2": perm[:, root: 2 * root],
            "Y": rng.integers(0, 2, (size, L, root), dtype=np.int64),
            "Z": rng.integers(0, 2, (size, L, root), dtype=np.int64),
            "coin": rng.integers(0, 2, size),
        }

    def first_close(block, guesses):
        dist = np.count_nonzero(guesses != block[:, None, :], axis=2)
        ok = dist <= threshold
        return np.where(ok.any(axis=1), np.argmax(ok, axis=1), L)

    def encode(x, r):
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        rows = np.arange(len(x))[:, None]
        ly = first_close(x[rows, r["S1"]], r["Y"])
        lz = first_close(x[rows, r["S2"]], r["Z"])
        return (ly << half) | lz

    def decode(message, partner, r):
        partner = np.atleast_2d(np.asarray(partner, dtype=np.int64))
        size = len(partner)
        rows = np.arange(size)
        ly, lz = message >> half, message & ((1 << half) - 1)
        pos2 = np.full((size, n), -1)
        pos2[rows[:, None], r["S2"]] = np.arange(root)
        mate = partner[rows[:, None], r["S1"]]  # partners of S1 members
        mate_pos = pos2[rows[:, None], mate]
        cross = mate_pos >= 0
        has = cross.any(axis=1)
        k = np.argmax(cross, axis=1)  # first S1 member with a partner in S2
        i = r["S1"][rows, k]
        j = partner[rows, i]
        usable = has & (ly < L) & (lz < L)
        gy = r["Y"][rows, np.minimum(ly, L - 1), k]
        gz = r["Z"][rows, np.minimum(lz, L - 1), mate_pos[rows, k]]
        v = np.where(usable, gy ^ gz, r["coin"])
        i = np.where(usable, i, 0)
        j = np.where(usable, j, partner[:, 0])
        return np.stack([i, j, v], axis=1)

    return OneWayProtocol(c, encode, decode, draw, f"hm-protocol(c={c})")


def hmnl_to_hm_reduction(S: DeterministicStrategy, n: int) -> OneWayProtocol:
    """Alice sends her HM_nl output a; Bob answers v = (a.(i^j)) ^ d."""
    m = log2_exact(n)

    def encode(x, r):
        return np.asarray(S.alice(np.atleast_2d(x)), dtype=np.int64)

    def decode(message, partner, r):
        out = np.atleast_2d(np.asarray(S.bob(np.atleast_2d(partner)), dtype=np.int64))
        i, j, d = out[:, 0], out[:, 1], out[:, 2]
        return np.stack([i, j, parity(np.asarray(message) & (i ^ j)) ^ d], axis=1)

    return OneWayProtocol(m, encode, decode, None, f"reduction({S.name})")


def _check_message(P: OneWayProtocol, msg: np.ndarray) -> None:
    if np.any((msg < 0) | (msg >= (1 << P.c))):
        raise InvalidOutputError(f"message does not fit in {P.c} bits")


def eval_protocol_exact(P: OneWayProtocol, n: int, family: str = "full") -> float:
    """Exact winning probability of a deterministic protocol by (x, M) enumeration."""
    if P.draw is not None:
        raise ValueError("exact evaluation needs a deterministic protocol")
    game = HMNLGame(n, family)
    X = game.alice_inputs()
    msg = np.asarray(P.encode(X, None), dtype=np.int64)
    _check_message(P, msg)
    wins = 0
    for partner in game.bob_inputs():
        Y = np.broadcast_to(partner, (len(X), n))
        wins += int(np.count_nonzero(hm_wins(X, Y, P.decode(msg, Y, None))))
    return wins / (len(X) * game.n_y)


def eval_protocol_monte_carlo(P: OneWayProtocol, n: int, trials: int, seed: int,
                              family: str = "full", workers: int | None = None) -> MCResult:
    def count(rng, size):
        x = rng.integers(0, 2, (size, n), dtype=np.int64)
        if family == "full":
            partner = bitcore.random_partners(rng, n, size)
        else:
            table = np.stack([mt.partner() for mt in bitcore.reduced_matchings(n)])
            partner = table[rng.integers(0, n // 2, size)]
        r = P.draw(rng, size) if P.draw is not None else None
        msg = np.asarray(P.encode(x, r), dtype=np.int64)
        _check_message(P, msg)
        return int(np.count_nonzero(hm_wins(x, partner, P.decode(msg, partner, r))))

    return run_chunks(count, trials, seed, workers)


# -- serialization ----------------------------------------------------------------


def strategy_to_dict(game: Game, S: DeterministicStrategy) -> dict:
    A, B = S.tabulate(game)
    return {"name": S.name, "game": game.describe(), "alice": A.tolist(), "bob": B.tolist()}


def strategy_from_dict(game: Game, doc: dict) -> DeterministicStrategy:
    return DeterministicStrategy.from_tables(game, doc["alice"], doc["bob"], doc.get("name", "table"))
