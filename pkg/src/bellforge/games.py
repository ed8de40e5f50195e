"""Referee models and the Bell-functional formalism.

Every game speaks two dialects.  The *natural* form is what players see
(bit arrays, partner arrays for matchings, coset representatives) and is what
samplers emit and ``check`` judges.  The *index* form numbers inputs and
outputs ``0..n_x-1`` etc. and is what tensors (functionals, behaviors) use.
Games convert between the two with ``x_index``/``a_index``/``decode_a`` and
their Bob counterparts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import bitcore
from .bitcore import FULL_MATCHING_CAP, coset_rep, hadamard_subgroup, log2_exact, parity
from .errors import CapExceededError, InvalidOutputError, NotEnumerableError

KV_ENUM_CAP = 8
PROB_TOL = 1e-12


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray
    aux: np.ndarray


@dataclass(frozen=True)
class Enumeration:
    """Finite support of the referee: index-form inputs, aux, and probabilities."""

    x: np.ndarray
    y: np.ndarray
    aux: np.ndarray
    prob: np.ndarray


class Game:
    """Base referee.  Subclasses fill in the dialect conversions."""

    name: str = "game"
    proven_upper_bound: float | None = None
    n_x: int
    n_y: int
    k_a: int
    k_b: int

    def params(self) -> dict[str, Any]:
        return {}

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "params": self.params(),
            "dimensions": [self.n_x, self.n_y, self.k_a, self.k_b],
            "proven_upper_bound": self.proven_upper_bound,
        }

    # natural <-> index
    def alice_inputs(self) -> np.ndarray:
        raise NotImplementedError

    def bob_inputs(self) -> np.ndarray:
        raise NotImplementedError

    def x_index(self, x) -> np.ndarray:
        raise NotImplementedError

    def y_index(self, y) -> np.ndarray:
        raise NotImplementedError

    def a_index(self, x, a) -> np.ndarray:
        raise NotImplementedError

    def b_index(self, y, b) -> np.ndarray:
        raise NotImplementedError

    def decode_a(self, x, idx) -> np.ndarray:
        raise NotImplementedError

    def decode_b(self, y, idx) -> np.ndarray:
        raise NotImplementedError

    # referee
    def enumerate(self) -> Enumeration:
        raise NotEnumerableError(f"{self.name} has no exact enumerator")

    def accept(self, x_idx, y_idx, aux) -> np.ndarray:
        """Pr[win | x, y, aux] for every output pair, shape (N, k_a, k_b)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> Sample:
        raise NotImplementedError

    def check(self, x, y, aux, a, b) -> np.ndarray:
        """Win indicator for natural-form outputs; invalid outputs raise."""
        raise NotImplementedError

    @property
    def has_enumerator(self) -> bool:
        try:
            self._require_enumerable()
        except (NotEnumerableError, CapExceededError):
            return False
        return True

    def _require_enumerable(self) -> None:
        pass

    def input_distribution(self) -> np.ndarray:
        e = self.enumerate()
        pi = np.zeros((self.n_x, self.n_y))
        np.add.at(pi, (e.x, e.y), e.prob)
        return pi


# -- CHSH --------------------------------------------------------------------


class CHSHGame(Game):
    name = "chsh"
    proven_upper_bound = 0.75
    n_x = n_y = k_a = k_b = 2

    def alice_inputs(self):
        return np.arange(2)

    bob_inputs = alice_inputs

    def x_index(self, x):
        return _check_range(x, 2, "CHSH input")

    y_index = x_index

    def a_index(self, x, a):
        return _check_range(a, 2, "CHSH output")

    def b_index(self, y, b):
        return _check_range(b, 2, "CHSH output")

    def decode_a(self, x, idx):
        return np.asarray(idx, dtype=np.int64)

    decode_b = decode_a

    def enumerate(self):
        x, y = np.divmod(np.arange(4), 2)
        return Enumeration(x, y, np.zeros(4, dtype=np.int64), np.full(4, 0.25))

    def accept(self, x_idx, y_idx, aux):
        a, b = np.divmod(np.arange(4), 2)
        target = (np.asarray(x_idx) & np.asarray(y_idx))[:, None]
        return ((a ^ b)[None, :] == target).astype(float).reshape(-1, 2, 2)

    def sample(self, rng, size):
        x = rng.integers(0, 2, size)
        y = rng.integers(0, 2, size)
        return Sample(x, y, np.zeros(size, dtype=np.int64))

    def check(self, x, y, aux, a, b):
        a = self.a_index(x, a)
        b = self.b_index(y, b)
        return (a ^ b) == (np.asarray(x) & np.asarray(y))


def chsh_game() -> CHSHGame:
    return CHSHGame()


def _check_range(v, size: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    if np.any((v < 0) | (v >= size)):
        raise InvalidOutputError(f"{what} outside [0, {size})")
    return v


# -- non-local Hidden Matching -----------------------------------------------


class HMNLGame(Game):
    """Alice gets x in {0,1}^n, Bob a matching; win iff (a.(i^j)) ^ d = x_i ^ x_j.

    Natural forms: x is a uint8 bit array, a matching is a partner array
    (partner[i] = j), Alice outputs an integer a < n, Bob outputs rows
    ``(i, j, d)``.  Bob's output index is ``2 p + d`` with ``p`` the rank of
    the pair among the matching's pairs ordered by smaller endpoint.
    """

    name = "hm_nl"

    def __init__(self, n: int, family: str = "full", cap: int = FULL_MATCHING_CAP):
        self.n = n
        self.m = log2_exact(n)
        if n < 2:
            raise ValueError("n must be at least 2")
        if family not in ("full", "reduced"):
            raise ValueError(f"unknown matching family {family!r}")
        if family == "full" and n > cap:
            raise CapExceededError(f"full matching family capped at n={cap} (got {n})")
        self.family = family
        self.cap = cap
        self.k_a = self.k_b = n
        self._matchings = None

    def params(self):
        return {"n": self.n, "family": self.family}

    @property
    def matchings(self) -> list[bitcore.Matching]:
        if self._matchings is None:
            if self.family == "full":
                self._matchings = bitcore.full_matchings(self.n, cap=self.cap)
            else:
                self._matchings = bitcore.reduced_matchings(self.n)
        return self._matchings

    @property
    def n_x(self):
        return 1 << self.n

    @property
    def n_y(self):
        if self.family == "reduced":
            return self.n // 2
        return bitcore.double_factorial(self.n - 1)

    def _partners(self) -> np.ndarray:
        if not hasattr(self, "_partner_table"):
            self._partner_table = np.stack([mt.partner() for mt in self.matchings])
            self._partner_lookup = {tuple(p): k for k, p in enumerate(self._partner_table)}
        return self._partner_table

    def _require_enumerable(self):
        if self.n > bitcore.MAX_TABLE_BITS:
            raise NotEnumerableError(f"2^{self.n} Alice inputs is beyond the table cap")

    def alice_inputs(self):
        self._require_enumerable()
        return bitcore.ints_to_bits(np.arange(self.n_x, dtype=np.int64), self.n)

    def bob_inputs(self):
        return self._partners()

    def x_index(self, x):
        return bitcore.bits_to_ints(np.atleast_2d(x))

    def y_index(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=np.int64))
        if self.family == "reduced":
            idx = y[:, 0] - self.n // 2
            table = self._partners()
            if np.any((idx < 0) | (idx >= self.n_y)) or not np.array_equal(table[idx], y):
                raise InvalidOutputError("not a reduced-family matching")
            return idx
        self._partners()
        try:
            return np.array([self._partner_lookup[tuple(row)] for row in y], dtype=np.int64)
        except KeyError as exc:
            raise InvalidOutputError("not a perfect matching") from exc

    def a_index(self, x, a):
        return _check_range(a, self.n, "Alice output")

    def decode_a(self, x, idx):
        return np.asarray(idx, dtype=np.int64)

    @staticmethod
    def _pair_rank(partner: np.ndarray) -> np.ndarray:
        """rank[k] = position of the pair whose smaller endpoint is k."""
        is_min = partner > np.arange(partner.shape[-1])
        return np.cumsum(is_min, axis=-1) - is_min

    def _validate_bob(self, y, b):
        y = np.atleast_2d(np.asarray(y, dtype=np.int64))
        b = np.atleast_2d(np.asarray(b, dtype=np.int64))
        i, j, d = b[:, 0], b[:, 1], b[:, 2]
        if np.any((i < 0) | (i >= self.n) | (j < 0) | (j >= self.n)):
            raise InvalidOutputError("Bob's pair has an index outside [0, n)")
        if np.any((d != 0) & (d != 1)):
            raise InvalidOutputError("Bob's bit d must be 0 or 1")
        rows = np.arange(len(y))
        if np.any(y[rows, i] != j) or np.any(i == j):
            raise InvalidOutputError("Bob's pair is not in his matching")
        return y, i, j, d

    def b_index(self, y, b):
        y, i, j, d = self._validate_bob(y, b)
        rank = self._pair_rank(y)
        return 2 * rank[np.arange(len(y)), np.minimum(i, j)] + d

    def decode_b(self, y, idx):
        y = np.atleast_2d(np.asarray(y, dtype=np.int64))
        idx = np.asarray(idx, dtype=np.int64)
        p, d = np.divmod(idx, 2)
        mins = np.argsort(~(y > np.arange(self.n)), axis=1, kind="stable")[:, : self.n // 2]
        i = mins[np.arange(len(y)), p]
        j = y[np.arange(len(y)), i]
        return np.stack([i, j, d], axis=1)

    def enumerate(self):
        self._require_enumerable()
        nx, ny = self.n_x, self.n_y
        self._partners()
        x, y = np.divmod(np.arange(nx * ny, dtype=np.int64), ny)
        return Enumeration(x, y, np.zeros(nx * ny, dtype=np.int64), np.full(nx * ny, 1.0 / (nx * ny)))

    def accept(self, x_idx, y_idx, aux):
        partners = self._partners()[np.asarray(y_idx)]
        bits = bitcore.ints_to_bits(np.asarray(x_idx), self.n)
        half = self.n // 2
        rows = np.arange(len(partners))[:, None]
        mins = np.argsort(~(partners > np.arange(self.n)), axis=1, kind="stable")[:, :half]
        maxs = partners[rows, mins]
        target = bits[rows, mins] ^ bits[rows, maxs]  # (N, half)
        a = np.arange(self.n)
        dots = parity(a[None, :, None] & (mins ^ maxs)[:, None, :])  # (N, n_a, half)
        d = np.arange(2)
        win = (dots[..., None] ^ d) == target[:, None, :, None]  # (N, n_a, half, 2)
        return win.reshape(len(partners), self.n, self.n).astype(float)

    def sample(self, rng, size):
        x = rng.integers(0, 2, (size, self.n), dtype=np.uint8)
        if self.family == "full":
            y = bitcore.random_partners(rng, self.n, size)
        else:
            y = self._partners()[rng.integers(0, self.n_y, size)]
        return Sample(x, y, np.zeros(size, dtype=np.int64))

    def check(self, x, y, aux, a, b):
        a = self.a_index(x, a)
        y, i, j, d = self._validate_bob(y, b)
        x = np.atleast_2d(x)
        rows = np.arange(len(x))
        return (parity(a & (i ^ j)) ^ d) == (x[rows, i] ^ x[rows, j])


def hm_nl_game(n: int, family: str = "full", cap: int = FULL_MATCHING_CAP) -> HMNLGame:
    return HMNLGame(n, family, cap)


# -- Khot-Vishnoi ------------------------------------------------------------


class KVGame(Game):
    """Cosets of the Hadamard code with eta-biased noise; win iff a ^ b = z.

    The predicate is randomized: the hidden noise string z travels as aux.
    Natural forms are integer-encoded strings (coset representatives for
    inputs, coset members for outputs).  Output index t means rep ^ h_t.
    """

    name = "kv"

    def __init__(self, n: int, eta: float, enum_cap: int = KV_ENUM_CAP):
        self.n = n
        log2_exact(n)
        if n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 <= eta <= 0.5:
            raise ValueError(f"eta must lie in [0, 1/2], got {eta}")
        if n > 62:
            raise CapExceededError("KV strings are integer-encoded; n must be at most 62")
        self.eta = float(eta)
        self.enum_cap = enum_cap
        self.H = hadamard_subgroup(n)
        self.codewords = self.H.as_array()
        self.k_a = self.k_b = n
        self.proven_upper_bound = kv_bound(n, self.eta)

    def params(self):
        return {"n": self.n, "eta": self.eta}

    @property
    def n_x(self):
        return (1 << self.n) // self.n

    n_y = n_x

    def _reps(self):
        return bitcore.all_coset_reps(self.n)

    def alice_inputs(self):
        return self._reps().copy()

    bob_inputs = alice_inputs

    def x_index(self, x):
        x = np.asarray(x, dtype=np.int64)
        reps = self._reps()
        idx = np.searchsorted(reps, x)
        if np.any(idx >= len(reps)) or np.any(reps[np.minimum(idx, len(reps) - 1)] != x):
            raise InvalidOutputError("not a canonical coset representative")
        return idx

    y_index = x_index

    def a_index(self, x, a):
        x = np.asarray(x, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        if np.any((a < 0) | (a >= (1 << self.n))) or np.any(coset_rep(a, self.n) != x):
            raise InvalidOutputError("output is not an element of the player's coset")
        return self.H.codeword_index(a ^ x)

    b_index = a_index

    def decode_a(self, x, idx):
        return np.asarray(x, dtype=np.int64) ^ self.codewords[np.asarray(idx)]

    decode_b = decode_a

    def _require_enumerable(self):
        if self.n > self.enum_cap:
            raise NotEnumerableError(f"(u, z) enumeration capped at n={self.enum_cap}")

    def enumerate(self):
        self._require_enumerable()
        size = 1 << self.n
        u, z = np.divmod(np.arange(size * size, dtype=np.int64), size)
        prob = bitcore.binomial_weights(self.n, self.eta)[z] / size
        return Enumeration(
            self.x_index(coset_rep(u, self.n)),
            self.y_index(coset_rep(u ^ z, self.n)),
            z,
            prob,
        )

    def accept(self, x_idx, y_idx, aux):
        reps = self._reps()
        a = reps[np.asarray(x_idx)][:, None] ^ self.codewords[None, :]
        b = reps[np.asarray(y_idx)][:, None] ^ self.codewords[None, :]
        return ((a[:, :, None] ^ b[:, None, :]) == np.asarray(aux)[:, None, None]).astype(float)

    def sample(self, rng, size):
        u = rng.integers(0, 1 << self.n, size, dtype=np.int64)
        zbits = (rng.random((size, self.n)) < self.eta).astype(np.int64)
        z = bitcore.bits_to_ints(zbits)
        return Sample(coset_rep(u, self.n), coset_rep(u ^ z, self.n), z)

    def check(self, x, y, aux, a, b):
        self.a_index(x, a)
        self.b_index(y, b)
        return (np.asarray(a) ^ np.asarray(b)) == np.asarray(aux)


def kv_bound(n: int, eta: float) -> float:
    return float(n) ** (-eta / (1.0 - eta))


def kv_game(n: int, eta: float) -> KVGame:
    return KVGame(n, eta)


# -- Bell functionals ---------------------------------------------------------


@dataclass(frozen=True)
class BellFunctional:
    """Real tensor M[x, y, a, b]; ``input_distribution`` is set when game-derived."""

    entries: np.ndarray
    input_distribution: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 4:
            raise ValueError(f"functional must be 4-dimensional, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("functional entries must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.entries.shape

    def to_json(self) -> str:
        doc = {
            "dimensions": list(self.shape),
            "entries": self.entries.ravel().tolist(),
            "input_distribution": None
            if self.input_distribution is None
            else np.asarray(self.input_distribution).ravel().tolist(),
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BellFunctional":
        doc = json.loads(text)
        dims = tuple(doc["dimensions"])
        pi = doc.get("input_distribution")
        return cls(
            np.array(doc["entries"], dtype=float).reshape(dims),
            None if pi is None else np.array(pi, dtype=float).reshape(dims[:2]),
            doc.get("metadata", {}),
        )


@dataclass(frozen=True)
class StrategyBehavior:
    """Conditional distribution P[x, y, a, b] = P(ab|xy)."""

    table: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.table, dtype=float)
        if P.ndim != 4:
            raise ValueError("behavior must be 4-dimensional")
        if np.any(P < -PROB_TOL):
            raise ValueError("behavior has negative probabilities")
        if not np.allclose(P.sum(axis=(2, 3)), 1.0, atol=PROB_TOL, rtol=0):
            raise ValueError("behavior rows do not sum to 1")
        object.__setattr__(self, "table", P)

    @classmethod
    def deterministic(cls, alice, bob, k_a: int, k_b: int) -> "StrategyBehavior":
        alice, bob = np.asarray(alice), np.asarray(bob)
        P = np.zeros((len(alice), len(bob), k_a, k_b))
        P[:, :, :, :] = 0
        xs, ys = np.meshgrid(np.arange(len(alice)), np.arange(len(bob)), indexing="ij")
        P[xs, ys, alice[xs], bob[ys]] = 1.0
        return cls(P)

    @classmethod
    def uniform(cls, n_x, n_y, k_a, k_b) -> "StrategyBehavior":
        return cls(np.full((n_x, n_y, k_a, k_b), 1.0 / (k_a * k_b)))


def functional_value(M: BellFunctional, P: StrategyBehavior) -> float:
    if M.shape != P.table.shape:
        raise ValueError(f"dimension mismatch: functional {M.shape} vs behavior {P.table.shape}")
    return float(np.sum(M.entries * P.table))


def game_to_functional(G: Game) -> BellFunctional:
    """M[x,y,a,b] = pi(x,y) * Pr_aux[(a,b) accepted | x,y]."""
    e = G.enumerate()
    M = np.zeros((G.n_x, G.n_y, G.k_a, G.k_b))
    chunk = max(1, 2**20 // (G.k_a * G.k_b))
    for s in range(0, len(e.prob), chunk):
        sl = slice(s, s + chunk)
        acc = G.accept(e.x[sl], e.y[sl], e.aux[sl])
        np.add.at(M, (e.x[sl], e.y[sl]), e.prob[sl, None, None] * acc)
    pi = np.zeros((G.n_x, G.n_y))
    np.add.at(pi, (e.x, e.y), e.prob)
    return BellFunctional(M, pi, {"game": G.name, **G.params()})


def shift_functional(M: BellFunctional) -> BellFunctional:
    """M' = M - pi(x,y)/2, so <M', P> = <M, P> - 1/2 for every behavior."""
    if M.input_distribution is None:
        raise ValueError("shift requires the functional's input distribution")
    pi = np.asarray(M.input_distribution)
    return BellFunctional(
        M.entries - 0.5 * pi[:, :, None, None],
        pi,
        {**M.metadata, "shifted": True},
    )


@dataclass(frozen=True)
class AffineMap:
    """win_probability = offset + scale * <M, P>."""

    offset: float
    scale: float

    def __call__(self, functional_value: float) -> float:
        return self.offset + self.scale * functional_value

    def invert(self, win_probability: float) -> float:
        return (win_probability - self.offset) / self.scale


class FunctionalGame(Game):
    """Game realising an arbitrary functional with uniform inputs and a randomized predicate.

    Output pair (a, b) on (x, y) is accepted with probability q[x,y,a,b]; aux is
    the referee's uniform coin, compared against q when sampling.
    """

    name = "functional"

    def __init__(self, accept_prob: np.ndarray):
        self.q = np.asarray(accept_prob, dtype=float)
        self.n_x, self.n_y, self.k_a, self.k_b = self.q.shape

    def params(self):
        return {"dimensions": list(self.q.shape)}

    def alice_inputs(self):
        return np.arange(self.n_x)

    def bob_inputs(self):
        return np.arange(self.n_y)

    def x_index(self, x):
        return _check_range(x, self.n_x, "input")

    def y_index(self, y):
        return _check_range(y, self.n_y, "input")

    def a_index(self, x, a):
        return _check_range(a, self.k_a, "Alice output")

    def b_index(self, y, b):
        return _check_range(b, self.k_b, "Bob output")

    def decode_a(self, x, idx):
        return np.asarray(idx, dtype=np.int64)

    decode_b = decode_a

    def enumerate(self):
        x, y = np.divmod(np.arange(self.n_x * self.n_y), self.n_y)
        p = np.full(len(x), 1.0 / (self.n_x * self.n_y))
        return Enumeration(x, y, np.full(len(x), -1), p)

    def accept(self, x_idx, y_idx, aux):
        return self.q[np.asarray(x_idx), np.asarray(y_idx)]

    def sample(self, rng, size):
        return Sample(
            rng.integers(0, self.n_x, size), rng.integers(0, self.n_y, size), rng.random(size)
        )

    def check(self, x, y, aux, a, b):
        a, b = self.a_index(x, a), self.b_index(y, b)
        return np.asarray(aux) < self.q[np.asarray(x), np.asarray(y), a, b]


def functional_to_game(M: BellFunctional) -> tuple[FunctionalGame, AffineMap]:
    """Scale M into acceptance probabilities 1/2 + M / (2 max|M|).

    The map is linear around 1/2, so deviations of the winning probability
    from 1/2 are a fixed positive multiple of <M, P>.
    """
    E = M.entries
    if np.ptp(E) == 0:
        raise ValueError("constant functional: scaling is degenerate")
    s = 1.0 / (2.0 * np.max(np.abs(E)))
    n_x, n_y = E.shape[:2]
    game = FunctionalGame(0.5 + s * E)
    return game, AffineMap(0.5, s / (n_x * n_y))
