"""Classical game values, proven bounds, and Fourier-analytic diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import bitcore
from .errors import BoundViolationError
from .games import BellFunctional, Game, game_to_functional, kv_bound
from .strategies import DeterministicStrategy, OneWayProtocol, chunk_rng, hm_wins

BRUTE_FORCE_CAP = 10**7
BOUND_TOL = 1e-9
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BruteForceResult:
    value: float
    witness: DeterministicStrategy
    alice_table: np.ndarray
    bob_table: np.ndarray
    enumerated_count: int
    exact: bool
    method: str = "brute-force"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "exact": self.exact,
            "enumerated_count": self.enumerated_count,
            "method": self.method,
            "witness": {"alice": self.alice_table.tolist(), "bob": self.bob_table.tolist()},
        }


def table_value(M: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    xs, ys = np.meshgrid(np.arange(len(A)), np.arange(len(B)), indexing="ij")
    return float(M[xs, ys, A[xs], B[ys]].sum())


def _tables_from_ranks(ranks: np.ndarray, length: int, base: int) -> np.ndarray:
    powers = base ** np.arange(length - 1, -1, -1, dtype=np.int64)
    return (ranks[:, None] // powers[None, :]) % base


def _enumerate_bob(M: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Enumerate Bob's tables in lexicographic order; Alice best-responds per input."""
    n_x, n_y, k_a, k_b = M.shape
    total = k_b**n_y
    Mt = np.ascontiguousarray(M.transpose(1, 3, 0, 2))  # (y, b, x, a)
    batch = max(1, min(total, 2**22 // max(1, n_x * k_a)))
    best, best_A, best_B = -np.inf, None, None
    for start in range(0, total, batch):
        ranks = np.arange(start, min(total, start + batch), dtype=np.int64)
        T = _tables_from_ranks(ranks, n_y, k_b)
        C = np.zeros((len(ranks), n_x, k_a))
        for y in range(n_y):
            C += Mt[y, T[:, y]]
        vals = C.max(axis=2).sum(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best + TIE_TOL:
            best, best_B = float(vals[k]), T[k]
            best_A = np.argmax(C[k], axis=1)
    return best, best_A, best_B, total


def _enumerate_smaller(M: np.ndarray, count_a: int, count_b: int):
    if count_b <= count_a:
        return _enumerate_bob(M)
    value, B, A, total = _enumerate_bob(M.transpose(1, 0, 3, 2))
    return value, A, B, total


def brute_force_classical_value(G: Game, cap: int = BRUTE_FORCE_CAP, functional: BellFunctional | None = None,
                                seed: int = 0) -> BruteForceResult:
    """Exact classical value: enumerate the smaller side, best-respond on the other.

    The value is linear in each player's per-input choice, so for a fixed
    table of one player the other's optimum decomposes input by input.
    Past ``cap`` this falls back to local search and reports exact=False.
    For functionals with negative entries the reported value is max |<M, P>|.
    """
    M = (functional or game_to_functional(G)).entries
    n_x, n_y, k_a, k_b = M.shape
    count_a, count_b = k_a**n_x, k_b**n_y
    if min(count_a, count_b) > cap:
        res = local_search_classical(G, seed=seed, restarts=20, functional=functional)
        return BruteForceResult(res.value, res.witness, res.alice_table, res.bob_table,
                                res.enumerated_count, False, "local-search")
    value, A, B, total = _enumerate_smaller(M, count_a, count_b)
    if np.any(M < 0):
        # general functionals: omega(M) is the largest |<M, P>|
        neg, nA, nB, more = _enumerate_smaller(-M, count_a, count_b)
        total += more
        if neg > value + TIE_TOL:
            value, A, B = neg, nA, nB
    witness = DeterministicStrategy.from_tables(G, A, B, "brute-force-witness")
    return BruteForceResult(value, witness, A, B, total, True)


def local_search_classical(G: Game, seed: int, restarts: int = 10, functional: BellFunctional | None = None,
                           bound: float | None = None) -> BruteForceResult:
    """Steepest-ascent hill climbing over single-entry changes of either table."""
    M = (functional or game_to_functional(G)).entries
    n_x, n_y, k_a, k_b = M.shape
    bound = G.proven_upper_bound if bound is None else bound
    xs, ys = np.arange(n_x), np.arange(n_y)
    best = (-np.inf, None, None)
    steps = 0
    for r in range(restarts):
        rng = chunk_rng(seed, r)
        A = rng.integers(0, k_a, n_x)
        B = rng.integers(0, k_b, n_y)
        while True:
            CA = M[xs[:, None], ys[None, :], :, B[None, :]].sum(axis=1)
            CB = M[xs[:, None], ys[None, :], A[:, None], :].sum(axis=0)
            gain = np.concatenate([
                (CA - CA[xs, A][:, None]).ravel(),
                (CB - CB[ys, B][:, None]).ravel(),
            ])
            k = int(np.argmax(gain))
            if gain[k] <= TIE_TOL:
                break
            steps += 1
            if k < n_x * k_a:
                x, a = divmod(k, k_a)
                A[x] = a
            else:
                y, b = divmod(k - n_x * k_a, k_b)
                B[y] = b
        value = table_value(M, A, B)
        if value > best[0] + TIE_TOL:
            best = (value, A.copy(), B.copy())
    value, A, B = best
    if bound is not None and value > bound + BOUND_TOL:
        raise BoundViolationError(f"local search found {value} above proven bound {bound}")
    witness = DeterministicStrategy.from_tables(G, A, B, "local-search-witness")
    return BruteForceResult(value, witness, A, B, steps, False, "local-search")


def kv_classical_bound(n: int, eta: float) -> float:
    """n^{-eta/(1-eta)}: no classical strategy wins the KV game more often."""
    bitcore.log2_exact(n)
    if not 0.0 <= eta <= 0.5:
        raise ValueError(f"eta must lie in [0, 1/2], got {eta}")
    return kv_bound(n, eta)


@dataclass(frozen=True)
class HypercontractivityCheck:
    lhs: float
    rhs: float
    holds: bool


def hypercontractivity_check(F, rho: float) -> HypercontractivityCheck:
    """Compare ||T_rho F||_2 (via FWHT) with ||F||_{1 + rho^2} (direct)."""
    F = np.asarray(F, dtype=float)
    if len(F) > 1 << 16:
        raise ValueError("hypercontractivity check is limited to m <= 16")
    spec = bitcore.fwht(F)
    lhs = math.sqrt(float(np.sum(spec.coefficients**2 * rho ** (2 * spec.levels()))))
    p = 1.0 + rho**2
    rhs = float(np.mean(np.abs(F) ** p) ** (1.0 / p))
    return HypercontractivityCheck(lhs, rhs, lhs <= rhs + 1e-9)


@dataclass
class MessageClass:
    message: int
    p: float
    beta: np.ndarray
    lhs: float
    rhs_core: float
    ratio: float | None
    q: np.ndarray | None = None
    eps: float | None = None
    cs_middle: float | None = None
    cs_right: float | None = None

    def to_dict(self) -> dict:
        d = {"message": self.message, "p": self.p, "lhs": self.lhs, "rhs_core": self.rhs_core, "ratio": self.ratio}
        if self.eps is not None:
            d.update(eps=self.eps, cs_middle=self.cs_middle, cs_right=self.cs_right)
        return d


@dataclass
class KKLDiagnostic:
    n: int
    classes: list[MessageClass] = field(default_factory=list)

    @property
    def total_mass(self) -> float:
        return float(sum(c.p for c in self.classes))

    @property
    def eps(self) -> float | None:
        if any(c.eps is None for c in self.classes):
            return None
        return float(sum(c.p * c.eps for c in self.classes))

    def to_dict(self) -> dict:
        return {"n": self.n, "total_mass": self.total_mass, "eps": self.eps,
                "classes": [c.to_dict() for c in self.classes]}


def kkl_diagnostic(partition: Mapping[int, np.ndarray] | np.ndarray, n: int,
                   protocol: OneWayProtocol | None = None, family: str = "full") -> KKLDiagnostic:
    """Per-message correlation sums against (ln 1/p_m)^2, reported as ratios.

    ``partition`` is either a mapping message -> integer-encoded inputs or an
    array of messages indexed by input.  With a deterministic protocol, Bob's
    output distribution q_m and advantage eps_m are filled in too.
    """
    size = 1 << n
    if isinstance(partition, Mapping):
        labels = np.full(size, -1, dtype=np.int64)
        for m, xs in partition.items():
            xs = np.asarray(xs, dtype=np.int64)
            if np.any(labels[xs] >= 0):
                raise ValueError("partition classes overlap")
            labels[xs] = m
    else:
        labels = np.asarray(partition, dtype=np.int64)
    if labels.shape != (size,) or np.any(labels < 0):
        raise ValueError("partition does not cover {0,1}^n")
    bits = bitcore.ints_to_bits(np.arange(size), n).astype(np.int64)
    signs = 1 - 2 * bits
    off = ~np.eye(n, dtype=bool)
    partners = None
    if protocol is not None:
        matchings = bitcore.full_matchings(n) if family == "full" else bitcore.reduced_matchings(n)
        partners = np.stack([mt.partner() for mt in matchings])
    diag = KKLDiagnostic(n)
    for m in np.unique(labels):
        members = np.flatnonzero(labels == m)
        p = len(members) / size
        s = signs[members]
        beta = s.T @ s / len(members)
        lhs = float(np.sum(beta[off] ** 2))
        rhs = math.log(1.0 / p) ** 2
        cls = MessageClass(int(m), p, beta, lhs, rhs, lhs / rhs if rhs > 0 else None)
        if partners is not None:
            q = np.zeros((n, n))
            wins = 0
            msg = np.full(len(members), m, dtype=np.int64)
            for partner in partners:
                Y = np.broadcast_to(partner, (len(members), n))
                out = np.asarray(protocol.decode(msg[:1], partner[None, :], None))[0]
                q[out[0], out[1]] += 1.0 / len(partners)
                wins += int(np.count_nonzero(hm_wins(bits[members], Y, protocol.decode(msg, Y, None))))
            cls.q = q
            cls.eps = wins / (len(members) * len(partners)) - 0.5
            cls.cs_middle = float(np.sum(q * np.abs(beta) * off))
            cls.cs_right = float(math.sqrt(np.sum(q**2)) * math.sqrt(lhs))
        diag.classes.append(cls)
    return diag


@dataclass(frozen=True)
class ViolationReport:
    game: dict
    classical: float
    classical_kind: str  # "value" or "bound"
    classical_method: str
    quantum: float
    quantum_method: str
    mode: str
    ratio: float
    shifted_ratio: float | None

    def to_dict(self) -> dict:
        return {
            "game": self.game,
            "classical": {"value": self.classical, "kind": self.classical_kind, "method": self.classical_method},
            "quantum": {"value": self.quantum, "method": self.quantum_method},
            "mode": self.mode,
            "ratio": self.ratio,
            "shifted_ratio": self.shifted_ratio,
            "numerator": self.quantum if self.mode == "ratio" else abs(self.quantum - 0.5),
            "denominator": self.classical if self.mode == "ratio" else abs(self.classical - 0.5),
        }


def violation_report(game: Game | dict, classical: BruteForceResult | float, quantum_value: float,
                     mode: str = "ratio", quantum_method: str = "exact-enum") -> ViolationReport:
    """Quantum over classical, either as plain values or as deviations from 1/2."""
    if isinstance(classical, BruteForceResult):
        c, kind, method = classical.value, "value", classical.method
    else:
        c, kind, method = float(classical), "bound", "bound-formula"
    desc = game.describe() if isinstance(game, Game) else dict(game)
    dev_num, dev_den = abs(quantum_value - 0.5), abs(c - 0.5)
    shifted = dev_num / dev_den if dev_den > 0 else None
    if mode == "ratio":
        if c == 0:
            raise ZeroDivisionError("classical value is zero")
        ratio = quantum_value / c
    elif mode == "deviation":
        if dev_den == 0:
            raise ZeroDivisionError("classical deviation from 1/2 is zero")
        ratio = dev_num / dev_den
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ViolationReport(desc, c, kind, method, float(quantum_value), quantum_method, mode, ratio, shifted)
