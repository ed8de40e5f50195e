"""Bit-level combinatorics on the Boolean cube.

Bitstrings of length ``m`` are stored as Python/NumPy integers whose most
significant bit is position 0, so integer order is lexicographic order of the
0/1 string.  Game indices ``i in [n]`` are 0-based and correspond to the
``log2(n)``-bit big-endian binary expansion of ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import CapExceededError, LengthMismatchError

MAX_TABLE_BITS = 24
FULL_MATCHING_CAP = 8


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n}")
    return int(n).bit_length() - 1


def popcount(a):
    """Hamming weight of an integer or integer array."""
    if isinstance(a, np.ndarray):
        return np.bitwise_count(a).astype(np.int64)
    return int(a).bit_count()


def parity(a):
    return popcount(a) & 1


def ints_to_bits(values, m: int) -> np.ndarray:
    """Expand integers into an ``(..., m)`` uint8 array, position 0 first."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_ints(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    m = bits.shape[-1]
    weights = np.int64(1) << np.arange(m - 1, -1, -1, dtype=np.int64)
    return bits @ weights


@dataclass(frozen=True, order=True)
class BitString:
    """Fixed-length element of {0,1}^m."""

    length: int
    value: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if not 0 <= self.value < (1 << self.length) and not (self.length == 0 and self.value == 0):
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        if any(c not in "01" for c in s):
            raise ValueError(f"not a bitstring: {s!r}")
        return cls(len(s), int(s, 2) if s else 0)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        bits = [int(b) for b in bits]
        return cls.from_str("".join(str(b) for b in bits))

    @classmethod
    def zeros(cls, m: int) -> "BitString":
        return cls(m, 0)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not -self.length <= i < self.length:
            raise IndexError(i)
        i %= self.length
        return (self.value >> (self.length - 1 - i)) & 1

    def bits(self) -> tuple[int, ...]:
        return tuple(self[i] for i in range(self.length))

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)


def _check_lengths(a: BitString, b: BitString) -> None:
    if a.length != b.length:
        raise LengthMismatchError(f"length mismatch: {a.length} vs {b.length}")


def xor(a: BitString, b: BitString) -> BitString:
    _check_lengths(a, b)
    return BitString(a.length, a.value ^ b.value)


def dot(a: BitString, b: BitString) -> int:
    """Inner product mod 2."""
    _check_lengths(a, b)
    return parity(a.value & b.value)


def weight(a: BitString) -> int:
    return popcount(a.value)


# -- Hadamard code ----------------------------------------------------------


@lru_cache(maxsize=None)
def _codeword_ints(n: int) -> tuple[int, ...]:
    idx = np.arange(n, dtype=np.int64)
    words = []
    for k in range(n):
        bits = parity(idx & k)
        words.append(int(bits_to_ints(bits)))
    return tuple(words)


@dataclass(frozen=True)
class HadamardSubgroup:
    """The n Hadamard codewords h_k = (k . i)_{i in [n]}, ordered by k."""

    n: int

    def __post_init__(self):
        log2_exact(self.n)

    @property
    def codewords(self) -> tuple[BitString, ...]:
        return tuple(BitString(self.n, w) for w in _codeword_ints(self.n))

    def as_array(self) -> np.ndarray:
        return np.array(_codeword_ints(self.n), dtype=np.int64)

    def __len__(self) -> int:
        return self.n

    def __contains__(self, u: BitString) -> bool:
        return u.length == self.n and u.value in _codeword_ints(self.n)

    def codeword_index(self, word):
        """Recover k from h_k (bit r of k sits at position 2^r of h_k)."""
        word = np.asarray(word, dtype=np.int64)
        m = log2_exact(self.n)
        k = np.zeros_like(word)
        for r in range(m):
            k |= ((word >> (self.n - 1 - (1 << r))) & 1) << r
        return k if k.ndim else int(k)


def hadamard_subgroup(n: int) -> HadamardSubgroup:
    return HadamardSubgroup(n)


@dataclass(frozen=True)
class Coset:
    """u + H, identified by its lexicographically smallest member."""

    representative: BitString
    subgroup: HadamardSubgroup

    def elements(self) -> tuple[BitString, ...]:
        return tuple(sorted(self.representative ^ h for h in self.subgroup.codewords))

    def __contains__(self, u: BitString) -> bool:
        return coset_of(u, self.subgroup) == self

    def __len__(self) -> int:
        return self.subgroup.n


def coset_of(u: BitString, H: HadamardSubgroup) -> Coset:
    if u.length != H.n:
        raise LengthMismatchError(f"string of length {u.length} for subgroup of length {H.n}")
    return Coset(BitString(H.n, int(coset_rep(u.value, H.n))), H)


def coset_rep(u, n: int):
    """Canonical representatives for integer-encoded strings (vectorized)."""
    words = np.array(_codeword_ints(n), dtype=np.int64)
    u = np.asarray(u, dtype=np.int64)
    reps = (u[..., None] ^ words).min(axis=-1)
    return reps if reps.ndim else int(reps)


@lru_cache(maxsize=None)
def _coset_reps_cached(n: int) -> np.ndarray:
    if n > MAX_TABLE_BITS:
        raise CapExceededError(f"2^{n} strings exceeds table cap 2^{MAX_TABLE_BITS}")
    reps = np.unique(coset_rep(np.arange(1 << n, dtype=np.int64), n))
    reps.setflags(write=False)
    return reps


def all_coset_reps(n: int) -> np.ndarray:
    """Sorted canonical representatives of all 2^n / n cosets of H."""
    return _coset_reps_cached(n)


# -- matchings --------------------------------------------------------------


@dataclass(frozen=True)
class Matching:
    """A perfect matching on {0,...,n-1}; pairs stored sorted with i < j."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple(sorted((min(p), max(p)) for p in self.pairs))
        seen = [i for p in pairs for i in p]
        n = len(seen)
        if any(i == j for i, j in pairs) or sorted(seen) != list(range(n)):
            raise ValueError(f"pairs do not partition [0, {n}): {self.pairs}")
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return 2 * len(self.pairs)

    def partner(self) -> np.ndarray:
        p = np.empty(self.n, dtype=np.int64)
        for i, j in self.pairs:
            p[i], p[j] = j, i
        return p

    @classmethod
    def from_partner(cls, partner: Sequence[int]) -> "Matching":
        return cls(tuple((i, int(j)) for i, j in enumerate(partner) if i < j))

    def __contains__(self, pair) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self.pairs


def _all_pairings(items: tuple[int, ...]):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for k, other in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for tail in _all_pairings(remaining):
            yield ((first, other),) + tail


def full_matchings(n: int, cap: int = FULL_MATCHING_CAP) -> list[Matching]:
    """All (n-1)!! perfect matchings of [n], in a fixed recursive order."""
    if n % 2 or n < 2:
        raise ValueError(f"n must be even and positive, got {n}")
    if n > cap:
        raise CapExceededError(f"full matching enumeration capped at n={cap} (got {n})")
    return [Matching(p) for p in _all_pairings(tuple(range(n)))]


def reduced_matchings(n: int) -> list[Matching]:
    """Matchings M_k pairing i with n/2 + ((i + k) mod n/2), 0-based."""
    if n % 2 or n < 2:
        raise ValueError(f"n must be even and positive, got {n}")
    half = n // 2
    return [Matching(tuple((i, half + (i + k) % half) for i in range(half))) for k in range(half)]


def random_partners(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Uniformly random perfect matchings as partner arrays of shape (size, n)."""
    perm = np.argsort(rng.random((size, n)), axis=1)
    partner = np.empty_like(perm)
    rows = np.arange(size)[:, None]
    partner[rows, perm[:, 0::2]] = perm[:, 1::2]
    partner[rows, perm[:, 1::2]] = perm[:, 0::2]
    return partner


# -- Fourier analysis --------------------------------------------------------


@dataclass(frozen=True)
class FourierSpectrum:
    """Coefficients F^(S) indexed by the integer encoding of S."""

    coefficients: np.ndarray

    @property
    def m(self) -> int:
        return log2_exact(len(self.coefficients))

    def __getitem__(self, S) -> float:
        if isinstance(S, BitString):
            S = S.value
        return float(self.coefficients[S])

    def levels(self) -> np.ndarray:
        """|S| for every index."""
        return popcount(np.arange(len(self.coefficients), dtype=np.int64))

    def inverse(self) -> np.ndarray:
        return _butterfly(self.coefficients)


def _butterfly(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    size = len(out)
    h = 1
    while h < size:
        view = out.reshape(-1, 2, h)
        top = view[:, 0, :].copy()
        view[:, 0, :] += view[:, 1, :]
        view[:, 1, :] = top - view[:, 1, :]
        h *= 2
    return out


def _as_table(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim != 1 or not is_power_of_two(len(F)):
        raise ValueError(f"table size must be a power of two, got shape {F.shape}")
    if len(F) > (1 << MAX_TABLE_BITS):
        raise CapExceededError(f"table size exceeds 2^{MAX_TABLE_BITS}")
    return F


def fwht(F) -> FourierSpectrum:
    """F^(S) = E_u[F(u) (-1)^{S.u}] for a dense table over {0,1}^m."""
    F = _as_table(F)
    return FourierSpectrum(_butterfly(F) / len(F))


def noise_operator(F, rho: float) -> np.ndarray:
    """T_rho F, scaling level-k Fourier weight by rho^k."""
    spec = fwht(F)
    return _butterfly(spec.coefficients * float(rho) ** spec.levels())


def noisy_correlation(F, G, eta: float) -> float:
    """E_{u,z}[F(u) G(u xor z)] with z eta-biased, via the Fourier diagonal form."""
    F, G = _as_table(F), _as_table(G)
    if len(F) != len(G):
        raise LengthMismatchError(f"table sizes differ: {len(F)} vs {len(G)}")
    if not 0.0 <= eta <= 0.5:
        raise ValueError(f"eta must lie in [0, 1/2], got {eta}")
    fs, gs = fwht(F), fwht(G)
    rho = 1.0 - 2.0 * eta
    return float(np.sum(fs.coefficients * gs.coefficients * rho ** fs.levels()))


def binomial_weights(n: int, eta: float) -> np.ndarray:
    """Pr[z] for every z in {0,1}^n under the eta-biased product measure."""
    w = popcount(np.arange(1 << n, dtype=np.int64))
    return eta**w * (1.0 - eta) ** (n - w)


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1
