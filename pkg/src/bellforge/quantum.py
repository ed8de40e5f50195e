"""Dense state-vector simulation of two-party projective strategies.

A bipartite pure state on C^d x C^d is held as a d x d amplitude matrix
``psi[k, l]`` (Alice index k, Bob index l).  A strategy assigns each player,
per input, an orthonormal basis whose rows are labeled by output index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bitcore
from .bitcore import log2_exact, parity
from .errors import CapExceededError, InvalidOutputError, NonOrthonormalBasisError
from .games import Game, HMNLGame, KVGame, StrategyBehavior, functional_value, game_to_functional

MAX_DIM = 64
ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != math.prod(self.dims):
            raise ValueError("amplitude count does not match dims")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "amplitudes", amps)

    def matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)


def maximally_entangled_state(d: int) -> StateVector:
    if d > MAX_DIM:
        raise CapExceededError(f"local dimension {d} exceeds cap {MAX_DIM}")
    return StateVector(np.eye(d).ravel() / math.sqrt(d), (d, d))


def check_orthonormal(bases: np.ndarray) -> np.ndarray:
    """Validate a stack of bases (..., k, d) with basis vectors as rows."""
    bases = np.asarray(bases)
    gram = bases @ np.conj(np.swapaxes(bases, -1, -2))
    if bases.shape[-2] != bases.shape[-1] or np.max(np.abs(gram - np.eye(bases.shape[-1]))) > ORTHO_TOL:
        raise NonOrthonormalBasisError("measurement basis is not orthonormal")
    return bases


@dataclass(frozen=True)
class ProjectiveStrategy:
    """Per-input orthonormal bases for each player on a shared state.

    ``alice_basis(x)`` maps a batch of natural-form inputs to an array of
    shape (N, k_a, d); ``bob_basis`` likewise.
    """

    alice_basis: Callable[[np.ndarray], np.ndarray]
    bob_basis: Callable[[np.ndarray], np.ndarray]
    state: StateVector
    name: str = "projective"

    @property
    def dim(self) -> int:
        return self.state.dims[0]

    def bases(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return check_orthonormal(self.alice_basis(x)), check_orthonormal(self.bob_basis(y))

    def play(self, G: Game, x, y, rng: np.random.Generator):
        P = joint_outcome_distribution(self, x, y)
        N, ka, kb = P.shape
        flat = P.reshape(N, -1).cumsum(axis=1)
        r = rng.random(N)[:, None] * flat[:, -1:]
        idx = np.minimum((flat <= r).sum(axis=1), ka * kb - 1)
        a_idx, b_idx = np.divmod(idx, kb)
        return G.decode_a(x, a_idx), G.decode_b(y, b_idx)


def joint_outcome_distribution(S: ProjectiveStrategy, x, y) -> np.ndarray:
    """Pr(a, b) = |<alpha_a (x) beta_b | psi>|^2 for each input pair in the batch."""
    A, B = S.bases(x, y)
    amp = np.conj(A) @ S.state.matrix() @ np.conj(np.swapaxes(B, -1, -2))  # (N, a, b)
    P = np.abs(amp) ** 2
    if np.max(np.abs(P.sum(axis=(1, 2)) - 1.0)) > 1e-9:
        raise NonOrthonormalBasisError("outcome probabilities do not sum to 1")
    return P


def max_entangled_shortcut(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pr(a, b) = <alpha_a, beta_b>^2 / d for real bases on the maximally entangled state."""
    d = A.shape[-1]
    return np.einsum("nak,nbk->nab", A, B) ** 2 / d


def behavior(G: Game, S: ProjectiveStrategy) -> StrategyBehavior:
    X, Y = G.alice_inputs(), G.bob_inputs()
    nx, ny = len(X), len(Y)
    xi, yi = np.divmod(np.arange(nx * ny), ny)
    P = joint_outcome_distribution(S, X[xi], Y[yi])
    return StrategyBehavior(P.reshape(nx, ny, P.shape[1], P.shape[2]))


def quantum_value_exact(G: Game, S: ProjectiveStrategy) -> float:
    return functional_value(game_to_functional(G), behavior(G, S))


# -- CHSH ---------------------------------------------------------------------

CHSH_ALICE_ANGLES = (0.0, math.pi / 4)
CHSH_BOB_ANGLES = (math.pi / 8, -math.pi / 8)


def rotated_basis(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def chsh_quantum_strategy() -> ProjectiveStrategy:
    alice = np.stack([rotated_basis(t) for t in CHSH_ALICE_ANGLES])
    bob = np.stack([rotated_basis(t) for t in CHSH_BOB_ANGLES])
    for b in (alice, bob):
        check_orthonormal(b)
    return ProjectiveStrategy(
        lambda x: alice[np.asarray(x)],
        lambda y: bob[np.asarray(y)],
        maximally_entangled_state(2),
        "chsh-quantum",
    )


# -- Hidden Matching: one-way quantum protocol ------------------------------------


def _pair_basis(partner: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows (e_i + (-1)^v e_j)/sqrt2 for each pair, ordered (pair rank, v)."""
    partner = np.atleast_2d(np.asarray(partner, dtype=np.int64))
    N, n = partner.shape
    mins = np.argsort(~(partner > np.arange(n)), axis=1, kind="stable")[:, : n // 2]
    maxs = np.take_along_axis(partner, mins, axis=1)
    basis = np.zeros((N, n // 2, 2, n))
    rows = np.arange(N)[:, None]
    pidx = np.arange(n // 2)[None, :]
    basis[rows, pidx, 0, mins] = 1 / math.sqrt(2)
    basis[rows, pidx, 0, maxs] = 1 / math.sqrt(2)
    basis[rows, pidx, 1, mins] = 1 / math.sqrt(2)
    basis[rows, pidx, 1, maxs] = -1 / math.sqrt(2)
    return basis.reshape(N, n, n), np.stack([mins, maxs], axis=-1)


def hm_quantum_distribution(x, partner) -> np.ndarray:
    """Outcome probabilities of Bob's pair-basis measurement, shape (N, n) over (pair rank, v)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    n = x.shape[1]
    psi = (1 - 2 * x) / math.sqrt(n)
    basis, _ = _pair_basis(partner)
    check_orthonormal(basis)
    return np.einsum("nok,nk->no", basis, psi) ** 2


def hm_quantum_outcomes(x, partner, rng: np.random.Generator) -> np.ndarray:
    """Batch version of the log n-qubit protocol; rows (i, j, v)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    P = hm_quantum_distribution(x, partner)
    _, pairs = _pair_basis(partner)
    cum = P.cumsum(axis=1)
    idx = np.minimum((cum <= rng.random(len(P))[:, None] * cum[:, -1:]).sum(axis=1), P.shape[1] - 1)
    p, v = np.divmod(idx, 2)
    rows = np.arange(len(P))
    return np.stack([pairs[rows, p, 0], pairs[rows, p, 1], v], axis=1)


def hm_quantum_protocol(n: int, x, M: bitcore.Matching, seed: int) -> tuple[tuple[int, int], int]:
    """Send (1/sqrt n) sum (-1)^{x_i}|i>; Bob measures in {(|i> +- |j>)/sqrt2}."""
    log2_exact(n)
    if isinstance(x, bitcore.BitString):
        x = x.bits()
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (n,) or M.n != n:
        raise InvalidOutputError("input sizes do not match n")
    if n > MAX_DIM:
        raise CapExceededError(f"dimension {n} exceeds cap {MAX_DIM}")
    i, j, v = hm_quantum_outcomes(x[None, :], M.partner()[None, :], np.random.default_rng(seed))[0]
    return (int(i), int(j)), int(v)


# -- non-local Hidden Matching ----------------------------------------------------


def hadamard_matrix(n: int) -> np.ndarray:
    idx = np.arange(n)
    return (1 - 2 * parity(idx[:, None] & idx[None, :])) / math.sqrt(n)


class HMNLQuantumStrategy(ProjectiveStrategy):
    """Phase flip, pair projection, then Hadamards on both sides.

    As a projective strategy: Alice measures rows (-1)^{x_k + a.k}/sqrt n and
    Bob measures the pair basis (|i> + (-1)^d |j>)/sqrt2, which is what the
    pair projection followed by Hadamard and d = b.(i^j) coarse-grains to.
    ``run_circuit`` simulates the three steps literally.
    """

    def __init__(self, n: int):
        log2_exact(n)
        if n > MAX_DIM:
            raise CapExceededError(f"dimension {n} exceeds cap {MAX_DIM}")
        Hn = hadamard_matrix(n)

        def alice_basis(x):
            x = np.atleast_2d(np.asarray(x, dtype=np.int64))
            return Hn[None, :, :] * (1 - 2 * x)[:, None, :]

        def bob_basis(partner):
            return _pair_basis(partner)[0]

        super().__init__(alice_basis, bob_basis, maximally_entangled_state(n), "hmnl-quantum")
        object.__setattr__(self, "n", n)

    def circuit_distribution(self, x, partner) -> tuple[np.ndarray, np.ndarray]:
        """Exact Pr(pair rank p, a, b) after the three steps; also the pair list."""
        n = self.n
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        N = len(x)
        Hn = hadamard_matrix(n)
        psi = np.broadcast_to(np.eye(n) / math.sqrt(n), (N, n, n)) * (1 - 2 * x)[:, :, None]
        _, pairs = _pair_basis(partner)
        proj = np.zeros((N, n // 2, n))
        rows = np.arange(N)[:, None]
        proj[rows, np.arange(n // 2), pairs[..., 0]] = 1
        proj[rows, np.arange(n // 2), pairs[..., 1]] = 1
        collapsed = psi[:, None, :, :] * proj[:, :, None, :]  # Bob-side projector per pair
        final = np.einsum("ak,npkl,bl->npab", Hn, collapsed, Hn)
        return np.abs(final) ** 2, pairs

    def run_circuit(self, x, partner, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sample transcripts step by step; returns (a, rows (i, j, d))."""
        n = self.n
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        N = len(x)
        rows = np.arange(N)
        Hn = hadamard_matrix(n)
        psi = np.broadcast_to(np.eye(n) / math.sqrt(n), (N, n, n)) * (1 - 2 * x)[:, :, None]
        _, pairs = _pair_basis(partner)
        i, j = pairs[..., 0], pairs[..., 1]
        # step 2: Bob's projective measurement {P_ij}
        weight = (np.abs(psi[rows[:, None], :, i]) ** 2).sum(-1) + (np.abs(psi[rows[:, None], :, j]) ** 2).sum(-1)
        cum = weight.cumsum(axis=1)
        p = np.minimum((cum <= rng.random(N)[:, None] * cum[:, -1:]).sum(axis=1), n // 2 - 1)
        pi, pj = i[rows, p], j[rows, p]
        keep = np.zeros((N, n))
        keep[rows, pi] = 1
        keep[rows, pj] = 1
        psi = psi * keep[:, None, :]
        psi = psi / np.linalg.norm(psi.reshape(N, -1), axis=1)[:, None, None]
        # step 3: Hadamards on both sides, computational-basis measurement
        psi = np.einsum("ak,nkl,bl->nab", Hn, psi, Hn)
        probs = (np.abs(psi) ** 2).reshape(N, -1)
        cum = probs.cumsum(axis=1)
        idx = np.minimum((cum <= rng.random(N)[:, None] * cum[:, -1:]).sum(axis=1), n * n - 1)
        a, b = np.divmod(idx, n)
        d = parity(b & (pi ^ pj))
        return a, np.stack([pi, pj, d], axis=1)


def hmnl_quantum_strategy(n: int) -> HMNLQuantumStrategy:
    return HMNLQuantumStrategy(n)


# -- Khot-Vishnoi ---------------------------------------------------------------


def sign_vectors(strings, n: int) -> np.ndarray:
    """v^a = ((-1)^{a_i} / sqrt n)_i for integer-encoded a."""
    bits = bitcore.ints_to_bits(strings, n).astype(float)
    return (1.0 - 2.0 * bits) / math.sqrt(n)


def kv_quantum_strategy(n: int) -> ProjectiveStrategy:
    """Each player measures in the sign-vector basis of its own coset."""
    log2_exact(n)
    if n > MAX_DIM:
        raise CapExceededError(f"dimension {n} exceeds cap {MAX_DIM}")
    words = bitcore.hadamard_subgroup(n).as_array()

    def basis(reps):
        reps = np.asarray(reps, dtype=np.int64)
        return sign_vectors(reps[:, None] ^ words[None, :], n)

    return ProjectiveStrategy(basis, basis, maximally_entangled_state(n), "kv-quantum")


def kv_conditional_win(n: int, z: int) -> float:
    return (1.0 - 2.0 * bitcore.popcount(z) / n) ** 2


def kv_quantum_value(n: int, eta: float) -> float:
    """E_z[(1 - 2|z|/n)^2] = (1 - 2 eta)^2 + 4 eta (1 - eta) / n."""
    log2_exact(n)
    if not 0.0 <= eta <= 0.5:
        raise ValueError(f"eta must lie in [0, 1/2], got {eta}")
    return (1 - 2 * eta) ** 2 + 4 * eta * (1 - eta) / n


def kv_quantum_value_by_z(n: int, eta: float) -> float:
    """Oracle: sum over all z of Pr[z] (1 - 2|z|/n)^2."""
    w = np.arange(n + 1)
    pz = np.array([math.comb(n, k) for k in w]) * eta**w * (1 - eta) ** (n - w)
    return float(np.sum(pz * (1 - 2 * w / n) ** 2))
