"""Kronecker-structured channel and noise statistics, sampling and evolution."""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from src.errors import DimensionError, NotPositiveSemidefiniteError
from src.matalg import herm_sqrt, hermitian_part, kron

logger = logging.getLogger(__name__)

# Stream tags for counter-based seeding: (seed, trial, tag) -> independent stream.
STREAMS = {
    "channel": 0,
    "noise": 1,
    "evolution": 2,
    "bootstrap": 3,
    "data": 4,
    "weights": 5,
    "optimizer": 6,
}


def make_rng(seed: int, trial: int, stream: str) -> np.random.Generator:
    """Independent, reproducible generator for one (seed, trial, stream)."""
    if stream not in STREAMS:
        raise KeyError(f"unknown RNG stream {stream!r}")
    ss = np.random.SeedSequence([int(seed), int(trial), STREAMS[stream]])
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. circular CN(0, 1) entries (real and imaginary parts N(0, 1/2))."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _check_pd(M: np.ndarray, name: str) -> np.ndarray:
    M = hermitian_part(M)
    lam = np.linalg.eigvalsh(M)[0]
    if lam <= 0:
        raise NotPositiveSemidefiniteError(f"{name} factor is not positive definite (min eig {lam:.3e})")
    return M


def _factor(M: np.ndarray) -> np.ndarray:
    """L with L L^H = M; Cholesky, else the Hermitian square root."""
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        logger.warning("Cholesky failed on a near-singular factor, using eigen square root")
        return herm_sqrt(M)


@dataclass(frozen=True, eq=False)
class KroneckerCov:
    """Covariance left^T ⊗ right of a vectorized n_right × n_left matrix.

    `left` is the transmit (R_T) or temporal (S_Q) factor, `right` the
    receive (R_R) or spatial (S_R) factor.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", _check_pd(np.asarray(self.left, dtype=complex), "left"))
        object.__setattr__(self, "right", _check_pd(np.asarray(self.right, dtype=complex), "right"))

    @property
    def n_left(self) -> int:
        return self.left.shape[0]

    @property
    def n_right(self) -> int:
        return self.right.shape[0]

    def full(self) -> np.ndarray:
        return kron(self.left.T, self.right)

    def trace(self) -> float:
        return float(np.real(np.trace(self.left) * np.trace(self.right)))

    def scaled(self, c: float) -> "KroneckerCov":
        return KroneckerCov(self.left, c * self.right)

    @cached_property
    def left_sqrt(self) -> np.ndarray:
        return _factor(self.left)

    @cached_property
    def right_sqrt(self) -> np.ndarray:
        return _factor(self.right)

    @cached_property
    def left_inv(self) -> np.ndarray:
        return hermitian_part(linalg.cho_solve(linalg.cho_factor(self.left), np.eye(self.n_left)))

    @cached_property
    def right_inv(self) -> np.ndarray:
        return hermitian_part(linalg.cho_solve(linalg.cho_factor(self.right), np.eye(self.n_right)))

    def sample_matrix(self, rng: np.random.Generator) -> np.ndarray:
        """X = L_right Z L_left^H, so that vec(X) ~ CN(0, left^T ⊗ right)."""
        Z = complex_gaussian(rng, (self.n_right, self.n_left))
        return self.right_sqrt @ Z @ self.left_sqrt.conj().T


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    H: np.ndarray
    block_index: int = 0


def exponential_corr(n: int, r: complex) -> np.ndarray:
    """Exponential correlation: entry (i, j) = r^(j−i) for j ≥ i, Hermitian below."""
    if abs(r) >= 1:
        raise ValueError(f"|r| must be < 1, got {abs(r)}")
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    k = np.arange(n)
    lag = k[None, :] - k[:, None]
    upper = np.power(complex(r), np.abs(lag))
    return np.where(lag >= 0, upper, upper.conj())


def exponential_cov(n: int, rho: float, phase: float = 0.0) -> np.ndarray:
    return exponential_corr(n, rho * np.exp(1j * phase))


def random_psd(n: int, rng: np.random.Generator, normalize: bool = True) -> np.ndarray:
    """Seeded random Hermitian PD weight, unit trace when `normalize`."""
    A = complex_gaussian(rng, (n, n))
    W = A @ A.conj().T
    if normalize:
        W = W / np.real(np.trace(W))
    return (W + W.conj().T) / 2


def sample_channel(R: KroneckerCov, rng: np.random.Generator, block_index: int = 0) -> ChannelDraw:
    """Draw H (n_R × n_T) with vec(H) ~ CN(0, R_T^T ⊗ R_R)."""
    return ChannelDraw(H=R.sample_matrix(rng), block_index=block_index)


def evolve_channel(H_prev, mu: float, R: KroneckerCov, rng: np.random.Generator) -> np.ndarray:
    """H_i = H_{i−1} + μ E_i with E_i an independent draw from R."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    H_prev = np.asarray(H_prev)
    if mu == 0:
        return H_prev.copy()
    return H_prev + mu * R.sample_matrix(rng)


def pilot_array(P) -> np.ndarray:
    """Accept a TrainingMatrix or a bare n_T × B array."""
    return np.asarray(getattr(P, "P", P))


def simulate_training(H, P, S: KroneckerCov, rng: np.random.Generator) -> np.ndarray:
    """Y = H P + N with vec(N) ~ CN(0, S_Q^T ⊗ S_R)."""
    H = np.asarray(H)
    P = pilot_array(P)
    n_R, n_T = H.shape
    if P.shape[0] != n_T:
        raise DimensionError(f"pilot has {P.shape[0]} rows, channel has {n_T} transmit antennas")
    if S.n_left != P.shape[1] or S.n_right != n_R:
        raise DimensionError(
            f"noise factors are {S.n_left}x{S.n_left} / {S.n_right}x{S.n_right}, "
            f"need B={P.shape[1]} and n_R={n_R}"
        )
    return H @ P + S.sample_matrix(rng)
