"""Application-specific weightings I_adm = I_T^T ⊗ I_R and exact end metrics.

Four applications are covered: channel estimation MSE, L-optimality,
MMSE (Wiener) equalization and zero-forcing precoding. The exact metrics
are used to validate the quadratic approximations they induce.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from src.errors import DimensionError, NotPositiveSemidefiniteError, RankDeficientError
from src.matalg import hermitian_part, is_psd, kron, pinv

Regime = Literal["high", "low"]

DEFAULT_GRID_SIZE = 512
RANK_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class Admissibility:
    """Weighting pair (I_T, I_R) with I_adm = I_T^T ⊗ I_R."""

    I_T: np.ndarray
    I_R: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        for name in ("I_T", "I_R"):
            M = hermitian_part(np.asarray(getattr(self, name), dtype=complex))
            if not is_psd(M, tol=1e-9 * max(1.0, float(np.linalg.norm(M)))):
                raise NotPositiveSemidefiniteError(f"{name} of '{self.label}' is not PSD")
            object.__setattr__(self, name, M)

    @property
    def n_T(self) -> int:
        return self.I_T.shape[0]

    @property
    def n_R(self) -> int:
        return self.I_R.shape[0]

    def full(self) -> np.ndarray:
        return kron(self.I_T.T, self.I_R)

    def quadratic_form(self, H_tilde) -> float:
        """vec^H(H̃) I_adm vec(H̃) = tr(H̃^H I_R H̃ I_T)."""
        X = np.asarray(H_tilde)
        return float(np.real(np.trace(X.conj().T @ self.I_R @ X @ self.I_T)))


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Data-phase noise spectral density Φ_n(ω) sampled on a midpoint grid.

    `evaluator` maps an array of K frequencies to a (K, n_R, n_R) array.
    Averages over the grid stand in for (1/2π)∫_{−π}^{π} · dω.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    n: int
    grid_size: int = DEFAULT_GRID_SIZE

    def grid(self) -> np.ndarray:
        k = np.arange(self.grid_size)
        return -np.pi + (k + 0.5) * 2.0 * np.pi / self.grid_size

    def at(self, omega: float) -> np.ndarray:
        return self.evaluator(np.array([float(omega)]))[0]

    @cached_property
    def values(self) -> np.ndarray:
        return self.evaluator(self.grid())

    @cached_property
    def inverses(self) -> np.ndarray:
        return np.linalg.inv(self.values)

    @cached_property
    def inverse_sqrts(self) -> np.ndarray:
        d, U = np.linalg.eigh(self.values)
        return (U / np.sqrt(d)[:, None, :]) @ np.conj(np.swapaxes(U, -1, -2))

    def average(self, stack: np.ndarray) -> np.ndarray:
        """Grid quadrature of a per-frequency stack (K, ...)."""
        return np.mean(stack, axis=0)


def ar1_noise_spectrum(S_R, r_temporal: complex, sigma2: float, grid_size: int = DEFAULT_GRID_SIZE) -> NoiseSpectrum:
    """Φ_n(ω) = σ²(1−|r|²)/|1−r e^{−jω}|² · S_R."""
    if abs(r_temporal) >= 1:
        raise ValueError(f"|r| must be < 1, got {abs(r_temporal)}")
    S_R = hermitian_part(np.asarray(S_R, dtype=complex))
    r = complex(r_temporal)

    def evaluate(omega: np.ndarray) -> np.ndarray:
        shape = sigma2 * (1.0 - abs(r) ** 2) / np.abs(1.0 - r * np.exp(-1j * omega)) ** 2
        return shape[:, None, None] * S_R[None, :, :]

    return NoiseSpectrum(evaluator=evaluate, n=S_R.shape[0], grid_size=grid_size)


def iadm_channel_mse(n_T: int, n_R: int) -> Admissibility:
    return Admissibility(np.eye(n_T), np.eye(n_R), label="channel_mse")


def iadm_l_optimality(W1, W2) -> Admissibility:
    """I_T = W1^T, I_R = W2, so I_adm = W1 ⊗ W2."""
    W1 = np.asarray(W1, dtype=complex)
    W2 = np.asarray(W2, dtype=complex)
    for name, W in (("W1", W1), ("W2", W2)):
        if not is_psd(hermitian_part(W), tol=1e-9 * max(1.0, float(np.linalg.norm(W)))):
            raise NotPositiveSemidefiniteError(f"weight {name} is not PSD")
    return Admissibility(W1.T, W2, label="l_optimality")


def _wiener_stack(H: np.ndarray, lambda_x: float, Phis: np.ndarray) -> np.ndarray:
    """Per-frequency F = H^H (H H^H + Φ/λ_x)^{-1}, shape (K, n_T, n_R)."""
    M = (H @ H.conj().T)[None, :, :] + Phis / lambda_x
    X = np.linalg.solve(M, np.broadcast_to(H, (Phis.shape[0],) + H.shape))
    return np.conj(np.swapaxes(X, -1, -2))


def wiener_filter(H, lambda_x: float, Phi_n: NoiseSpectrum, omega: float) -> np.ndarray:
    """Non-causal Wiener equalizer at frequency ω."""
    if lambda_x <= 0:
        raise ValueError(f"lambda_x must be positive, got {lambda_x}")
    H = np.asarray(H, dtype=complex)
    return _wiener_stack(H, lambda_x, Phi_n.at(omega)[None, :, :])[0]


def jce_exact(H, H_tilde, lambda_x: float, Phi_n: NoiseSpectrum) -> float:
    """Excess MSE of equalizing with the filter built from H + H̃.

    (1/2π)∫ tr(Δ Φ_y Δ^H) dω with Δ = F(H + H̃) − F(H), Φ_y = λ_x H H^H + Φ_n.
    """
    H = np.asarray(H, dtype=complex)
    H_tilde = np.asarray(H_tilde, dtype=complex)
    if H.shape != H_tilde.shape:
        raise DimensionError(f"shape mismatch {H.shape} vs {H_tilde.shape}")
    Phis = Phi_n.values
    delta = _wiener_stack(H + H_tilde, lambda_x, Phis) - _wiener_stack(H, lambda_x, Phis)
    Phi_y = lambda_x * (H @ H.conj().T)[None, :, :] + Phis
    integrand = np.einsum("kij,kjl,kil->k", delta, Phi_y, delta.conj())
    return max(float(np.mean(np.real(integrand))), 0.0)


def _require_full_rank(H: np.ndarray, name: str = "H"):
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s[0] == 0 or s[-1] <= RANK_RTOL * s[0]:
        rank = int(np.sum(s > RANK_RTOL * (s[0] if s.size else 0.0)))
        raise RankDeficientError(f"{name} is rank deficient (rank {rank} of {min(H.shape)})", dimension=name, rank=rank)


def iadm_equalization(H, lambda_x: float, Phi_n: NoiseSpectrum, regime: Regime = "high") -> Admissibility:
    """Quadratic weighting of the Wiener-equalizer excess MSE.

    High regime with n_R ≤ n_T: I_T = λ_x I, I_R = (H H^H)^{-1}.
    High regime with n_T < n_R: I_T = λ_x I and I_R averages
    Φ^{-1/2}[Φ^{-1/2} H H^H Φ^{-1/2}]^† Φ^{-1/2} over the grid.
    Low regime: I_T = I, I_R = λ_x² · mean(Φ^{-1}).
    """
    H = np.asarray(H, dtype=complex)
    n_R, n_T = H.shape
    if regime not in ("high", "low"):
        raise ValueError(f"unknown regime {regime!r}")
    _require_full_rank(H)

    if regime == "low":
        I_R = lambda_x ** 2 * Phi_n.average(Phi_n.inverses)
        return Admissibility(np.eye(n_T), I_R, label="equalization_low")

    if n_R <= n_T:
        I_R = np.linalg.inv(H @ H.conj().T)
        return Admissibility(lambda_x * np.eye(n_T), I_R, label="equalization_high")

    roots = Phi_n.inverse_sqrts
    # G = Φ^{-1/2} H has full column rank, so (G G^H)^† = G (G^H G)^{-2} G^H.
    G = roots @ H
    K = np.conj(np.swapaxes(G, -1, -2)) @ G
    Kinv = np.linalg.inv(K)
    inner = G @ Kinv @ Kinv @ np.conj(np.swapaxes(G, -1, -2))
    I_R = Phi_n.average(roots @ inner @ roots)
    return Admissibility(lambda_x * np.eye(n_T), I_R, label="equalization_high")


def iadm_zf(H, lambda_x: float) -> Admissibility:
    """I_T = λ_x H^† (H^†)^H = λ_x H^H (H H^H)^{-2} H, I_R = I."""
    H = np.asarray(H, dtype=complex)
    n_R, n_T = H.shape
    if n_T < n_R:
        raise DimensionError(f"zero-forcing needs n_T >= n_R, got n_T={n_T}, n_R={n_R}")
    _require_full_rank(H)
    A = np.linalg.solve(H @ H.conj().T, H)
    return Admissibility(lambda_x * (A.conj().T @ A), np.eye(n_R), label="zf_precoding")


def jzf_exact(H, H_tilde, lambda_x: float, allow_rank_deficient: bool = False) -> float:
    """λ_x ‖H Ĥ^† − I‖²_F for the precoder built from Ĥ = H + H̃.

    A rank-deficient Ĥ raises unless `allow_rank_deficient`, in which case
    the precoder is the pseudoinverse truncated at the same rank threshold.
    """
    H = np.asarray(H, dtype=complex)
    Hhat = H + np.asarray(H_tilde, dtype=complex)
    if not allow_rank_deficient:
        _require_full_rank(Hhat, name="Hhat")
    D = H @ pinv(Hhat, rtol=RANK_RTOL) - np.eye(H.shape[0])
    return float(lambda_x * np.linalg.norm(D) ** 2)
