"""MVU and MMSE channel estimators and estimate-quality metrics.

Information matrices are kept as sums of Kronecker terms (left^T-side
factor, right-side factor) and only assembled in full on request.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

from src.channel_model import KroneckerCov, pilot_array
from src.errors import DegenerateInputError, DimensionError, RankDeficientError
from src.matalg import chi2_quantile, kron, unvec, vec

KronTerm = Tuple[np.ndarray, np.ndarray]

RANK_RTOL = 1e-12


def kron_sum(terms: Sequence[KronTerm]) -> np.ndarray:
    """Σ kron(A_k, C_k) for the given terms."""
    return sum(kron(A, C) for A, C in terms)


def error_quadratic_form(H_tilde, terms: Sequence[KronTerm]) -> float:
    """vec^H(H̃) (Σ A_k ⊗ C_k) vec(H̃) evaluated as Σ tr(H̃^H C_k H̃ A_k^T)."""
    X = np.asarray(H_tilde)
    total = 0.0
    for A, C in terms:
        total += np.real(np.trace(X.conj().T @ C @ X @ A.T))
    return float(total)


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Channel estimate and its information matrix (C^{-1} of the error)."""

    Hhat: np.ndarray
    terms: Tuple[KronTerm, ...]

    @cached_property
    def info(self) -> np.ndarray:
        full = kron_sum(self.terms)
        return (full + full.conj().T) / 2


def _pilot_gram(P: np.ndarray, S: KroneckerCov) -> Tuple[np.ndarray, np.ndarray]:
    """W = S_Q^{-1} P^H and G = P S_Q^{-1} P^H."""
    if P.shape[1] != S.n_left:
        raise DimensionError(f"pilot length {P.shape[1]} does not match temporal factor {S.n_left}")
    W = linalg.cho_solve(linalg.cho_factor(S.left), P.conj().T)
    G = P @ W
    return W, (G + G.conj().T) / 2


def mvu_information(P, S: KroneckerCov) -> Tuple[KronTerm, ...]:
    """P̃^H S^{-1} P̃ = (P S_Q^{-1} P^H)^T ⊗ S_R^{-1}."""
    _, G = _pilot_gram(pilot_array(P), S)
    return ((G.T, S.right_inv),)


def mmse_information(P, S: KroneckerCov, R: KroneckerCov) -> Tuple[KronTerm, ...]:
    """R^{-1} + P̃^H S^{-1} P̃ in Kronecker-term form."""
    return ((R.left_inv.T, R.right_inv),) + mvu_information(P, S)


def _check_shapes(Y: np.ndarray, P: np.ndarray, S: KroneckerCov):
    if Y.shape != (S.n_right, P.shape[1]):
        raise DimensionError(f"observation has shape {Y.shape}, expected {(S.n_right, P.shape[1])}")


def mvu_estimate(Y, P, S: KroneckerCov) -> EstimateResult:
    """Ĥ = Y S_Q^{-1} P^H (P S_Q^{-1} P^H)^{-1}."""
    Y = np.asarray(Y)
    P = pilot_array(P)
    _check_shapes(Y, P, S)
    n_T, B = P.shape
    if B < n_T:
        raise RankDeficientError(f"MVU estimate needs B >= n_T, got B={B}, n_T={n_T}", dimension="B", rank=B)
    W, G = _pilot_gram(P, S)
    eigs = np.linalg.eigvalsh(G)
    if eigs[-1] <= 0 or eigs[0] <= RANK_RTOL * eigs[-1]:
        rank = int(np.sum(eigs > RANK_RTOL * max(eigs[-1], 0.0)))
        raise RankDeficientError(
            f"pilot information is singular (rank {rank} < n_T={n_T})", dimension="n_T", rank=rank
        )
    Hhat = linalg.solve(G.T, (Y @ W).T, assume_a="her").T
    return EstimateResult(Hhat=Hhat, terms=((G.T, S.right_inv),))


def mmse_estimate(Y, P, S: KroneckerCov, R: KroneckerCov) -> EstimateResult:
    """Posterior mean under vec(H) ~ CN(0, R)."""
    Y = np.asarray(Y)
    P = pilot_array(P)
    _check_shapes(Y, P, S)
    n_T = P.shape[0]
    if R.n_left != n_T or R.n_right != S.n_right:
        raise DimensionError("channel covariance does not match pilot and noise dimensions")
    terms = mmse_information(P, S, R)
    info = kron_sum(terms)
    info = (info + info.conj().T) / 2
    W = linalg.cho_solve(linalg.cho_factor(S.left), P.conj().T)
    rhs = vec(S.right_inv @ Y @ W)
    h = linalg.cho_solve(linalg.cho_factor(info), rhs)
    return EstimateResult(Hhat=unvec(h, S.n_right, n_T), terms=terms)


def nmse(H, Hhat) -> float:
    """‖H − Ĥ‖²_F / ‖H‖²_F."""
    H = np.asarray(H)
    Hhat = np.asarray(Hhat)
    if H.shape != Hhat.shape:
        raise DimensionError(f"shape mismatch {H.shape} vs {Hhat.shape}")
    ref = np.linalg.norm(H) ** 2
    if ref == 0:
        raise DegenerateInputError("NMSE is undefined for a zero channel")
    return float(np.linalg.norm(H - Hhat) ** 2 / ref)


def uncertainty_radius(alpha: float, n_T: int, n_R: int) -> float:
    """Level ½·χ²_α(2 n_T n_R) of the confidence ellipsoid."""
    return 0.5 * chi2_quantile(alpha, 2 * n_T * n_R)


def in_confidence_set(H_tilde, result: EstimateResult, alpha: float) -> bool:
    n_R, n_T = np.asarray(H_tilde).shape
    return error_quadratic_form(H_tilde, result.terms) <= uncertainty_radius(alpha, n_T, n_R)
