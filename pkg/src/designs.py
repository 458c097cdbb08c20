"""Training-matrix solvers.

Guaranteed-performance designs minimize training energy subject to an LMI
that places the estimation-error confidence ellipsoid inside the
application's admissible set. Average-performance designs minimize the
expected application cost under an energy budget. All closed forms reduce
to eigendecompositions of the covariance factors and a power allocation.
"""

import logging
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize
from scipy.stats import unitary_group

from src.admissibility import Admissibility
from src.channel_model import KroneckerCov, make_rng, pilot_array
from src.errors import (
    CaseAssumptionError,
    DegenerateInputError,
    DimensionError,
    InfeasibleDesignError,
    NotPositiveSemidefiniteError,
    OrderingGuardError,
    RankDeficientError,
)
from src.estimators import kron_sum, mmse_information, mvu_information
from src.matalg import CLAMP_TOL, chi2_quantile, herm_eig, hermitian_part, kron, min_eig_herm, positive_part

logger = logging.getLogger(__name__)

Status = Literal["ok", "prior_sufficient"]
AsgppCase = Literal["RR_eq_SR", "RRinv_eq_IR", "RTinv_eq_IT"]
AvgMmseMode = Literal["IT_identity", "IT_eq_RTinv"]

ORDERING_GUARD = 10 ** 6
ASSUMPTION_TOL = 1e-9
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TrainingMatrix:
    """Pilot matrix P (n_T × B) and its energy tr(P P^H)."""

    P: np.ndarray
    status: Status = "ok"
    objective: Optional[float] = None
    energy: float = field(init=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=complex)
        if P.ndim != 2:
            raise DimensionError(f"pilot must be a matrix, got shape {P.shape}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "energy", float(np.linalg.norm(P) ** 2))

    @property
    def n_T(self) -> int:
        return self.P.shape[0]

    @property
    def B(self) -> int:
        return self.P.shape[1]

    def scaled(self, factor: float) -> "TrainingMatrix":
        return TrainingMatrix(self.P * factor, status=self.status)


def guaranteed_constant(gamma: float, alpha: float, n_T: int, n_R: int) -> float:
    """c = γ·χ²_α(2 n_T n_R)/2."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return gamma * chi2_quantile(alpha, 2 * n_T * n_R) / 2.0


@dataclass(frozen=True)
class GuaranteedSpec:
    gamma: float
    alpha: float
    n_T: int
    n_R: int

    @property
    def c(self) -> float:
        return guaranteed_constant(self.gamma, self.alpha, self.n_T, self.n_R)


@dataclass(frozen=True)
class OrderingResult:
    perm_T: Tuple[int, ...]
    perm_Q: Tuple[int, ...]
    objective: float
    m_star: int


def _close(A, B) -> bool:
    A = np.asarray(A)
    B = np.asarray(B)
    return A.shape == B.shape and np.linalg.norm(A - B) <= ASSUMPTION_TOL * max(1.0, float(np.linalg.norm(B)))


def _lambda_max_weighted(S: np.ndarray, M: np.ndarray) -> float:
    """λ_max(S M) for PD S and Hermitian M, via the congruent L^H M L."""
    L = linalg.cholesky(hermitian_part(S), lower=True)
    return float(np.linalg.eigvalsh(hermitian_part(L.conj().T @ M @ L))[-1])


# ──────────────────────────────────────────────
# Core solver
# ──────────────────────────────────────────────
def solve_min_energy_lmi(A, B) -> TrainingMatrix:
    """Minimize tr(P P^H) subject to P A^{-1} P^H ⪰ B.

    A is N × N positive definite, B is n × n PSD. The minimizer aligns P
    with the eigenvectors of A (ascending) and B (descending):
    P = U_B D_P U_A^H with (D_P)_ii = sqrt(d_A,i · d_B,i).
    """
    eig_A = herm_eig(A, "ascending")
    if eig_A.d[0] <= 0:
        raise NotPositiveSemidefiniteError(f"A must be positive definite (min eig {eig_A.d[0]:.3e})")
    eig_B = herm_eig(B, "descending")
    d_B = eig_B.d
    scale = max(1.0, float(np.max(np.abs(d_B)))) if d_B.size else 1.0
    if d_B.size and d_B[-1] < -CLAMP_TOL * scale:
        raise NotPositiveSemidefiniteError(f"B must be PSD (min eig {d_B[-1]:.3e})")
    d_B = np.where(d_B > CLAMP_TOL * scale, d_B, 0.0)

    N, n = eig_A.d.size, d_B.size
    rank = int(np.count_nonzero(d_B))
    if rank > N:
        raise InfeasibleDesignError(
            f"constraint needs rank {rank} but only {N} training dimensions exist", constraint="N >= rank(B)"
        )
    k = min(n, N)
    D = np.zeros((n, N))
    D[np.arange(k), np.arange(k)] = np.sqrt(eig_A.d[:k] * d_B[:k])
    P = eig_B.U @ D @ eig_A.U.conj().T
    return TrainingMatrix(P, objective=float(np.sum(eig_A.d[:k] * d_B[:k])))


# ──────────────────────────────────────────────
# Guaranteed-performance designs
# ──────────────────────────────────────────────
def _guaranteed(S_Q, B_mat, constraint: str) -> TrainingMatrix:
    try:
        design = solve_min_energy_lmi(S_Q, B_mat)
    except InfeasibleDesignError as exc:
        raise InfeasibleDesignError(str(exc), constraint=constraint) from exc
    if design.energy == 0.0:
        return TrainingMatrix(design.P, status="prior_sufficient", objective=0.0)
    return design


def solve_adgpp(S_Q, S_R, adm: Admissibility, c: float) -> TrainingMatrix:
    """Least-energy pilot with P̃^H S^{-1} P̃ ⪰ c·I_T^T ⊗ I_R (MVU estimation)."""
    lam = _lambda_max_weighted(np.asarray(S_R), adm.I_R)
    return _guaranteed(S_Q, c * lam * adm.I_T, constraint="B >= rank(I_T)")


def solve_asgpp(S_Q, S_R, R_T, R_R, adm: Admissibility, c: float, case: AsgppCase) -> TrainingMatrix:
    """Least-energy pilot with R^{-1} + P̃^H S^{-1} P̃ ⪰ c·I_T^T ⊗ I_R (MMSE estimation).

    The caller selects which covariance structure holds:
    - RR_eq_SR:    R_R = S_R,      B = [c λ_max(S_R I_R) I_T − R_T^{-1}]_+
    - RRinv_eq_IR: R_R^{-1} = I_R, B = λ_max(S_R I_R) [c I_T − R_T^{-1}]_+
    - RTinv_eq_IT: R_T^{-1} = I_T, B = λ_max(S_R [c I_R − R_R^{-1}]_+) I_T
    """
    S_R = np.asarray(S_R)
    R_T_inv = hermitian_part(np.linalg.inv(R_T))
    R_R_inv = hermitian_part(np.linalg.inv(R_R))

    if case == "RR_eq_SR":
        if not _close(R_R, S_R):
            raise CaseAssumptionError("receive channel and noise factors differ", constraint="R_R == S_R")
        lam = _lambda_max_weighted(S_R, adm.I_R)
        B_mat = positive_part(c * lam * adm.I_T - R_T_inv)
    elif case == "RRinv_eq_IR":
        if not _close(R_R_inv, adm.I_R):
            raise CaseAssumptionError("R_R^{-1} does not match I_R", constraint="R_R^{-1} == I_R")
        lam = _lambda_max_weighted(S_R, adm.I_R)
        B_mat = lam * positive_part(c * adm.I_T - R_T_inv)
    elif case == "RTinv_eq_IT":
        if not _close(R_T_inv, adm.I_T):
            raise CaseAssumptionError("R_T^{-1} does not match I_T", constraint="R_T^{-1} == I_T")
        lam = _lambda_max_weighted(S_R, positive_part(c * adm.I_R - R_R_inv))
        B_mat = lam * adm.I_T
    else:
        raise ValueError(f"unknown ASGPP case {case!r}")
    return _guaranteed(S_Q, B_mat, constraint="B >= rank(B)")


def adgpp_lmi_margin(P, S: KroneckerCov, adm: Admissibility, c: float) -> float:
    """Smallest eigenvalue of P̃^H S^{-1} P̃ − c·I_adm, assembled in full."""
    return min_eig_herm(kron_sum(mvu_information(P, S)) - c * adm.full())


def asgpp_lmi_margin(P, S: KroneckerCov, R: KroneckerCov, adm: Admissibility, c: float) -> float:
    """Smallest eigenvalue of R^{-1} + P̃^H S^{-1} P̃ − c·I_adm, assembled in full."""
    return min_eig_herm(kron_sum(mmse_information(P, S, R)) - c * adm.full())


# ──────────────────────────────────────────────
# Average-performance design, MVU estimation
# ──────────────────────────────────────────────
def _check_budget(budget: float):
    if not budget > 0:
        raise ValueError(f"training budget must be positive, got {budget}")


def solve_avg_mvu(I_T, S_Q, budget: float) -> TrainingMatrix:
    """Minimize tr{I_adm (P̃^H S^{-1} P̃)^{-1}} subject to tr(P P^H) = budget.

    With α_i = t_i q_i (I_T eigenvalues descending, the n_T smallest S_Q
    eigenvalues ascending) the powers are κ_i = budget·√α_i / Σ√α_j.
    `objective` is the I_T part (Σ√α_i)²/budget; the full cost multiplies
    it by tr(I_R S_R).
    """
    _check_budget(budget)
    eig_T = herm_eig(I_T, "descending")
    eig_Q = herm_eig(S_Q, "ascending")
    n_T, B = eig_T.d.size, eig_Q.d.size
    if B < n_T:
        raise InfeasibleDesignError(f"B={B} is shorter than n_T={n_T}", constraint="B >= n_T")
    t = eig_T.d
    if t[-1] <= CLAMP_TOL * max(1.0, t[0]):
        rank = int(np.sum(t > CLAMP_TOL * max(1.0, t[0])))
        raise RankDeficientError("singular I_T gives an unbounded MVU objective", dimension="I_T", rank=rank)
    root_alpha = np.sqrt(t * eig_Q.d[:n_T])
    kappa = budget * root_alpha / root_alpha.sum()
    D = np.zeros((n_T, B))
    D[np.arange(n_T), np.arange(n_T)] = np.sqrt(kappa)
    P = eig_T.U @ D @ eig_Q.U.conj().T
    return TrainingMatrix(P, objective=float(root_alpha.sum() ** 2 / budget))


def avg_mvu_objective(P, S_Q, I_T) -> float:
    """tr(G^{-1} I_T) with G = P S_Q^{-1} P^H."""
    P = pilot_array(P)
    G = P @ np.linalg.solve(S_Q, P.conj().T)
    return float(np.real(np.trace(np.linalg.solve(hermitian_part(G), I_T))))


# ──────────────────────────────────────────────
# Average-performance design, MMSE estimation
# ──────────────────────────────────────────────
def _active_counts(gammas: np.ndarray, budget: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise m* and cumulative sums for a batch of γ orderings (N, n)."""
    inv = 1.0 / gammas
    root = np.sqrt(inv)
    cum_root = np.cumsum(root, axis=1)
    cum_inv = np.cumsum(inv, axis=1)
    ok = np.maximum.accumulate(root, axis=1) * cum_root - cum_inv < budget
    n = gammas.shape[1]
    m = np.where(ok.any(axis=1), n - np.argmax(ok[:, ::-1], axis=1), 0)
    return m, cum_root, cum_inv, ok


def _detmmse_batch(gammas: np.ndarray, budget: float) -> Tuple[np.ndarray, np.ndarray]:
    m, cum_root, cum_inv, _ = _active_counts(gammas, budget)
    n = gammas.shape[1]
    rows = np.arange(gammas.shape[0])
    last = np.maximum(m - 1, 0)
    tail = cum_root[rows, last] ** 2 / (budget + cum_inv[rows, last])
    objective = np.where(m > 0, n - m + tail, float(n))
    return m, objective


def mstar(gammas: Sequence[float], budget: float) -> int:
    """Largest m with √(1/γ_k)·Σ_{i≤m}√(1/γ_i) − Σ_{i≤m} 1/γ_i < budget for all k ≤ m."""
    g = np.asarray(gammas, dtype=float)
    if g.size == 0:
        raise DimensionError("mstar needs at least one gain")
    m, _, _, _ = _active_counts(g[None, :], budget)
    return int(m[0])


def water_fill_mmse(gammas: Sequence[float], budget: float, m: Optional[int] = None) -> np.ndarray:
    """Powers minimizing Σ 1/(1 + γ_j κ_j) with the first m directions active."""
    g = np.asarray(gammas, dtype=float)
    m = mstar(g, budget) if m is None else m
    kappa = np.zeros_like(g)
    if m == 0:
        return kappa
    inv = 1.0 / g[:m]
    level = (budget + inv.sum()) / np.sqrt(inv).sum()
    kappa[:m] = level * np.sqrt(inv) - inv
    return kappa


def detmmse_objective(gammas: Sequence[float], budget: float, m: Optional[int] = None) -> float:
    """n_T − m + (Σ_{i≤m} 1/√γ_i)² / (budget + Σ_{i≤m} 1/γ_i)."""
    g = np.asarray(gammas, dtype=float)
    m = mstar(g, budget) if m is None else m
    if m == 0:
        return float(g.size)
    return float(g.size - m + np.sum(1.0 / np.sqrt(g[:m])) ** 2 / (budget + np.sum(1.0 / g[:m])))


def optimal_ordering_exhaustive(
    Lambda_T: Sequence[float], Lambda_Q: Sequence[float], budget: float, guard: int = ORDERING_GUARD
) -> OrderingResult:
    """Search all (transmit, temporal) eigenvalue orderings for the least cost.

    Ties go to the lexicographically smallest permutation pair.
    """
    lt = np.asarray(Lambda_T, dtype=float)
    lq = np.asarray(Lambda_Q, dtype=float)
    n, B = lt.size, lq.size
    if B < n:
        raise InfeasibleDesignError(f"B={B} is shorter than n_T={n}", constraint="B >= n_T")
    pairs = factorial(n) * factorial(B)
    if pairs > guard:
        raise OrderingGuardError(f"{pairs} ordering pairs exceed the guard of {guard}; use heuristic_ordering")

    q_perms = np.array(list(permutations(range(B))), dtype=int)
    t_perms = list(permutations(range(n)))
    objectives = np.empty((len(t_perms), len(q_perms)))
    counts = np.empty((len(t_perms), len(q_perms)), dtype=int)
    for row, p_T in enumerate(t_perms):
        gammas = lt[list(p_T)][None, :] / lq[q_perms[:, :n]]
        counts[row], objectives[row] = _detmmse_batch(gammas, budget)

    flat = int(np.argmax(objectives.ravel() <= objectives.min() + TIE_TOL))
    row, col = divmod(flat, len(q_perms))
    return OrderingResult(
        perm_T=tuple(t_perms[row]),
        perm_Q=tuple(int(i) for i in q_perms[col]),
        objective=float(objectives[row, col]),
        m_star=int(counts[row, col]),
    )


def heuristic_ordering(Lambda_T: Sequence[float], Lambda_Q: Sequence[float], budget: float) -> OrderingResult:
    """Transmit eigenvalues descending, temporal ascending, single-k m* test."""
    lt = np.asarray(Lambda_T, dtype=float)
    lq = np.asarray(Lambda_Q, dtype=float)
    n = lt.size
    p_T = np.argsort(-lt, kind="stable")
    p_Q = np.argsort(lq, kind="stable")
    g = lt[p_T] / lq[p_Q[:n]]
    m = 0
    for k in range(1, n + 1):
        inv = 1.0 / g[:k]
        if np.sqrt(inv[-1]) * np.sum(np.sqrt(inv)) - np.sum(inv) < budget:
            m = k
    return OrderingResult(
        perm_T=tuple(int(i) for i in p_T),
        perm_Q=tuple(int(i) for i in p_Q),
        objective=detmmse_objective(g, budget, m),
        m_star=m,
    )


def _identity_water_fill(t: np.ndarray, q: np.ndarray, budget: float) -> np.ndarray:
    """Powers minimizing Σ t_j/(1 + κ_j t_j/q_j) with Σ κ_j = budget.

    κ_j = [μ√q_j − q_j/t_j]_+ ; the active set shrinks by dropping the
    direction with the highest threshold √q_j/t_j until every power is positive.
    """
    active = np.ones(t.size, dtype=bool)
    kappa = np.zeros_like(t)
    while True:
        level = (budget + np.sum(q[active] / t[active])) / np.sum(np.sqrt(q[active]))
        trial = level * np.sqrt(q) - q / t
        if np.all(trial[active] > 0):
            kappa[active] = trial[active]
            return kappa
        threshold = np.where(active, np.sqrt(q) / t, -np.inf)
        active[int(np.argmax(threshold))] = False


def solve_avg_mmse(
    R_T, R_R, S_Q, S_R, adm: Admissibility, budget: float, mode: AvgMmseMode, exhaustive: bool = True
) -> TrainingMatrix:
    """Minimize tr{I_adm C_MMSE} subject to tr(P P^H) = budget, for R_R = S_R.

    - IT_eq_RTinv: I_T = R_T^{-1}; eigenvalue orderings from the
      exhaustive search (heuristic beyond its guard), m* active directions.
    - IT_identity: I_T = I; transmit eigenvalues descending paired with
      temporal ascending, water-filled powers.
    """
    _check_budget(budget)
    if not _close(R_R, S_R):
        raise CaseAssumptionError("average MMSE design needs R_R = S_R", constraint="R_R == S_R")
    eig_T = herm_eig(R_T, "descending")
    eig_Q = herm_eig(S_Q, "ascending")
    n_T, B = eig_T.d.size, eig_Q.d.size
    if B < n_T:
        raise InfeasibleDesignError(f"B={B} is shorter than n_T={n_T}", constraint="B >= n_T")
    receive_factor = float(np.real(np.trace(adm.I_R @ np.asarray(S_R))))

    if mode == "IT_eq_RTinv":
        if not _close(adm.I_T, np.linalg.inv(R_T)):
            raise CaseAssumptionError("I_T does not match R_T^{-1}", constraint="I_T == R_T^{-1}")
        if exhaustive:
            try:
                order = optimal_ordering_exhaustive(eig_T.d, eig_Q.d, budget)
            except OrderingGuardError as exc:
                logger.warning("%s; falling back to heuristic ordering", exc)
                order = heuristic_ordering(eig_T.d, eig_Q.d, budget)
        else:
            order = heuristic_ordering(eig_T.d, eig_Q.d, budget)
        cols_T = list(order.perm_T)
        cols_Q = list(order.perm_Q[:n_T])
        gammas = eig_T.d[cols_T] / eig_Q.d[cols_Q]
        kappa = water_fill_mmse(gammas, budget, order.m_star)
        P = (eig_T.U[:, cols_T] * np.sqrt(kappa)) @ eig_Q.U[:, cols_Q].conj().T
        return TrainingMatrix(P, objective=order.objective * receive_factor)

    if mode == "IT_identity":
        if not _close(adm.I_T, np.eye(n_T)):
            raise CaseAssumptionError("I_T is not the identity", constraint="I_T == I")
        t = eig_T.d
        q = eig_Q.d[:n_T]
        kappa = _identity_water_fill(t, q, budget)
        P = (eig_T.U * np.sqrt(kappa)) @ eig_Q.U[:, :n_T].conj().T
        objective = float(np.sum(t / (1.0 + kappa * t / q))) * receive_factor
        return TrainingMatrix(P, objective=objective)

    raise ValueError(f"unknown average MMSE mode {mode!r}")


def avg_mmse_objective(P, R: KroneckerCov, S: KroneckerCov, adm: Admissibility) -> float:
    """tr{I_adm (R^{-1} + P̃^H S^{-1} P̃)^{-1}} assembled in full."""
    info = hermitian_part(kron_sum(mmse_information(P, S, R)))
    cov = linalg.cho_solve(linalg.cho_factor(info), np.eye(info.shape[0]))
    return float(np.real(np.trace(adm.full() @ cov)))


def solve_avg_mmse_numeric(
    R: KroneckerCov, S: KroneckerCov, adm: Admissibility, budget: float, restarts: int = 2, seed: int = 0
) -> TrainingMatrix:
    """Numerical minimizer of the average MMSE cost for any Kronecker I_adm.

    Works on the energy-normalized parameterization P = √budget·X/‖X‖_F
    with analytic gradients and L-BFGS; the first start is white training,
    the others are seeded random draws.
    """
    _check_budget(budget)
    n_T, B = R.n_left, S.n_left
    n_R = S.n_right
    size = n_T * B
    scale = np.sqrt(budget)
    W = S.left_inv
    C = S.right_inv
    R_inv = kron(R.left_inv.T, R.right_inv)
    I_adm = adm.full()

    def unpack(x):
        X = (x[:size] + 1j * x[size:]).reshape(n_T, B)
        return scale * X / np.linalg.norm(x)

    def cost(x):
        P = unpack(x)
        G = P @ W @ P.conj().T
        info = R_inv + kron(G.T, C)
        info_inv = np.linalg.inv((info + info.conj().T) / 2)
        value = float(np.real(np.trace(I_adm @ info_inv)))
        K = info_inv @ I_adm @ info_inv
        M = np.einsum("biaj,ji->ba", K.reshape(n_T, n_R, n_T, n_R), C)
        A = -2.0 * W @ P.conj().T @ M.T
        g = np.concatenate([np.real(A.T).ravel(), -np.imag(A.T).ravel()])
        norm = np.linalg.norm(x)
        grad = (scale / norm) * (g - x * (x @ g) / norm ** 2)
        return value, grad

    white = white_training(n_T, B, budget).P
    starts = [np.concatenate([np.real(white).ravel(), np.imag(white).ravel()])]
    rng = make_rng(seed, 0, "optimizer")
    starts += [rng.standard_normal(2 * size) for _ in range(max(restarts - 1, 0))]

    best = None
    for x0 in starts:
        res = optimize.minimize(cost, x0, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
    return TrainingMatrix(unpack(best.x), objective=float(best.fun))


# ──────────────────────────────────────────────
# Baselines and energy utilities
# ──────────────────────────────────────────────
def _random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(n, random_state=rng)


def white_training(n_T: int, B: int, energy: float, rng: Optional[np.random.Generator] = None) -> TrainingMatrix:
    """Equal singular values √(energy/n_T); random unitary factors when `rng` is given."""
    if B < n_T:
        raise InfeasibleDesignError(f"white training needs B >= n_T, got B={B}, n_T={n_T}", constraint="B >= n_T")
    P = np.zeros((n_T, B), dtype=complex)
    P[np.arange(n_T), np.arange(n_T)] = np.sqrt(energy / n_T)
    if rng is not None:
        P = _random_unitary(n_T, rng) @ P @ _random_unitary(B, rng).conj().T
    return TrainingMatrix(P)


def equalize_energy(P_ref: Union[TrainingMatrix, float], P: TrainingMatrix) -> TrainingMatrix:
    """Rescale P to the energy of P_ref (a design or a bare energy)."""
    target = P_ref.energy if isinstance(P_ref, TrainingMatrix) else float(P_ref)
    if P.energy == 0.0:
        raise DegenerateInputError("cannot rescale an all-zero training matrix")
    return TrainingMatrix(P.P * np.sqrt(target / P.energy), status=P.status)
