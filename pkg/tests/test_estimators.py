"""Tests for the MVU and MMSE channel estimators."""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from src.channel_model import KroneckerCov, exponential_cov, make_rng, sample_channel, simulate_training
from src.errors import DegenerateInputError, RankDeficientError
from src.estimators import (
    error_quadratic_form,
    in_confidence_set,
    mmse_estimate,
    mvu_estimate,
    nmse,
    uncertainty_radius,
)
from src.matalg import kron, unvec, vec
from tests.runner import run_tests

N_T, N_R, B = 3, 2, 4


def _setup(seed=0):
    R = KroneckerCov(exponential_cov(N_T, 0.8, 0.2), exponential_cov(N_R, 0.6))
    S = KroneckerCov(exponential_cov(B, 0.5), exponential_cov(N_R, 0.6))
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((N_T, B)) + 1j * rng.standard_normal((N_T, B))
    H = sample_channel(R, make_rng(seed, 0, "channel")).H
    return R, S, P, H


# ──────────────────────────────────────────────
# MVU
# ──────────────────────────────────────────────
def test_mvu_recovers_noiseless_channel():
    _, S, P, H = _setup()
    result = mvu_estimate(H @ P, P, S)
    assert np.allclose(result.Hhat, H, atol=1e-10), "noise-free MVU estimate should equal H"
    print("  ✓ test_mvu_recovers_noiseless_channel passed")


def test_mvu_information_matches_full_assembly():
    _, S, P, H = _setup(1)
    Y = simulate_training(H, P, S, make_rng(1, 0, "noise"))
    result = mvu_estimate(Y, P, S)
    P_tilde = kron(P.T, np.eye(N_R))
    S_inv = np.linalg.inv(S.full())
    info = P_tilde.conj().T @ S_inv @ P_tilde
    assert np.allclose(result.info, info, atol=1e-9), "MVU information differs from P̃^H S^{-1} P̃"
    h = np.linalg.solve(info, P_tilde.conj().T @ S_inv @ vec(Y))
    assert np.allclose(result.Hhat, unvec(h, N_R, N_T), atol=1e-9), "MVU estimate differs from full formula"
    print("  ✓ test_mvu_information_matches_full_assembly passed")


def test_mvu_rank_errors():
    _, S, _, _ = _setup()
    try:
        mvu_estimate(np.zeros((N_R, 2)), np.ones((N_T, 2)), KroneckerCov(np.eye(2), np.eye(N_R)))
        assert False, "B < n_T should raise"
    except RankDeficientError as e:
        assert e.dimension == "B", f"wrong dimension {e.dimension}"
    P = np.ones((N_T, B))
    try:
        mvu_estimate(np.zeros((N_R, B)), P, S)
        assert False, "rank-one pilot should raise"
    except RankDeficientError as e:
        assert e.dimension == "n_T", f"wrong dimension {e.dimension}"
    print("  ✓ test_mvu_rank_errors passed")


# ──────────────────────────────────────────────
# MMSE
# ──────────────────────────────────────────────
def test_mmse_matches_full_formula():
    R, S, P, H = _setup(2)
    Y = simulate_training(H, P, S, make_rng(2, 0, "noise"))
    result = mmse_estimate(Y, P, S, R)
    P_tilde = kron(P.T, np.eye(N_R))
    S_inv = np.linalg.inv(S.full())
    info = np.linalg.inv(R.full()) + P_tilde.conj().T @ S_inv @ P_tilde
    h = np.linalg.solve(info, P_tilde.conj().T @ S_inv @ vec(Y))
    assert np.allclose(result.Hhat, unvec(h, N_R, N_T), atol=1e-9), "MMSE estimate differs from full formula"
    assert np.allclose(result.info, info, atol=1e-9), "MMSE information differs from R^{-1} + P̃^H S^{-1} P̃"
    print("  ✓ test_mmse_matches_full_formula passed")


def test_mmse_approaches_mvu_at_high_energy():
    R, S, P, H = _setup(3)
    P = 1e5 * P
    Y = simulate_training(H, P, S, make_rng(3, 0, "noise"))
    a = mmse_estimate(Y, P, S, R).Hhat
    b = mvu_estimate(Y, P, S).Hhat
    assert np.linalg.norm(a - b) <= 1e-5 * np.linalg.norm(b), "MMSE and MVU should agree at high energy"
    print("  ✓ test_mmse_approaches_mvu_at_high_energy passed")


def test_mmse_zero_pilot_returns_prior_mean():
    R, S, _, H = _setup(4)
    P = np.zeros((N_T, B))
    Y = simulate_training(H, P, S, make_rng(4, 0, "noise"))
    result = mmse_estimate(Y, P, S, R)
    assert np.allclose(result.Hhat, 0.0), "without training the MMSE estimate is the prior mean 0"
    print("  ✓ test_mmse_zero_pilot_returns_prior_mean passed")


# ──────────────────────────────────────────────
# Metrics and confidence ellipsoid
# ──────────────────────────────────────────────
def test_nmse():
    _, _, _, H = _setup()
    assert nmse(H, H) == 0.0, "NMSE of a perfect estimate is 0"
    assert np.isclose(nmse(H, np.zeros_like(H)), 1.0), "NMSE of the zero estimate is 1"
    try:
        nmse(np.zeros((2, 2)), np.ones((2, 2)))
        assert False, "zero channel should raise"
    except DegenerateInputError:
        pass
    print("  ✓ test_nmse passed")


def test_confidence_set_coverage():
    R, S, P, _ = _setup(5)
    trials = 4000
    estimators = {
        "mvu": lambda Y: mvu_estimate(Y, P, S),
        "mmse": lambda Y: mmse_estimate(Y, P, S, R),
    }
    for name, fit in estimators.items():
        for alpha in (0.9, 0.99):
            hits = 0
            for t in range(trials):
                H = sample_channel(R, make_rng(5, t, "channel")).H
                Y = simulate_training(H, P, S, make_rng(5, t, "noise"))
                result = fit(Y)
                hits += in_confidence_set(result.Hhat - H, result, alpha)
            coverage = hits / trials
            assert abs(coverage - alpha) < 0.02, f"{name}: coverage {coverage:.4f} far from {alpha}"
    assert np.isclose(uncertainty_radius(0.5, 1, 1), np.log(2)), "½χ²_0.5(2) should be ln 2"
    print("  ✓ test_confidence_set_coverage passed")


def test_error_quadratic_form_matches_full():
    _, S, P, H = _setup(6)
    result = mvu_estimate(H @ P, P, S)
    X = np.arange(N_R * N_T).reshape(N_R, N_T) * (1 + 0.5j)
    x = vec(X)
    full = float(np.real(x.conj() @ result.info @ x))
    assert np.isclose(error_quadratic_form(X, result.terms), full), "factor-form quadratic differs from full"
    print("  ✓ test_error_quadratic_form_matches_full passed")


def run_all_tests():
    return run_tests([
        test_mvu_recovers_noiseless_channel,
        test_mvu_information_matches_full_assembly,
        test_mvu_rank_errors,
        test_mmse_matches_full_formula,
        test_mmse_approaches_mvu_at_high_energy,
        test_mmse_zero_pilot_returns_prior_mean,
        test_nmse,
        test_confidence_set_coverage,
        test_error_quadratic_form_matches_full,
    ], "ESTIMATOR TESTS")


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
