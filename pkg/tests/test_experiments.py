"""Tests for the Monte Carlo harness, QPSK link and CSV output."""

import sys
import tempfile
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
from scipy import stats

from src.admissibility import iadm_channel_mse
from src.channel_model import make_rng
from src.config import load_config
from src.designs import solve_adgpp, solve_avg_mvu
from src.errors import DimensionError, ResultsWriteError
from src.experiments import (
    CSV_HEADER,
    CurvePoint,
    build_statistics,
    build_weights,
    db_to_linear,
    design_set,
    emit_csv,
    qpsk_roundtrip,
    read_csv,
    reduce_trials,
    run_equalization,
    run_experiment,
    run_l_optimality,
    run_nmse_vs_gamma,
    run_outage,
    run_zf,
    run_zf_ber,
    sibling_path,
)
from tests.runner import run_tests


def _assert_equal_energies(curves):
    for point in curves:
        values = list(point.energies.values())
        assert values, f"no schemes at x={point.x}"
        assert np.allclose(values, values[0], rtol=1e-9), f"unequal energies at x={point.x}: {point.energies}"


# ──────────────────────────────────────────────
# Statistics and design sets
# ──────────────────────────────────────────────
def test_build_statistics_shares_receive_factor():
    cfg = load_config("nmse")
    st = build_statistics(cfg)
    assert st.R.n_left == 4 and st.R.n_right == 2 and st.S.n_left == 6, "wrong factor sizes"
    assert st.receive_matched, "nmse preset has R_R = S_R"
    assert not build_statistics(load_config("eq")).receive_matched, "eq preset has R_R != S_R"
    print("  ✓ test_build_statistics_shares_receive_factor passed")


def test_prior_sufficient_reference_falls_back():
    cfg = load_config("nmse")
    st = build_statistics(cfg)
    adm = iadm_channel_mse(cfg.n_t, cfg.n_r)
    designs = design_set("asgpp", ["asgpp", "avg_mmse_mse", "white"], st, adm, 1e-3, cfg.seed)
    assert list(designs) == ["avg_mmse_mse", "white"], f"prior-sufficient scheme should be omitted: {list(designs)}"
    reference = solve_adgpp(st.S.left, st.S.right, adm, 1e-3).energy
    for name, design in designs.items():
        assert np.isclose(design.energy, reference), f"{name} should use the MVU guaranteed energy"
    print("  ✓ test_prior_sufficient_reference_falls_back passed")


def test_reduce_trials_drops_partial_schemes():
    outcomes = [({"a": 1.0, "b": 2.0}, {"a": 5.0, "b": 5.0}), ({"a": 3.0}, {"a": 5.0})]
    point = reduce_trials(0.0, outcomes, ["a", "b"], seed=9)
    assert list(point.means) == ["a"], "scheme missing from a trial should be dropped"
    assert point.means["a"] == 2.0 and np.isclose(point.stderrs["a"], 1.0), "mean 2, stderr std/√2 = 1"
    single = reduce_trials(0.0, outcomes[:1], ["a", "b"], seed=9)
    assert single.stderrs == {"a": 0.0, "b": 0.0}, "one trial has zero standard error"
    print("  ✓ test_reduce_trials_drops_partial_schemes passed")


# ──────────────────────────────────────────────
# Experiments (small trial counts)
# ──────────────────────────────────────────────
def test_nmse_run_is_deterministic_and_fair():
    cfg = load_config("nmse", overrides={"trials": 4, "gamma_grid_db": "0, 10"})
    first = run_nmse_vs_gamma(cfg)
    assert [p.x for p in first] == [0.0, 10.0], "one point per grid value"
    assert set(first[0].means) == {"asgpp", "avg_mmse_mse", "white"}, f"schemes {set(first[0].means)}"
    _assert_equal_energies(first)
    assert first[1].energies["asgpp"] > first[0].energies["asgpp"], "higher accuracy needs more energy"

    threaded = run_nmse_vs_gamma(load_config("nmse", overrides={"trials": 4, "gamma_grid_db": "0, 10", "threads": 3}))
    for a, b in zip(first, threaded):
        assert a.means == b.means and a.stderrs == b.stderrs, "threading changed the results"
    print("  ✓ test_nmse_run_is_deterministic_and_fair passed")


def test_l_optimality_run():
    cfg = load_config("lopt", overrides={"trials": 3, "gamma_grid_db": "0"})
    curves = run_l_optimality(cfg)
    assert set(curves[0].means) == {"adgpp", "avg_mvu_appl", "avg_mvu_mse", "white"}, "MVU scheme set"
    assert all(v >= 0 for v in curves[0].means.values()), "J_W is nonnegative"
    _assert_equal_energies(curves)
    print("  ✓ test_l_optimality_run passed")


def test_outage_vanishes_at_high_power():
    cfg = load_config("outage", overrides={"trials": 20, "power_grid_db": "40"})
    curves = run_outage(cfg)
    assert all(v == 0.0 for v in curves[0].means.values()), f"outage should vanish: {curves[0].means}"
    assert np.allclose(list(curves[0].energies.values()), 1e4), "all schemes use the grid power"
    print("  ✓ test_outage_vanishes_at_high_power passed")


def test_equalization_run():
    for estimator in ("mvu", "mmse"):
        cfg = load_config("eq", overrides={"trials": 2, "gamma_grid_db": "0", "estimator": estimator, "grid_size": 64})
        curves = run_experiment(cfg).curves
        assert len(curves) == 1 and len(curves[0].means) == 4, f"{estimator}: four schemes expected"
        assert all(v >= 0 for v in curves[0].means.values()), "excess MSE is nonnegative"
        _assert_equal_energies(curves)
    print("  ✓ test_equalization_run passed")


def test_zf_run_with_ber_series():
    overrides = {
        "n_t": 2, "n_r": 2, "b": 3, "trials": 2, "gamma_grid_db": "0", "estimator": "mvu",
        "ber_snr_grid_db": "0, 10", "bits": 40,
    }
    result = run_experiment(load_config("zf", overrides=overrides))
    assert len(result.curves) == 1, "one ZF-MSE point"
    ber = result.extra["ber"]
    assert [p.x for p in ber] == [0.0, 10.0], "one BER point per SNR"
    assert "clairvoyant" in ber[0].means, "clairvoyant baseline missing"
    for point in ber:
        assert all(0.0 <= v <= 1.0 for v in point.means.values()), "BER must be a probability"
    print("  ✓ test_zf_run_with_ber_series passed")


def test_zf_preset_at_low_accuracy():
    cfg = load_config("zf", overrides={"trials": 3, "gamma_grid_db": "-10"})
    curves = run_zf(cfg)
    assert len(curves) == 1 and curves[0].means, "one ZF point with at least one scheme"
    for name, value in curves[0].means.items():
        assert np.isfinite(value) and value >= 0, f"{name}: ZF excess MSE {value}"
    _assert_equal_energies(curves)
    print("  ✓ test_zf_preset_at_low_accuracy passed")


def test_equalization_designs_coincide_without_evolution():
    overrides = {
        "trials": 20, "gamma_grid_db": "0, 10", "estimator": "mvu", "mu": 0.0, "oracle_design": True,
        "grid_size": 64,
    }
    for point in run_equalization(load_config("eq", overrides=overrides)):
        appl, mse = point.means["avg_mvu_appl"], point.means["avg_mvu_mse"]
        assert np.isclose(appl, mse, rtol=1e-12), f"x={point.x}: {appl:.6e} vs {mse:.6e}"
    print("  ✓ test_equalization_designs_coincide_without_evolution passed")


# ──────────────────────────────────────────────
# Scheme orderings (full trial counts)
# ──────────────────────────────────────────────
def _combined_stderr(point, a, b):
    return float(np.hypot(point.stderrs[a], point.stderrs[b]))


def test_nmse_guaranteed_tracks_average_design():
    cfg = load_config("nmse", overrides={"trials": 2000})
    for point in run_nmse_vs_gamma(cfg):
        means = point.means
        ratio = means["asgpp"] / means["avg_mmse_mse"]
        assert 0.95 <= ratio <= 1.10, f"x={point.x}: NMSE ratio {ratio:.4f}"
        gap = means["white"] - max(means["asgpp"], means["avg_mmse_mse"])
        assert gap > 3 * point.stderrs["white"], f"x={point.x}: white training only {gap:.3e} worse"
    print("  ✓ test_nmse_guaranteed_tracks_average_design passed")


def test_l_optimality_application_weighting_wins():
    cfg = load_config("lopt", overrides={"trials": 2000})
    for point in run_l_optimality(cfg):
        gap = point.means["avg_mvu_mse"] - point.means["avg_mvu_appl"]
        se = _combined_stderr(point, "avg_mvu_mse", "avg_mvu_appl")
        assert gap > 2 * se, f"x={point.x}: gap {gap:.3e} vs standard error {se:.3e}"
    print("  ✓ test_l_optimality_application_weighting_wins passed")


def test_outage_average_design_below_guaranteed():
    base = load_config("outage")
    st = build_statistics(base)
    adm = build_weights(base)
    # Training power at which the average design's mean J_W equals the threshold 1/γ.
    unit = solve_avg_mvu(adm.I_T, st.S.left, 1.0).objective * float(np.real(np.trace(adm.I_R @ st.S.right)))
    center = 10 * np.log10(unit * db_to_linear(base.gamma_db))
    grid = [round(center + offset, 3) for offset in (-2, -1, 0, 1, 2, 3)]
    cfg = load_config("outage", overrides={"trials": 10000, "power_grid_db": grid, "schemes": "adgpp, avg_mvu_appl"})
    curves = run_outage(cfg)
    clear = 0
    for point in curves:
        gap = point.means["adgpp"] - point.means["avg_mvu_appl"]
        se = _combined_stderr(point, "adgpp", "avg_mvu_appl")
        assert gap >= -2 * se, f"x={point.x}: average design outage above guaranteed by {-gap:.4f}"
        clear += gap > 2 * se
    assert clear >= len(curves) / 2, f"only {clear} of {len(curves)} points separate by 2 standard errors"
    print("  ✓ test_outage_average_design_below_guaranteed passed")


def test_zf_ber_application_design_wins_at_low_accuracy():
    diffs = []
    for seed in range(200):
        overrides = {
            "trials": 1, "seed": seed, "ber_gamma_db": -10.0, "ber_snr_grid_db": "20", "bits": 1000,
            "schemes": "avg_mmse_appl, avg_mmse_mse",
        }
        point = run_zf_ber(load_config("zf", overrides=overrides))[0]
        diffs.append(point.means["avg_mmse_mse"] - point.means["avg_mmse_appl"])
    diffs = np.array(diffs)
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert diffs.mean() > 2 * se, f"paired BER gain {diffs.mean():.4f} vs standard error {se:.4f}"
    print("  ✓ test_zf_ber_application_design_wins_at_low_accuracy passed")


def test_zf_ber_schemes_coincide_at_high_accuracy():
    overrides = {
        "trials": 200, "ber_gamma_db": 5.0, "ber_snr_grid_db": "0",
        "schemes": "asgpp, avg_mmse_appl, avg_mmse_mse",
    }
    point = run_zf_ber(load_config("zf", overrides=overrides))[0]
    names = [name for name in point.means if name != "clairvoyant"]
    assert len(names) >= 2, f"designed schemes missing: {names}"
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = abs(point.means[a] - point.means[b])
            assert gap <= 3 * _combined_stderr(point, a, b), f"{a} vs {b}: BER gap {gap:.4f}"
    print("  ✓ test_zf_ber_schemes_coincide_at_high_accuracy passed")


# ──────────────────────────────────────────────
# QPSK link
# ──────────────────────────────────────────────
def test_qpsk_perfect_link():
    rng = make_rng(0, 0, "data")
    bits = rng.integers(0, 2, 202)
    H = np.array([[1.0, 0.3], [0.2, 0.9]], dtype=complex)
    assert qpsk_roundtrip(bits, H, H, 1e12, rng) == 0, "perfect CSI and no noise should be error free"
    try:
        qpsk_roundtrip(bits[:3], H, H, 1.0, rng)
        assert False, "odd bit count should raise"
    except DimensionError:
        pass
    print("  ✓ test_qpsk_perfect_link passed")


def test_qpsk_noise_limits():
    rng = make_rng(1, 0, "data")
    bits = rng.integers(0, 2, 20000)
    H = np.eye(2, dtype=complex)
    ber = qpsk_roundtrip(bits, H, H, 1e-6, rng) / bits.size
    assert abs(ber - 0.5) < 0.03, f"BER at vanishing SNR should be 1/2, got {ber}"

    rng = make_rng(2, 0, "data")
    bits = rng.integers(0, 2, 40000)
    H = np.ones((1, 1), dtype=complex)
    ber = qpsk_roundtrip(bits, H, H, 1.0, rng) / bits.size
    expected = stats.norm.sf(1.0)
    assert abs(ber - expected) < 0.01, f"scalar AWGN BER {ber:.4f} vs Q(√snr) = {expected:.4f}"
    print("  ✓ test_qpsk_noise_limits passed")


# ──────────────────────────────────────────────
# CSV output
# ──────────────────────────────────────────────
def test_csv_roundtrip_is_exact():
    curves = [
        CurvePoint(-10.0, {"asgpp": 1 / 3, "white": 1e-300}, {"asgpp": 0.1, "white": 0.0},
                   {"asgpp": np.pi, "white": np.pi}, 5, 2012),
        CurvePoint(2.5, {"asgpp": 2 / 7}, {"asgpp": np.e}, {"asgpp": 1e5 / 3}, 5, 2012),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "nested" / "out.csv"
        emit_csv(curves, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(CSV_HEADER), f"bad header {lines[0]}"
        assert len(lines) == 4, "one row per (x, scheme)"
        back = read_csv(path)

        empty = Path(tmp) / "empty.csv"
        emit_csv([], empty)
        assert empty.read_text(encoding="utf-8").splitlines() == [",".join(CSV_HEADER)], "header-only file"

    assert len(back) == 2, "points not regrouped"
    for a, b in zip(curves, back):
        assert a.x == b.x and a.means == b.means and a.stderrs == b.stderrs and a.energies == b.energies, \
            "values did not survive the round trip"
        assert a.trials == b.trials and a.seed == b.seed, "metadata did not survive the round trip"
    print("  ✓ test_csv_roundtrip_is_exact passed")


def test_csv_write_failure_names_path():
    with tempfile.TemporaryDirectory() as tmp:
        blocker = Path(tmp) / "file"
        blocker.write_text("x", encoding="utf-8")
        try:
            emit_csv([], blocker / "out.csv")
            assert False, "writing below a regular file should fail"
        except ResultsWriteError as e:
            assert "out.csv" in str(e), f"path missing from error: {e}"
    assert sibling_path("results/zf.csv", "ber") == Path("results/zf_ber.csv"), "BER file naming"
    print("  ✓ test_csv_write_failure_names_path passed")


def run_all_tests():
    return run_tests([
        test_build_statistics_shares_receive_factor,
        test_prior_sufficient_reference_falls_back,
        test_reduce_trials_drops_partial_schemes,
        test_nmse_run_is_deterministic_and_fair,
        test_l_optimality_run,
        test_outage_vanishes_at_high_power,
        test_equalization_run,
        test_zf_run_with_ber_series,
        test_zf_preset_at_low_accuracy,
        test_equalization_designs_coincide_without_evolution,
        test_nmse_guaranteed_tracks_average_design,
        test_l_optimality_application_weighting_wins,
        test_outage_average_design_below_guaranteed,
        test_zf_ber_application_design_wins_at_low_accuracy,
        test_zf_ber_schemes_coincide_at_high_accuracy,
        test_qpsk_perfect_link,
        test_qpsk_noise_limits,
        test_csv_roundtrip_is_exact,
        test_csv_write_failure_names_path,
    ], "EXPERIMENT TESTS")


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
