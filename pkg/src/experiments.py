"""Monte Carlo harness for the training-design studies.

Each experiment sweeps an x-axis (accuracy γ or training power, in dB),
builds the competing pilot designs at equal training energy, runs
`cfg.trials` independent channel/noise draws and reduces the per-trial
metric to a mean and standard error. Trials draw from counter-based RNG
streams keyed on (seed, trial, stream), so results do not depend on the
thread schedule, and all schemes inside a trial share the same channel,
noise and data draws.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.admissibility import (
    Admissibility,
    NoiseSpectrum,
    ar1_noise_spectrum,
    iadm_channel_mse,
    iadm_equalization,
    iadm_l_optimality,
    iadm_zf,
    jce_exact,
    jzf_exact,
)
from src.channel_model import (
    KroneckerCov,
    complex_gaussian,
    evolve_channel,
    exponential_cov,
    make_rng,
    random_psd,
    sample_channel,
    simulate_training,
)
from src.config import ExperimentConfig
from src.designs import (
    TrainingMatrix,
    equalize_energy,
    guaranteed_constant,
    solve_adgpp,
    solve_asgpp,
    solve_avg_mmse,
    solve_avg_mmse_numeric,
    solve_avg_mvu,
    white_training,
)
from src.errors import ConfigError, DimensionError, ResultsWriteError
from src.estimators import mmse_estimate, mvu_estimate, nmse
from src.matalg import pinv

logger = logging.getLogger(__name__)

CSV_HEADER = ["x", "scheme", "metric_mean", "metric_stderr", "energy", "trials", "seed"]
LAMBDA_X = 1.0

MVU_SCHEMES = ["adgpp", "avg_mvu_appl", "avg_mvu_mse", "white"]
MMSE_SCHEMES = ["asgpp", "avg_mmse_appl", "avg_mmse_mse", "white"]

# (experiment, estimator) -> (guaranteed reference scheme, schemes compared)
SCHEME_SETS: Dict[Tuple[str, str], Tuple[str, List[str]]] = {
    ("nmse", "mmse"): ("asgpp", ["asgpp", "avg_mmse_mse", "white"]),
    ("nmse", "mvu"): ("adgpp", ["adgpp", "avg_mvu_mse", "white"]),
    ("lopt", "mvu"): ("adgpp", MVU_SCHEMES),
    ("lopt", "mmse"): ("asgpp", MMSE_SCHEMES),
    ("eq", "mvu"): ("adgpp", MVU_SCHEMES),
    ("eq", "mmse"): ("adgpp", ["adgpp", "avg_mmse_appl", "avg_mmse_mse", "white"]),
    ("zf", "mvu"): ("adgpp", MVU_SCHEMES),
    ("zf", "mmse"): ("asgpp", MMSE_SCHEMES),
    ("outage", "mvu"): ("adgpp", MVU_SCHEMES),
    ("outage", "mmse"): ("adgpp", ["adgpp", "avg_mmse_appl", "avg_mmse_mse", "white"]),
}


@dataclass(frozen=True, eq=False)
class CurvePoint:
    """Per-scheme mean metric, standard error and training energy at one x."""

    x: float
    means: Dict[str, float]
    stderrs: Dict[str, float]
    energies: Dict[str, float]
    trials: int
    seed: int


@dataclass
class ExperimentResult:
    curves: List[CurvePoint]
    extra: Dict[str, List[CurvePoint]] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Statistics:
    R: KroneckerCov
    S: KroneckerCov

    @property
    def receive_matched(self) -> bool:
        return _close(self.R.right, self.S.right)


def _close(A, B, tol: float = 1e-9) -> bool:
    return np.linalg.norm(A - B) <= tol * max(1.0, float(np.linalg.norm(B)))


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def build_statistics(cfg: ExperimentConfig) -> Statistics:
    """Exponential-model factors for the channel (R) and training noise (S)."""
    R_T = exponential_cov(cfg.n_t, cfg.rho_t, cfg.phase_t)
    R_R = exponential_cov(cfg.n_r, cfg.rho_r, cfg.phase_r)
    S_Q = exponential_cov(cfg.b, cfg.rho_q, cfg.phase_q)
    S_R = R_R if cfg.noise_matches_channel else exponential_cov(cfg.n_r, cfg.rho_s, cfg.phase_s)
    return Statistics(R=KroneckerCov(R_T, R_R), S=KroneckerCov(S_Q, S_R))


def build_weights(cfg: ExperimentConfig) -> Admissibility:
    """L-optimality weighting; seeded random PD weights unless identity is asked for."""
    if cfg.weights == "identity":
        return iadm_l_optimality(np.eye(cfg.n_t), np.eye(cfg.n_r))
    rng = make_rng(cfg.seed, 0, "weights")
    return iadm_l_optimality(random_psd(cfg.n_t, rng), random_psd(cfg.n_r, rng))


def data_spectrum(cfg: ExperimentConfig, stats: Statistics) -> NoiseSpectrum:
    sigma2 = LAMBDA_X / db_to_linear(cfg.snr_db)
    return ar1_noise_spectrum(stats.S.right, cfg.noise_temporal_r, sigma2, grid_size=cfg.grid_size)


def estimate(estimator: str, Y: np.ndarray, P: TrainingMatrix, stats: Statistics) -> np.ndarray:
    if estimator == "mvu":
        return mvu_estimate(Y, P, stats.S).Hhat
    return mmse_estimate(Y, P, stats.S, stats.R).Hhat


def scheme_set(cfg: ExperimentConfig) -> Tuple[str, List[str]]:
    guaranteed, schemes = SCHEME_SETS[(cfg.experiment, cfg.estimator)]
    if cfg.schemes:
        unknown = [s for s in cfg.schemes if s not in schemes]
        if unknown:
            raise ConfigError(f"schemes {unknown} are not available for {cfg.experiment}/{cfg.estimator}; pick from {schemes}")
        schemes = [s for s in schemes if s in cfg.schemes]
    return guaranteed, list(schemes)


# ──────────────────────────────────────────────
# Pilot design per scheme
# ──────────────────────────────────────────────
def _is_scaled_identity(M: np.ndarray) -> bool:
    return _close(M, np.real(np.trace(M)) / M.shape[0] * np.eye(M.shape[0]))


def _avg_mmse(stats: Statistics, adm: Admissibility, budget: float, seed: int) -> TrainingMatrix:
    """Closed form where the covariance structure admits one, numeric otherwise."""
    R_T, R_R = stats.R.left, stats.R.right
    S_Q, S_R = stats.S.left, stats.S.right
    if stats.receive_matched and _is_scaled_identity(adm.I_T):
        return solve_avg_mmse(R_T, R_R, S_Q, S_R, iadm_channel_mse(adm.n_T, adm.n_R), budget, "IT_identity")
    if stats.receive_matched and _close(adm.I_T, np.linalg.inv(R_T)):
        return solve_avg_mmse(R_T, R_R, S_Q, S_R, adm, budget, "IT_eq_RTinv")
    return solve_avg_mmse_numeric(stats.R, stats.S, adm, budget, seed=seed)


def guaranteed_design(name: str, stats: Statistics, adm: Admissibility, c: float) -> TrainingMatrix:
    if name == "adgpp":
        return solve_adgpp(stats.S.left, stats.S.right, adm, c)
    return solve_asgpp(stats.S.left, stats.S.right, stats.R.left, stats.R.right, adm, c, case="RR_eq_SR")


def budget_design(name: str, stats: Statistics, adm: Admissibility, budget: float, seed: int) -> TrainingMatrix:
    n_T, B = stats.R.n_left, stats.S.n_left
    if name == "avg_mvu_appl":
        design = solve_avg_mvu(adm.I_T, stats.S.left, budget)
    elif name == "avg_mvu_mse":
        design = solve_avg_mvu(np.eye(n_T), stats.S.left, budget)
    elif name == "avg_mmse_appl":
        design = _avg_mmse(stats, adm, budget, seed)
    elif name == "avg_mmse_mse":
        design = _avg_mmse(stats, iadm_channel_mse(n_T, stats.R.n_right), budget, seed)
    elif name == "white":
        design = white_training(n_T, B, budget)
    else:
        raise ConfigError(f"unknown budget-constrained scheme {name!r}")
    return equalize_energy(budget, design)


def design_set(
    guaranteed: str, schemes: Sequence[str], stats: Statistics, adm: Admissibility, c: float, seed: int
) -> Dict[str, TrainingMatrix]:
    """Guaranteed design plus every other scheme at its energy.

    When the prior alone satisfies the guaranteed constraint the reference
    energy falls back to the MVU guaranteed design and the guaranteed
    scheme is left out.
    """
    reference = guaranteed_design(guaranteed, stats, adm, c)
    designs: Dict[str, TrainingMatrix] = {}
    if reference.status == "prior_sufficient":
        budget = solve_adgpp(stats.S.left, stats.S.right, adm, c).energy
        logger.warning("%s needs no training at c=%.4g; using the MVU guaranteed energy %.4g", guaranteed, c, budget)
    else:
        budget = reference.energy
    for name in schemes:
        if name == guaranteed:
            if reference.status != "prior_sufficient":
                designs[name] = reference
        elif name == "adgpp":
            designs[name] = equalize_energy(budget, solve_adgpp(stats.S.left, stats.S.right, adm, c))
        else:
            designs[name] = budget_design(name, stats, adm, budget, seed)
    return designs


# ──────────────────────────────────────────────
# Trial execution and reduction
# ──────────────────────────────────────────────
TrialOutcome = Tuple[Dict[str, float], Dict[str, float]]


def map_trials(fn: Callable[[int], TrialOutcome], trials: int, threads: int) -> List[TrialOutcome]:
    """Run trials in order, or in a thread pool; results keep trial order."""
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def reduce_trials(x: float, outcomes: List[TrialOutcome], order: Sequence[str], seed: int) -> CurvePoint:
    """Mean and standard error per scheme; schemes missing from any trial are dropped."""
    n = len(outcomes)
    means, stderrs, energies = {}, {}, {}
    for name in order:
        if not all(name in metrics for metrics, _ in outcomes):
            continue
        values = np.array([metrics[name] for metrics, _ in outcomes], dtype=float)
        means[name] = float(np.mean(values))
        stderrs[name] = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        energies[name] = float(np.mean([energy[name] for _, energy in outcomes]))
    return CurvePoint(x=float(x), means=means, stderrs=stderrs, energies=energies, trials=n, seed=seed)


def _energies(designs: Dict[str, TrainingMatrix]) -> Dict[str, float]:
    return {name: design.energy for name, design in designs.items()}


def _static_sweep(
    cfg: ExperimentConfig,
    stats: Statistics,
    grid: Sequence[float],
    designs_at: Callable[[float], Dict[str, TrainingMatrix]],
    metric: Callable[[np.ndarray, np.ndarray], float],
) -> List[CurvePoint]:
    """Sweep where the designs depend on the grid point only."""
    curves = []
    for x in grid:
        designs = designs_at(x)
        energies = _energies(designs)

        def trial(t: int, designs=designs, energies=energies) -> TrialOutcome:
            H = sample_channel(stats.R, make_rng(cfg.seed, t, "channel")).H
            metrics = {}
            for name, P in designs.items():
                Y = simulate_training(H, P, stats.S, make_rng(cfg.seed, t, "noise"))
                metrics[name] = metric(H, estimate(cfg.estimator, Y, P, stats))
            return metrics, energies

        curves.append(reduce_trials(x, map_trials(trial, cfg.trials, cfg.threads), list(designs), cfg.seed))
        logger.info("x=%g done (%d trials)", x, cfg.trials)
    return curves


# ──────────────────────────────────────────────
# Experiments
# ──────────────────────────────────────────────
def run_nmse_vs_gamma(cfg: ExperimentConfig) -> List[CurvePoint]:
    """Channel-estimation NMSE versus accuracy γ, R_R = S_R."""
    stats = build_statistics(cfg)
    adm = iadm_channel_mse(cfg.n_t, cfg.n_r)
    guaranteed, schemes = scheme_set(cfg)

    def designs_at(g_db: float):
        c = guaranteed_constant(db_to_linear(g_db), cfg.alpha, cfg.n_t, cfg.n_r)
        return design_set(guaranteed, schemes, stats, adm, c, cfg.seed)

    return _static_sweep(cfg, stats, cfg.gamma_grid_db, designs_at, nmse)


def run_l_optimality(cfg: ExperimentConfig) -> List[CurvePoint]:
    """Mean J_W = vec^H(H̃)(W1 ⊗ W2)vec(H̃) versus γ."""
    stats = build_statistics(cfg)
    adm = build_weights(cfg)
    guaranteed, schemes = scheme_set(cfg)

    def designs_at(g_db: float):
        c = guaranteed_constant(db_to_linear(g_db), cfg.alpha, cfg.n_t, cfg.n_r)
        return design_set(guaranteed, schemes, stats, adm, c, cfg.seed)

    return _static_sweep(cfg, stats, cfg.gamma_grid_db, designs_at, lambda H, Hhat: adm.quadratic_form(Hhat - H))


def run_outage(cfg: ExperimentConfig) -> List[CurvePoint]:
    """Empirical Pr{J_W > 1/γ} versus training power, γ fixed."""
    stats = build_statistics(cfg)
    adm = build_weights(cfg)
    _, schemes = scheme_set(cfg)
    gamma = db_to_linear(cfg.gamma_db)
    c = guaranteed_constant(gamma, cfg.alpha, cfg.n_t, cfg.n_r)
    shape = solve_adgpp(stats.S.left, stats.S.right, adm, c)

    def designs_at(p_db: float):
        budget = db_to_linear(p_db)
        designs = {}
        for name in schemes:
            if name == "adgpp":
                designs[name] = equalize_energy(budget, shape)
            else:
                designs[name] = budget_design(name, stats, adm, budget, cfg.seed)
        return designs

    return _static_sweep(
        cfg, stats, cfg.power_grid_db, designs_at, lambda H, Hhat: float(adm.quadratic_form(Hhat - H) > 1.0 / gamma)
    )


def _bootstrap_estimate(cfg: ExperimentConfig, stats: Statistics, t: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H_0, Ĥ_0 from white training, H_1 after one block of evolution)."""
    H0 = sample_channel(stats.R, make_rng(cfg.seed, t, "channel")).H
    pilot = white_training(cfg.n_t, cfg.b, cfg.bootstrap_energy)
    Y0 = simulate_training(H0, pilot, stats.S, make_rng(cfg.seed, t, "bootstrap"))
    H0_hat = estimate(cfg.estimator, Y0, pilot, stats)
    H1 = evolve_channel(H0, cfg.mu, stats.R, make_rng(cfg.seed, t, "evolution"))
    return H0, H0_hat, H1


def _tracking_estimates(
    cfg: ExperimentConfig,
    stats: Statistics,
    t: int,
    g_db: float,
    adm_from: Callable[[np.ndarray], Admissibility],
) -> Tuple[np.ndarray, Dict[str, np.ndarray], Dict[str, float]]:
    """Design from the previous block's estimate, then estimate the current block."""
    _, H0_hat, H1 = _bootstrap_estimate(cfg, stats, t)
    adm = adm_from(H1 if cfg.oracle_design else H0_hat)
    guaranteed, schemes = scheme_set(cfg)
    c = guaranteed_constant(db_to_linear(g_db), cfg.alpha, cfg.n_t, cfg.n_r)
    designs = design_set(guaranteed, schemes, stats, adm, c, cfg.seed)
    estimates = {}
    for name, P in designs.items():
        Y1 = simulate_training(H1, P, stats.S, make_rng(cfg.seed, t, "noise"))
        estimates[name] = estimate(cfg.estimator, Y1, P, stats)
    return H1, estimates, _energies(designs)


def _tracking_sweep(
    cfg: ExperimentConfig,
    stats: Statistics,
    adm_from: Callable[[np.ndarray], Admissibility],
    metric: Callable[[np.ndarray, np.ndarray], float],
) -> List[CurvePoint]:
    curves = []
    for g_db in cfg.gamma_grid_db:

        def trial(t: int, g_db=g_db) -> TrialOutcome:
            H1, estimates, energies = _tracking_estimates(cfg, stats, t, g_db, adm_from)
            return {name: metric(H1, Hhat) for name, Hhat in estimates.items()}, energies

        _, schemes = scheme_set(cfg)
        curves.append(reduce_trials(g_db, map_trials(trial, cfg.trials, cfg.threads), schemes, cfg.seed))
        logger.info("gamma=%g dB done (%d trials)", g_db, cfg.trials)
    return curves


def run_equalization(cfg: ExperimentConfig) -> List[CurvePoint]:
    """Excess MSE of the Wiener equalizer built from the channel estimate."""
    stats = build_statistics(cfg)
    spectrum = data_spectrum(cfg, stats)
    return _tracking_sweep(
        cfg,
        stats,
        lambda H: iadm_equalization(H, LAMBDA_X, spectrum, cfg.regime),
        lambda H, Hhat: jce_exact(H, Hhat - H, LAMBDA_X, spectrum),
    )


def run_zf(cfg: ExperimentConfig) -> List[CurvePoint]:
    """Exact ZF-precoding MSE versus γ; n_T = n_R.

    At low γ the MMSE guaranteed design can leave transmit directions
    unpiloted, so Ĥ loses rank; those trials are scored with the
    pseudoinverse precoder instead of aborting the sweep.
    """
    if cfg.n_t != cfg.n_r:
        raise ConfigError(f"zero-forcing runs need n_T = n_R, got {cfg.n_t} and {cfg.n_r}")
    stats = build_statistics(cfg)
    return _tracking_sweep(
        cfg,
        stats,
        lambda H: iadm_zf(H, LAMBDA_X),
        lambda H, Hhat: jzf_exact(H, Hhat - H, LAMBDA_X, allow_rank_deficient=True),
    )


def run_zf_ber(cfg: ExperimentConfig) -> List[CurvePoint]:
    """QPSK BER over the data-SNR grid with estimates designed at `ber_gamma_db`."""
    if cfg.n_t != cfg.n_r:
        raise ConfigError(f"zero-forcing runs need n_T = n_R, got {cfg.n_t} and {cfg.n_r}")
    stats = build_statistics(cfg)
    _, schemes = scheme_set(cfg)
    order = schemes + ["clairvoyant"]

    def trial(t: int) -> List[TrialOutcome]:
        H1, estimates, energies = _tracking_estimates(cfg, stats, t, cfg.ber_gamma_db, lambda H: iadm_zf(H, LAMBDA_X))
        estimates["clairvoyant"] = H1
        energies["clairvoyant"] = 0.0
        per_snr = []
        for snr_db in cfg.ber_snr_grid_db:
            ber = {}
            for name, Hhat in estimates.items():
                rng = make_rng(cfg.seed, t, "data")
                bits = rng.integers(0, 2, cfg.bits)
                ber[name] = qpsk_roundtrip(bits, H1, Hhat, db_to_linear(snr_db), rng, stats.S.right) / cfg.bits
            per_snr.append((ber, energies))
        return per_snr

    outcomes = map_trials(trial, cfg.trials, cfg.threads)
    return [
        reduce_trials(snr_db, [o[i] for o in outcomes], order, cfg.seed)
        for i, snr_db in enumerate(cfg.ber_snr_grid_db)
    ]


def qpsk_roundtrip(bits, H, Hhat, snr: float, rng: np.random.Generator, noise_cov: Optional[np.ndarray] = None) -> int:
    """Bit errors of Gray-mapped QPSK sent through a ZF precoder built from Ĥ.

    Unit-energy symbols are precoded with pinv(Ĥ), sent through H with
    CN(0, noise_cov/snr) noise and detected per entry by the nearest
    constellation point.
    """
    bits = np.asarray(bits, dtype=int).ravel()
    if bits.size % 2:
        raise DimensionError(f"QPSK needs an even number of bits, got {bits.size}")
    H = np.asarray(H, dtype=complex)
    n_R = H.shape[0]
    symbols = ((1 - 2 * bits[0::2]) + 1j * (1 - 2 * bits[1::2])) / np.sqrt(2.0)
    n_sym = symbols.size
    cols = -(-n_sym // n_R)
    stream = np.full(n_R * cols, (1 + 1j) / np.sqrt(2.0))
    stream[:n_sym] = symbols
    S = stream.reshape(cols, n_R).T

    X = pinv(Hhat) @ S
    cov = np.eye(n_R) if noise_cov is None else np.asarray(noise_cov)
    L = linalg.cholesky(cov, lower=True)
    N = np.sqrt(1.0 / snr) * (L @ complex_gaussian(rng, (n_R, cols)))
    received = (H @ X + N).T.ravel()[:n_sym]

    errors = np.count_nonzero((received.real < 0).astype(int) != bits[0::2])
    errors += np.count_nonzero((received.imag < 0).astype(int) != bits[1::2])
    return int(errors)


RUNNERS: Dict[str, Callable[[ExperimentConfig], List[CurvePoint]]] = {
    "nmse": run_nmse_vs_gamma,
    "lopt": run_l_optimality,
    "eq": run_equalization,
    "zf": run_zf,
    "outage": run_outage,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult(curves=RUNNERS[cfg.experiment](cfg))
    if cfg.experiment == "zf":
        result.extra["ber"] = run_zf_ber(cfg)
    return result


# ──────────────────────────────────────────────
# CSV output
# ──────────────────────────────────────────────
def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def emit_csv(curves: Sequence[CurvePoint], path) -> None:
    """One row per (x, scheme), in curve order then scheme order."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for point in curves:
                for name, mean in point.means.items():
                    writer.writerow([
                        _fmt(point.x), name, _fmt(mean), _fmt(point.stderrs[name]),
                        _fmt(point.energies[name]), point.trials, point.seed,
                    ])
    except OSError as exc:
        raise ResultsWriteError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> List[CurvePoint]:
    """Inverse of `emit_csv`; consecutive rows with equal x form one point."""
    points: List[CurvePoint] = []
    current = None
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            x = float(row["x"])
            if current is None or current["x_text"] != row["x"]:
                current = {"x_text": row["x"], "x": x, "means": {}, "stderrs": {}, "energies": {},
                           "trials": int(row["trials"]), "seed": int(row["seed"])}
                points.append(current)
            name = row["scheme"]
            current["means"][name] = float(row["metric_mean"])
            current["stderrs"][name] = float(row["metric_stderr"])
            current["energies"][name] = float(row["energy"])
    return [
        CurvePoint(x=p["x"], means=p["means"], stderrs=p["stderrs"], energies=p["energies"],
                   trials=p["trials"], seed=p["seed"])
        for p in points
    ]


def sibling_path(path, suffix: str) -> Path:
    """results/zf.csv -> results/zf_ber.csv"""
    path = Path(path)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")
