"""Configuration and environment variable loading.

Resolution order for an experiment run:
    preset for the experiment  →  key = value config file  →  CLI overrides
"""

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.errors import ConfigError

load_dotenv()


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}. Please fix it in your .env file.")


DEFAULT_SEED = _env_int("TRAINDESIGN_SEED", 2012)
DEFAULT_TRIALS = _env_int("TRAINDESIGN_TRIALS", None)
DEFAULT_THREADS = _env_int("TRAINDESIGN_THREADS", 1)
DEFAULT_GRID_SIZE = _env_int("TRAINDESIGN_GRID_SIZE", 512)
OUT_DIR = os.getenv("TRAINDESIGN_OUT_DIR", "results")

EXPERIMENTS = ("nmse", "lopt", "eq", "zf", "outage")
ESTIMATORS = ("mvu", "mmse")
REGIMES = ("high", "low")
WEIGHTS = ("random", "identity")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a Monte Carlo run. Grids are in dB."""

    experiment: str = "nmse"
    n_t: int = 4
    n_r: int = 2
    b: int = 6
    rho_t: float = 0.9
    rho_r: float = 0.9
    rho_q: float = 0.9
    rho_s: float = 0.9
    phase_t: float = 0.0
    phase_r: float = 0.0
    phase_q: float = 0.0
    phase_s: float = 0.0
    noise_matches_channel: bool = True
    estimator: str = "mmse"
    alpha: float = 0.99
    gamma_grid_db: List[float] = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0])
    gamma_db: float = 0.0
    power_grid_db: List[float] = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0])
    snr_db: float = 15.0
    mu: float = 0.01
    noise_temporal_r: float = 0.9
    regime: str = "high"
    grid_size: int = DEFAULT_GRID_SIZE
    bootstrap_energy: float = 100.0
    oracle_design: bool = False
    weights: str = "random"
    ber_gamma_db: float = -10.0
    ber_snr_grid_db: List[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    bits: int = 400
    trials: int = 2000
    seed: int = DEFAULT_SEED
    threads: int = DEFAULT_THREADS
    schemes: List[str] = field(default_factory=list)

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigError on the first inconsistency found."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("n_t", "n_r", "b", "trials", "threads", "grid_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mu < 0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}")
        for name in ("rho_t", "rho_r", "rho_q", "rho_s", "noise_temporal_r"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.weights not in WEIGHTS:
            raise ConfigError(f"weights must be one of {WEIGHTS}, got {self.weights!r}")
        if self.bootstrap_energy <= 0:
            raise ConfigError(f"bootstrap_energy must be positive, got {self.bootstrap_energy}")
        if self.bits < 2 or self.bits % 2:
            raise ConfigError(f"bits must be an even count >= 2, got {self.bits}")
        if self.b < self.n_t:
            raise ConfigError(f"B={self.b} must be >= n_T={self.n_t} for the pilot designs")
        if self.experiment == "zf" and self.n_t != self.n_r:
            raise ConfigError(f"zero-forcing runs need n_T = n_R, got {self.n_t} and {self.n_r}")
        if self.experiment == "nmse" and not self.noise_matches_channel:
            raise ConfigError("the NMSE experiment needs noise_matches_channel = true (R_R = S_R)")
        if self.experiment in ("lopt", "zf") and self.estimator == "mmse" and not self.noise_matches_channel:
            raise ConfigError("MMSE designs for lopt/zf need noise_matches_channel = true (R_R = S_R)")
        grid = self.power_grid_db if self.experiment == "outage" else self.gamma_grid_db
        if not grid:
            raise ConfigError("the x-axis grid is empty")
        if self.experiment == "zf" and not self.ber_snr_grid_db:
            raise ConfigError("ber_snr_grid_db is empty")
        return self


# Full-scale defaults for each experiment, applied before the config file.
PRESETS: Dict[str, Dict[str, Any]] = {
    "nmse": {
        "n_t": 4, "n_r": 2, "b": 6, "alpha": 0.99, "estimator": "mmse",
        "noise_matches_channel": True, "trials": 2000,
    },
    "lopt": {
        "n_t": 6, "n_r": 6, "b": 8, "alpha": 0.99, "estimator": "mvu",
        "noise_matches_channel": True, "weights": "random", "trials": 2000,
    },
    "eq": {
        "n_t": 4, "n_r": 2, "b": 6, "snr_db": 15.0, "mu": 0.01, "estimator": "mmse",
        "noise_matches_channel": False, "phase_s": 0.5, "regime": "high", "trials": 500,
    },
    "zf": {
        "n_t": 4, "n_r": 4, "b": 6, "snr_db": 15.0, "mu": 0.01, "alpha": 0.99, "estimator": "mmse",
        "noise_matches_channel": True, "ber_gamma_db": -10.0, "bits": 400, "trials": 500,
    },
    "outage": {
        "n_t": 6, "n_r": 6, "b": 8, "gamma_db": 0.0, "alpha": 0.99, "estimator": "mvu",
        "noise_matches_channel": True, "weights": "random", "trials": 10000,
    },
}

_LIST_FIELDS = {"gamma_grid_db", "power_grid_db", "ber_snr_grid_db", "schemes"}


def _coerce(key: str, raw: Any) -> Any:
    """Convert a raw (string) value to the type of the named field."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if key not in types:
        raise ConfigError(f"unknown configuration key {key!r}")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = types[key]
    try:
        if key in _LIST_FIELDS:
            items = [item.strip() for item in text.split(",") if item.strip()]
            return items if key == "schemes" else [float(item) for item in items]
        if kind is bool or kind == "bool":
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if kind is int or kind == "int":
            return int(text)
        if kind is float or kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}")


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse `key = value` lines; `#` starts a comment."""
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, value)
    return values


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return parse_config_text(text, source=str(path))


def load_config(
    experiment: str, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Resolve preset, file and overrides into a validated config."""
    if experiment not in PRESETS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    values: Dict[str, Any] = {"experiment": experiment, **PRESETS[experiment]}
    if DEFAULT_TRIALS is not None:
        values["trials"] = DEFAULT_TRIALS
    if config_path:
        values.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    if values.get("experiment") != experiment:
        raise ConfigError(f"config file names experiment {values.get('experiment')!r}, CLI asked for {experiment!r}")
    return replace(ExperimentConfig(), **values).validate()
