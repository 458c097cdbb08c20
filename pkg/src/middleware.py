"""Middleware components for the experiment run workflow.

This module implements middleware-style processing layers that wrap
the core LangGraph workflow. Each middleware screens or executes one
step of a run and converts library failures into state updates, so the
workflow can route to the final summary with a status instead of
crashing.

Middleware Components Used:
─────────────────────────
1. ConfigValidationMiddleware : Resolves and validates the experiment configuration
2. FeasibilityGuardMiddleware : Runs an experiment, mapping design failures to INFEASIBLE
3. LoggingMiddleware          : Tracks node execution trace
"""

import logging
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.config import load_config
from src.errors import ConfigError, InfeasibleDesignError, OrderingGuardError, RankDeficientError, TrainDesignError

logger = logging.getLogger(__name__)


# ──────────────────────────────────────────────
# 1. Config Validation Middleware
# ──────────────────────────────────────────────
class ConfigValidationMiddleware:
    """Resolves preset, config file and CLI overrides into one config.

    A rejected configuration becomes a CONFIG_ERROR update rather than
    an exception.
    """

    @classmethod
    def process(
        cls, experiment: str, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
    ) -> dict:
        try:
            cfg = load_config(experiment, config_path, overrides)
        except ConfigError as e:
            print(f"  [ConfigValidation Middleware] ✗ Rejected: {e}")
            return {"status": "CONFIG_ERROR", "error": str(e), "route_taken": "config_rejected"}

        print(
            f"  [ConfigValidation Middleware] ✓ {cfg.experiment}: n_T={cfg.n_t}, n_R={cfg.n_r}, "
            f"B={cfg.b}, estimator={cfg.estimator}, trials={cfg.trials}, seed={cfg.seed}"
        )
        return {"experiment_config": cfg}


# ──────────────────────────────────────────────
# 2. Feasibility Guard Middleware
# ──────────────────────────────────────────────
class FeasibilityGuardMiddleware:
    """Executes an experiment and names the failing constraint on infeasibility."""

    @classmethod
    def run(cls, fn: Callable[[Any], Any], cfg) -> dict:
        try:
            result = fn(cfg)
        except InfeasibleDesignError as e:
            print(f"  [FeasibilityGuard Middleware] ✗ Infeasible ({e.constraint}): {e}")
            return {"status": "INFEASIBLE", "error": f"{e.constraint}: {e}", "route_taken": "infeasible"}
        except RankDeficientError as e:
            print(f"  [FeasibilityGuard Middleware] ✗ Rank deficient ({e.dimension}): {e}")
            return {"status": "INFEASIBLE", "error": f"rank({e.dimension}): {e}", "route_taken": "infeasible"}
        except OrderingGuardError as e:
            print(f"  [FeasibilityGuard Middleware] ✗ {e}")
            return {"status": "INFEASIBLE", "error": str(e), "route_taken": "infeasible"}
        except ConfigError as e:
            print(f"  [FeasibilityGuard Middleware] ✗ Configuration rejected at run time: {e}")
            return {"status": "CONFIG_ERROR", "error": str(e), "route_taken": "config_rejected"}
        except (TrainDesignError, np.linalg.LinAlgError) as e:
            print(f"  [FeasibilityGuard Middleware] ✗ Numerical failure ({type(e).__name__}): {e}")
            return {"status": "INFEASIBLE", "error": f"{type(e).__name__}: {e}", "route_taken": "infeasible"}

        print(f"  [FeasibilityGuard Middleware] ✓ All designs feasible")
        return {"curves": result.curves, "extra_curves": dict(result.extra)}


# ──────────────────────────────────────────────
# 3. Logging Middleware : Run trace and sweep outcome
# ──────────────────────────────────────────────
class LoggingMiddleware:
    """Records the nodes a run visits and what each grid point produced.

    Node entries carry the seconds elapsed since the run began plus any
    fields the node reports (experiment, trials, files written). Point
    entries hold x, trial count, scheme count, the shared training energy
    and the schemes a point dropped, e.g. a guaranteed design that needed
    no training at that accuracy.
    """

    _node_trace: List[Dict[str, Any]] = []
    _points: List[Dict[str, Any]] = []
    _start_time: Optional[float] = None

    @classmethod
    def reset(cls):
        """Reset for a new run."""
        cls._node_trace = []
        cls._points = []
        cls._start_time = time.time()

    @classmethod
    def log_node(cls, node_name: str, **fields):
        """Record a node visit with its reported fields."""
        elapsed = time.time() - cls._start_time if cls._start_time else 0
        entry = {"node": node_name, "elapsed_seconds": round(elapsed, 2), **fields}
        cls._node_trace.append(entry)
        logger.info("node %s", node_name, extra={"trace": entry})

    @classmethod
    def log_curves(cls, curves: Sequence[Any]):
        """Record one entry per CurvePoint; schemes absent at some points are flagged."""
        schemes = sorted({name for point in curves for name in point.means})
        for point in curves:
            energies = list(point.energies.values())
            entry = {
                "x": point.x,
                "trials": point.trials,
                "schemes": len(point.means),
                "energy": energies[0] if energies else None,
                "omitted": [name for name in schemes if name not in point.means],
            }
            cls._points.append(entry)
            if entry["omitted"]:
                logger.warning("x=%g: %s omitted", point.x, ", ".join(entry["omitted"]))
            else:
                logger.info("x=%g: %d schemes at energy %.4g", point.x, entry["schemes"], entry["energy"] or 0.0)

    @classmethod
    def get_trace(cls) -> list:
        return cls._node_trace

    @classmethod
    def get_points(cls) -> list:
        return cls._points

    @classmethod
    def get_trace_summary(cls) -> str:
        """Return a concise trace string."""
        return " → ".join(entry["node"] for entry in cls._node_trace)

    @classmethod
    def get_sweep_summary(cls) -> str:
        """One line: grid size, trials per point and any dropped schemes."""
        if not cls._points:
            return "no grid points"
        trials = sorted({entry["trials"] for entry in cls._points})
        summary = f"{len(cls._points)} points × {'/'.join(str(t) for t in trials)} trials"
        dropped = [f"{', '.join(e['omitted'])} at x={e['x']:g}" for e in cls._points if e["omitted"]]
        if dropped:
            summary += "; omitted " + "; ".join(dropped)
        return summary
