"""LangGraph node functions for the experiment run workflow."""

import uuid
from datetime import datetime
from pathlib import Path

from src.config import OUT_DIR
from src.errors import ResultsWriteError
from src.experiments import emit_csv, run_experiment as execute_experiment, sibling_path
from src.middleware import ConfigValidationMiddleware, FeasibilityGuardMiddleware, LoggingMiddleware
from src.state import ExperimentState


# ──────────────────────────────────────────────
# Node 1: Initialize the run
# ──────────────────────────────────────────────
def initialize_run(state: ExperimentState) -> dict:
    """Set up run ID, reset middleware, and begin tracing."""
    run_id = f"RUN-{uuid.uuid4().hex[:8].upper()}"

    LoggingMiddleware.reset()
    LoggingMiddleware.log_node("initialize_run")

    print(f"\n{'='*60}")
    print(f"  Run ID:     {run_id}")
    print(f"  Time:       {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"  Experiment: {state['experiment']}")
    print(f"  Config:     {state.get('config_path') or '(preset)'}")
    print(f"{'='*60}")
    return {"run_id": run_id}


# ──────────────────────────────────────────────
# Node 2: Resolve and validate the configuration
# ──────────────────────────────────────────────
def load_configuration(state: ExperimentState) -> dict:
    LoggingMiddleware.log_node("load_configuration")
    return ConfigValidationMiddleware.process(
        state["experiment"], state.get("config_path"), state.get("overrides")
    )


# ──────────────────────────────────────────────
# Node 3: Run the Monte Carlo experiment
# ──────────────────────────────────────────────
def run_experiment(state: ExperimentState) -> dict:
    """Design, simulate and reduce every grid point."""
    cfg = state["experiment_config"]
    LoggingMiddleware.log_node("run_experiment", experiment=cfg.experiment, trials=cfg.trials, threads=cfg.threads)
    print(f"  [run_experiment] Running {cfg.experiment} with {cfg.trials} trials on {cfg.threads} thread(s)")
    update = FeasibilityGuardMiddleware.run(execute_experiment, cfg)
    if "curves" in update:
        LoggingMiddleware.log_curves(update["curves"])
        schemes = sorted({name for point in update["curves"] for name in point.means})
        print(f"  [run_experiment] ✓ {len(update['curves'])} grid points, schemes: {', '.join(schemes)}")
    return update


# ──────────────────────────────────────────────
# Node 4: Write the CSV files
# ──────────────────────────────────────────────
def emit_results(state: ExperimentState) -> dict:
    """Write the main curve and any extra series next to it."""
    out_path = Path(state.get("out_path") or Path(OUT_DIR) / f"{state['experiment']}.csv")
    LoggingMiddleware.log_node("emit_results", out_path=str(out_path))
    written = []
    try:
        emit_csv(state["curves"], out_path)
        written.append(str(out_path))
        for name, curves in (state.get("extra_curves") or {}).items():
            path = sibling_path(out_path, name)
            emit_csv(curves, path)
            written.append(str(path))
    except ResultsWriteError as e:
        print(f"  [emit_results] ✗ {e}")
        return {"status": "CONFIG_ERROR", "error": str(e), "route_taken": "write_failed", "written_files": written}

    for path in written:
        print(f"  [emit_results] ✓ Wrote {path}")
    return {"written_files": written, "status": "READY", "route_taken": f"{state['experiment']}_complete"}


# ──────────────────────────────────────────────
# Node 5: Finalize the output
# ──────────────────────────────────────────────
def finalize_output(state: ExperimentState) -> dict:
    """Print the run summary with tracing information."""
    LoggingMiddleware.log_node("finalize_output")

    status = state.get("status") or "READY"
    route = state.get("route_taken") or "unknown"
    trace = LoggingMiddleware.get_trace_summary()

    print(f"\n{'='*60}")
    print(f"  FINAL OUTPUT")
    print(f"{'='*60}")
    print(f"  Run ID:    {state.get('run_id', 'N/A')}")
    print(f"  Status:    {status}")
    print(f"  Route:     {route}")
    print(f"  Trace:     {trace}")
    print(f"  Sweep:     {LoggingMiddleware.get_sweep_summary()}")
    print(f"{'─'*60}")
    if state.get("error"):
        print(f"  Error: {state['error']}")
    for path in state.get("written_files") or []:
        print(f"  Output: {path}")
    print(f"\n{'='*60}")

    return {"status": status}
