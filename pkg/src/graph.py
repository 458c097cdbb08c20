"""LangGraph workflow definition for an experiment run."""

from langgraph.graph import StateGraph, END
from src.state import ExperimentState
from src.nodes import (
    initialize_run,
    load_configuration,
    run_experiment,
    emit_results,
    finalize_output,
)


def has_valid_config(state: ExperimentState) -> str:
    """Route after configuration: stop on CONFIG_ERROR."""
    if state.get("status") == "CONFIG_ERROR":
        return "finalize_output"
    return "run_experiment"


def has_results(state: ExperimentState) -> str:
    """Route after the experiment: stop on INFEASIBLE or a run-time config error."""
    if state.get("status") in ("INFEASIBLE", "CONFIG_ERROR"):
        return "finalize_output"
    return "emit_results"


def build_graph() -> StateGraph:
    """Build and compile the run workflow.

    Workflow with Middleware:

        initialize_run
              │
        load_configuration (ConfigValidation)
              │
        ┌─────┴────────┐
        │ CONFIG_ERROR │ VALID
        │              ▼
        │        run_experiment (FeasibilityGuard)
        │              │
        │        ┌─────┴──────┐
        │        │INFEASIBLE  │OK
        │        │            ▼
        │        │       emit_results
        ▼        ▼            ▼
              finalize_output
                    │
                   END

    Middleware Components:
        - ConfigValidationMiddleware: Resolves preset, file and overrides
        - FeasibilityGuardMiddleware: Maps design failures to INFEASIBLE
        - LoggingMiddleware: Tracks node execution trace
    """
    workflow = StateGraph(ExperimentState)

    workflow.add_node("initialize_run", initialize_run)
    workflow.add_node("load_configuration", load_configuration)
    workflow.add_node("run_experiment", run_experiment)
    workflow.add_node("emit_results", emit_results)
    workflow.add_node("finalize_output", finalize_output)

    workflow.set_entry_point("initialize_run")
    workflow.add_edge("initialize_run", "load_configuration")

    workflow.add_conditional_edges(
        "load_configuration",
        has_valid_config,
        {
            "finalize_output": "finalize_output",
            "run_experiment": "run_experiment",
        },
    )
    workflow.add_conditional_edges(
        "run_experiment",
        has_results,
        {
            "finalize_output": "finalize_output",
            "emit_results": "emit_results",
        },
    )

    workflow.add_edge("emit_results", "finalize_output")
    workflow.add_edge("finalize_output", END)

    return workflow.compile()
