"""LangGraph state definition for an experiment run."""

from typing import Any, Dict, List, Optional, TypedDict


class ExperimentState(TypedDict):
    """State that flows through the run workflow.

    Each key represents a piece of information that nodes can
    read from or write to as the run progresses.
    """
    # -- Input --
    experiment: str
    config_path: Optional[str]
    overrides: Optional[Dict[str, Any]]
    out_path: Optional[str]

    # -- Resolved configuration --
    experiment_config: Optional[Any]

    # -- Results --
    curves: Optional[List[Any]]  # CurvePoint list
    extra_curves: Optional[Dict[str, List[Any]]]
    written_files: Optional[List[str]]

    # -- Output --
    status: Optional[str]  # "READY" | "CONFIG_ERROR" | "INFEASIBLE"
    error: Optional[str]

    # -- Tracing --
    run_id: Optional[str]
    route_taken: Optional[str]
