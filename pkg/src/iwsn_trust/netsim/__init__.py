"""Clustered sensor network simulation with trust-managed head selection."""

from .config import SimConfig
from .metrics import METRIC_COLUMNS, RoundMetrics, summarize_metrics
from .world import (
    SimulationError,
    RunResult,
    WorldState,
    deploy,
    expected_first_decision_round,
    form_clusters,
    head_election_threshold,
    run,
    simulate_round,
    step_channel,
    train_initial_models,
    warmup_dataset,
)

__all__ = [
    "METRIC_COLUMNS",
    "RoundMetrics",
    "RunResult",
    "SimConfig",
    "SimulationError",
    "WorldState",
    "deploy",
    "expected_first_decision_round",
    "form_clusters",
    "head_election_threshold",
    "run",
    "simulate_round",
    "step_channel",
    "summarize_metrics",
    "train_initial_models",
    "warmup_dataset",
]
