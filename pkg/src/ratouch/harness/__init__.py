from .config import ExperimentConfig, load_config
from .experiments import (
    World,
    evaluate,
    prepare,
    run_integration_ablation,
    run_k_sweep,
    run_query_ablation,
    run_subset_sweep,
    score_description,
)
from .reports import EvalReport, read_report

__all__ = [
    "EvalReport",
    "ExperimentConfig",
    "World",
    "evaluate",
    "load_config",
    "prepare",
    "read_report",
    "run_integration_ablation",
    "run_k_sweep",
    "run_query_ablation",
    "run_subset_sweep",
    "score_description",
]
