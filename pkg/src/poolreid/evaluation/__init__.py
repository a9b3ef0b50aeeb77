from .experiments import (ABLATION_MODES, ExperimentConfig, run_ablation, run_drift_simulation,
                          run_sweep)
from .metrics import (EvalReport, QueryResult, average_precision, cmc_curve,
                      mean_average_precision)
from .synth import Dataset, SynthSpec, generate_synthetic

__all__ = [
    "ABLATION_MODES",
    "ExperimentConfig",
    "run_ablation",
    "run_drift_simulation",
    "run_sweep",
    "EvalReport",
    "QueryResult",
    "average_precision",
    "cmc_curve",
    "mean_average_precision",
    "Dataset",
    "SynthSpec",
    "generate_synthetic",
]
