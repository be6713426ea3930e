from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiment import ExperimentResult, StageError, run_experiment
from .metrics import RocCurve, compute_roc, rates, tpr_at_fpr

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RocCurve",
    "StageError",
    "compute_roc",
    "dump_config",
    "load_config",
    "rates",
    "run_experiment",
    "tpr_at_fpr",
]
