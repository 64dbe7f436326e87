"""Event-triggered adaptive Koopman control for optic-flow landing."""

from .adaptation import AdaptationWindow, ModelUpdate, apply_update, compute_update_single, compute_update_windowed
from .config import ConfigError, RunConfig, load_config
from .edmd import KoopmanModel, TrajectoryDataset, fit_edmd, generate_training_data
from .harness import RunResult, compute_metrics, run_closed_loop, train_model
from .mpc import MpcConfig, MpcController, solve_mpc
from .observables import ObservableDictionary, lift, project
from .qp import QpProblem, QpSettings, QpSolution, solve_qp
from .triggers import TriggerParams, theoretic_bounds

__all__ = [
    "AdaptationWindow", "ModelUpdate", "apply_update", "compute_update_single", "compute_update_windowed",
    "ConfigError", "RunConfig", "load_config",
    "KoopmanModel", "TrajectoryDataset", "fit_edmd", "generate_training_data",
    "RunResult", "compute_metrics", "run_closed_loop", "train_model",
    "MpcConfig", "MpcController", "solve_mpc",
    "ObservableDictionary", "lift", "project",
    "QpProblem", "QpSettings", "QpSolution", "solve_qp",
    "TriggerParams", "theoretic_bounds",
]
