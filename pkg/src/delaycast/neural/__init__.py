"""Hand-rolled neural regressors: dense, recurrent, convolutional, hybrid.

Forward passes are pure functions of (params, input); every backward pass is
written out analytically and checked against central differences in tests.
"""

from .layers import Conv1d, Dense, Flatten, MaxPool1d
from .lstm import Bidirectional, LstmLayer, lstm_cell_backward, lstm_cell_forward, lstm_params
from .models import (
    SequenceBatch,
    Sequential,
    HybridNet,
    bilstm_model_build,
    build_from_spec,
    hybrid_model_build,
    lstm_model_build,
    make_sequences,
    mlp_build,
)
from .training import EpochStats, TrainConfig, TrainingError, load_checkpoint, train

__all__ = [
    "Conv1d", "Dense", "Flatten", "MaxPool1d",
    "Bidirectional", "LstmLayer", "lstm_cell_backward", "lstm_cell_forward",
    "lstm_params",
    "SequenceBatch", "Sequential", "HybridNet", "bilstm_model_build",
    "build_from_spec", "hybrid_model_build", "lstm_model_build",
    "make_sequences", "mlp_build",
    "EpochStats", "TrainConfig", "TrainingError", "load_checkpoint", "train",
]
