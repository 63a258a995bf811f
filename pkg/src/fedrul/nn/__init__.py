"""From-scratch LSTM regression network."""

from .layers import LSTMLayerParams, LSTMState, lstm_cell_forward
from .model import ModelConfig, ModelParams, architecture, init_model, model_backward, model_forward
from .train import Adam, NumericAbort, TrainConfig, predict, rmse_loss, train_epochs

__all__ = [
    "Adam",
    "LSTMLayerParams",
    "LSTMState",
    "ModelConfig",
    "ModelParams",
    "NumericAbort",
    "TrainConfig",
    "architecture",
    "init_model",
    "lstm_cell_forward",
    "model_backward",
    "model_forward",
    "predict",
    "rmse_loss",
    "train_epochs",
]
