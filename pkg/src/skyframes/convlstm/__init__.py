from .cell import ConvLstmCellParams, cell_forward
from .model import (
    EncoderDecoderModel,
    ModelConfig,
    backward,
    forward,
    loss_and_grads,
    model_forward,
    mse_loss,
)
from .io import ModelFormatError, ShapeMismatchError, load_model, save_model
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainResult, read_loss_history, train, write_loss_history
