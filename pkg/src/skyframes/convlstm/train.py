"""Mini-batch training loop for the reconstruction model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import EncoderDecoderModel, ModelConfig, loss_and_grads
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    readout_bias: float = -4.0


@dataclass
class TrainResult:
    model: EncoderDecoderModel
    losses: list[float] = field(default_factory=list)
    optimizer: AdamState | None = None


def train(sequences: np.ndarray, model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), seed: int = 0,
          model: EncoderDecoderModel | None = None, progress=None) -> TrainResult:
    """Fit the model to reconstruct ``sequences`` of shape ``(N, s, C, H, W)``.

    Returns the trained model and the mean per-sample loss of each epoch.
    Sequence order is reshuffled every epoch from ``seed`` so a run is
    reproducible bit for bit.
    """
    sequences = np.asarray(sequences)
    if sequences.ndim != 5 or len(sequences) == 0:
        raise ValueError("training needs a non-empty (N, s, C, H, W) corpus")
    if model is None:
        model = EncoderDecoderModel.init(model_config, seed=seed, readout_bias=train_config.readout_bias)
    params = model.parameters()
    state = AdamState.for_params(params, lr=train_config.lr, beta1=train_config.beta1,
                                 beta2=train_config.beta2, eps=train_config.eps)
    rng = np.random.default_rng(seed + 1)
    n = len(sequences)
    bs = max(1, train_config.batch_size)
    result = TrainResult(model, optimizer=state)
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = np.sort(order[start:start + bs])
            batch = sequences[idx].astype(model.dtype, copy=False)
            loss, grads = loss_and_grads(model, batch)
            adam_step(params, grads.arrays(), state)
            total += loss * len(idx)
        result.losses.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, train_config.epochs, result.losses[-1])
        if progress is not None:
            progress(epoch, result.losses[-1])
    return result


def write_loss_history(path, losses: list[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for i, loss in enumerate(losses, start=1):
            fh.write(f"{i},{loss:.9g}\n")


def read_loss_history(path) -> list[float]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "epoch,mean_loss":
            raise ValueError(f"unexpected loss history header {header!r}")
        return [float(line.split(",")[1]) for line in fh if line.strip()]
