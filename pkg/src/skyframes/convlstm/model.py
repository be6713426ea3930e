"""Encoder-decoder built from stacked ConvLSTM layers with a 1x1 sigmoid readout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CellCache, CellGrads, ConvLstmCellParams, cell_backward, cell_step
from .ops import kernel_matrix, sigmoid

DECODER_INPUTS = ("current", "previous", "none")


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 1
    hidden: int = 16
    kernel: int = 3
    layers: int = 1
    peephole: bool = False
    # what the decoder sees next to its previous reconstruction at step t:
    # the true image t, the true image t-1, or nothing (zeros)
    decoder_input: str = "previous"

    def __post_init__(self):
        if self.decoder_input not in DECODER_INPUTS:
            raise ValueError(f"decoder_input must be one of {DECODER_INPUTS}, got {self.decoder_input!r}")
        if self.layers < 1 or self.hidden < 1 or self.channels < 1:
            raise ValueError("layers, hidden and channels must be positive")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")


@dataclass
class EncoderDecoderModel:
    config: ModelConfig
    encoder: list[ConvLstmCellParams]
    decoder: list[ConvLstmCellParams]
    readout_w: np.ndarray  # (hidden, channels)
    readout_b: np.ndarray  # (channels,)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, dtype=np.float32,
             readout_bias: float = -4.0) -> EncoderDecoderModel:
        rng = np.random.default_rng(seed)
        c, n, k = config.channels, config.hidden, config.kernel
        enc = [ConvLstmCellParams.init(c if l == 0 else n, n, rng, k, config.peephole, dtype=dtype)
               for l in range(config.layers)]
        dec = [ConvLstmCellParams.init(2 * c if l == 0 else n, n, rng, k, config.peephole, dtype=dtype)
               for l in range(config.layers)]
        limit = np.sqrt(6.0 / (n + c))
        rw = rng.uniform(-limit, limit, size=(n, c)).astype(dtype)
        # images are mostly background, start the readout near zero
        rb = np.full(c, readout_bias, dtype=dtype)
        return cls(config, enc, dec, rw, rb)

    @property
    def dtype(self):
        return self.readout_w.dtype

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays in serialization order."""
        out: list[np.ndarray] = []
        for cell in self.encoder + self.decoder:
            out.extend(cell.arrays())
        out.extend([self.readout_w, self.readout_b])
        return out

    def astype(self, dtype) -> EncoderDecoderModel:
        return EncoderDecoderModel(
            self.config,
            [c.astype(dtype) for c in self.encoder],
            [c.astype(dtype) for c in self.decoder],
            self.readout_w.astype(dtype), self.readout_b.astype(dtype),
        )

    def copy(self) -> EncoderDecoderModel:
        return self.astype(self.dtype)


@dataclass
class ForwardCache:
    x: np.ndarray  # (s, B, H, W, C) channels-last input
    enc: list[list[CellCache]] = field(default_factory=list)  # [t][layer]
    dec: list[list[CellCache]] = field(default_factory=list)
    dec_top_h: list[np.ndarray] = field(default_factory=list)
    y: list[np.ndarray] = field(default_factory=list)


def _to_last(frames: np.ndarray) -> np.ndarray:
    # (B, s, C, H, W) -> (s, B, H, W, C)
    return np.ascontiguousarray(frames.transpose(1, 0, 3, 4, 2))


def _to_first(seq: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(seq.transpose(1, 0, 4, 2, 3))


def _decoder_aux(x: np.ndarray, t: int, mode: str) -> np.ndarray:
    if mode == "current":
        return x[t]
    if mode == "previous" and t > 0:
        return x[t - 1]
    return np.zeros_like(x[0])


def forward(model: EncoderDecoderModel, frames: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch ``(B, s, C, H, W)`` through the model, keeping activations for backward."""
    cfg = model.config
    if frames.ndim != 5 or frames.shape[2] != cfg.channels:
        raise ValueError(f"expected (B, s, {cfg.channels}, H, W) frames, got {frames.shape}")
    x = _to_last(frames.astype(model.dtype, copy=False))
    s, b, hh, ww, c = x.shape
    n = cfg.hidden
    cache = ForwardCache(x)
    enc_w = [kernel_matrix(p.weight) for p in model.encoder]
    dec_w = [kernel_matrix(p.weight) for p in model.decoder]
    h = [np.zeros((b, hh, ww, n), dtype=model.dtype) for _ in range(cfg.layers)]
    cs = [np.zeros_like(h[0]) for _ in range(cfg.layers)]
    for t in range(s):
        inp = x[t]
        step = []
        for l, p in enumerate(model.encoder):
            h[l], cs[l], cc = cell_step(inp, h[l], cs[l], p, enc_w[l])
            step.append(cc)
            inp = h[l]
        cache.enc.append(step)
    y_prev = np.zeros_like(x[0])
    for t in range(s):
        inp = np.concatenate([y_prev, _decoder_aux(x, t, cfg.decoder_input)], axis=-1)
        step = []
        for l, p in enumerate(model.decoder):
            h[l], cs[l], cc = cell_step(inp, h[l], cs[l], p, dec_w[l])
            step.append(cc)
            inp = h[l]
        y = sigmoid(h[-1] @ model.readout_w + model.readout_b)
        cache.dec.append(step)
        cache.dec_top_h.append(h[-1])
        cache.y.append(y)
        y_prev = y
    return _to_first(np.stack(cache.y)), cache


def model_forward(model: EncoderDecoderModel, frames: np.ndarray) -> np.ndarray:
    """Reconstruct one sequence ``(s, C, H, W)`` or a batch ``(B, s, C, H, W)``."""
    single = frames.ndim == 4
    out, _ = forward(model, frames[None] if single else frames)
    return out[0] if single else out


def mse_loss(output: np.ndarray, target: np.ndarray) -> float:
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: {output.shape} vs {target.shape}")
    d = output.astype(np.float64) - target
    return float(np.mean(d * d))


@dataclass
class ModelGrads:
    encoder: list[CellGrads]
    decoder: list[CellGrads]
    readout_w: np.ndarray
    readout_b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for g in self.encoder + self.decoder:
            out.extend(g.arrays())
        out.extend([self.readout_w, self.readout_b])
        return out


def backward(model: EncoderDecoderModel, cache: ForwardCache | None, targets: np.ndarray) -> ModelGrads:
    """Exact gradients of ``mse_loss(output, targets)`` by backpropagation through time."""
    if cache is None or not cache.y:
        raise ValueError("backward needs the cache of a forward pass")
    cfg = model.config
    tgt = _to_last(targets.astype(model.dtype, copy=False))
    s = len(cache.y)
    if tgt.shape != cache.x.shape:
        raise ValueError(f"targets {targets.shape} do not match the cached forward pass")
    grads = ModelGrads(
        [CellGrads.like(p) for p in model.encoder],
        [CellGrads.like(p) for p in model.decoder],
        np.zeros_like(model.readout_w), np.zeros_like(model.readout_b),
    )
    enc_w = [kernel_matrix(p.weight) for p in model.encoder]
    dec_w = [kernel_matrix(p.weight) for p in model.decoder]
    scale = 2.0 / tgt.size
    c = cfg.channels
    dh = [np.zeros_like(cache.dec_top_h[0]) for _ in range(cfg.layers)]
    dc = [np.zeros_like(dh[0]) for _ in range(cfg.layers)]
    dy_next = np.zeros_like(cache.y[0])  # gradient reaching y_t through decoder input t+1
    for t in reversed(range(s)):
        y = cache.y[t]
        dy = (y - tgt[t]) * scale + dy_next
        da = dy * y * (1.0 - y)
        htop = cache.dec_top_h[t]
        grads.readout_w += htop.reshape(-1, htop.shape[-1]).T @ da.reshape(-1, c)
        grads.readout_b += da.sum(axis=(0, 1, 2))
        dh[-1] = dh[-1] + da @ model.readout_w.T
        for l in reversed(range(cfg.layers)):
            d_in, dh[l], dc[l] = cell_backward(dh[l], dc[l], cache.dec[t][l], model.decoder[l],
                                              grads.decoder[l], dec_w[l])
            if l > 0:
                dh[l - 1] = dh[l - 1] + d_in
        dy_next = d_in[..., :c]  # aux channels are data
    for t in reversed(range(s)):
        for l in reversed(range(cfg.layers)):
            d_in, dh[l], dc[l] = cell_backward(dh[l], dc[l], cache.enc[t][l], model.encoder[l],
                                              grads.encoder[l], enc_w[l])
            if l > 0:
                dh[l - 1] = dh[l - 1] + d_in
    return grads


def loss_and_grads(model: EncoderDecoderModel, frames: np.ndarray,
                   targets: np.ndarray | None = None) -> tuple[float, ModelGrads]:
    targets = frames if targets is None else targets
    out, cache = forward(model, frames)
    return mse_loss(out, targets), backward(model, cache, targets)
