"""Convolutional LSTM cell: forward step and its exact backward step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import col2im, im2col, kernel_matrix, sigmoid

GATES = ("input", "forget", "output", "candidate")


@dataclass
class ConvLstmCellParams:
    """Gate kernels for one ConvLSTM layer.

    ``weight`` stacks the four gates (input, forget, output, candidate) along
    the first axis; along the second axis the first ``in_ch`` channels act on
    the layer input and the remaining ``hidden`` on the previous hidden state.
    ``peephole`` holds per-channel cell-to-gate weights for the input, forget
    and output gates when enabled.
    """

    in_ch: int
    hidden: int
    weight: np.ndarray
    bias: np.ndarray
    peephole: np.ndarray | None = None
    kernel: int = 3

    @classmethod
    def zeros(cls, in_ch: int, hidden: int, kernel: int = 3, peephole: bool = False,
              dtype=np.float32) -> ConvLstmCellParams:
        return cls(
            in_ch=in_ch,
            hidden=hidden,
            weight=np.zeros((4 * hidden, in_ch + hidden, kernel, kernel), dtype=dtype),
            bias=np.zeros(4 * hidden, dtype=dtype),
            peephole=np.zeros((3, hidden), dtype=dtype) if peephole else None,
            kernel=kernel,
        )

    @classmethod
    def init(cls, in_ch: int, hidden: int, rng: np.random.Generator, kernel: int = 3,
             peephole: bool = False, forget_bias: float = 1.0, dtype=np.float32) -> ConvLstmCellParams:
        p = cls.zeros(in_ch, hidden, kernel, peephole, dtype)
        fan_in = (in_ch + hidden) * kernel * kernel
        fan_out = 4 * hidden * kernel * kernel
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        p.weight[...] = rng.uniform(-limit, limit, size=p.weight.shape)
        p.bias[hidden:2 * hidden] = forget_bias
        return p

    def gate_slice(self, gate: str) -> slice:
        k = GATES.index(gate)
        return slice(k * self.hidden, (k + 1) * self.hidden)

    def W_x(self, gate: str) -> np.ndarray:
        return self.weight[self.gate_slice(gate), :self.in_ch]

    def W_h(self, gate: str) -> np.ndarray:
        return self.weight[self.gate_slice(gate), self.in_ch:]

    def b(self, gate: str) -> np.ndarray:
        return self.bias[self.gate_slice(gate)]

    def arrays(self) -> list[np.ndarray]:
        out = [self.weight, self.bias]
        if self.peephole is not None:
            out.append(self.peephole)
        return out

    def astype(self, dtype) -> ConvLstmCellParams:
        return ConvLstmCellParams(
            self.in_ch, self.hidden, self.weight.astype(dtype), self.bias.astype(dtype),
            None if self.peephole is None else self.peephole.astype(dtype), self.kernel,
        )


@dataclass
class CellCache:
    z: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tc: np.ndarray


@dataclass
class CellGrads:
    weight: np.ndarray
    bias: np.ndarray
    peephole: np.ndarray | None = None

    @classmethod
    def like(cls, p: ConvLstmCellParams) -> CellGrads:
        return cls(
            np.zeros_like(p.weight), np.zeros_like(p.bias),
            None if p.peephole is None else np.zeros_like(p.peephole),
        )

    def arrays(self) -> list[np.ndarray]:
        out = [self.weight, self.bias]
        if self.peephole is not None:
            out.append(self.peephole)
        return out


def cell_step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: ConvLstmCellParams,
              wmat: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, CellCache]:
    """One ConvLSTM update on channels-last ``(B, H, W, C)`` arrays."""
    if x.shape[-1] != p.in_ch or h_prev.shape[-1] != p.hidden or h_prev.shape != c_prev.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
                         f"cell expects in_ch={p.in_ch} hidden={p.hidden}")
    if x.shape[:3] != h_prev.shape[:3]:
        raise ValueError(f"spatial mismatch: x {x.shape} vs h {h_prev.shape}")
    if wmat is None:
        wmat = kernel_matrix(p.weight)
    b, hh, ww, _ = x.shape
    n = p.hidden
    z = np.concatenate([x, h_prev], axis=-1)
    a = im2col(z, p.kernel) @ wmat.T
    a += p.bias
    a = a.reshape(b, hh, ww, 4 * n)
    if p.peephole is None:
        ifo = sigmoid(a[..., :3 * n])
        i, f, o = ifo[..., :n], ifo[..., n:2 * n], ifo[..., 2 * n:]
        g = np.tanh(a[..., 3 * n:])
        c = f * c_prev + i * g
    else:
        i = sigmoid(a[..., :n] + p.peephole[0] * c_prev)
        f = sigmoid(a[..., n:2 * n] + p.peephole[1] * c_prev)
        g = np.tanh(a[..., 3 * n:])
        c = f * c_prev + i * g
        o = sigmoid(a[..., 2 * n:3 * n] + p.peephole[2] * c)
    tc = np.tanh(c)
    h = o * tc
    return h, c, CellCache(z, c_prev, c, i, f, o, g, tc)


def cell_forward(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                 params: ConvLstmCellParams) -> tuple[np.ndarray, np.ndarray]:
    """Channels-first convenience wrapper: ``(C, H, W)`` or ``(B, C, H, W)``."""
    single = x_t.ndim == 3
    to_last = (lambda a: a[None].transpose(0, 2, 3, 1)) if single else (lambda a: a.transpose(0, 2, 3, 1))
    h, c, _ = cell_step(to_last(x_t), to_last(h_prev), to_last(c_prev), params)
    h, c = h.transpose(0, 3, 1, 2), c.transpose(0, 3, 1, 2)
    return (h[0], c[0]) if single else (h, c)


def cell_backward(dh: np.ndarray, dc: np.ndarray, cache: CellCache, p: ConvLstmCellParams,
                  grads: CellGrads, wmat: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate through one step; accumulates into ``grads``.

    Returns gradients with respect to the step input, ``h_prev`` and ``c_prev``.
    """
    if wmat is None:
        wmat = kernel_matrix(p.weight)
    i, f, o, g, tc = cache.i, cache.f, cache.o, cache.g, cache.tc
    d_o = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    da_o = d_o * o * (1.0 - o)
    if p.peephole is not None:
        dc = dc + da_o * p.peephole[2]
    da_i = dc * g * i * (1.0 - i)
    da_f = dc * cache.c_prev * f * (1.0 - f)
    da_g = dc * i * (1.0 - g * g)
    dc_prev = dc * f
    if p.peephole is not None:
        dc_prev = dc_prev + da_i * p.peephole[0] + da_f * p.peephole[1]
        grads.peephole[0] += (da_i * cache.c_prev).sum(axis=(0, 1, 2))
        grads.peephole[1] += (da_f * cache.c_prev).sum(axis=(0, 1, 2))
        grads.peephole[2] += (da_o * cache.c).sum(axis=(0, 1, 2))
    da = np.concatenate([da_i, da_f, da_o, da_g], axis=-1)
    da = da.reshape(-1, da.shape[-1])
    cols = im2col(cache.z, p.kernel)
    gw = da.T @ cols
    k = p.kernel
    grads.weight += gw.reshape(gw.shape[0], k, k, -1).transpose(0, 3, 1, 2)
    grads.bias += da.sum(axis=0)
    dz = col2im(da @ wmat, cache.z.shape, k)
    return dz[..., :p.in_ch], dz[..., p.in_ch:], dc_prev
