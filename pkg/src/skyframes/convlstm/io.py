"""Binary weight files.

Layout (all little-endian)::

    b"VADB"                 magic
    u32 version             currently 1
    u32 channels, hidden, kernel, layers, flags, decoder_input
    f32[...] parameters     in EncoderDecoderModel.parameters() order
    u32 crc32               of every preceding byte

``flags`` bit 0 marks peephole weights. ``decoder_input`` indexes
``DECODER_INPUTS``. Per layer the encoder cells come first, then the decoder
cells, each as weight (4*hidden, in+hidden, k, k), bias (4*hidden,) and,
with peepholes, (3, hidden); the readout (hidden, channels) and its bias
(channels,) close the payload.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import DECODER_INPUTS, EncoderDecoderModel, ModelConfig

MAGIC = b"VADB"
VERSION = 1
_HEADER = struct.Struct("<4sI6I")


class ModelFormatError(ValueError):
    pass


class ShapeMismatchError(ModelFormatError):
    pass


def save_model(model: EncoderDecoderModel, path) -> None:
    cfg = model.config
    header = _HEADER.pack(MAGIC, VERSION, cfg.channels, cfg.hidden, cfg.kernel, cfg.layers,
                          int(cfg.peephole), DECODER_INPUTS.index(cfg.decoder_input))
    body = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.parameters())
    blob = header + body
    Path(path).write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))


def load_model(path, expected: ModelConfig | None = None) -> EncoderDecoderModel:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + 4:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, channels, hidden, kernel, layers, flags, mode = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    if mode >= len(DECODER_INPUTS):
        raise ModelFormatError(f"{path}: unknown decoder input mode {mode}")
    cfg = ModelConfig(channels=channels, hidden=hidden, kernel=kernel, layers=layers,
                      peephole=bool(flags & 1), decoder_input=DECODER_INPUTS[mode])
    if expected is not None:
        got = (cfg.channels, cfg.hidden, cfg.kernel, cfg.layers, cfg.peephole)
        want = (expected.channels, expected.hidden, expected.kernel, expected.layers, expected.peephole)
        if got != want:
            raise ShapeMismatchError(
                f"{path}: stored model has (channels, hidden, kernel, layers, peephole)={got}, expected {want}")
    model = EncoderDecoderModel.init(cfg, seed=0)
    params = model.parameters()
    need = sum(p.size for p in params) * 4
    payload = blob[_HEADER.size:-4]
    if len(payload) != need:
        raise ModelFormatError(f"{path}: expected {need} parameter bytes, found {len(payload)} (truncated?)")
    (crc,) = struct.unpack("<I", blob[-4:])
    if crc != zlib.crc32(blob[:-4]):
        raise ModelFormatError(f"{path}: checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    offset = 0
    for p in params:
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return model
