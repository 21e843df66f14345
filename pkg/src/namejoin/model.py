"""Trained-model container and its binary file format.

Layout (little-endian):

    magic   4 bytes  b"EJM1"
    version u32      currently 1
    hlen    u32      byte length of the JSON header
    header  hlen     UTF-8 JSON: max_tokens, char_dim, chars (sorted code
                     points), input_dim, layer_dims, loss {kind, margin,
                     intra_margin, balance, angle, normalize}
    floats  f32      fallback character row; one row per entry of `chars`
                     (code-point order); then per layer W_z,U_z,b_z,
                     W_r,U_r,b_r,W_h,U_h,b_h, row-major

Weights are quantized to float32-representable values when a Model is
constructed, so load(save(m)) reproduces every embedding bitwise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Union

import numpy as np

from .encoder import EncoderParams, GruLayerParams, PARAM_NAMES
from .encoding import CharEmbeddingTable, DEFAULT_MAX_TOKENS
from .errors import FormatError, VersionMismatch
from .losses import LossParams

MAGIC = b"EJM1"
FORMAT_VERSION = 1

BinarySink = Union[str, Path, IO[bytes]]


def _quantized(a: np.ndarray) -> np.ndarray:
    """Round to the nearest float32 value, kept in float64 for computation."""
    return np.ascontiguousarray(
        np.asarray(a, dtype=np.float64).astype(np.float32), dtype=np.float64
    )


@dataclass
class Model:
    params: EncoderParams
    char_table: CharEmbeddingTable
    loss: LossParams
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise FormatError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.params.input_dim != self.char_table.dim:
            raise FormatError(
                f"encoder expects {self.params.input_dim}-d inputs but the "
                f"character table is {self.char_table.dim}-d"
            )
        for layer in self.params.layers:
            for name in PARAM_NAMES:
                setattr(layer, name, _quantized(getattr(layer, name)))
        self.char_table = CharEmbeddingTable(
            dim=self.char_table.dim,
            entries={c: _quantized(v) for c, v in self.char_table.entries.items()},
            fallback=_quantized(self.char_table.fallback),
        )

    @property
    def embedding_dim(self) -> int:
        return self.params.output_dim


def save_model(model: Model, sink: BinarySink) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            save_model(model, fh)
        return
    chars = sorted(model.char_table.entries, key=ord)
    header = {
        "max_tokens": model.max_tokens,
        "char_dim": model.char_table.dim,
        "chars": [ord(c) for c in chars],
        "input_dim": model.params.input_dim,
        "layer_dims": [layer.b_z.shape[0] for layer in model.params.layers],
        "loss": {
            "kind": model.loss.kind,
            "margin": model.loss.margin,
            "intra_margin": model.loss.intra_margin,
            "balance": model.loss.balance,
            "angle": model.loss.angle_alpha,
            "normalize": model.loss.normalize_inputs,
        },
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    sink.write(MAGIC)
    sink.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
    sink.write(blob)
    sink.write(model.char_table.fallback.astype("<f4").tobytes())
    for c in chars:
        sink.write(model.char_table.entries[c].astype("<f4").tobytes())
    for layer in model.params.layers:
        for name in PARAM_NAMES:
            sink.write(np.ascontiguousarray(getattr(layer, name)).astype("<f4").tobytes())


def _read_exact(source: IO[bytes], count: int) -> bytes:
    data = source.read(count)
    if len(data) != count:
        raise FormatError(f"truncated model file: wanted {count} bytes, got {len(data)}")
    return data


def _read_floats(source: IO[bytes], shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    raw = np.frombuffer(_read_exact(source, 4 * count), dtype="<f4")
    return raw.astype(np.float64).reshape(shape)


def load_model(source: BinarySink) -> Model:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_model(fh)
    magic = _read_exact(source, 4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, hlen = struct.unpack("<II", _read_exact(source, 8))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {version} not supported")
    try:
        header = json.loads(_read_exact(source, hlen).decode("utf-8"))
        max_tokens = header["max_tokens"]
        char_dim = header["char_dim"]
        codepoints = header["chars"]
        input_dim = header["input_dim"]
        layer_dims = header["layer_dims"]
        loss_blob = header["loss"]
        loss = LossParams(
            kind=loss_blob["kind"],
            margin=loss_blob["margin"],
            intra_margin=loss_blob["intra_margin"],
            balance=loss_blob["balance"],
            angle_alpha=loss_blob["angle"],
            normalize_inputs=loss_blob["normalize"],
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad model header: {exc}") from exc
    if input_dim != char_dim:
        raise FormatError(
            f"header inconsistency: input_dim {input_dim} != char_dim {char_dim}"
        )
    fallback = _read_floats(source, (char_dim,))
    entries = {
        chr(cp): _read_floats(source, (char_dim,)) for cp in codepoints
    }
    layers = []
    in_dim = input_dim
    for h in layer_dims:
        shapes = {
            "w_z": (h, in_dim), "u_z": (h, h), "b_z": (h,),
            "w_r": (h, in_dim), "u_r": (h, h), "b_r": (h,),
            "w_h": (h, in_dim), "u_h": (h, h), "b_h": (h,),
        }
        layers.append(
            GruLayerParams(**{name: _read_floats(source, shapes[name]) for name in PARAM_NAMES})
        )
        in_dim = h
    table = CharEmbeddingTable(dim=char_dim, entries=entries, fallback=fallback)
    return Model(
        params=EncoderParams(layers=layers),
        char_table=table,
        loss=loss,
        max_tokens=max_tokens,
    )
