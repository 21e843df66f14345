"""Stacked-GRU name encoder with exact reverse-mode gradients.

Cell equations (standard GRU):

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    hcand_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * hcand_t

The embedding of a name is the final-step hidden state of the last layer, with
h_0 = 0 per layer and no processing of padding rows. All math runs at 64-bit.

The core forward/backward operate on batches of encodings (padded to the longest
valid_len in the batch, with per-step masks so shorter names freeze their state);
the single-name operations are thin wrappers over the batch of one. Anchor,
positive, and negative branches of a triplet share one EncoderParams value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .encoding import NameEncoding
from .errors import EmptySequence, ShapeMismatch, ZeroVector

PARAM_NAMES = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")

DESK_SCALE_LAYERS = (32, 32)
PAPER_SCALE_LAYERS = (128, 128, 128, 128)


@dataclass
class GruLayerParams:
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]

    def copy(self) -> "GruLayerParams":
        return GruLayerParams(*(getattr(self, n).copy() for n in PARAM_NAMES))


@dataclass
class EncoderParams:
    layers: list[GruLayerParams]

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].hidden_dim

    def copy(self) -> "EncoderParams":
        return EncoderParams([layer.copy() for layer in self.layers])


def param_arrays(params: EncoderParams) -> Iterator[np.ndarray]:
    """Yield every parameter array in a fixed (layer, gate) order."""
    for layer in params.layers:
        for name in PARAM_NAMES:
            yield getattr(layer, name)


def zeros_like_params(params: EncoderParams) -> EncoderParams:
    return EncoderParams(
        [
            GruLayerParams(*(np.zeros_like(getattr(layer, n)) for n in PARAM_NAMES))
            for layer in params.layers
        ]
    )


@dataclass
class GruStep:
    """Per-step activations recorded for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hcand: np.ndarray


@dataclass
class _LayerTrace:
    inputs: np.ndarray  # (steps, batch, input_dim)
    h_prev: np.ndarray  # (steps, batch, hidden)
    z: np.ndarray
    r: np.ndarray
    hcand: np.ndarray


@dataclass
class BatchTape:
    layers: list[_LayerTrace]
    mask: np.ndarray  # (steps, batch, 1), 1.0 while t < valid_len
    lengths: np.ndarray


@dataclass
class ForwardTape:
    """Activations of one name's forward pass; step count equals valid_len."""

    batch: BatchTape
    encoding: NameEncoding

    @property
    def steps(self) -> int:
        return self.encoding.valid_len

    def hidden_states(self, layer: int) -> np.ndarray:
        """Hidden state after each step for one layer, shape (steps, hidden)."""
        trace = self.batch.layers[layer]
        hp = trace.h_prev[:, 0, :]
        z = trace.z[:, 0, :]
        hc = trace.hcand[:, 0, :]
        return hp + z * (hc - hp)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(a, -60.0, 60.0)))


def gru_cell_forward(
    x_t: np.ndarray, h_prev: np.ndarray, params: GruLayerParams
) -> tuple[np.ndarray, GruStep]:
    """One GRU step; returns the new hidden state and the step record."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise ShapeMismatch(
            f"input has shape {x_t.shape}, expected ({params.input_dim},)"
        )
    if h_prev.shape != (params.hidden_dim,):
        raise ShapeMismatch(
            f"state has shape {h_prev.shape}, expected ({params.hidden_dim},)"
        )
    z = _sigmoid(params.w_z @ x_t + params.u_z @ h_prev + params.b_z)
    r = _sigmoid(params.w_r @ x_t + params.u_r @ h_prev + params.b_r)
    hcand = np.tanh(params.w_h @ x_t + params.u_h @ (r * h_prev) + params.b_h)
    h_t = (1.0 - z) * h_prev + z * hcand
    return h_t, GruStep(x=x_t, h_prev=h_prev, z=z, r=r, hcand=hcand)


def encode_batch(
    encodings: Sequence[NameEncoding], params: EncoderParams
) -> tuple[np.ndarray, BatchTape]:
    """Embed a batch of encodings; returns (batch x output_dim) and the tape."""
    if not encodings:
        raise EmptySequence("cannot encode an empty batch")
    dim = params.input_dim
    lengths = np.array([enc.valid_len for enc in encodings], dtype=np.int64)
    if (lengths < 1).any():
        raise EmptySequence("encoding with valid_len = 0 in batch")
    for enc in encodings:
        if enc.dim != dim:
            raise ShapeMismatch(f"encoding dim {enc.dim} != encoder input dim {dim}")
    steps = int(lengths.max())
    batch = len(encodings)

    x = np.zeros((steps, batch, dim), dtype=np.float64)
    for b, enc in enumerate(encodings):
        x[: enc.valid_len, b, :] = enc.matrix[: enc.valid_len]
    # mask[t, b] = 1 while step t is real for name b; masked steps freeze the state
    mask = (np.arange(steps)[:, None] < lengths[None, :]).astype(np.float64)[:, :, None]

    traces: list[_LayerTrace] = []
    layer_input = x
    h_final = np.zeros((batch, params.output_dim), dtype=np.float64)
    for layer in params.layers:
        hidden = layer.hidden_dim
        trace = _LayerTrace(
            inputs=layer_input,
            h_prev=np.empty((steps, batch, hidden), dtype=np.float64),
            z=np.empty((steps, batch, hidden), dtype=np.float64),
            r=np.empty((steps, batch, hidden), dtype=np.float64),
            hcand=np.empty((steps, batch, hidden), dtype=np.float64),
        )
        out_seq = np.empty((steps, batch, hidden), dtype=np.float64)
        h = np.zeros((batch, hidden), dtype=np.float64)
        for t in range(steps):
            x_t = layer_input[t]
            z = _sigmoid(x_t @ layer.w_z.T + h @ layer.u_z.T + layer.b_z)
            r = _sigmoid(x_t @ layer.w_r.T + h @ layer.u_r.T + layer.b_r)
            hcand = np.tanh(x_t @ layer.w_h.T + (r * h) @ layer.u_h.T + layer.b_h)
            trace.h_prev[t] = h
            trace.z[t] = z
            trace.r[t] = r
            trace.hcand[t] = hcand
            h = h + mask[t] * z * (hcand - h)
            out_seq[t] = h
        traces.append(trace)
        layer_input = out_seq
        h_final = h
    return h_final, BatchTape(layers=traces, mask=mask, lengths=lengths)


def encode_batch_backward(
    tape: BatchTape, grad_embeddings: np.ndarray, params: EncoderParams
) -> EncoderParams:
    """Parameter gradients of (embeddings . grad_embeddings) summed over the batch."""
    grad_embeddings = np.asarray(grad_embeddings, dtype=np.float64)
    steps, batch, _ = tape.layers[0].z.shape if tape.layers else (0, 0, 0)
    if grad_embeddings.shape != (batch, params.output_dim):
        raise ShapeMismatch(
            f"seed has shape {grad_embeddings.shape}, "
            f"expected ({batch}, {params.output_dim})"
        )
    grads = zeros_like_params(params)
    # d_out[t] = gradient w.r.t. a layer's hidden state after step t, fed from above;
    # for the top layer only the final step is seeded (the embedding).
    d_out = np.zeros((steps, batch, params.output_dim), dtype=np.float64)
    d_out[steps - 1] = grad_embeddings
    for idx in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[idx]
        trace = tape.layers[idx]
        glayer = grads.layers[idx]
        d_below = (
            np.zeros_like(trace.inputs) if idx > 0 else None
        )  # layer 0 input grads are not needed
        carry = np.zeros((batch, layer.hidden_dim), dtype=np.float64)
        for t in range(steps - 1, -1, -1):
            dh = carry + d_out[t]
            m = tape.mask[t]
            z = trace.z[t]
            r = trace.r[t]
            hc = trace.hcand[t]
            hp = trace.h_prev[t]
            x_t = trace.inputs[t]

            dz = dh * (hc - hp) * m
            dhc = dh * z * m
            dh_prev = dh * (1.0 - z * m)

            da_h = dhc * (1.0 - hc * hc)
            glayer.w_h += da_h.T @ x_t
            glayer.u_h += da_h.T @ (r * hp)
            glayer.b_h += da_h.sum(axis=0)
            drh = da_h @ layer.u_h
            dr = drh * hp
            dh_prev = dh_prev + drh * r

            da_z = dz * z * (1.0 - z)
            glayer.w_z += da_z.T @ x_t
            glayer.u_z += da_z.T @ hp
            glayer.b_z += da_z.sum(axis=0)
            dh_prev = dh_prev + da_z @ layer.u_z

            da_r = dr * r * (1.0 - r)
            glayer.w_r += da_r.T @ x_t
            glayer.u_r += da_r.T @ hp
            glayer.b_r += da_r.sum(axis=0)
            dh_prev = dh_prev + da_r @ layer.u_r

            if d_below is not None:
                d_below[t] = da_z @ layer.w_z + da_r @ layer.w_r + da_h @ layer.w_h
            carry = dh_prev
        if d_below is not None:
            d_out = d_below
    return grads


def encoder_forward(
    enc: NameEncoding, params: EncoderParams
) -> tuple[np.ndarray, ForwardTape]:
    """Embed one name; returns the embedding and the tape for the backward pass."""
    if enc.valid_len == 0:
        raise EmptySequence("encoding has no valid steps")
    embeddings, tape = encode_batch([enc], params)
    return embeddings[0], ForwardTape(batch=tape, encoding=enc)


def encoder_backward(
    tape: ForwardTape, grad_embedding: np.ndarray, params: EncoderParams
) -> EncoderParams:
    """Exact gradients of (embedding . grad_embedding) w.r.t. every parameter."""
    grad_embedding = np.asarray(grad_embedding, dtype=np.float64)
    if grad_embedding.shape != (params.output_dim,):
        raise ShapeMismatch(
            f"seed has shape {grad_embedding.shape}, expected ({params.output_dim},)"
        )
    return encode_batch_backward(tape.batch, grad_embedding[None, :], params)


def normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||; raises ZeroVector on zero input."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def init_params(
    layer_dims: Sequence[int], input_dim: int, seed: int
) -> EncoderParams:
    """Uniform [-s, s] init with s = sqrt(6 / (fan_in + fan_out)); zero biases."""
    if input_dim < 1 or any(d < 1 for d in layer_dims):
        raise ShapeMismatch("all dims must be >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for hidden in layer_dims:
        s_w = np.sqrt(6.0 / (fan_in + hidden))
        s_u = np.sqrt(6.0 / (hidden + hidden))
        gates = {}
        for gate in ("z", "r", "h"):
            gates[f"w_{gate}"] = rng.uniform(-s_w, s_w, size=(hidden, fan_in))
            gates[f"u_{gate}"] = rng.uniform(-s_u, s_u, size=(hidden, hidden))
            gates[f"b_{gate}"] = np.zeros(hidden, dtype=np.float64)
        layers.append(GruLayerParams(**gates))
        fan_in = hidden
    return EncoderParams(layers)
