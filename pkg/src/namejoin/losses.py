"""Triplet objectives over (anchor, positive, negative) embeddings.

Four interchangeable losses, all hinge-based, written with squared Euclidean
distances d2(x, y) = ||x - y||^2 except where noted:

    triplet   l = [d2(a,p) - d2(a,n) + margin]+
    improved  psi = d2(a,p) - intra_margin
              phi = d2(a,p) - (d2(a,n) + d2(p,n)) / 2 + margin
              l = [phi]+ + balance * [psi]+
    angular   c = (a + p) / 2
              l = [d2(a,p) - 4 tan^2(angle) * d2(n,c)]+
    adapted   l = d2(a,p) + [margin - ||a - n||]+ ^ 2   (un-squared distance in the hinge)

triplet/improved/angular consume unit-normalized embeddings; adapted consumes raw
ones. ``loss_value``/``loss_gradients`` apply that policy themselves, and the
gradients differentiate through the normalization. The hinge subgradient at the
kink is 0, so inactive triplets stay inert. A batch loss is the plain sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyBatch, ShapeMismatch, ZeroVector

LOSS_KINDS = ("triplet", "improved", "angular", "adapted")
NORMALIZED_KINDS = frozenset({"triplet", "improved", "angular"})
DEFAULT_MARGINS = {"triplet": 0.2, "improved": 1.0, "angular": 1.0, "adapted": 5.0}
DEFAULT_INTRA_MARGIN = 0.1
DEFAULT_BALANCE = 0.02
DEFAULT_ANGLE = math.radians(45.0)


@dataclass(frozen=True)
class LossParams:
    kind: str
    margin: float
    intra_margin: float = DEFAULT_INTRA_MARGIN
    balance: float = DEFAULT_BALANCE
    angle_alpha: float = DEFAULT_ANGLE
    normalize_inputs: bool = True

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.intra_margin < 0 or self.balance < 0:
            raise ValueError("intra_margin and balance must be >= 0")
        if not 0 < self.angle_alpha < math.pi / 2:
            raise ValueError("angle_alpha must lie in (0, pi/2)")

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "LossParams":
        """Per-kind defaults: triplet 0.2, improved 1.0 (0.1/0.02), adapted 5.0."""
        base = cls(
            kind=kind,
            margin=DEFAULT_MARGINS.get(kind, 1.0),
            normalize_inputs=kind in NORMALIZED_KINDS,
        )
        return replace(base, **overrides) if overrides else base


class TripletEmbeddings(NamedTuple):
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"vectors have shapes {a.shape} and {b.shape}")
    return float(np.linalg.norm(a - b))


def _as_rows(t: TripletEmbeddings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = np.asarray(t.anchor, dtype=np.float64)
    p = np.asarray(t.positive, dtype=np.float64)
    n = np.asarray(t.negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape) or a.ndim != 1:
        raise ShapeMismatch(
            f"triplet shapes differ: {a.shape}, {p.shape}, {n.shape}"
        )
    return a[None, :], p[None, :], n[None, :]


def _sq_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x - y
    return np.einsum("bd,bd->b", diff, diff)


def _check_batch(a: np.ndarray, p: np.ndarray, n: np.ndarray) -> None:
    if not (a.shape == p.shape == n.shape) or a.ndim != 2:
        raise ShapeMismatch(
            f"batch shapes differ: {a.shape}, {p.shape}, {n.shape}"
        )


def _values(a: np.ndarray, p: np.ndarray, n: np.ndarray, params: LossParams) -> np.ndarray:
    """Per-triplet loss values over already-normalization-handled rows."""
    kind = params.kind
    if kind == "triplet":
        return np.maximum(0.0, _sq_dist(a, p) - _sq_dist(a, n) + params.margin)
    if kind == "improved":
        d_ap = _sq_dist(a, p)
        phi = d_ap - (_sq_dist(a, n) + _sq_dist(p, n)) / 2.0 + params.margin
        psi = d_ap - params.intra_margin
        return np.maximum(0.0, phi) + params.balance * np.maximum(0.0, psi)
    if kind == "angular":
        c = (a + p) / 2.0
        tan2 = math.tan(params.angle_alpha) ** 2
        return np.maximum(0.0, _sq_dist(a, p) - 4.0 * tan2 * _sq_dist(n, c))
    # adapted
    d_an = np.sqrt(_sq_dist(a, n))
    hinge = np.maximum(0.0, params.margin - d_an)
    return _sq_dist(a, p) + hinge * hinge


def _grads(
    a: np.ndarray, p: np.ndarray, n: np.ndarray, params: LossParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-triplet subgradients in the (possibly normalized) input space of _values."""
    kind = params.kind
    ga = np.zeros_like(a)
    gp = np.zeros_like(p)
    gn = np.zeros_like(n)
    if kind == "triplet":
        active = (_sq_dist(a, p) - _sq_dist(a, n) + params.margin) > 0.0
        w = active[:, None].astype(np.float64)
        ga += w * 2.0 * (n - p)
        gp += w * -2.0 * (a - p)
        gn += w * 2.0 * (a - n)
    elif kind == "improved":
        d_ap = _sq_dist(a, p)
        phi = d_ap - (_sq_dist(a, n) + _sq_dist(p, n)) / 2.0 + params.margin
        psi = d_ap - params.intra_margin
        w_phi = (phi > 0.0)[:, None].astype(np.float64)
        w_psi = params.balance * (psi > 0.0)[:, None].astype(np.float64)
        ga += w_phi * (2.0 * (a - p) - (a - n)) + w_psi * 2.0 * (a - p)
        gp += w_phi * (-2.0 * (a - p) - (p - n)) + w_psi * -2.0 * (a - p)
        gn += w_phi * ((a - n) + (p - n))
    elif kind == "angular":
        c = (a + p) / 2.0
        tan2 = math.tan(params.angle_alpha) ** 2
        active = (_sq_dist(a, p) - 4.0 * tan2 * _sq_dist(n, c)) > 0.0
        w = active[:, None].astype(np.float64)
        nc = n - c
        ga += w * (2.0 * (a - p) + 4.0 * tan2 * nc)
        gp += w * (-2.0 * (a - p) + 4.0 * tan2 * nc)
        gn += w * -8.0 * tan2 * nc
    else:  # adapted
        d_an = np.sqrt(_sq_dist(a, n))
        hinge = np.maximum(0.0, params.margin - d_an)
        # unit direction (a - n)/||a - n||; at the degenerate a == n point the
        # norm has no gradient, take the 0 subgradient there
        safe = np.where(d_an > 0.0, d_an, 1.0)
        unit = (a - n) / safe[:, None]
        unit[d_an == 0.0] = 0.0
        w = (2.0 * hinge)[:, None]
        ga += 2.0 * (a - p) - w * unit
        gp += 2.0 * (p - a)
        gn += w * unit
    return ga, gp, gn


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0.0).any():
        raise ZeroVector("cannot normalize a zero embedding")
    return x / norms[:, None], norms


def _backprop_normalize(g: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    inner = np.einsum("bd,bd->b", g, unit)
    return (g - inner[:, None] * unit) / norms[:, None]


def batch_values_and_grads(
    a: np.ndarray,
    p: np.ndarray,
    n: np.ndarray,
    params: LossParams,
    with_grads: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Losses (and raw-space gradients) for row-stacked triplets.

    Rows are raw embeddings; normalization, when the kind calls for it, happens
    here and is differentiated through.
    """
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    _check_batch(a, p, n)
    if params.normalize_inputs:
        ua, na = _normalize_rows(a)
        up, np_ = _normalize_rows(p)
        un, nn = _normalize_rows(n)
    else:
        ua, up, un = a, p, n
    values = _values(ua, up, un, params)
    if not with_grads:
        return values, np.zeros_like(a), np.zeros_like(p), np.zeros_like(n)
    ga, gp, gn = _grads(ua, up, un, params)
    if params.normalize_inputs:
        ga = _backprop_normalize(ga, ua, na)
        gp = _backprop_normalize(gp, up, np_)
        gn = _backprop_normalize(gn, un, nn)
    return values, ga, gp, gn


def triplet_loss(t: TripletEmbeddings, margin: float = DEFAULT_MARGINS["triplet"]) -> float:
    """Eq-style hinge on squared distances; expects pre-normalized inputs."""
    a, p, n = _as_rows(t)
    return float(_values(a, p, n, LossParams("triplet", margin, normalize_inputs=False))[0])


def improved_loss(
    t: TripletEmbeddings,
    margin: float = DEFAULT_MARGINS["improved"],
    intra_margin: float = DEFAULT_INTRA_MARGIN,
    balance: float = DEFAULT_BALANCE,
) -> float:
    """Inter-class hinge plus a balance-weighted intra-class hinge; pre-normalized inputs."""
    a, p, n = _as_rows(t)
    params = LossParams(
        "improved", margin, intra_margin=intra_margin, balance=balance,
        normalize_inputs=False,
    )
    return float(_values(a, p, n, params)[0])


def angular_loss(t: TripletEmbeddings, angle_alpha: float = DEFAULT_ANGLE) -> float:
    """Hinge comparing d2(a,p) against 4 tan^2(angle) d2(n, midpoint); pre-normalized."""
    a, p, n = _as_rows(t)
    params = LossParams("angular", 1.0, angle_alpha=angle_alpha, normalize_inputs=False)
    return float(_values(a, p, n, params)[0])


def adapted_loss(t: TripletEmbeddings, margin: float = DEFAULT_MARGINS["adapted"]) -> float:
    """d2(a,p) plus a squared hinge on (margin - ||a-n||); raw, unnormalized inputs."""
    a, p, n = _as_rows(t)
    params = LossParams("adapted", margin, normalize_inputs=False)
    return float(_values(a, p, n, params)[0])


def loss_value(t: TripletEmbeddings, params: LossParams) -> float:
    """One triplet's loss with the params' normalization policy applied."""
    a, p, n = _as_rows(t)
    values, _, _, _ = batch_values_and_grads(a, p, n, params, with_grads=False)
    return float(values[0])


def loss_gradients(
    t: TripletEmbeddings, params: LossParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subgradients w.r.t. the three raw embeddings (normalization differentiated)."""
    a, p, n = _as_rows(t)
    _, ga, gp, gn = batch_values_and_grads(a, p, n, params)
    return ga[0], gp[0], gn[0]


def batch_loss(triplets: Sequence[TripletEmbeddings], params: LossParams) -> float:
    """Sum of per-triplet losses."""
    if not triplets:
        raise EmptyBatch("batch_loss over an empty list")
    a = np.stack([np.asarray(t.anchor, dtype=np.float64) for t in triplets])
    p = np.stack([np.asarray(t.positive, dtype=np.float64) for t in triplets])
    n = np.stack([np.asarray(t.negative, dtype=np.float64) for t in triplets])
    values, _, _, _ = batch_values_and_grads(a, p, n, params, with_grads=False)
    return float(values.sum())
