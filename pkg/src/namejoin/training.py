"""Training loop: identity-level splits, Adam over summed triplet gradients,
early stopping on validation triplet accuracy, and margin grid search.

Determinism contract: for a fixed config seed the whole run, including batch
order and the returned report, is bitwise-reproducible. Gradients within a batch
are reduced in a canonical order (unique item ids, ascending), so the result
does not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .encoder import (
    EncoderParams,
    PARAM_NAMES,
    encode_batch,
    encode_batch_backward,
    zeros_like_params,
)
from .errors import EmptyInput, NonFiniteLoss, TooFewIdentities
from .losses import LossParams, batch_values_and_grads
from .mining import ItemCatalog, TripletIdx

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class TrainConfig:
    loss: LossParams
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 3
    grad_clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    best_epoch: int
    stop_reason: str

    @property
    def best_val_accuracy(self) -> float:
        return self.epochs[self.best_epoch - 1].val_accuracy


@dataclass(frozen=True)
class DatasetSplit:
    train: frozenset[int]
    validation: frozenset[int]
    test: frozenset[int]


def _largest_remainder_counts(n: int, ratios: Sequence[float]) -> list[int]:
    exact = [n * r for r in ratios]
    base = [math.floor(e) for e in exact]
    leftover = n - sum(base)
    by_remainder = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i)
    )
    for i in by_remainder[:leftover]:
        base[i] += 1
    return base


def split_dataset(
    identities: Sequence[int],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Seeded shuffle then contiguous train/validation/test partition of identities."""
    if len(identities) < 3:
        raise TooFewIdentities(f"need >= 3 identities, got {len(identities)}")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(identities))
    shuffled = [identities[i] for i in order]
    n_train, n_val, _ = _largest_remainder_counts(len(identities), ratios)
    return DatasetSplit(
        train=frozenset(shuffled[:n_train]),
        validation=frozenset(shuffled[n_train : n_train + n_val]),
        test=frozenset(shuffled[n_train + n_val :]),
    )


def partition_triplets(
    triplets: Sequence[TripletIdx], catalog: ItemCatalog, split: DatasetSplit
) -> tuple[list[TripletIdx], list[TripletIdx], list[TripletIdx]]:
    """Assign each triplet to the split holding all three of its identities.

    Triplets straddling splits are discarded (identity-level isolation).
    """
    buckets: tuple[list[TripletIdx], list[TripletIdx], list[TripletIdx]] = ([], [], [])
    sets = (split.train, split.validation, split.test)
    for t in triplets:
        idents = {
            catalog.identity_of(t.anchor_id),
            catalog.identity_of(t.positive_id),
            catalog.identity_of(t.negative_id),
        }
        for bucket, members in zip(buckets, sets):
            if idents <= members:
                bucket.append(t)
                break
    return buckets


def _embed_unique(
    item_ids: Sequence[int],
    catalog: ItemCatalog,
    params: EncoderParams,
    chunk: int = 1024,
) -> dict[int, np.ndarray]:
    """Raw embeddings for a set of items, computed in id order, chunked."""
    unique = sorted(set(item_ids))
    out: dict[int, np.ndarray] = {}
    for start in range(0, len(unique), chunk):
        ids = unique[start : start + chunk]
        encs = [catalog.by_id[i].encoding for i in ids]
        embs, _ = encode_batch(encs, params)
        for row, item_id in enumerate(ids):
            out[item_id] = embs[row]
    return out


def triplet_accuracy(
    triplets: Sequence[TripletIdx],
    catalog: ItemCatalog,
    params: EncoderParams,
    loss: LossParams,
) -> float:
    """Fraction of triplets with d(a,p) strictly below d(a,n); ties count as wrong.

    Distances follow the loss kind's normalization policy.
    """
    if not triplets:
        raise EmptyInput("triplet_accuracy over an empty list")
    all_ids = [i for t in triplets for i in t]
    embs = _embed_unique(all_ids, catalog, params)
    a = np.stack([embs[t.anchor_id] for t in triplets])
    p = np.stack([embs[t.positive_id] for t in triplets])
    n = np.stack([embs[t.negative_id] for t in triplets])
    if loss.normalize_inputs:
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
        p = p / np.linalg.norm(p, axis=1, keepdims=True)
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
    d_ap = np.linalg.norm(a - p, axis=1)
    d_an = np.linalg.norm(a - n, axis=1)
    return float(np.mean(d_ap < d_an))


class _Adam:
    def __init__(self, params: EncoderParams, cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params: EncoderParams, grads: EncoderParams) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.adam_beta1**self.t
        bc2 = 1.0 - cfg.adam_beta2**self.t
        for layer, glayer, mlayer, vlayer in zip(
            params.layers, grads.layers, self.m.layers, self.v.layers
        ):
            for name in PARAM_NAMES:
                w = getattr(layer, name)
                g = getattr(glayer, name)
                m = getattr(mlayer, name)
                v = getattr(vlayer, name)
                m *= cfg.adam_beta1
                m += (1.0 - cfg.adam_beta1) * g
                v *= cfg.adam_beta2
                v += (1.0 - cfg.adam_beta2) * g * g
                w -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def _grad_global_norm(grads: EncoderParams) -> float:
    total = 0.0
    for layer in grads.layers:
        for name in PARAM_NAMES:
            g = getattr(layer, name)
            total += float(np.vdot(g, g))
    return math.sqrt(total)


def _scale_grads(grads: EncoderParams, scale: float) -> None:
    for layer in grads.layers:
        for name in PARAM_NAMES:
            getattr(layer, name)[...] *= scale


def fit(
    train_triplets: Sequence[TripletIdx],
    val_triplets: Sequence[TripletIdx],
    catalog: ItemCatalog,
    cfg: TrainConfig,
    init: EncoderParams,
) -> tuple[EncoderParams, TrainReport]:
    """Run the epoch loop over pre-partitioned triplet lists.

    Returns the parameters of the best validation epoch and the full report.
    """
    if not train_triplets:
        raise EmptyInput("no training triplets")
    if not val_triplets:
        raise EmptyInput("no validation triplets")
    params = init.copy()
    adam = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    epochs: list[EpochStats] = []
    best_acc = -1.0
    best_epoch = 0
    best_params = params.copy()
    bad_epochs = 0
    stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_triplets))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_triplets[i] for i in order[start : start + cfg.batch_size]]
            unique = sorted({i for t in batch for i in t})
            row_of = {item_id: row for row, item_id in enumerate(unique)}
            encs = [catalog.by_id[i].encoding for i in unique]
            embs, tape = encode_batch(encs, params)
            a_rows = np.array([row_of[t.anchor_id] for t in batch])
            p_rows = np.array([row_of[t.positive_id] for t in batch])
            n_rows = np.array([row_of[t.negative_id] for t in batch])
            values, ga, gp, gn = batch_values_and_grads(
                embs[a_rows], embs[p_rows], embs[n_rows], cfg.loss
            )
            batch_total = float(values.sum())
            if not math.isfinite(batch_total):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, batch offset {start}"
                )
            seeds = np.zeros_like(embs)
            np.add.at(seeds, a_rows, ga)
            np.add.at(seeds, p_rows, gp)
            np.add.at(seeds, n_rows, gn)
            grads = encode_batch_backward(tape, seeds, params)
            norm = _grad_global_norm(grads)
            if not math.isfinite(norm):
                raise NonFiniteLoss(
                    f"non-finite gradient at epoch {epoch}, batch offset {start}"
                )
            if cfg.grad_clip_norm > 0 and norm > cfg.grad_clip_norm:
                _scale_grads(grads, cfg.grad_clip_norm / norm)
            adam.step(params, grads)
            epoch_loss += batch_total
        val_acc = triplet_accuracy(val_triplets, catalog, params, cfg.loss)
        epochs.append(EpochStats(epoch=epoch, train_loss=epoch_loss, val_accuracy=val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stop_reason = "early_stopping"
                break
    return best_params, TrainReport(
        epochs=epochs, best_epoch=best_epoch, stop_reason=stop_reason
    )


def train(
    triplets: Sequence[TripletIdx],
    catalog: ItemCatalog,
    split: DatasetSplit,
    cfg: TrainConfig,
    init: EncoderParams,
) -> tuple[EncoderParams, TrainReport]:
    """Partition triplets by the identity split, then fit on train/validation."""
    train_t, val_t, _ = partition_triplets(triplets, catalog, split)
    return fit(train_t, val_t, catalog, cfg, init)


def split_triplets(
    triplets: Sequence[TripletIdx],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> tuple[list[TripletIdx], list[TripletIdx], list[TripletIdx]]:
    """Triplet-level 60/20/20 split (the literal alternative to identity-level).

    Leaks identities across partitions; kept as an escape hatch behind
    `--split-level triplet`.
    """
    if not triplets:
        raise EmptyInput("no triplets to split")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(triplets))
    shuffled = [triplets[i] for i in order]
    n_train, n_val, _ = _largest_remainder_counts(len(triplets), ratios)
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def grid_search_margin(
    margins: Sequence[float],
    cfg: TrainConfig,
    triplets: Sequence[TripletIdx],
    catalog: ItemCatalog,
    split: DatasetSplit,
    init: EncoderParams,
) -> tuple[float, dict[float, TrainReport]]:
    """Train once per margin; best = highest best-epoch validation accuracy,
    ties resolved toward the smaller margin."""
    if not margins:
        raise EmptyInput("no margins to search")
    reports: dict[float, TrainReport] = {}
    for margin in margins:
        run_cfg = replace(cfg, loss=replace(cfg.loss, margin=margin))
        _, report = train(triplets, catalog, split, run_cfg, init)
        reports[margin] = report
    best_margin = min(
        reports, key=lambda m: (-reports[m].best_val_accuracy, m)
    )
    return best_margin, reports
