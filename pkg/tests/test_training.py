"""Trainer: splits, accuracy metric, optimization loop, margin search."""

import numpy as np
import pytest

from helpers import point_catalog

from namejoin.encoder import PARAM_NAMES, encode_batch, init_params
from namejoin.errors import EmptyInput, NonFiniteLoss, TooFewIdentities
from namejoin.losses import LossParams
from namejoin.mining import MiningConfig, TripletIdx, catalog_forest, mine_hard
from namejoin.training import (
    DatasetSplit,
    TrainConfig,
    fit,
    grid_search_margin,
    partition_triplets,
    split_dataset,
    split_triplets,
    train,
    triplet_accuracy,
)

ADAPTED = LossParams.for_kind("adapted", margin=1.0)


def clustered_catalog(identities=10, members=3, radius=5.0, jitter=0.15):
    points = []
    for ident in range(identities):
        angle = 2.0 * np.pi * ident / identities
        cx, cy = radius * np.cos(angle), radius * np.sin(angle)
        for m in range(members):
            points.append((ident, (cx + jitter * m, cy)))
    return point_catalog(points)


def full_cross_triplets(catalog):
    out = []
    for anchor_id in sorted(catalog.by_id):
        for pid in catalog.positives_of(anchor_id):
            for nid in sorted(catalog.by_id):
                if catalog.identity_of(nid) != catalog.identity_of(anchor_id):
                    out.append(TripletIdx(anchor_id, pid, nid))
    return out


# --- identity split -------------------------------------------------------------


def test_split_sizes_10():
    split = split_dataset(list(range(10)), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (6, 2, 2)
    assert split.train | split.validation | split.test == set(range(10))
    assert not (split.train & split.validation)
    assert not (split.train & split.test)
    assert not (split.validation & split.test)


def test_split_sizes_5():
    split = split_dataset(list(range(5)), seed=3)
    assert (len(split.train), len(split.validation), len(split.test)) == (3, 1, 1)


def test_split_sizes_7_remainder_tie_goes_to_validation():
    # 7 * (0.6, 0.2, 0.2) = (4.2, 1.4, 1.4); the leftover goes to the earlier
    # of the tied fractional parts
    split = split_dataset(list(range(7)), seed=1)
    assert (len(split.train), len(split.validation), len(split.test)) == (4, 2, 1)


def test_split_deterministic_and_seed_sensitive():
    ids = list(range(30))
    assert split_dataset(ids, seed=5) == split_dataset(ids, seed=5)
    assert split_dataset(ids, seed=5) != split_dataset(ids, seed=6)


def test_split_too_few_identities():
    with pytest.raises(TooFewIdentities):
        split_dataset([1, 2])


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split_dataset(list(range(10)), ratios=(0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        split_dataset(list(range(10)), ratios=(0.5, 0.3, 0.3))


def test_partition_triplets_isolation():
    catalog = clustered_catalog(identities=6, members=2)
    split = DatasetSplit(
        train=frozenset({0, 1, 2}), validation=frozenset({3, 4}), test=frozenset({5})
    )
    triplets = full_cross_triplets(catalog)
    train_t, val_t, test_t = partition_triplets(triplets, catalog, split)
    for bucket, members in ((train_t, split.train), (val_t, split.validation)):
        assert bucket
        for t in bucket:
            idents = {
                catalog.identity_of(t.anchor_id),
                catalog.identity_of(t.positive_id),
                catalog.identity_of(t.negative_id),
            }
            assert idents <= members
    # test bucket holds one identity only: no in-bucket negatives exist
    assert test_t == []
    # triplets straddling buckets are dropped, not reassigned
    assert len(train_t) + len(val_t) + len(test_t) < len(triplets)


# --- triplet accuracy -----------------------------------------------------------


def test_triplet_accuracy_strict_and_ties():
    # positive and negative share coordinates -> equal embeddings -> tie -> wrong
    catalog = point_catalog(
        [(0, (0.0, 0.0)), (0, (1.0, 1.0)), (1, (1.0, 1.0)), (1, (9.0, 9.0))]
    )
    params = init_params([4, 3], input_dim=2, seed=0)
    tie = TripletIdx(0, 1, 2)
    assert triplet_accuracy([tie], catalog, params, ADAPTED) == 0.0
    # anchor == positive -> d_ap = 0 < d_an -> right
    catalog2 = point_catalog([(0, (0.0, 0.0)), (0, (0.0, 0.0)), (1, (5.0, 5.0))])
    good = TripletIdx(0, 1, 2)
    assert triplet_accuracy([good], catalog2, params, ADAPTED) == 1.0


def test_triplet_accuracy_two_of_three():
    catalog = point_catalog(
        [
            (0, (0.0, 0.0)),
            (0, (0.0, 0.0)),  # co-located positive
            (1, (5.0, 5.0)),
            (1, (0.0, 0.0)),  # negative co-located with the anchor
        ]
    )
    params = init_params([4, 3], input_dim=2, seed=0)
    triplets = [
        TripletIdx(0, 1, 2),  # d_ap=0 < d_an: right
        TripletIdx(1, 0, 2),  # same, swapped roles: right
        TripletIdx(0, 1, 3),  # negative tied with positive at distance 0: wrong
    ]
    acc = triplet_accuracy(triplets, catalog, params, ADAPTED)
    assert acc == pytest.approx(2.0 / 3.0)


def test_triplet_accuracy_matches_direct_distances():
    catalog = clustered_catalog(identities=4, members=2)
    params = init_params([5, 4], input_dim=2, seed=2)
    triplets = full_cross_triplets(catalog)[:20]
    for loss in (ADAPTED, LossParams.for_kind("triplet")):
        ids = sorted({i for t in triplets for i in t})
        embs, _ = encode_batch([catalog.by_id[i].encoding for i in ids], params)
        by = dict(zip(ids, embs))
        if loss.normalize_inputs:
            by = {i: v / np.linalg.norm(v) for i, v in by.items()}
        expected = np.mean(
            [
                float(
                    np.linalg.norm(by[t.anchor_id] - by[t.positive_id])
                    < np.linalg.norm(by[t.anchor_id] - by[t.negative_id])
                )
                for t in triplets
            ]
        )
        assert triplet_accuracy(triplets, catalog, params, loss) == pytest.approx(
            expected
        )


def test_triplet_accuracy_empty_raises():
    catalog = point_catalog([(0, (0.0, 0.0)), (0, (1.0, 0.0))])
    params = init_params([3], input_dim=2, seed=0)
    with pytest.raises(EmptyInput):
        triplet_accuracy([], catalog, params, ADAPTED)


# --- fit ------------------------------------------------------------------------


def toy_training_setup(seed=0):
    catalog = clustered_catalog()
    triplets = full_cross_triplets(catalog)
    train_t, val_t, _ = split_triplets(triplets, seed=seed)
    init = init_params([6, 4], input_dim=2, seed=seed)
    return catalog, train_t, val_t, init


def test_fit_zero_learning_rate_keeps_params():
    catalog, train_t, val_t, init = toy_training_setup()
    cfg = TrainConfig(loss=ADAPTED, learning_rate=0.0, max_epochs=10, patience=3, seed=0)
    params, report = fit(train_t, val_t, catalog, cfg, init)
    for l_out, l_init in zip(params.layers, init.layers):
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(l_out, name), getattr(l_init, name))
    accs = {e.val_accuracy for e in report.epochs}
    assert len(accs) == 1  # frozen params -> constant validation accuracy
    assert report.best_epoch == 1
    assert report.stop_reason == "early_stopping"
    assert len(report.epochs) == 1 + cfg.patience


def test_fit_learns_separable_clusters():
    catalog, train_t, val_t, init = toy_training_setup(seed=1)
    cfg = TrainConfig(
        loss=ADAPTED, batch_size=64, learning_rate=1e-2, max_epochs=50,
        patience=50, seed=1,
    )
    _, report = fit(train_t, val_t, catalog, cfg, init)
    assert report.best_val_accuracy >= 0.95


def test_fit_deterministic_per_seed():
    catalog, train_t, val_t, init = toy_training_setup()
    cfg = TrainConfig(loss=ADAPTED, batch_size=32, learning_rate=1e-3,
                      max_epochs=4, patience=10, seed=7)
    p1, r1 = fit(train_t, val_t, catalog, cfg, init)
    p2, r2 = fit(train_t, val_t, catalog, cfg, init)
    assert [(e.epoch, e.train_loss, e.val_accuracy) for e in r1.epochs] == [
        (e.epoch, e.train_loss, e.val_accuracy) for e in r2.epochs
    ]
    assert r1.best_epoch == r2.best_epoch
    for l1, l2 in zip(p1.layers, p2.layers):
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(l1, name), getattr(l2, name))


def test_fit_returns_best_epoch_params():
    catalog, train_t, val_t, init = toy_training_setup(seed=3)
    cfg = TrainConfig(loss=ADAPTED, learning_rate=1e-2, max_epochs=12,
                      patience=12, seed=3)
    params, report = fit(train_t, val_t, catalog, cfg, init)
    best = report.best_val_accuracy
    assert best == max(e.val_accuracy for e in report.epochs)
    assert triplet_accuracy(val_t, catalog, params, ADAPTED) == pytest.approx(best)


def test_fit_non_finite_loss_aborts():
    catalog, train_t, val_t, init = toy_training_setup()
    catalog.by_id[0].encoding.matrix[0, 0] = np.nan
    cfg = TrainConfig(loss=ADAPTED, max_epochs=2, seed=0)
    with pytest.raises(NonFiniteLoss):
        fit(train_t, val_t, catalog, cfg, init)


def test_fit_empty_inputs():
    catalog, train_t, val_t, init = toy_training_setup()
    cfg = TrainConfig(loss=ADAPTED)
    with pytest.raises(EmptyInput):
        fit([], val_t, catalog, cfg, init)
    with pytest.raises(EmptyInput):
        fit(train_t, [], catalog, cfg, init)


def test_train_wrapper_equals_partition_plus_fit():
    catalog = clustered_catalog()
    forest = catalog_forest(catalog, n_trees=8, leaf_size=4, seed=0)
    triplets = mine_hard(catalog, forest, MiningConfig(k=8))
    split = split_dataset(sorted(catalog.identity_members), seed=0)
    init = init_params([5, 3], input_dim=2, seed=0)
    cfg = TrainConfig(loss=ADAPTED, max_epochs=3, patience=5, seed=0)
    p1, r1 = train(triplets, catalog, split, cfg, init)
    train_t, val_t, _ = partition_triplets(triplets, catalog, split)
    p2, r2 = fit(train_t, val_t, catalog, cfg, init)
    assert [(e.train_loss, e.val_accuracy) for e in r1.epochs] == [
        (e.train_loss, e.val_accuracy) for e in r2.epochs
    ]
    for l1, l2 in zip(p1.layers, p2.layers):
        np.testing.assert_array_equal(l1.w_h, l2.w_h)


# --- triplet-level split --------------------------------------------------------


def test_split_triplets_sizes_and_content():
    triplets = [TripletIdx(i, i + 1, i + 2) for i in range(10)]
    a, b, c = split_triplets(triplets, seed=0)
    assert (len(a), len(b), len(c)) == (6, 2, 2)
    assert sorted(a + b + c) == sorted(triplets)


def test_split_triplets_empty_raises():
    with pytest.raises(EmptyInput):
        split_triplets([])


# --- config / grid search -------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(loss=ADAPTED, batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(loss=ADAPTED, learning_rate=-1e-3)
    with pytest.raises(ValueError):
        TrainConfig(loss=ADAPTED, patience=0)
    with pytest.raises(ValueError):
        TrainConfig(loss=ADAPTED, max_epochs=0)


def test_grid_search_single_margin():
    catalog = clustered_catalog()
    forest = catalog_forest(catalog, n_trees=8, leaf_size=4, seed=0)
    triplets = mine_hard(catalog, forest, MiningConfig(k=8))
    split = split_dataset(sorted(catalog.identity_members), seed=0)
    init = init_params([5, 3], input_dim=2, seed=0)
    cfg = TrainConfig(loss=ADAPTED, max_epochs=2, patience=5, seed=0)
    best, reports = grid_search_margin([0.7], cfg, triplets, catalog, split, init)
    assert best == 0.7
    assert set(reports) == {0.7}


def test_grid_search_tie_prefers_smaller_margin():
    # lr = 0 freezes the network, so every margin scores identically
    catalog = clustered_catalog()
    forest = catalog_forest(catalog, n_trees=8, leaf_size=4, seed=0)
    triplets = mine_hard(catalog, forest, MiningConfig(k=8))
    split = split_dataset(sorted(catalog.identity_members), seed=0)
    init = init_params([5, 3], input_dim=2, seed=0)
    cfg = TrainConfig(loss=ADAPTED, learning_rate=0.0, max_epochs=2, patience=5, seed=0)
    best, reports = grid_search_margin(
        [0.5, 0.2, 1.0], cfg, triplets, catalog, split, init
    )
    assert best == 0.2
    assert len({r.best_val_accuracy for r in reports.values()}) == 1


def test_grid_search_empty_margins():
    catalog = clustered_catalog()
    split = split_dataset(sorted(catalog.identity_members), seed=0)
    init = init_params([5, 3], input_dim=2, seed=0)
    with pytest.raises(EmptyInput):
        grid_search_margin([], TrainConfig(loss=ADAPTED), [], catalog, split, init)
