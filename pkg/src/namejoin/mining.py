"""Triplet mining over an ANN-indexed catalog of name encodings.

Items live in "input space": the row-major flattening of each name's encoding
matrix. Mining runs once, before training, against a random-projection forest
built over those vectors (an item is excluded from its own neighborhoods).

Two strategies:

* hard: for every anchor, the different-identity members of its own top-k
  neighborhood become negatives, paired with every same-identity positive.
* semi_hard: for every (anchor, positive) pair, the positive's top-k
  neighborhood is scanned for different-identity items strictly farther from
  the anchor than the positive is.

Both cap emissions per anchor, truncating in (neighbor rank, positive id) order,
and emit triplets sorted by anchor id so output is canonical regardless of
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, NamedTuple, Sequence, Union

import numpy as np

from .ann import AnnForest, QueryConfig, build_forest, query
from .encoding import (
    DEFAULT_MAX_TOKENS,
    CharEmbeddingTable,
    NameEncoding,
    encode_name,
    tokenize,
)
from .errors import EmptyCatalog, FormatError
from .metrics import NeighborhoodTally

DEFAULT_MINING_K = 20
DEFAULT_TRIPLET_CAP = 50

STRATEGIES = ("hard", "semi_hard")


def input_vector(enc: NameEncoding) -> np.ndarray:
    """Row-major flattening of the encoding matrix (length max_tokens * dim)."""
    return enc.matrix.reshape(-1).copy()


@dataclass
class CatalogItem:
    item_id: int
    identity_id: int
    surface: str
    encoding: NameEncoding
    vector: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.vector is None:
            self.vector = input_vector(self.encoding)


@dataclass
class ItemCatalog:
    items: list[CatalogItem]

    def __post_init__(self) -> None:
        self.by_id: dict[int, CatalogItem] = {}
        members: dict[int, list[int]] = {}
        for item in self.items:
            if item.item_id in self.by_id:
                raise ValueError(f"duplicate item_id {item.item_id}")
            self.by_id[item.item_id] = item
            members.setdefault(item.identity_id, []).append(item.item_id)
        self.identity_members = {
            ident: sorted(ids) for ident, ids in members.items()
        }

    def __len__(self) -> int:
        return len(self.items)

    def identity_of(self, item_id: int) -> int:
        return self.by_id[item_id].identity_id

    def positives_of(self, item_id: int) -> list[int]:
        """Other items sharing the identity, ascending by id."""
        ident = self.by_id[item_id].identity_id
        return [i for i in self.identity_members[ident] if i != item_id]

    def id_vector_pairs(self) -> list[tuple[int, np.ndarray]]:
        return [(item.item_id, item.vector) for item in self.items]


def build_catalog(
    entities: Sequence,
    table: CharEmbeddingTable,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> ItemCatalog:
    """One catalog item per (entity, surface form), ids dense in input order."""
    items = []
    for ent in entities:
        for form in ent.names:
            enc = encode_name(tokenize(form), table, max_tokens)
            items.append(
                CatalogItem(
                    item_id=len(items),
                    identity_id=ent.identity_id,
                    surface=form,
                    encoding=enc,
                )
            )
    return ItemCatalog(items)


def catalog_forest(
    catalog: ItemCatalog, n_trees: int = 16, leaf_size: int = 16, seed: int = 0
) -> AnnForest:
    return build_forest(catalog.id_vector_pairs(), n_trees, leaf_size, seed)


class TripletIdx(NamedTuple):
    anchor_id: int
    positive_id: int
    negative_id: int


@dataclass(frozen=True)
class MiningConfig:
    k: int = DEFAULT_MINING_K
    strategy: str = "hard"
    max_triplets_per_anchor: int = DEFAULT_TRIPLET_CAP
    seed: int = 0  # mining is currently deterministic; kept for config parity

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_triplets_per_anchor < 1:
            raise ValueError("max_triplets_per_anchor must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


def _anchor_ids(catalog: ItemCatalog) -> list[int]:
    if not catalog.items:
        raise EmptyCatalog("cannot mine an empty catalog")
    return sorted(catalog.by_id)


def mine_hard(
    catalog: ItemCatalog, forest: AnnForest, cfg: MiningConfig
) -> list[TripletIdx]:
    """Pair every same-identity positive with the anchor's in-neighborhood negatives."""
    out: list[TripletIdx] = []
    for anchor_id in _anchor_ids(catalog):
        anchor = catalog.by_id[anchor_id]
        neighbors = query(
            forest, anchor.vector, QueryConfig(k=cfg.k, exclude=anchor_id)
        )
        negatives = [
            nid for nid, _ in neighbors if catalog.identity_of(nid) != anchor.identity_id
        ]
        positives = catalog.positives_of(anchor_id)
        if not negatives or not positives:
            continue
        emitted = 0
        for nid in negatives:  # neighbor rank order
            for pid in positives:  # ascending positive id
                if emitted == cfg.max_triplets_per_anchor:
                    break
                out.append(TripletIdx(anchor_id, pid, nid))
                emitted += 1
            if emitted == cfg.max_triplets_per_anchor:
                break
    return out


def mine_semi_hard(
    catalog: ItemCatalog, forest: AnnForest, cfg: MiningConfig
) -> list[TripletIdx]:
    """Negatives from each positive's neighborhood, strictly farther from the anchor."""
    out: list[TripletIdx] = []
    for anchor_id in _anchor_ids(catalog):
        anchor = catalog.by_id[anchor_id]
        candidates: list[tuple[int, int, int]] = []  # (rank, positive, negative)
        for pid in catalog.positives_of(anchor_id):
            positive = catalog.by_id[pid]
            d_ap = float(np.linalg.norm(anchor.vector - positive.vector))
            neighbors = query(
                forest, positive.vector, QueryConfig(k=cfg.k, exclude=pid)
            )
            for rank, (nid, _) in enumerate(neighbors):
                if catalog.identity_of(nid) == anchor.identity_id:
                    continue
                d_an = float(
                    np.linalg.norm(anchor.vector - catalog.by_id[nid].vector)
                )
                if d_an > d_ap:
                    candidates.append((rank, pid, nid))
        candidates.sort(key=lambda c: (c[0], c[1]))
        for rank, pid, nid in candidates[: cfg.max_triplets_per_anchor]:
            out.append(TripletIdx(anchor_id, pid, nid))
    return out


def mine(
    catalog: ItemCatalog, forest: AnnForest, cfg: MiningConfig
) -> list[TripletIdx]:
    if cfg.strategy == "hard":
        return mine_hard(catalog, forest, cfg)
    return mine_semi_hard(catalog, forest, cfg)


@dataclass
class SpaceStats:
    k: int
    recall_at_k: float
    mean_pos_dist: float
    std_pos_dist: float
    mean_neg_dist: float
    std_neg_dist: float


def baseline_stats(catalog: ItemCatalog, forest: AnnForest, k: int) -> SpaceStats:
    """Characterize the raw input space: neighborhood recall and distance spreads.

    Positive distances run over all (anchor, positive) pairs; negative distances
    over the different-identity members of each anchor's top-k neighborhood.
    """
    if not catalog.items:
        raise EmptyCatalog("cannot characterize an empty catalog")
    tally = NeighborhoodTally(k=k)
    pos_dists: list[float] = []
    neg_dists: list[float] = []
    for anchor_id in sorted(catalog.by_id):
        anchor = catalog.by_id[anchor_id]
        positives = catalog.positives_of(anchor_id)
        for pid in positives:
            pos_dists.append(
                float(np.linalg.norm(anchor.vector - catalog.by_id[pid].vector))
            )
        neighbors = query(forest, anchor.vector, QueryConfig(k=k, exclude=anchor_id))
        tally.add([nid for nid, _ in neighbors], positives)
        for nid, _ in neighbors:
            if catalog.identity_of(nid) != anchor.identity_id:
                neg_dists.append(
                    float(np.linalg.norm(anchor.vector - catalog.by_id[nid].vector))
                )
    pos = np.array(pos_dists) if pos_dists else np.zeros(0)
    neg = np.array(neg_dists) if neg_dists else np.zeros(0)
    return SpaceStats(
        k=k,
        recall_at_k=tally.recall,
        mean_pos_dist=float(pos.mean()) if pos.size else 0.0,
        std_pos_dist=float(pos.std()) if pos.size else 0.0,
        mean_neg_dist=float(neg.mean()) if neg.size else 0.0,
        std_neg_dist=float(neg.std()) if neg.size else 0.0,
    )


# --- triplet file io ------------------------------------------------------

TextSink = Union[str, Path, IO[str]]


def save_triplets(triplets: Sequence[TripletIdx], sink: TextSink) -> None:
    """TSV, one `anchor_id<TAB>positive_id<TAB>negative_id` line per triplet."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            save_triplets(triplets, fh)
        return
    for t in triplets:
        sink.write(f"{t.anchor_id}\t{t.positive_id}\t{t.negative_id}\n")


def load_triplets(source: TextSink) -> list[TripletIdx]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_triplets(fh)
    out = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"line {lineno}: expected 3 columns, found {len(fields)}")
        try:
            out.append(TripletIdx(int(fields[0]), int(fields[1]), int(fields[2])))
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer id") from None
    return out
