"""Column embedding, the index-left/query-right fuzzy join, and retrieval metrics.

A join embeds both key columns with one trained model, indexes the left column
in a random-projection forest, and reports each right value's top-k left
neighbors. Evaluation replays the same retrieval over an entities file, treating
every surface form as an anchor whose positives are the other forms of its
identity (the anchor itself is excluded from its neighbor list; join performs
no such exclusion because the two columns are distinct tables).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .ann import (
    DEFAULT_LEAF_SIZE,
    DEFAULT_N_TREES,
    AnnForest,
    QueryConfig,
    build_forest,
    query,
)
from .encoder import encode_batch
from .encoding import encode_name, tokenize
from .errors import EmptyColumn, EmptyInput, EmptyName, ZeroVector
from .metrics import NeighborhoodTally
from .model import Model
from .pipeline import EntityRecord

logger = logging.getLogger(__name__)

DEFAULT_EVAL_K = 20
_CHUNK = 1024


@dataclass
class JoinMatch:
    right_value: str
    left_value: str
    distance: float
    rank: int


@dataclass
class EvalReport:
    k: int
    recall: float
    precision_at_1: float
    precision_all: float
    anchors_evaluated: int

    def to_json(self) -> dict:
        return asdict(self)


def _embed_rows(values: Sequence[str], model: Model, threads: int = 1) -> np.ndarray:
    """Raw (unnormalized) embeddings for already-validated values, row per value."""
    encs = [
        encode_name(tokenize(v), model.char_table, model.max_tokens) for v in values
    ]
    chunks = [encs[i : i + _CHUNK] for i in range(0, len(encs), _CHUNK)]

    def run(chunk):
        embs, _ = encode_batch(chunk, model.params)
        return embs

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def _apply_policy(rows: np.ndarray, model: Model) -> np.ndarray:
    if not model.loss.normalize_inputs:
        return rows
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(
            f"cannot normalize zero embedding at row {int(zero[0])}"
        )
    return rows / norms[:, None]


def _embed_kept(
    values: Sequence[str], model: Model, threads: int = 1
) -> tuple[list[int], np.ndarray]:
    """(kept input indices, embedding rows); empty values are skipped with a warning."""
    kept: list[int] = []
    usable: list[str] = []
    for i, v in enumerate(values):
        if v and v.strip():
            kept.append(i)
            usable.append(v)
        else:
            logger.warning("skipping empty value at position %d", i)
    if not usable:
        return [], np.zeros((0, model.embedding_dim))
    return kept, _apply_policy(_embed_rows(usable, model, threads), model)


def embed_column(
    values: Sequence[str], model: Model, threads: int = 1
) -> list[np.ndarray]:
    """Embed a key column in order; empties are skipped with a warning.

    Normalization follows the model's loss policy.
    """
    _, rows = _embed_kept(values, model, threads)
    return [rows[i] for i in range(rows.shape[0])]


def join(
    left: Sequence[str],
    right: Sequence[str],
    model: Model,
    k: int = 1,
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    threads: int = 1,
) -> list[JoinMatch]:
    """Top-k left-column matches for every right value, in right-column order."""
    if not left:
        raise EmptyColumn("left column is empty")
    if not right:
        raise EmptyColumn("right column is empty")
    left_kept, left_rows = _embed_kept(left, model, threads)
    if not left_kept:
        raise EmptyColumn("left column has no usable values")
    right_kept, right_rows = _embed_kept(right, model, threads)
    if not right_kept:
        raise EmptyColumn("right column has no usable values")
    forest = build_forest(
        [(i, left_rows[row]) for row, i in enumerate(left_kept)],
        n_trees=n_trees,
        leaf_size=leaf_size,
        seed=seed,
    )
    cfg = QueryConfig(k=k)
    matches: list[JoinMatch] = []
    for row, right_index in enumerate(right_kept):
        neighbors = query(forest, right_rows[row], cfg)
        for rank, (left_index, dist) in enumerate(neighbors, start=1):
            matches.append(
                JoinMatch(
                    right_value=right[right_index],
                    left_value=left[left_index],
                    distance=dist,
                    rank=rank,
                )
            )
    return matches


def evaluate_vectors(
    ids: Sequence[int],
    identities: Sequence[int],
    vectors: np.ndarray,
    k: int = DEFAULT_EVAL_K,
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    forest: Optional[AnnForest] = None,
) -> EvalReport:
    """Retrieval metrics over pre-embedded items (the definition shared with
    input-space baseline statistics): each item is an anchor, its positives are
    the other items of its identity, and the anchor itself is excluded."""
    if len(ids) == 0:
        raise EmptyInput("nothing to evaluate")
    if forest is None:
        forest = build_forest(
            list(zip(ids, vectors)), n_trees=n_trees, leaf_size=leaf_size, seed=seed
        )
    members: dict[int, set[int]] = {}
    for item_id, ident in zip(ids, identities):
        members.setdefault(ident, set()).add(item_id)
    tally = NeighborhoodTally(k)
    for row, item_id in enumerate(ids):
        positives = members[identities[row]] - {item_id}
        neighbors = query(forest, vectors[row], QueryConfig(k=k, exclude=item_id))
        tally.add([nid for nid, _ in neighbors], positives)
    return EvalReport(
        k=k,
        recall=tally.recall,
        precision_at_1=tally.precision_at_1,
        precision_all=tally.precision_all,
        anchors_evaluated=tally.anchors,
    )


def evaluate(
    entities: Sequence[EntityRecord],
    model: Model,
    k: int = DEFAULT_EVAL_K,
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    threads: int = 1,
) -> EvalReport:
    """Embed every surface form, index them all, and score retrieval at k."""
    if not entities:
        raise EmptyInput("no entities to evaluate")
    forms: list[str] = []
    identities: list[int] = []
    for ent in entities:
        for form in ent.names:
            if not form or not form.strip():
                raise EmptyName(f"entity {ent.identity_id} has an empty surface form")
            forms.append(form)
            identities.append(ent.identity_id)
    rows = _apply_policy(_embed_rows(forms, model, threads), model)
    return evaluate_vectors(
        list(range(len(forms))),
        identities,
        rows,
        k=k,
        n_trees=n_trees,
        seed=seed,
        leaf_size=leaf_size,
    )
