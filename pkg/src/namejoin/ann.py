"""Random-projection-forest approximate nearest neighbors, with an exact oracle.

Each tree bisects the vector space recursively: an internal node picks two
distinct items at random and splits on the perpendicular bisector of the segment
joining them, stopping at ``leaf_size`` items (or earlier when a node's vectors
are all identical, which admits no bisector). Queries run one best-first frontier
across all trees, ordered by margin distance to the splitting planes, collect
distinct candidate items until the search budget is reached and then rank them by
exact Euclidean distance (ties broken by ascending item id). A budget of at least
the item count degenerates to brute force, exactly.

Index file format (little-endian): magic ``AJF1``, u32 version (=1), u32 dim,
u64 item count, u32 n_trees, item table of (u64 id + dim * float32), then each
tree in preorder with a u8 node tag: 0 = internal (normal float32*dim + offset
float32), 1 = leaf (u32 count + count * u64 ids). Vectors are stored - and held
in memory - as float32, so save/load round-trips are bitwise.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, EmptyInput, FormatError, VersionMismatch

MAGIC = b"AJF1"
FORMAT_VERSION = 1
DEFAULT_N_TREES = 16
DEFAULT_LEAF_SIZE = 16
DEFAULT_BUDGET_FACTOR = 8

NeighborList = list[tuple[int, float]]
BinarySink = Union[str, Path, IO[bytes]]


@dataclass
class QueryConfig:
    k: int
    search_budget: Optional[int] = None  # default n_trees * k * 8, resolved at query time
    exclude: Optional[int] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.search_budget is not None and self.search_budget < self.k:
            raise ValueError("search_budget must be >= k")


@dataclass
class _Tree:
    """One split tree over item positions; node 0 is the root."""

    normals: list = field(default_factory=list)  # float32 array per internal node
    offsets: list = field(default_factory=list)
    lefts: list = field(default_factory=list)
    rights: list = field(default_factory=list)
    leaf_items: list = field(default_factory=list)  # int64 positions per leaf node

    def add_internal(self, normal: np.ndarray, offset: float) -> int:
        idx = len(self.normals)
        self.normals.append(normal)
        self.offsets.append(offset)
        self.lefts.append(-1)
        self.rights.append(-1)
        self.leaf_items.append(None)
        return idx

    def add_leaf(self, positions: np.ndarray) -> int:
        idx = len(self.normals)
        self.normals.append(None)
        self.offsets.append(0.0)
        self.lefts.append(-1)
        self.rights.append(-1)
        self.leaf_items.append(positions)
        return idx


@dataclass
class AnnForest:
    ids: np.ndarray  # (n,) int64 item ids, aligned with vectors rows
    vectors: np.ndarray  # (n, dim) float32
    trees: list
    leaf_size: int
    seed: int

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def __len__(self) -> int:
        return self.ids.shape[0]


def _as_item_arrays(
    vectors: Sequence[tuple[int, np.ndarray]]
) -> tuple[np.ndarray, np.ndarray]:
    if not vectors:
        raise EmptyInput("cannot build an index over zero vectors")
    ids = np.array([int(item_id) for item_id, _ in vectors], dtype=np.int64)
    first = np.asarray(vectors[0][1])
    dim = first.shape[-1] if first.ndim else 0
    mat = np.empty((len(vectors), dim), dtype=np.float32)
    for row, (_, vec) in enumerate(vectors):
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (dim,):
            raise DimensionMismatch(
                f"vector for id {vectors[row][0]} has shape {arr.shape}, expected ({dim},)"
            )
        mat[row] = arr
    return ids, mat


def _pick_split(
    positions: np.ndarray, mat: np.ndarray, rng: np.random.Generator
) -> Optional[tuple[np.ndarray, np.float32]]:
    """Bisector of two random distinct items; None when all vectors coincide."""
    n = positions.shape[0]
    v1 = v2 = None
    for _ in range(16):
        i, j = rng.choice(n, size=2, replace=False)
        cand1, cand2 = mat[positions[i]], mat[positions[j]]
        if not np.array_equal(cand1, cand2):
            v1, v2 = cand1, cand2
            break
    if v1 is None:
        base = mat[positions[0]]
        for pos in positions[1:]:
            if not np.array_equal(mat[pos], base):
                v1, v2 = base, mat[pos]
                break
        if v1 is None:
            return None
    a = v1.astype(np.float64)
    b = v2.astype(np.float64)
    normal = (b - a).astype(np.float32)
    offset = np.float32((b - a) @ ((a + b) / 2.0))
    return normal, offset


def _build_tree(
    mat: np.ndarray, leaf_size: int, rng: np.random.Generator
) -> _Tree:
    tree = _Tree()
    root_positions = np.arange(mat.shape[0], dtype=np.int64)
    # (positions, parent node, side); side -1 marks the root
    stack: list[tuple[np.ndarray, int, int]] = [(root_positions, -1, -1)]
    while stack:
        positions, parent, side = stack.pop()
        split = None
        if positions.shape[0] > leaf_size:
            split = _pick_split(positions, mat, rng)
        if split is None:
            idx = tree.add_leaf(positions)
        else:
            normal, offset = split
            margins = mat[positions].astype(np.float64) @ normal.astype(np.float64)
            go_right = margins >= float(offset)
            left = positions[~go_right]
            right = positions[go_right]
            if left.size == 0 or right.size == 0:
                # float rounding collapsed the split; stop here
                idx = tree.add_leaf(positions)
            else:
                idx = tree.add_internal(normal, float(offset))
                stack.append((right, idx, 1))
                stack.append((left, idx, 0))
        if parent >= 0:
            if side == 0:
                tree.lefts[parent] = idx
            else:
                tree.rights[parent] = idx
    return tree


def build_forest(
    vectors: Sequence[tuple[int, np.ndarray]],
    n_trees: int = DEFAULT_N_TREES,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    seed: int = 0,
) -> AnnForest:
    """Build ``n_trees`` independent trees; randomness derives from (seed, tree index)."""
    ids, mat = _as_item_arrays(vectors)
    trees = []
    for tree_index in range(n_trees):
        rng = np.random.default_rng([seed, tree_index])
        trees.append(_build_tree(mat, leaf_size, rng))
    return AnnForest(ids=ids, vectors=mat, trees=trees, leaf_size=leaf_size, seed=seed)


def _rank(
    ids: np.ndarray,
    mat: np.ndarray,
    positions: np.ndarray,
    q: np.ndarray,
    k: int,
    exclude: Optional[int],
) -> NeighborList:
    """Exact distances over candidate positions, tie-broken by ascending id."""
    cand_ids = ids[positions]
    if exclude is not None:
        keep = cand_ids != exclude
        positions = positions[keep]
        cand_ids = cand_ids[keep]
    if positions.size == 0:
        return []
    diffs = mat[positions].astype(np.float64) - q[None, :]
    dists = np.sqrt(np.einsum("nd,nd->n", diffs, diffs))
    order = np.lexsort((cand_ids, dists))[:k]
    return [(int(cand_ids[i]), float(dists[i])) for i in order]


def query(forest: AnnForest, q: np.ndarray, cfg: QueryConfig) -> NeighborList:
    """Best-first search across all trees; exact with budget >= item count."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (forest.dim,):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({forest.dim},)")
    n = len(forest)
    budget = cfg.search_budget
    if budget is None:
        budget = forest.n_trees * cfg.k * DEFAULT_BUDGET_FACTOR
    if budget >= n:
        all_positions = np.arange(n, dtype=np.int64)
        return _rank(forest.ids, forest.vectors, all_positions, q, cfg.k, cfg.exclude)

    # max-heap on path priority (min margin distance along the path), inf at roots
    heap: list[tuple[float, int, int, int]] = []
    counter = 0
    for t in range(forest.n_trees):
        heap.append((-np.inf, counter, t, 0))
        counter += 1
    heapq.heapify(heap)
    seen = np.zeros(n, dtype=bool)
    candidates: list[int] = []
    while heap and len(candidates) < budget:
        neg_pri, _, t, node = heapq.heappop(heap)
        pri = -neg_pri
        tree = forest.trees[t]
        leaf = tree.leaf_items[node]
        if leaf is not None:
            for pos in leaf:
                if not seen[pos]:
                    seen[pos] = True
                    candidates.append(pos)
                    if len(candidates) >= budget:
                        break
            continue
        margin = float(tree.normals[node].astype(np.float64) @ q) - tree.offsets[node]
        heapq.heappush(heap, (-min(pri, margin), counter, t, tree.rights[node]))
        counter += 1
        heapq.heappush(heap, (-min(pri, -margin), counter, t, tree.lefts[node]))
        counter += 1
    positions = np.array(candidates, dtype=np.int64)
    return _rank(forest.ids, forest.vectors, positions, q, cfg.k, cfg.exclude)


def brute_force_knn(
    vectors: Sequence[tuple[int, np.ndarray]],
    q: np.ndarray,
    k: int,
    exclude: Optional[int] = None,
) -> NeighborList:
    """Exact k nearest by Euclidean distance with the same tie rule as query."""
    ids, mat = _as_item_arrays(vectors)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (mat.shape[1],):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({mat.shape[1]},)")
    positions = np.arange(len(ids), dtype=np.int64)
    return _rank(ids, mat, positions, q, k, exclude)


def forest_items(forest: AnnForest) -> list[tuple[int, np.ndarray]]:
    """The indexed (id, vector) pairs, as stored (float32)."""
    return [(int(i), forest.vectors[row].copy()) for row, i in enumerate(forest.ids)]


# --- persistence ---------------------------------------------------------


def _write(sink: IO[bytes], data: bytes) -> None:
    sink.write(data)


def _read_exact(source: IO[bytes], count: int) -> bytes:
    data = source.read(count)
    if len(data) != count:
        raise FormatError(f"truncated index file: wanted {count} bytes, got {len(data)}")
    return data


def _serialize_tree(sink: IO[bytes], tree: _Tree, ids: np.ndarray) -> None:
    stack = [0]
    while stack:
        node = stack.pop()
        leaf = tree.leaf_items[node]
        if leaf is None:
            _write(sink, struct.pack("<B", 0))
            _write(sink, tree.normals[node].astype("<f4").tobytes())
            _write(sink, struct.pack("<f", tree.offsets[node]))
            stack.append(tree.rights[node])
            stack.append(tree.lefts[node])
        else:
            _write(sink, struct.pack("<BI", 1, leaf.size))
            _write(sink, ids[leaf].astype("<u8").tobytes())


def _parse_tree(source: IO[bytes], dim: int, id_to_pos: dict[int, int]) -> _Tree:
    tree = _Tree()
    # preorder: each popped slot is (parent, side); next node read fills it
    pending: list[tuple[int, int]] = [(-1, -1)]
    while pending:
        parent, side = pending.pop()
        (tag,) = struct.unpack("<B", _read_exact(source, 1))
        if tag == 0:
            normal = np.frombuffer(_read_exact(source, 4 * dim), dtype="<f4").copy()
            (offset,) = struct.unpack("<f", _read_exact(source, 4))
            idx = tree.add_internal(normal, float(offset))
            pending.append((idx, 1))
            pending.append((idx, 0))
        elif tag == 1:
            (count,) = struct.unpack("<I", _read_exact(source, 4))
            raw = np.frombuffer(_read_exact(source, 8 * count), dtype="<u8")
            try:
                positions = np.array(
                    [id_to_pos[int(item)] for item in raw], dtype=np.int64
                )
            except KeyError as exc:
                raise FormatError(f"leaf references unknown item id {exc}") from None
            idx = tree.add_leaf(positions)
        else:
            raise FormatError(f"unknown node tag {tag}")
        if parent >= 0:
            if side == 0:
                tree.lefts[parent] = idx
            else:
                tree.rights[parent] = idx
    return tree


def save_index(forest: AnnForest, sink: BinarySink) -> None:
    """Write the documented AJF1 binary format."""
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            save_index(forest, fh)
        return
    _write(sink, MAGIC)
    _write(
        sink,
        struct.pack(
            "<IIQI", FORMAT_VERSION, forest.dim, len(forest), forest.n_trees
        ),
    )
    for row in range(len(forest)):
        _write(sink, struct.pack("<Q", int(forest.ids[row])))
        _write(sink, forest.vectors[row].astype("<f4").tobytes())
    for tree in forest.trees:
        _serialize_tree(sink, tree, forest.ids)


def load_index(source: BinarySink) -> AnnForest:
    """Read an AJF1 file; queries on the result are bitwise-identical to the original."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_index(fh)
    magic = _read_exact(source, 4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, dim, count, n_trees = struct.unpack("<IIQI", _read_exact(source, 20))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"index format version {version} not supported")
    ids = np.empty(count, dtype=np.int64)
    vectors = np.empty((count, dim), dtype=np.float32)
    for row in range(count):
        (item_id,) = struct.unpack("<Q", _read_exact(source, 8))
        ids[row] = item_id
        vectors[row] = np.frombuffer(_read_exact(source, 4 * dim), dtype="<f4")
    id_to_pos = {int(item): row for row, item in enumerate(ids)}
    trees = [_parse_tree(source, dim, id_to_pos) for _ in range(n_trees)]
    return AnnForest(
        ids=ids,
        vectors=vectors,
        trees=trees,
        leaf_size=DEFAULT_LEAF_SIZE,
        seed=0,
    )
