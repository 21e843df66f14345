"""Shared test utilities: finite-difference gradient oracles.

The oracle treats the whole encoder+loss pipeline as a scalar function of the
parameters and differentiates it by central differences, one coordinate at a
time. Errors are reported norm-wise per parameter array, the standard gradient
check: ||analytic - numeric|| / max(||analytic||, ||numeric||).
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from namejoin.encoder import EncoderParams, PARAM_NAMES
from namejoin.encoding import NameEncoding


def param_items(params: EncoderParams) -> Iterator[tuple[int, str, np.ndarray]]:
    for li, layer in enumerate(params.layers):
        for name in PARAM_NAMES:
            yield li, name, getattr(layer, name)


def fd_param_gradients(
    scalar_fn: Callable[[], float], params: EncoderParams, eps: float = 1e-5
) -> list[np.ndarray]:
    """Central differences of scalar_fn with respect to every parameter entry.

    scalar_fn must read the live arrays inside `params`; they are perturbed in
    place and restored.
    """
    grads = []
    for _, _, arr in param_items(params):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = scalar_fn()
            flat[i] = orig - eps
            f_minus = scalar_fn()
            flat[i] = orig
            gf[i] = (f_plus - f_minus) / (2.0 * eps)
        grads.append(g)
    return grads


def gradient_rel_error(analytic: EncoderParams, numeric: list[np.ndarray]) -> float:
    """Worst norm-wise relative disagreement across parameter arrays."""
    worst = 0.0
    arrays = [arr for _, _, arr in param_items(analytic)]
    assert len(arrays) == len(numeric)
    for a, n in zip(arrays, numeric):
        scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - n)) / scale)
    return worst


def random_encodings(
    rng: np.random.Generator, count: int, n_tokens: int, dim: int
) -> list[NameEncoding]:
    return [
        NameEncoding(
            matrix=rng.uniform(-1.0, 1.0, size=(n_tokens, dim)), valid_len=n_tokens
        )
        for _ in range(count)
    ]


def random_model(
    loss_kind: str = "triplet",
    char_dim: int = 6,
    layer_dims: tuple = (8,),
    seed: int = 3,
    chars: str = "abcdefghijklmnopqrstuvwxyz,.-",
    max_tokens: int = 6,
    **loss_overrides,
):
    """Small smooth-initialized model over a lowercase-ASCII character table."""
    from namejoin.encoder import init_params
    from namejoin.encoding import CharEmbeddingTable
    from namejoin.losses import LossParams
    from namejoin.model import Model

    rng = np.random.default_rng(seed)
    table = CharEmbeddingTable(
        dim=char_dim,
        entries={c: rng.normal(size=char_dim) for c in chars},
        fallback=rng.normal(size=char_dim),
    )
    return Model(
        params=init_params(list(layer_dims), input_dim=char_dim, seed=seed),
        char_table=table,
        loss=LossParams.for_kind(loss_kind, **loss_overrides),
        max_tokens=max_tokens,
    )


def zero_model(loss_kind: str = "adapted", char_dim: int = 4, hidden: int = 5):
    """Model whose encoder weights are all zero (embeddings are exactly zero)."""
    from namejoin.encoder import EncoderParams, GruLayerParams
    from namejoin.encoding import CharEmbeddingTable
    from namejoin.losses import LossParams
    from namejoin.model import Model

    rng = np.random.default_rng(0)
    layer = GruLayerParams(
        w_z=np.zeros((hidden, char_dim)),
        u_z=np.zeros((hidden, hidden)),
        b_z=np.zeros(hidden),
        w_r=np.zeros((hidden, char_dim)),
        u_r=np.zeros((hidden, hidden)),
        b_r=np.zeros(hidden),
        w_h=np.zeros((hidden, char_dim)),
        u_h=np.zeros((hidden, hidden)),
        b_h=np.zeros(hidden),
    )
    table = CharEmbeddingTable(
        dim=char_dim,
        entries={c: rng.normal(size=char_dim) for c in "abcdefghij"},
        fallback=rng.normal(size=char_dim),
    )
    return Model(
        params=EncoderParams(layers=[layer]),
        char_table=table,
        loss=LossParams.for_kind(loss_kind),
        max_tokens=4,
    )


def point_catalog(points):
    """Catalog of labelled coordinates as one-step encodings.

    ``points`` is a list of (identity_id, coords); item ids are dense in order.
    """
    import numpy as np

    from namejoin.encoding import NameEncoding
    from namejoin.mining import CatalogItem, ItemCatalog

    items = [
        CatalogItem(
            item_id=i,
            identity_id=ident,
            surface=f"item{i}",
            encoding=NameEncoding(
                matrix=np.array([list(coords)], dtype=np.float64), valid_len=1
            ),
        )
        for i, (ident, coords) in enumerate(points)
    ]
    return ItemCatalog(items)
