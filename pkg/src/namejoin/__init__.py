"""namejoin: learned metric embeddings of entity names for fuzzy joins.

The package trains a character-level recurrent encoder with triplet losses so
that surface forms of the same entity land close together, serves approximate
nearest-neighbor queries from a random-projection forest, and evaluates
retrieval with recall/precision@k metrics. Everything is plain numpy.
"""

from .ann import (
    AnnForest,
    QueryConfig,
    brute_force_knn,
    build_forest,
    load_index,
    query,
    save_index,
)
from .encoder import (
    EncoderParams,
    GruLayerParams,
    encode_batch,
    encoder_backward,
    encoder_forward,
    init_params,
    normalize,
)
from .encoding import (
    CharEmbeddingTable,
    NameEncoding,
    encode_name,
    encode_raw_name,
    load_char_embeddings,
    random_char_embeddings,
    save_char_embeddings,
    tokenize,
)
from .errors import NamejoinError
from .joins import (
    EvalReport,
    JoinMatch,
    embed_column,
    evaluate,
    evaluate_vectors,
    join,
)
from .losses import (
    LossParams,
    TripletEmbeddings,
    adapted_loss,
    angular_loss,
    batch_loss,
    improved_loss,
    loss_gradients,
    loss_value,
    triplet_loss,
)
from .metrics import NeighborhoodTally
from .mining import (
    ItemCatalog,
    MiningConfig,
    TripletIdx,
    baseline_stats,
    build_catalog,
    catalog_forest,
    load_triplets,
    mine,
    mine_hard,
    mine_semi_hard,
    save_triplets,
)
from .model import Model, load_model, save_model
from .pipeline import (
    CleansingReport,
    Dropped,
    EntityRecord,
    RawRecord,
    augment_person,
    cleanse_company,
    cleanse_person,
    finalize_dataset,
    is_acronym_of,
    read_entities,
    read_raw_records,
    shares_name_part,
    write_entities,
)
from .synth import synthetic_people
from .training import (
    DatasetSplit,
    TrainConfig,
    TrainReport,
    fit,
    grid_search_margin,
    partition_triplets,
    split_dataset,
    split_triplets,
    train,
    triplet_accuracy,
)

__version__ = "0.1.0"

__all__ = [
    "AnnForest", "QueryConfig", "brute_force_knn", "build_forest", "load_index",
    "query", "save_index",
    "EncoderParams", "GruLayerParams", "encode_batch", "encoder_backward",
    "encoder_forward", "init_params", "normalize",
    "CharEmbeddingTable", "NameEncoding", "encode_name", "encode_raw_name",
    "load_char_embeddings", "random_char_embeddings", "save_char_embeddings",
    "tokenize",
    "NamejoinError",
    "EvalReport", "JoinMatch", "embed_column", "evaluate", "evaluate_vectors",
    "join",
    "LossParams", "TripletEmbeddings", "adapted_loss", "angular_loss",
    "batch_loss", "improved_loss", "loss_gradients", "loss_value",
    "triplet_loss",
    "NeighborhoodTally",
    "ItemCatalog", "MiningConfig", "TripletIdx", "baseline_stats",
    "build_catalog", "catalog_forest", "load_triplets", "mine", "mine_hard",
    "mine_semi_hard", "save_triplets",
    "Model", "load_model", "save_model",
    "CleansingReport", "Dropped", "EntityRecord", "RawRecord",
    "augment_person", "cleanse_company", "cleanse_person", "finalize_dataset",
    "is_acronym_of", "read_entities", "read_raw_records", "shares_name_part",
    "write_entities",
    "synthetic_people",
    "DatasetSplit", "TrainConfig", "TrainReport", "fit", "grid_search_margin",
    "partition_triplets", "split_dataset", "split_triplets", "train",
    "triplet_accuracy",
    "__version__",
]
