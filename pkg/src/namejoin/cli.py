"""Command-line interface.

Subcommands walk the full workflow: `prepare` raw records into an entities
file, `stats` for input-space baselines, `mine` training triplets, `train` an
encoder, then `embed`, `index`, `join`, and `eval` with the trained model.
`synth` generates a synthetic person corpus for experiments.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import ann
from .encoder import init_params
from .encoding import (
    DEFAULT_MAX_TOKENS,
    CharEmbeddingTable,
    load_char_embeddings,
    random_char_embeddings,
    tokenize,
)
from .joins import embed_column, evaluate, join
from .losses import DEFAULT_MARGINS, LOSS_KINDS, LossParams
from .mining import (
    DEFAULT_MINING_K,
    DEFAULT_TRIPLET_CAP,
    MiningConfig,
    baseline_stats,
    build_catalog,
    catalog_forest,
    load_triplets,
    mine,
    save_triplets,
)
from .model import Model, load_model, save_model
from .pipeline import (
    DEFAULT_ROYALTY_TITLES,
    finalize_dataset,
    read_entities,
    read_raw_records,
    write_entities,
)
from .synth import synthetic_people
from .training import (
    TrainConfig,
    fit,
    split_dataset,
    split_triplets,
    partition_triplets,
)

logger = logging.getLogger(__name__)

DEFAULT_CHAR_DIM = 16
DEFAULT_LAYERS = "32,32"


def _read_column(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _write_json(blob: dict, out: Optional[str]) -> None:
    text = json.dumps(blob, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _char_table(args, entity_names: Sequence[str]) -> CharEmbeddingTable:
    if args.char_embeddings:
        return load_char_embeddings(args.char_embeddings)
    chars: set[str] = set()
    for name in entity_names:
        for token in tokenize(name):
            chars.update(token)
    return random_char_embeddings(sorted(chars), args.char_dim, seed=args.seed)


def _all_names(entities) -> list[str]:
    return [form for ent in entities for form in ent.names]


def _loss_params(args) -> LossParams:
    overrides = {}
    if args.margin is not None:
        overrides["margin"] = args.margin
    if getattr(args, "intra_margin", None) is not None:
        overrides["intra_margin"] = args.intra_margin
    if getattr(args, "balance", None) is not None:
        overrides["balance"] = args.balance
    if getattr(args, "angle_deg", None) is not None:
        overrides["angle_alpha"] = math.radians(args.angle_deg)
    return LossParams.for_kind(args.loss, **overrides)


def _mining_config(args) -> MiningConfig:
    strategy = args.strategy.replace("-", "_")
    return MiningConfig(
        k=args.k,
        strategy=strategy,
        max_triplets_per_anchor=args.cap,
        seed=args.seed,
    )


# --- subcommand handlers ----------------------------------------------------


def cmd_prepare(args) -> int:
    records = read_raw_records(args.infile)
    titles = (
        tuple(t.strip().lower() for t in args.royalty_titles.split(",") if t.strip())
        if args.royalty_titles
        else DEFAULT_ROYALTY_TITLES
    )
    entities, report = finalize_dataset(records, args.kind, titles)
    write_entities(entities, args.out)
    logger.info("wrote %d entities to %s", len(entities), args.out)
    _write_json(report.to_json(), args.report)
    return 0


def cmd_stats(args) -> int:
    entities = read_entities(args.entities)
    table = _char_table(args, _all_names(entities))
    catalog = build_catalog(entities, table, args.max_tokens)
    forest = catalog_forest(
        catalog, n_trees=args.trees, leaf_size=args.leaf_size, seed=args.seed
    )
    stats = baseline_stats(catalog, forest, args.k)
    _write_json(
        {
            "k": stats.k,
            "recall": stats.recall_at_k,
            "positive_distance_mean": stats.mean_pos_dist,
            "positive_distance_std": stats.std_pos_dist,
            "negative_distance_mean": stats.mean_neg_dist,
            "negative_distance_std": stats.std_neg_dist,
            "items": len(catalog),
        },
        args.out,
    )
    return 0


def cmd_mine(args) -> int:
    entities = read_entities(args.entities)
    table = _char_table(args, _all_names(entities))
    catalog = build_catalog(entities, table, args.max_tokens)
    forest = catalog_forest(
        catalog, n_trees=args.trees, leaf_size=args.leaf_size, seed=args.seed
    )
    triplets = mine(catalog, forest, _mining_config(args))
    save_triplets(triplets, args.out)
    logger.info("mined %d triplets to %s", len(triplets), args.out)
    return 0


def cmd_train(args) -> int:
    entities = read_entities(args.entities)
    table = _char_table(args, _all_names(entities))
    catalog = build_catalog(entities, table, args.max_tokens)
    if args.triplets:
        triplets = load_triplets(args.triplets)
    else:
        forest = catalog_forest(
            catalog, n_trees=args.trees, leaf_size=args.leaf_size, seed=args.seed
        )
        triplets = mine(catalog, forest, _mining_config(args))
        logger.info("mined %d triplets inline", len(triplets))
    loss = _loss_params(args)
    cfg = TrainConfig(
        loss=loss,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
    )
    if args.split_level == "identity":
        identities = sorted(catalog.identity_members)
        split = split_dataset(identities, seed=args.seed)
        train_t, val_t, _ = partition_triplets(triplets, catalog, split)
    else:
        train_t, val_t, _ = split_triplets(triplets, seed=args.seed)
    layer_dims = [int(d) for d in args.layers.split(",") if d.strip()]
    init = init_params(layer_dims, table.dim, seed=args.seed)
    params, report = fit(train_t, val_t, catalog, cfg, init)
    model = Model(params=params, char_table=table, loss=loss, max_tokens=args.max_tokens)
    save_model(model, args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for ep in report.epochs:
                fh.write(
                    json.dumps(
                        {
                            "epoch": ep.epoch,
                            "train_loss": ep.train_loss,
                            "val_accuracy": ep.val_accuracy,
                        }
                    )
                    + "\n"
                )
            fh.write(
                json.dumps(
                    {"best_epoch": report.best_epoch, "stop_reason": report.stop_reason}
                )
                + "\n"
            )
    logger.info(
        "trained %d epochs (best %d, val accuracy %.4f, %s); model saved to %s",
        len(report.epochs),
        report.best_epoch,
        report.best_val_accuracy,
        report.stop_reason,
        args.out,
    )
    return 0


def cmd_embed(args) -> int:
    model = load_model(args.model)
    values = _read_column(args.infile)
    vectors = embed_column(values, model, threads=args.threads)
    usable = [v for v in values if v and v.strip()]
    with open(args.out, "w", encoding="utf-8") as fh:
        for value, vec in zip(usable, vectors):
            fh.write(value + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")
    logger.info("embedded %d values to %s", len(vectors), args.out)
    return 0


def cmd_index(args) -> int:
    model = load_model(args.model)
    values = _read_column(args.infile)
    vectors = embed_column(values, model, threads=args.threads)
    usable = [i for i, v in enumerate(values) if v and v.strip()]
    forest = ann.build_forest(
        list(zip(usable, vectors)),
        n_trees=args.trees,
        leaf_size=args.leaf_size,
        seed=args.seed,
    )
    ann.save_index(forest, args.out)
    logger.info("indexed %d vectors into %s", len(forest), args.out)
    return 0


def cmd_join(args) -> int:
    model = load_model(args.model)
    left = _read_column(args.left)
    right = _read_column(args.right)
    matches = join(
        left,
        right,
        model,
        k=args.k,
        n_trees=args.trees,
        seed=args.seed,
        leaf_size=args.leaf_size,
        threads=args.threads,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("right_value\tleft_value\trank\tdistance\n")
        for m in matches:
            fh.write(f"{m.right_value}\t{m.left_value}\t{m.rank}\t{m.distance!r}\n")
    logger.info("wrote %d matches to %s", len(matches), args.out)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    entities = read_entities(args.entities)
    report = evaluate(
        entities,
        model,
        k=args.k,
        n_trees=args.trees,
        seed=args.seed,
        leaf_size=args.leaf_size,
        threads=args.threads,
    )
    _write_json(report.to_json(), args.out)
    return 0


def cmd_synth(args) -> int:
    entities = synthetic_people(
        args.identities, seed=args.seed, noisy_forms=args.noisy_forms
    )
    write_entities(entities, args.out)
    logger.info("wrote %d synthetic identities to %s", len(entities), args.out)
    return 0


# --- parser -----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("--trees", type=int, default=ann.DEFAULT_N_TREES,
                   help="trees in the neighbor index")
    p.add_argument("--threads", type=int, default=1, help="embedding worker threads")
    p.add_argument("--leaf-size", type=int, default=ann.DEFAULT_LEAF_SIZE,
                   help="index leaf capacity")


def _add_char_table(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--char-embeddings", help="pretrained character-vector file")
    group.add_argument("--char-dim", type=int, default=DEFAULT_CHAR_DIM,
                       help="dimension for seeded random character vectors")


def _add_mining(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=["hard", "semi-hard", "semi_hard"],
                   default="hard")
    p.add_argument("--k", type=int, default=DEFAULT_MINING_K,
                   help="neighborhood size for mining")
    p.add_argument("--cap", type=int, default=DEFAULT_TRIPLET_CAP,
                   help="max triplets per anchor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="namejoin",
        description="Learned name embeddings for fuzzy joins over entity names.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="cleanse raw records into an entities file")
    p.add_argument("--in", dest="infile", required=True, help="raw JSONL records")
    p.add_argument("--kind", choices=["person", "company"], required=True)
    p.add_argument("--out", required=True, help="entities JSONL output")
    p.add_argument("--report", help="cleansing report JSON (default: stdout)")
    p.add_argument("--royalty-titles", help="comma-separated replacement title list")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stats", help="input-space baseline statistics")
    p.add_argument("--entities", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_MINING_K)
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--out", help="JSON output path (default: stdout)")
    _add_char_table(p)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("mine", help="mine training triplets in input space")
    p.add_argument("--entities", required=True)
    p.add_argument("--out", required=True, help="triplets TSV output")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    _add_mining(p)
    _add_char_table(p)
    _add_common(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="train the encoder on mined triplets")
    p.add_argument("--entities", required=True)
    p.add_argument("--triplets", help="mined triplets TSV (default: mine inline)")
    p.add_argument("--out", required=True, help="model file output")
    p.add_argument("--log", help="per-epoch JSONL log")
    p.add_argument("--loss", choices=list(LOSS_KINDS), default="adapted")
    p.add_argument("--margin", type=float,
                   help=f"loss margin (defaults: {DEFAULT_MARGINS})")
    p.add_argument("--intra-margin", type=float,
                   help="positive-pair margin of the improved loss")
    p.add_argument("--lambda", dest="balance", type=float,
                   help="balance weight of the improved loss")
    p.add_argument("--angle-deg", type=float,
                   help="angle in degrees for the angular loss")
    p.add_argument("--layers", default=DEFAULT_LAYERS,
                   help="comma-separated hidden sizes, e.g. 128,128,128,128")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--split-level", choices=["identity", "triplet"],
                   default="identity",
                   help="partition train/val/test by entity or by triplet")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    _add_mining(p)
    _add_char_table(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a column of values with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True, help="one value per line")
    p.add_argument("--out", required=True, help="TSV value<TAB>vector output")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("index", help="build a persistent neighbor index for a column")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="index file output")
    _add_common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("join", help="fuzzy-join two key columns")
    p.add_argument("--left", required=True, help="column indexed")
    p.add_argument("--right", required=True, help="column queried")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", required=True, help="matches TSV output")
    _add_common(p)
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("eval", help="retrieval metrics over an entities file")
    p.add_argument("--entities", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--out", help="JSON output path (default: stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic person corpus")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--noisy-forms", type=int, default=2)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
