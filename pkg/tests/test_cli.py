"""End-to-end command-line workflow on a tiny corpus."""

from __future__ import annotations

import json

import pytest

from namejoin.ann import load_index
from namejoin.cli import main
from namejoin.model import load_model
from namejoin.pipeline import read_entities

EVAL_KEYS = {"k", "recall", "precision_at_1", "precision_all", "anchors_evaluated"}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run synth -> stats -> mine -> train -> embed -> index -> join -> eval once."""
    root = tmp_path_factory.mktemp("workflow")
    paths = {
        "entities": root / "people.jsonl",
        "stats": root / "stats.json",
        "triplets": root / "triplets.tsv",
        "model": root / "model.ejm",
        "trainlog": root / "train_log.jsonl",
        "left": root / "left.txt",
        "right": root / "right.txt",
        "embeddings": root / "embeddings.tsv",
        "index": root / "names.idx",
        "matches": root / "matches.tsv",
        "eval": root / "eval.json",
    }
    run = lambda argv: main([str(a) for a in argv])

    assert run(["synth", "--identities", "40", "--seed", "3",
                "--out", paths["entities"]]) == 0
    assert run(["stats", "--entities", paths["entities"], "--k", "5",
                "--char-dim", "8", "--out", paths["stats"]]) == 0
    assert run(["mine", "--entities", paths["entities"], "--k", "5", "--cap", "4",
                "--char-dim", "8", "--out", paths["triplets"]]) == 0
    assert run(["train", "--entities", paths["entities"],
                "--triplets", paths["triplets"], "--out", paths["model"],
                "--log", paths["trainlog"], "--loss", "adapted",
                "--margin", "0.5", "--layers", "8,8", "--epochs", "2",
                "--batch-size", "32", "--char-dim", "8"]) == 0

    entities = read_entities(paths["entities"])
    paths["left"].write_text(
        "\n".join(ent.names[0] for ent in entities) + "\n", encoding="utf-8"
    )
    paths["right"].write_text(
        "\n".join(ent.names[1] for ent in entities[:10]) + "\n", encoding="utf-8"
    )

    assert run(["embed", "--model", paths["model"], "--in", paths["right"],
                "--out", paths["embeddings"]]) == 0
    assert run(["index", "--model", paths["model"], "--in", paths["left"],
                "--out", paths["index"]]) == 0
    assert run(["join", "--left", paths["left"], "--right", paths["right"],
                "--model", paths["model"], "--k", "2",
                "--out", paths["matches"]]) == 0
    assert run(["eval", "--entities", paths["entities"], "--model", paths["model"],
                "--k", "5", "--out", paths["eval"]]) == 0
    return paths


class TestWorkflow:
    def test_synth_writes_parseable_entities(self, workspace):
        entities = read_entities(workspace["entities"])
        assert len(entities) == 40
        assert all(len(ent.names) >= 2 for ent in entities)

    def test_stats_reports_space_characteristics(self, workspace):
        blob = json.loads(workspace["stats"].read_text(encoding="utf-8"))
        assert blob["k"] == 5
        assert 0.0 <= blob["recall"] <= 1.0
        assert blob["items"] == sum(
            len(e.names) for e in read_entities(workspace["entities"])
        )
        assert blob["positive_distance_mean"] > 0
        assert blob["negative_distance_mean"] > 0

    def test_mine_writes_triplet_rows(self, workspace):
        lines = workspace["triplets"].read_text(encoding="utf-8").splitlines()
        assert lines
        for line in lines:
            a, p, n = line.split("\t")
            assert int(a) != int(n) and int(p) != int(n)

    def test_train_saves_loadable_model(self, workspace):
        model = load_model(workspace["model"])
        assert model.embedding_dim == 8
        assert model.loss.kind == "adapted"
        assert model.loss.margin == 0.5
        assert [layer.b_z.shape[0] for layer in model.params.layers] == [8, 8]

    def test_train_log_has_epoch_rows_and_summary(self, workspace):
        rows = [
            json.loads(line)
            for line in workspace["trainlog"].read_text(encoding="utf-8").splitlines()
        ]
        assert len(rows) >= 2
        for row in rows[:-1]:
            assert set(row) == {"epoch", "train_loss", "val_accuracy"}
        assert set(rows[-1]) == {"best_epoch", "stop_reason"}

    def test_embed_writes_one_vector_per_value(self, workspace):
        lines = workspace["embeddings"].read_text(encoding="utf-8").splitlines()
        values = workspace["right"].read_text(encoding="utf-8").splitlines()
        assert len(lines) == len(values)
        for line, value in zip(lines, values):
            got_value, vec = line.split("\t")
            assert got_value == value
            assert len([float(x) for x in vec.split()]) == 8

    def test_index_round_trips(self, workspace):
        forest = load_index(workspace["index"])
        values = workspace["left"].read_text(encoding="utf-8").splitlines()
        assert len(forest) == len(values)

    def test_join_tsv_shape(self, workspace):
        lines = workspace["matches"].read_text(encoding="utf-8").splitlines()
        assert lines[0] == "right_value\tleft_value\trank\tdistance"
        right_values = workspace["right"].read_text(encoding="utf-8").splitlines()
        assert len(lines) - 1 == 2 * len(right_values)
        for line in lines[1:]:
            right_value, left_value, rank, distance = line.split("\t")
            assert right_value in right_values
            assert int(rank) in (1, 2)
            float(distance)

    def test_eval_report_json(self, workspace):
        blob = json.loads(workspace["eval"].read_text(encoding="utf-8"))
        assert set(blob) == EVAL_KEYS
        assert blob["k"] == 5
        assert 0.0 <= blob["recall"] <= 1.0


class TestPrepare:
    def test_prepare_cleanses_and_reports(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        rows = [
            {"source_id": "r1", "kind": "person", "main": "Douglas Adams",
             "aliases": ["The Guide Guy"]},
            {"source_id": "r2", "kind": "person", "main": "King Henry VIII",
             "aliases": []},
            {"source_id": "r3", "kind": "person", "main": "Ursula Kroeber Le Guin",
             "aliases": ["Ursula Le Guin"]},
        ]
        raw.write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8"
        )
        out = tmp_path / "entities.jsonl"
        report_path = tmp_path / "report.json"
        code = main(["prepare", "--in", str(raw), "--kind", "person",
                     "--out", str(out), "--report", str(report_path)])
        assert code == 0
        entities = read_entities(out)
        mains = [e.names[0] for e in entities]
        assert "Douglas Adams" in mains
        assert all("Henry" not in m for m in mains)
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["records_in"] == 3
        assert report["records_out"] == len(entities)
        assert report["records_dropped"].get("royalty") == 1

    def test_stats_prints_to_stdout_without_out(self, tmp_path, capsys):
        entities = tmp_path / "tiny.jsonl"
        assert main(["synth", "--identities", "12", "--seed", "1",
                     "--out", str(entities)]) == 0
        assert main(["stats", "--entities", str(entities), "--k", "3",
                     "--char-dim", "6"]) == 0
        blob = json.loads(capsys.readouterr().out)
        assert blob["k"] == 3
