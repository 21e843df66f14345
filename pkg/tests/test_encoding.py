"""Tokenization, character tables, and fixed-shape name encodings."""

import io

import numpy as np
import pytest

from namejoin.encoding import (
    CharEmbeddingTable,
    encode_name,
    encode_raw_name,
    load_char_embeddings,
    random_char_embeddings,
    save_char_embeddings,
    token_embedding,
    tokenize,
)
from namejoin.errors import EmptyName, EmptySource, FormatError


@pytest.fixture
def toy_table():
    return CharEmbeddingTable(
        dim=4,
        entries={
            "j": np.array([1.0, 0.0, 0.0, 0.0]),
            "o": np.array([0.0, 1.0, 0.0, 0.0]),
        },
    )


def test_tokenize_detaches_comma():
    assert tokenize("Adams, Douglas") == ["adams", ",", "douglas"]


def test_tokenize_detaches_period():
    assert tokenize("D. Adams") == ["d", ".", "adams"]


def test_tokenize_detaches_hyphen():
    assert tokenize("Jean-Luc Picard") == ["jean", "-", "luc", "picard"]


def test_tokenize_empty_raises():
    with pytest.raises(EmptyName):
        tokenize("")
    with pytest.raises(EmptyName):
        tokenize("   ")


def test_tokenize_idempotent_on_joined_output():
    for name in ("Adams, Douglas", "Jean-Luc  Picard", "A.B.-C, d"):
        once = tokenize(name)
        assert tokenize(" ".join(once)) == once


def test_token_embedding_mean(toy_table):
    np.testing.assert_allclose(
        token_embedding("jo", toy_table), [0.5, 0.5, 0.0, 0.0]
    )


def test_token_embedding_single_char(toy_table):
    np.testing.assert_allclose(token_embedding("j", toy_table), [1, 0, 0, 0])


def test_token_embedding_fallback_zero(toy_table):
    np.testing.assert_allclose(token_embedding("q", toy_table), np.zeros(4))


def test_token_embedding_mean_of_singles(toy_table):
    ab = token_embedding("jo", toy_table)
    a = token_embedding("j", toy_table)
    b = token_embedding("o", toy_table)
    np.testing.assert_allclose(ab, (a + b) / 2)


def test_encode_name_pads_with_zeros(toy_table):
    enc = encode_name(["jo"], toy_table, max_tokens=3)
    assert enc.valid_len == 1
    np.testing.assert_allclose(enc.matrix[0], [0.5, 0.5, 0, 0])
    np.testing.assert_allclose(enc.matrix[1:], np.zeros((2, 4)))


def test_encode_name_truncates(toy_table):
    enc = encode_name(["j"] * 12, toy_table, max_tokens=10)
    assert enc.valid_len == 10
    assert enc.matrix.shape == (10, 4)


def test_encode_name_shape_contract(toy_table):
    for tokens in (["j"], ["j", "o"], ["j"] * 7):
        enc = encode_name(tokens, toy_table, max_tokens=5)
        assert enc.matrix.shape == (5, 4)


def test_encode_raw_name_matches_tokenize(toy_table):
    direct = encode_raw_name("Jo, Jojo", toy_table, max_tokens=6)
    via_tokens = encode_name(tokenize("Jo, Jojo"), toy_table, max_tokens=6)
    np.testing.assert_array_equal(direct.matrix, via_tokens.matrix)


def test_load_char_embeddings_two_lines():
    table = load_char_embeddings(io.StringIO("a 1 2 3\nb 4 5 6\n"))
    assert table.dim == 3
    assert set(table.entries) == {"a", "b"}
    np.testing.assert_allclose(table.entries["b"], [4, 5, 6])
    np.testing.assert_allclose(table.fallback, np.zeros(3))


def test_load_char_embeddings_inconsistent_dim():
    with pytest.raises(FormatError):
        load_char_embeddings(io.StringIO("a 1 2 3 4\nb 1 2 3\n"))


def test_load_char_embeddings_non_numeric():
    with pytest.raises(FormatError):
        load_char_embeddings(io.StringIO("a 1 x 3\n"))


def test_load_char_embeddings_empty_stream():
    with pytest.raises(EmptySource):
        load_char_embeddings(io.StringIO(""))


def test_char_embeddings_roundtrip():
    table = random_char_embeddings(["a", "b", ","], dim=5, seed=3)
    buf = io.StringIO()
    save_char_embeddings(table, buf)
    buf.seek(0)
    loaded = load_char_embeddings(buf)
    assert loaded.dim == 5
    for char in table.entries:
        np.testing.assert_allclose(loaded.entries[char], table.entries[char])


def test_random_char_embeddings_deterministic():
    t1 = random_char_embeddings(["a", "b", "c"], dim=7, seed=11)
    t2 = random_char_embeddings(["a", "b", "c"], dim=7, seed=11)
    for char in t1.entries:
        np.testing.assert_array_equal(t1.entries[char], t2.entries[char])
    np.testing.assert_array_equal(t1.fallback, t2.fallback)


def test_random_char_embeddings_seed_sensitivity():
    t1 = random_char_embeddings(["a", "b", "c"], dim=7, seed=11)
    t2 = random_char_embeddings(["a", "b", "c"], dim=7, seed=12)
    assert any(
        not np.array_equal(t1.entries[c], t2.entries[c]) for c in t1.entries
    )


def test_random_char_embeddings_range():
    table = random_char_embeddings(["z"], dim=1, seed=0)
    value = table.entries["z"][0]
    assert -0.05 <= value <= 0.05
    big = random_char_embeddings(list("abcdefgh"), dim=16, seed=1)
    stacked = np.stack(list(big.entries.values()))
    assert stacked.min() >= -0.05 and stacked.max() <= 0.05
