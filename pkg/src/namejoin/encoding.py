"""Name tokenization, character embedding tables, and fixed-shape name encodings.

A name is lowercased and split on whitespace, with ``-`` ``,`` ``.`` detached as
standalone tokens (punctuation carries signal for name forms like "adams , douglas").
Each token becomes the mean of its characters' embedding vectors, and a name becomes
a ``max_tokens x dim`` matrix with zero-padded rows beyond ``valid_len``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .errors import EmptyName, EmptySource, FormatError

DETACHED_PUNCTUATION = ("-", ",", ".")
DEFAULT_MAX_TOKENS = 10

TextSource = Union[str, Path, IO[str]]


def tokenize(name: str) -> list[str]:
    """Lowercase, split on whitespace, and detach ``-`` ``,`` ``.`` into their own tokens.

    Raises EmptyName when the trimmed input is empty.
    """
    if not name or not name.strip():
        raise EmptyName(f"cannot tokenize empty name: {name!r}")
    lowered = name.lower()
    for mark in DETACHED_PUNCTUATION:
        lowered = lowered.replace(mark, f" {mark} ")
    return lowered.split()


@dataclass
class CharEmbeddingTable:
    """Character-to-vector lookup with a fallback vector for unknown characters."""

    dim: int
    entries: dict[str, np.ndarray]
    fallback: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.fallback is None:
            self.fallback = np.zeros(self.dim, dtype=np.float64)
        for char, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise FormatError(
                    f"embedding for {char!r} has shape {vec.shape}, expected ({self.dim},)"
                )
        if self.fallback.shape != (self.dim,):
            raise FormatError(
                f"fallback vector has shape {self.fallback.shape}, expected ({self.dim},)"
            )

    def vector(self, char: str) -> np.ndarray:
        return self.entries.get(char, self.fallback)


@dataclass
class NameEncoding:
    """A ``max_tokens x dim`` input matrix; rows at index >= valid_len are zero padding."""

    matrix: np.ndarray
    valid_len: int

    @property
    def max_tokens(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def token_embedding(token: str, table: CharEmbeddingTable) -> np.ndarray:
    """Mean of the per-character vectors of ``token``; unknown characters use the fallback."""
    total = np.zeros(table.dim, dtype=np.float64)
    for char in token:
        total += table.vector(char)
    return total / len(token)


def encode_name(
    tokens: Iterable[str],
    table: CharEmbeddingTable,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> NameEncoding:
    """Stack token embeddings into a fixed-shape matrix, truncating past max_tokens."""
    matrix = np.zeros((max_tokens, table.dim), dtype=np.float64)
    valid = 0
    for token in tokens:
        if valid == max_tokens:
            break
        matrix[valid] = token_embedding(token, table)
        valid += 1
    return NameEncoding(matrix=matrix, valid_len=valid)


def encode_raw_name(
    name: str, table: CharEmbeddingTable, max_tokens: int = DEFAULT_MAX_TOKENS
) -> NameEncoding:
    """Tokenize then encode in one step."""
    return encode_name(tokenize(name), table, max_tokens)


def _open_lines(source: TextSource):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8"), True
    return source, False


def load_char_embeddings(source: TextSource) -> CharEmbeddingTable:
    """Parse the character-embedding text format: ``<char> <v1> ... <vD>`` per line.

    The dimensionality is fixed by the first line; the fallback vector is all-zero.
    Raises FormatError on inconsistent dimensions or non-numeric fields, EmptySource
    when no entries are present.
    """
    stream, owned = _open_lines(source)
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            char = line[0]
            fields = line[1:].split()
            if not fields:
                raise FormatError(f"line {lineno}: no embedding values")
            try:
                vec = np.array([float(v) for v in fields], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"line {lineno}: non-numeric field ({exc})") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(
                    f"line {lineno}: expected {dim} values, found {vec.size}"
                )
            entries[char] = vec
    finally:
        if owned:
            stream.close()
    if dim is None:
        raise EmptySource("character-embedding source contained no entries")
    return CharEmbeddingTable(dim=dim, entries=entries)


def save_char_embeddings(table: CharEmbeddingTable, destination: TextSource) -> None:
    """Write a table back out in the text format (entries sorted by code point)."""
    buf = io.StringIO()
    for char in sorted(table.entries):
        values = " ".join(repr(float(v)) for v in table.entries[char])
        buf.write(f"{char} {values}\n")
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(buf.getvalue(), encoding="utf-8")
    else:
        destination.write(buf.getvalue())


def random_char_embeddings(
    charset: Iterable[str], dim: int, seed: int
) -> CharEmbeddingTable:
    """Seeded uniform [-0.05, 0.05] table over ``charset`` (plus a random fallback).

    Characters are assigned draws in sorted code-point order, so the result depends
    only on the set and the seed.
    """
    if dim < 1:
        raise FormatError(f"embedding dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    entries = {
        char: rng.uniform(-0.05, 0.05, size=dim) for char in sorted(set(charset))
    }
    fallback = rng.uniform(-0.05, 0.05, size=dim)
    return CharEmbeddingTable(dim=dim, entries=entries, fallback=fallback)
