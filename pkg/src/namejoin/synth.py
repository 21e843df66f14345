"""Synthetic person corpora: unique invented full names, the standard
augmentation variants, and seeded character-level noise.

First names are drawn from a small shared pool (so different identities
collide on them, as real data does); each identity gets its own surname,
so full names are unique by construction. Noise applies single character
edits (substitute / insert / delete) that never empty a token.
"""

from __future__ import annotations

import numpy as np

from .pipeline import EntityRecord, augment_person

_SYLLABLES = (
    "an", "bel", "car", "dan", "el", "fen", "gar", "hal", "is", "jor",
    "kel", "lan", "mar", "nor", "ol", "per", "quin", "ras", "sel", "tan",
    "ul", "ver", "wil", "xen", "yor", "zan",
)

DEFAULT_FIRST_POOL = 120
DEFAULT_THREE_PART_RATE = 0.4


def _word(rng: np.random.Generator, n_syllables: int) -> str:
    picks = rng.integers(0, len(_SYLLABLES), size=n_syllables)
    word = "".join(_SYLLABLES[int(i)] for i in picks)
    return word.capitalize()


def _unique_words(rng: np.random.Generator, count: int, n_syllables: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        w = _word(rng, n_syllables)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def noisy_variant(rng: np.random.Generator, name: str) -> str:
    """One seeded character edit; tokens never shrink to nothing."""
    letters = [i for i, c in enumerate(name) if c.isalpha()]
    if not letters:
        return name
    i = int(letters[int(rng.integers(len(letters)))])
    op = int(rng.integers(3))
    c = chr(ord("a") + int(rng.integers(26)))
    in_word = (i > 0 and name[i - 1].isalpha()) or (
        i + 1 < len(name) and name[i + 1].isalpha()
    )
    if op == 2 and in_word:
        return name[:i] + name[i + 1 :]
    if op == 1:
        return name[:i] + c + name[i:]
    return name[:i] + c + name[i + 1 :]


def synthetic_people(
    n_identities: int,
    seed: int = 0,
    noisy_forms: int = 2,
    first_pool: int = DEFAULT_FIRST_POOL,
    three_part_rate: float = DEFAULT_THREE_PART_RATE,
) -> list[EntityRecord]:
    """Entities with augmented and noised surface forms; deterministic per seed."""
    if n_identities < 1:
        raise ValueError("n_identities must be >= 1")
    rng = np.random.default_rng(seed)
    firsts = _unique_words(rng, first_pool, 2)
    middles = _unique_words(rng, first_pool // 2, 2)
    surnames = _unique_words(rng, n_identities, 3)
    entities: list[EntityRecord] = []
    for ident in range(n_identities):
        # surname is the identity's own; first/middle names collide across
        # identities (as real data does), so mains are unique by construction
        first = firsts[int(rng.integers(len(firsts)))]
        last = surnames[ident]
        if rng.random() < three_part_rate:
            middle = middles[int(rng.integers(len(middles)))]
            main = f"{first} {middle} {last}"
        else:
            main = f"{first} {last}"
        ent = augment_person(EntityRecord(identity_id=ident, kind="person", names=[main]))
        existing = {n.lower() for n in ent.names}
        added = 0
        attempts = 0
        while added < noisy_forms and attempts < 20 * max(noisy_forms, 1):
            attempts += 1
            base = ent.names[int(rng.integers(len(ent.names)))]
            variant = noisy_variant(rng, base)
            if variant.lower() not in existing:
                existing.add(variant.lower())
                ent.names.append(variant)
                added += 1
        entities.append(ent)
    return entities
