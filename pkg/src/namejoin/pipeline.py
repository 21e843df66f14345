"""Raw-record cleansing, people-name augmentation, and the entities file.

People records pass five rules in order: royalty/Roman-numeral drop, removal of
parenthesized spans and ellipses, a Latin-1 restriction, the shared-name-part
alias test, and the matching-last-name alias test. Company records strip
parentheses, apply the same Latin-1 restriction, drop ticker-shaped names
(``T123``, ``450``), and keep only aliases that share a character subset with
the main name or read as an acronym of it. Augmentation then generates the
conventional comma and initial forms for two- and three-part person names.

Drops are values (`Dropped`), not errors; a `CleansingReport` counts them.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

from .errors import EmptyName, FormatError

KINDS = ("person", "company")

DEFAULT_ROYALTY_TITLES = (
    "king", "queen", "pope", "prince", "princess",
    "emperor", "empress", "tsar", "duke", "duchess",
)

_ROMAN = re.compile(r"[IVXLCDM]+")
_TICKER = re.compile(r"T[0-9]+|[0-9]+")
_PAREN_GROUP = re.compile(r"\([^()]*\)")
_ELLIPSIS = re.compile(r"\.{3,}|…")

TextSource = Union[str, Path, IO[str]]


@dataclass(frozen=True)
class RawRecord:
    source_id: str
    kind: str
    main_name: str
    aliases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.main_name or not self.main_name.strip():
            raise EmptyName(f"record {self.source_id!r} has a blank main name")
        object.__setattr__(self, "aliases", tuple(self.aliases))


@dataclass
class EntityRecord:
    identity_id: int
    kind: str
    names: list[str]


@dataclass(frozen=True)
class Dropped:
    rule: str
    source_id: str = ""


@dataclass
class CleansingReport:
    records_in: int = 0
    records_out: int = 0
    records_dropped: dict[str, int] = field(default_factory=dict)
    aliases_dropped: dict[str, int] = field(default_factory=dict)

    def count_record(self, rule: str) -> None:
        self.records_dropped[rule] = self.records_dropped.get(rule, 0) + 1

    def count_alias(self, rule: str) -> None:
        self.aliases_dropped[rule] = self.aliases_dropped.get(rule, 0) + 1

    def merge(self, other: "CleansingReport") -> None:
        self.records_in += other.records_in
        self.records_out += other.records_out
        for rule, count in other.records_dropped.items():
            self.records_dropped[rule] = self.records_dropped.get(rule, 0) + count
        for rule, count in other.aliases_dropped.items():
            self.aliases_dropped[rule] = self.aliases_dropped.get(rule, 0) + count

    def to_json(self) -> dict:
        return {
            "records_in": self.records_in,
            "records_out": self.records_out,
            "records_dropped": dict(sorted(self.records_dropped.items())),
            "aliases_dropped": dict(sorted(self.aliases_dropped.items())),
        }


def _strip_spans(name: str, drop_ellipses: bool) -> str:
    out = name
    while True:
        shrunk = _PAREN_GROUP.sub(" ", out)
        if shrunk == out:
            break
        out = shrunk
    out = out.replace("(", " ").replace(")", " ")
    if drop_ellipses:
        out = _ELLIPSIS.sub(" ", out)
    return " ".join(out.split())


def _is_latin1(name: str) -> bool:
    try:
        name.encode("latin-1")
    except UnicodeEncodeError:
        return False
    return True


def name_parts(name: str) -> list[str]:
    """Lowercased whitespace tokens with surrounding punctuation removed;
    punctuation-only tokens are not parts."""
    parts = []
    for token in name.split():
        stripped = token.strip(string.punctuation).lower()
        if stripped:
            parts.append(stripped)
    return parts


def shares_name_part(a: str, b: str) -> bool:
    return bool(set(name_parts(a)) & set(name_parts(b)))


def surname(name: str) -> str:
    """The last name part; for comma forms ("Adams, Douglas"), the last part
    before the comma."""
    head = name.split(",", 1)[0] if "," in name else name
    parts = name_parts(head)
    return parts[-1] if parts else ""


def _looks_royal(name: str, royalty_titles: Iterable[str]) -> bool:
    titles = {t.lower() for t in royalty_titles}
    tokens = name.split()
    for i, token in enumerate(tokens):
        stripped = token.strip(string.punctuation)
        if stripped.lower() in titles:
            return True
        if _ROMAN.fullmatch(stripped) and (
            len(stripped) >= 2
            or (stripped == "I" and any(name_parts(t) for t in tokens[:i]))
        ):
            return True
    return False


def _dedup_case_insensitive(names: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for name in names:
        key = name.lower()
        if key not in seen:
            seen.add(key)
            out.append(name)
    return out


def cleanse_person(
    rec: RawRecord,
    royalty_titles: Sequence[str] = DEFAULT_ROYALTY_TITLES,
    report: Optional[CleansingReport] = None,
) -> Union[EntityRecord, Dropped]:
    """Apply the person rules; identity_id is assigned later by finalize_dataset."""
    report = report if report is not None else CleansingReport()
    if _looks_royal(rec.main_name, royalty_titles):
        report.count_record("royalty")
        return Dropped("royalty", rec.source_id)
    main = _strip_spans(rec.main_name, drop_ellipses=True)
    if not main:
        report.count_record("empty")
        return Dropped("empty", rec.source_id)
    if not _is_latin1(main):
        report.count_record("latin1")
        return Dropped("latin1", rec.source_id)
    kept: list[str] = []
    for raw_alias in rec.aliases:
        alias = _strip_spans(raw_alias, drop_ellipses=True)
        if not alias:
            report.count_alias("empty")
            continue
        if not _is_latin1(alias):
            report.count_alias("latin1")
            continue
        if not shares_name_part(alias, main):
            report.count_alias("no_shared_part")
            continue
        if surname(alias) != surname(main):
            report.count_alias("last_name")
            continue
        kept.append(alias)
    return EntityRecord(
        identity_id=-1, kind="person", names=_dedup_case_insensitive([main, *kept])
    )


def _char_subset(a: str, b: str) -> bool:
    sa = {c for c in a.lower() if c.isalnum()}
    sb = {c for c in b.lower() if c.isalnum()}
    if not sa or not sb:
        return False
    return sa <= sb or sb <= sa


def is_acronym_of(candidate: str, name: str) -> bool:
    """True when the candidate's letters appear in order among the initials of
    the name's parts (so "IB" matches "International Business Machines")."""
    wanted = [c.lower() for c in candidate if c.isalnum()]
    if not wanted:
        return False
    initials = [part[0] for part in name_parts(name)]
    pos = 0
    for initial in initials:
        if pos < len(wanted) and wanted[pos] == initial:
            pos += 1
    return pos == len(wanted)


def cleanse_company(
    rec: RawRecord, report: Optional[CleansingReport] = None
) -> Union[EntityRecord, Dropped]:
    report = report if report is not None else CleansingReport()
    main = _strip_spans(rec.main_name, drop_ellipses=False)
    if not main:
        report.count_record("empty")
        return Dropped("empty", rec.source_id)
    if not _is_latin1(main):
        report.count_record("latin1")
        return Dropped("latin1", rec.source_id)
    if _TICKER.fullmatch(main):
        report.count_record("ticker")
        return Dropped("ticker", rec.source_id)
    kept: list[str] = []
    for raw_alias in rec.aliases:
        alias = _strip_spans(raw_alias, drop_ellipses=False)
        if not alias:
            report.count_alias("empty")
            continue
        if not _is_latin1(alias):
            report.count_alias("latin1")
            continue
        if _TICKER.fullmatch(alias):
            report.count_alias("ticker")
            continue
        if not (_char_subset(alias, main) or is_acronym_of(alias, main)):
            report.count_alias("unrelated")
            continue
        kept.append(alias)
    return EntityRecord(
        identity_id=-1, kind="company", names=_dedup_case_insensitive([main, *kept])
    )


def _generation_parts(main: str) -> list[str]:
    return [t for t in main.split() if any(ch.isalnum() for ch in t)]


def augment_person(ent: EntityRecord) -> EntityRecord:
    """Add comma and initial variants of two- and three-part main names.

    Mains already in comma form and mains with any other part count pass
    through unchanged. Idempotent.
    """
    main = ent.names[0]
    generated: list[str] = []
    if "," not in main:
        parts = _generation_parts(main)
        if len(parts) == 2:
            first, last = parts
            generated = [
                f"{last}, {first}",
                f"{first[0]}. {last}",
                f"{last}, {first[0]}.",
            ]
        elif len(parts) == 3:
            first, middle, last = parts
            generated = [
                f"{last}, {first}",
                f"{first[0]}. {last}",
                f"{last}, {first[0]}.",
                f"{first} {middle[0]}. {last}",
                f"{last}, {first} {middle}",
                f"{last}, {first} {middle[0]}.",
            ]
    return EntityRecord(
        identity_id=ent.identity_id,
        kind=ent.kind,
        names=_dedup_case_insensitive([*ent.names, *generated]),
    )


def finalize_dataset(
    records: Sequence[RawRecord],
    kind: str,
    royalty_titles: Sequence[str] = DEFAULT_ROYALTY_TITLES,
) -> tuple[list[EntityRecord], CleansingReport]:
    """Cleanse (and for people, augment) records of one kind, drop entities
    left with fewer than two forms, and assign dense identity ids in input
    order."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    report = CleansingReport()
    out: list[EntityRecord] = []
    for rec in records:
        report.records_in += 1
        if rec.kind != kind:
            report.count_record("wrong_kind")
            continue
        if kind == "person":
            ent = cleanse_person(rec, royalty_titles, report)
        else:
            ent = cleanse_company(rec, report)
        if isinstance(ent, Dropped):
            continue
        if kind == "person":
            ent = augment_person(ent)
        if len(ent.names) < 2:
            report.count_record("too_few_forms")
            continue
        out.append(EntityRecord(identity_id=len(out), kind=kind, names=ent.names))
        report.records_out += 1
    return out, report


# --- JSONL files ----------------------------------------------------------


def _iter_lines(source: TextSource):
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def read_raw_records(source: TextSource) -> list[RawRecord]:
    """Parse raw-record JSON lines: {"source_id", "kind", "main", "aliases"}."""
    records = []
    for lineno, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        try:
            blob = json.loads(line)
            records.append(
                RawRecord(
                    source_id=str(blob.get("source_id", "")),
                    kind=blob["kind"],
                    main_name=blob["main"],
                    aliases=tuple(blob.get("aliases", ())),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, EmptyName) as exc:
            raise FormatError(f"bad raw record on line {lineno}: {exc}") from exc
    return records


def write_entities(entities: Sequence[EntityRecord], sink: TextSource) -> None:
    """Write entities as JSON lines: {"id", "kind", "names"}."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_entities(entities, fh)
        return
    for ent in entities:
        sink.write(
            json.dumps(
                {"id": ent.identity_id, "kind": ent.kind, "names": ent.names},
                ensure_ascii=False,
            )
            + "\n"
        )


def read_entities(source: TextSource) -> list[EntityRecord]:
    entities = []
    for lineno, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        try:
            blob = json.loads(line)
            names = list(blob["names"])
            if not names or blob["kind"] not in KINDS:
                raise ValueError("empty name list or unknown kind")
            entities.append(
                EntityRecord(
                    identity_id=int(blob["id"]), kind=blob["kind"], names=names
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad entity on line {lineno}: {exc}") from exc
    return entities
