"""Deterioration-pattern vocabulary and free-text normalization.

The vocabulary is entirely file-driven. A taxonomy file is UTF-8 JSON Lines,
one record per line, discriminated by ``kind``::

    {"kind": "taxonomy", "version": "..."}
    {"kind": "pattern", "id": "BLACK_CRUST", "display_name": "Black crust",
     "aliases": ["black crusts"], "partial_of": ["CRUST"]}
    {"kind": "lithology", "id": "LIMESTONE", "display_name": "Limestone", "family": "Carbonate"}
    {"kind": "exposure", "id": "RAIN", "description": "Driving rain and run-off"}

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .errors import DuplicateAliasError, TaxonomyParseError

ID_RE = re.compile(r"[A-Z][A-Z0-9_]*")
_NON_WORD = re.compile(r"[\W_]+", re.UNICODE)


def fold(text: str) -> str:
    """Case-, whitespace- and punctuation-insensitive key for exact matching."""
    text = unicodedata.normalize("NFKC", text).casefold()
    return _NON_WORD.sub(" ", text).strip()


@dataclass(frozen=True)
class Unknown:
    """A term that matched nothing in the vocabulary; ``raw`` is kept verbatim."""

    raw: str

    def __str__(self) -> str:
        return self.raw


PatternRef = Union[str, Unknown]


class LithologyFamily(str, enum.Enum):
    CARBONATE = "Carbonate"
    SILICATE = "Silicate"
    OTHER = "Other"


@dataclass(frozen=True)
class PatternLabel:
    id: str
    display_name: str
    aliases: tuple[str, ...] = ()
    partial_of: tuple[str, ...] = ()

    def __post_init__(self):
        if not ID_RE.fullmatch(self.id):
            raise TaxonomyParseError(f"invalid label id {self.id!r}")
        if self.id in self.partial_of:
            raise TaxonomyParseError(f"{self.id} lists itself in partial_of")


@dataclass(frozen=True)
class LithologyClass:
    id: str
    display_name: str
    family: LithologyFamily


@dataclass(frozen=True)
class ExposureFactor:
    id: str
    description: str


@dataclass(frozen=True)
class PatternTaxonomy:
    labels: tuple[PatternLabel, ...]
    version: str = "unversioned"
    lithologies: tuple[LithologyClass, ...] = ()
    exposures: tuple[ExposureFactor, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, str] = {}
        by_id: dict[str, PatternLabel] = {}
        for label in self.labels:
            if label.id in by_id:
                raise TaxonomyParseError(f"duplicate label id {label.id}")
            by_id[label.id] = label
        for label in self.labels:
            for term in (label.id, label.display_name, *label.aliases):
                key = fold(term)
                if not key:
                    raise TaxonomyParseError(f"{label.id} has an empty alias")
                owner = index.setdefault(key, label.id)
                if owner != label.id:
                    raise DuplicateAliasError(term, owner, label.id)
            for other in label.partial_of:
                if other not in by_id:
                    raise TaxonomyParseError(f"{label.id} partial_of unknown id {other}")
        object.__setattr__(
            self,
            "_index",
            {
                "patterns": index,
                "labels": by_id,
                "lithologies": _simple_index(self.lithologies, "display_name"),
                "exposures": _simple_index(self.exposures, None),
            },
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label_id: object) -> bool:
        return label_id in self._index["labels"]

    def label(self, label_id: str) -> PatternLabel:
        return self._index["labels"][label_id]

    def lithology(self, lithology_id: str) -> LithologyClass:
        return next(x for x in self.lithologies if x.id == lithology_id)

    def partially_overlaps(self, a: str, b: str) -> bool:
        """True when either label lists the other in ``partial_of``."""
        labels = self._index["labels"]
        if a not in labels or b not in labels:
            return False
        return b in labels[a].partial_of or a in labels[b].partial_of

    def normalize_lithology(self, raw: str) -> PatternRef:
        return self._index["lithologies"].get(fold(raw), Unknown(raw))

    def normalize_exposure(self, raw: str) -> PatternRef:
        return self._index["exposures"].get(fold(raw), Unknown(raw))


def _simple_index(items, name_attr: str | None) -> dict[str, str]:
    index: dict[str, str] = {}
    for item in items:
        if item.id in index.values():
            raise TaxonomyParseError(f"duplicate id {item.id}")
        keys = [item.id] + ([getattr(item, name_attr)] if name_attr else [])
        for key in keys:
            index[fold(key)] = item.id
    return index


def normalize_label(raw: str, taxonomy: PatternTaxonomy) -> PatternRef:
    """Map free text to a canonical pattern id, or ``Unknown(raw)``.

    Matching is exact after folding (see :func:`fold`) against ids, display
    names and aliases. There is deliberately no fuzzy fallback.
    """
    return taxonomy._index["patterns"].get(fold(raw), Unknown(raw))


def _require(record: dict, key: str, lineno: int, kind=str):
    if key not in record:
        raise TaxonomyParseError(f"missing field {key!r}", lineno)
    value = record[key]
    if kind is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise TaxonomyParseError(f"field {key!r} must be a list of strings", lineno)
        return tuple(value)
    if not isinstance(value, str):
        raise TaxonomyParseError(f"field {key!r} must be a string", lineno)
    return value


def parse_taxonomy(text: str) -> PatternTaxonomy:
    version = "unversioned"
    labels: list[PatternLabel] = []
    lithologies: list[LithologyClass] = []
    exposures: list[ExposureFactor] = []
    owners: dict[str, str] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TaxonomyParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(record, dict):
            raise TaxonomyParseError("record must be an object", lineno)
        kind = record.get("kind")
        try:
            if kind == "taxonomy":
                version = _require(record, "version", lineno)
            elif kind == "pattern":
                label = PatternLabel(
                    id=_require(record, "id", lineno),
                    display_name=_require(record, "display_name", lineno),
                    aliases=_require(record, "aliases", lineno, list) if "aliases" in record else (),
                    partial_of=(
                        _require(record, "partial_of", lineno, list) if "partial_of" in record else ()
                    ),
                )
                for term in (label.id, label.display_name, *label.aliases):
                    owner = owners.setdefault(fold(term), label.id)
                    if owner != label.id:
                        raise DuplicateAliasError(term, owner, label.id, lineno)
                labels.append(label)
            elif kind == "lithology":
                family = _require(record, "family", lineno)
                try:
                    family = LithologyFamily(family)
                except ValueError:
                    raise TaxonomyParseError(f"unknown lithology family {family!r}", lineno) from None
                lithologies.append(
                    LithologyClass(
                        _require(record, "id", lineno),
                        record.get("display_name", record["id"]),
                        family,
                    )
                )
            elif kind == "exposure":
                exposures.append(
                    ExposureFactor(_require(record, "id", lineno), _require(record, "description", lineno))
                )
            else:
                raise TaxonomyParseError(f"unknown record kind {kind!r}", lineno)
        except DuplicateAliasError:
            raise
        except TaxonomyParseError as exc:
            if exc.line is None:
                raise TaxonomyParseError(str(exc), lineno) from None
            raise
    return PatternTaxonomy(tuple(labels), version, tuple(lithologies), tuple(exposures))


def load_taxonomy(source: str | Path) -> PatternTaxonomy:
    return parse_taxonomy(Path(source).read_text(encoding="utf-8"))


def dump_taxonomy(taxonomy: PatternTaxonomy) -> str:
    records: list[dict] = [{"kind": "taxonomy", "version": taxonomy.version}]
    for label in taxonomy.labels:
        records.append(
            {
                "kind": "pattern",
                "id": label.id,
                "display_name": label.display_name,
                "aliases": list(label.aliases),
                "partial_of": list(label.partial_of),
            }
        )
    for lith in taxonomy.lithologies:
        records.append(
            {"kind": "lithology", "id": lith.id, "display_name": lith.display_name, "family": lith.family.value}
        )
    for exp in taxonomy.exposures:
        records.append({"kind": "exposure", "id": exp.id, "description": exp.description})
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def save_taxonomy(taxonomy: PatternTaxonomy, destination: str | Path) -> None:
    Path(destination).write_text(dump_taxonomy(taxonomy), encoding="utf-8")
