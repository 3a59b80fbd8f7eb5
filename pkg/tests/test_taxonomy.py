from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idpattern.cli import data_path
from idpattern.errors import DuplicateAliasError, TaxonomyParseError
from idpattern.taxonomy import (
    LithologyFamily,
    PatternLabel,
    PatternTaxonomy,
    Unknown,
    dump_taxonomy,
    fold,
    load_taxonomy,
    normalize_label,
    parse_taxonomy,
    save_taxonomy,
)


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy(data_path("taxonomy.jsonl"))


def lines(*records):
    return "\n".join(json.dumps(r) for r in records) + "\n"


def test_two_label_document():
    tax = parse_taxonomy(lines(
        {"kind": "pattern", "id": "BLACK_CRUST", "display_name": "Black crust"},
        {"kind": "pattern", "id": "BIOCOLONIZATION", "display_name": "Biological colonization"},
    ))
    assert len(tax) == 2
    assert "BLACK_CRUST" in tax and "SPALLING" not in tax


def test_duplicate_alias_rejected_with_line():
    doc = lines(
        {"kind": "pattern", "id": "BLACK_CRUST", "display_name": "Black crust", "aliases": ["crust"]},
        {"kind": "pattern", "id": "CRUST", "display_name": "Crust"},
    )
    with pytest.raises(DuplicateAliasError) as info:
        parse_taxonomy(doc)
    assert info.value.line == 2


@pytest.mark.parametrize("record, needle", [
    ({"kind": "pattern", "id": "black_crust", "display_name": "x"}, "id"),
    ({"kind": "pattern", "id": "A", "display_name": "a", "partial_of": ["NOPE"]}, "NOPE"),
    ({"kind": "mystery"}, "kind"),
    ({"kind": "lithology", "id": "X", "display_name": "x", "family": "Metamorphic"}, "family"),
])
def test_invalid_records(record, needle):
    with pytest.raises(TaxonomyParseError) as info:
        parse_taxonomy(lines(record))
    assert needle in str(info.value)


def test_bad_json_reports_line():
    with pytest.raises(TaxonomyParseError) as info:
        parse_taxonomy('{"kind": "taxonomy", "version": "v"}\n{not json\n')
    assert info.value.line == 2


def test_bundled_file_round_trips_byte_identical(tmp_path, taxonomy):
    original = data_path("taxonomy.jsonl").read_text(encoding="utf-8")
    assert dump_taxonomy(taxonomy) == original
    save_taxonomy(taxonomy, tmp_path / "t.jsonl")
    assert (tmp_path / "t.jsonl").read_text(encoding="utf-8") == original
    assert load_taxonomy(tmp_path / "t.jsonl") == taxonomy


def test_normalize_folds_case_space_punctuation(taxonomy):
    assert normalize_label("Black  crust.", taxonomy) == "BLACK_CRUST"
    assert normalize_label("  BLACK_CRUST ", taxonomy) == "BLACK_CRUST"
    assert normalize_label("biological colonization", taxonomy) == "BIOCOLONIZATION"


def test_unmatched_term_is_unknown(taxonomy):
    assert normalize_label("dark stain", taxonomy) == Unknown("dark stain")


def test_no_fuzzy_matching(taxonomy):
    assert isinstance(normalize_label("black crusty", taxonomy), Unknown)


def test_partial_overlap_is_symmetric(taxonomy):
    assert taxonomy.partially_overlaps("SOILING", "BLACK_CRUST")
    assert taxonomy.partially_overlaps("BLACK_CRUST", "SOILING")
    assert not taxonomy.partially_overlaps("BLACK_CRUST", "MOSS")
    assert not taxonomy.partially_overlaps("BLACK_CRUST", "NOT_AN_ID")


def test_lithology_and_exposure(taxonomy):
    assert taxonomy.normalize_lithology("limestone") == "LIMESTONE"
    assert taxonomy.lithology("GRANITE").family is LithologyFamily.SILICATE
    assert taxonomy.normalize_exposure("rising damp") == "RISING_DAMP"
    assert taxonomy.normalize_exposure("meteorites") == Unknown("meteorites")


@given(st.text(max_size=40))
def test_fold_idempotent(text):
    assert fold(fold(text)) == fold(text)


@settings(max_examples=200)
@given(st.text(max_size=30))
def test_normalization_idempotent_on_known_ids(taxonomy, text):
    ref = normalize_label(text, taxonomy)
    if isinstance(ref, str):
        assert normalize_label(ref, taxonomy) == ref
        assert normalize_label(taxonomy.label(ref).display_name, taxonomy) == ref


ident = st.from_regex(r"[A-Z][A-Z0-9_]{0,8}", fullmatch=True)
words = st.text(alphabet="abcdefgh éü-", min_size=1, max_size=12).filter(lambda s: fold(s))


@st.composite
def taxonomies(draw):
    ids = draw(st.lists(ident, min_size=1, max_size=6, unique=True))
    used: set[str] = set()
    labels = []
    for i, label_id in enumerate(ids):
        terms = []
        for term in [draw(words)] + draw(st.lists(words, max_size=3)):
            key = fold(term)
            if key not in used and key != fold(label_id) and all(key != fold(x) for x in ids):
                used.add(key)
                terms.append(term)
        if not terms:
            terms = [label_id.lower() + "x"]
            if fold(terms[0]) in used:
                continue
            used.add(fold(terms[0]))
        partial = tuple(draw(st.lists(st.sampled_from(ids[:i]), unique=True, max_size=2))) if i else ()
        labels.append(PatternLabel(label_id, terms[0], tuple(terms[1:]), partial))
    return PatternTaxonomy(tuple(labels), draw(st.text(alphabet="abc.-1", min_size=1, max_size=5)))


@settings(max_examples=100)
@given(taxonomies())
def test_round_trip_fuzzed(tax):
    assert parse_taxonomy(dump_taxonomy(tax)) == tax
    for label in tax.labels:
        assert normalize_label(label.display_name, tax) == label.id
        for alias in label.aliases:
            assert normalize_label(alias, tax) == label.id
