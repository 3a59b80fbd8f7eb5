"""Normalizing free-text pattern names against the bundled glossary.

Model replies name patterns in prose ("Black  crust.", "biological
colonization"). Scoring needs canonical ids, so every term is folded and
looked up exactly; anything unmatched stays visible as Unknown.

    python demos/01_taxonomy.py
"""

from __future__ import annotations

from idpattern.cli import data_path
from idpattern.taxonomy import load_taxonomy, normalize_label

taxonomy = load_taxonomy(data_path("taxonomy.jsonl"))
print(f"glossary {taxonomy.version}: {len(taxonomy)} patterns\n")

for term in ["Black  crust.", "biological colonization", "Sanding", "staining", "dark stain", "crusty"]:
    print(f"{term!r:28} -> {normalize_label(term, taxonomy)!r}")

# Partial-overlap pairs are what the scorer counts as ambiguous calls.
print("\npartial overlaps declared in the glossary:")
for label in taxonomy.labels:
    for other in label.partial_of:
        print(f"  {label.id} ~ {other}")
