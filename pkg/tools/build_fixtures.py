"""Regenerate the bundled fixture corpus under src/idpattern/data/fixtures.

Writes the case images, ground-truth corpus, scripted mock transcript, the
sample knowledge-base store and the mock config. Re-running it must leave
every file byte-identical (checked by tests/test_fixtures.py).

    python tools/build_fixtures.py [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import struct
import zlib
from pathlib import Path

from idpattern.gateway import MockBackend, ScriptedReply, dump_transcript, embed_text
from idpattern.rag import EmbeddedChunk, VectorStore, chunk_document, save_store

DATA = Path(__file__).resolve().parents[1] / "src" / "idpattern" / "data"
FIXTURES = DATA / "fixtures"

# (prompt_tokens, completion_tokens) scripted per phase; per case the specialists
# produce ~10k tokens of discussion and the coordinator well under 1k.
USAGE = {
    "individual": (6000, 1500),
    "discussion": (9000, 1000),
    "consensus": (14000, 800),
    "baseline": (1500, 3500),
}

SPECIALISTS = ("lithologist", "pathologist", "environmental", "conservator")


def png(rgb: tuple[int, int, int], size: int = 16) -> bytes:
    def chunk(tag: bytes, body: bytes) -> bytes:
        return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body))

    row = b"\x00" + bytes(rgb) * size
    raw = row * size
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0))
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )


CASES = [
    {
        "case_id": "case01",
        "image": "images/case01.png",
        "color": (92, 88, 80),
        "expected": ["BLACK_CRUST", "GRANULAR_DISINTEGRATION", "EFFLORESCENCE", "BIOCOLONIZATION"],
        "notes": "Limestone church facade, north-west exposure, urban traffic nearby.",
    },
    {
        "case_id": "case02",
        "image": "images/case02.png",
        "color": (150, 146, 140),
        "expected": ["LICHEN", "SCALING", "CRACK", "DISCOLOURATION"],
        "notes": "Granite boundary wall in a rural setting, exposed to rain and wind.",
    },
    {
        "case_id": "case03",
        "image": "images/case03.png",
        "color": (181, 140, 96),
        "expected": ["ALVEOLIZATION", "MISSING_PART", "MOSS", "DEPOSIT", "SPALLING"],
        "notes": "Sandstone balustrade of a seaside terrace.",
    },
]


ANALYSES = {
    ("case01", "lithologist"): """\
The facade is built of a fine-grained, pale limestone laid in regular ashlar courses; the surface shows
a compact micritic fabric with moderate porosity. The lower courses have lost their sharp arrises and
grains come off the surface, which is consistent with loss of cohesion in a porous carbonate stone fed by
moisture from below. A white powdery bloom sits along the damp front.

```analysis
element_type: ashlar facade with a moulded cornice
exposure: RAIN, POLLUTION, RISING_DAMP
lithology: Limestone
zone: lower courses | loss of cohesion; rounded arrises; white bloom
zone: upper wall | sound surface; dark patches under the cornice
finding: granular disintegration | lower three courses near the plinth | grains detach on contact, porous limestone with capillary moisture
finding: efflorescence | upper edge of the damp zone above the plinth | white powdery salts along the evaporation front
```
""",
    ("case01", "pathologist"): """\
Several patterns coexist. Under the cornice and inside the mouldings there is a hard dark layer that
follows the relief: a black crust, not soiling, since it lies in rain-sheltered areas and shows thickness
at the broken edges. The plinth shows sanding and white salts. Near the left pilaster the outer skin of
one block is lifting along its bedding.

```analysis
element_type: facade with cornice and pilasters
exposure: RAIN, POLLUTION
lithology: Limestone
zone: cornice and mouldings | dark hard layer; sheltered from rain
zone: plinth | sanding; white salts
zone: left pilaster | layer lifting along bedding
finding: black crust | underside of the cornice and recessed mouldings | hard dark layer in rain-sheltered zones
finding: granular disintegration | plinth and first courses | sanding on contact
finding: efflorescence | plinth joints | white powdery crystallisation
finding: delamination | third block of the left pilaster | outer layer detaching along the bedding planes
```
""",
    ("case01", "environmental"): """\
The facade faces north-west onto a busy street. Sheltered parts under projections receive pollutants
but no rain wash, the rain-washed surfaces stay pale, and the base is wet from capillary rise. The
distribution of dark and white areas follows these water paths closely.

```analysis
element_type: street facade
exposure: RAIN, POLLUTION, RISING_DAMP
lithology: Limestone
zone: sheltered projections | dark layer
zone: base | damp band; white salts
finding: black crust | rain-sheltered undersides of the cornice | pollution deposition without rain wash
finding: efflorescence | top of the damp band at the base | salts carried by rising damp
```
""",
    ("case01", "conservator"): """\
No recent cleaning is visible; the joints were repointed with a grey cement mortar some decades ago,
which is harder than the stone. The cornice carries old dark layers. There is also a diffuse dark mark
on the right bay that I cannot classify from the image.

```analysis
element_type: facade, previously repointed
exposure: RAIN, POLLUTION
lithology: Limestone
zone: joints | cement repointing
zone: right bay | diffuse dark mark
finding: black crust | cornice soffit | old dark layers never cleaned
finding: dark stain | right bay at mid height | colour change of unclear origin
```
""",
    ("case02", "lithologist"): """\
Coarse-grained two-mica granite, blocks roughly squared. Open fissures cut across two blocks and thin
flakes lift from the weathered faces.

```analysis
element_type: dry-laid boundary wall
exposure: RAIN, WIND
lithology: Granite
zone: middle courses | open fissures; thin flakes
finding: crack | through the two central blocks | fissure crossing the grain fabric
finding: flaking | weathered faces of the upper blocks | thin flakes detaching parallel to the surface
```
""",
    ("case02", "pathologist"): """\
The top of the wall carries circular grey and orange growths. The faces show detachment in thin flakes
and a reddish-brown colour change around the joints.

```analysis
element_type: granite boundary wall
exposure: RAIN, WIND
lithology: Granite
zone: coping | circular grey and orange growths
zone: faces | thin flakes; reddish colour change
finding: lichen | coping stones and upper edges | circular crustose growths on a sunlit granite surface
finding: flaking | upper faces | thin flakes detaching
finding: discolouration | around the joints of the middle courses | reddish-brown change of the stone colour
```
""",
    ("case02", "environmental"): """\
The wall is fully exposed to rain and prevailing wind; the coping stays wet longest and the joints
channel run-off.

```analysis
element_type: exposed wall
exposure: RAIN, WIND, SUN
lithology: Granite
zone: coping | wet longest; growths
zone: joints | run-off marks
finding: lichen | coping stones | wet and sunlit surface favourable to lichens
finding: staining | below the joints | run-off carrying iron oxides
```
""",
    ("case02", "conservator"): """\
One crack has been filled with a cement grout that has since debonded. No other interventions visible.

```analysis
element_type: wall with local repairs
exposure: RAIN
lithology: Granite
zone: central blocks | cement-filled crack
finding: crack | central blocks | earlier cement grout has debonded
finding: cement repair | central crack | hard grout incompatible with the granite
```
""",
    ("case03", "lithologist"): """\
Medium-grained, porous sandstone with visible bedding. The balusters show deep cavities and rounded
profiles typical of salt weathering near the sea.

```analysis
element_type: balustrade with turned balusters
exposure: SALT_SPRAY, WIND
lithology: Sandstone
zone: balusters | interconnected cavities
zone: handrail | pieces detached at the edges
finding: alveolization | seaward faces of the balusters | interconnected cavities in porous sandstone
finding: spalling | underside of the handrail | centimetric pieces detached
```
""",
    ("case03", "pathologist"): """\
The balusters show honeycomb cavities; one baluster has lost its upper half. Green cushions grow in the
open joints of the base and larger pieces have spalled from the handrail.

```analysis
element_type: terrace balustrade
exposure: SALT_SPRAY, WIND, RAIN
lithology: Sandstone
zone: balusters | honeycomb cavities; one baluster broken
zone: base | green cushions in joints
zone: handrail | detached pieces
finding: alveolization | seaward faces of the balusters | honeycomb cavities
finding: missing part | upper half of the fourth baluster | portion of the element lost
finding: moss | open joints of the base | green cushions where water collects
finding: spalling | handrail underside | thick pieces detached
```
""",
    ("case03", "environmental"): """\
Marine aerosol and wind reach the seaward face directly; the base collects rainwater.

```analysis
element_type: seaside balustrade
exposure: SALT_SPRAY, WIND, RAIN
lithology: Sandstone
zone: seaward face | salt and wind action
zone: base | standing water
finding: moss | base joints | persistent moisture
finding: alveolization | seaward faces | salt crystallisation driven by wind drying
```
""",
    ("case03", "conservator"): """\
One baluster is broken and has not been replaced. The handrail shows recent spray-paint tags.

```analysis
element_type: balustrade, never restored
exposure: SALT_SPRAY
lithology: Sandstone
zone: fourth baluster | broken, not replaced
finding: missing part | fourth baluster | upper half lost and never replaced
```
""",
}

COMMENTARIES = {
    "case01": {
        "lithologist": [("pathologist", "the sanding on the plinth matches the porous limestone", "the lifting on the pilaster may be scaling rather than delamination"),
                        ("environmental", "rising damp explains the salts", ""),
                        ("conservator", "", "the dark mark on the right bay is more likely black crust than an unclassified stain")],
        "pathologist": [("lithologist", "granular disintegration and efflorescence confirmed", "you did not report the crust under the cornice"),
                        ("environmental", "sheltered zones match the black crust distribution", ""),
                        ("conservator", "cornice crust confirmed", "'dark stain' is not a glossary term")],
        "environmental": [("lithologist", "capillary moisture matches the damaged courses", ""),
                          ("pathologist", "delamination is plausible on the bedded pilaster block", ""),
                          ("conservator", "cement repointing raises evaporation in the stone", "")],
        "conservator": [("lithologist", "loss of cohesion is consistent with hard cement joints", ""),
                        ("pathologist", "agree on all four patterns", ""),
                        ("environmental", "damp band visible in the photograph", "")],
    },
    "case02": {
        "lithologist": [("pathologist", "flaking confirmed on the upper faces", "the colour change could be natural oxidation of biotite"),
                        ("environmental", "", "staining is a colour change not a deposit"),
                        ("conservator", "crack confirmed", "")],
        "pathologist": [("lithologist", "flaking and crack confirmed", ""),
                        ("environmental", "lichens on the coping confirmed", "use discolouration for the colour change"),
                        ("conservator", "", "'cement repair' is an intervention not a deterioration pattern")],
        "environmental": [("lithologist", "", "wind-driven rain may widen the crack"),
                          ("pathologist", "lichen distribution matches the wet coping", ""),
                          ("conservator", "debonded grout confirms water ingress", "")],
        "conservator": [("lithologist", "agree on the crack", ""),
                        ("pathologist", "agree on lichen and flaking", ""),
                        ("environmental", "run-off explains the colour change", "")],
    },
    "case03": {
        "lithologist": [("pathologist", "all four patterns consistent with the sandstone", ""),
                        ("environmental", "salt spray explains the cavities", ""),
                        ("conservator", "missing baluster confirmed", "the handrail tags were not recorded as a finding")],
        "pathologist": [("lithologist", "alveolization and spalling confirmed", "missing part not reported"),
                        ("environmental", "moss in the base joints confirmed", ""),
                        ("conservator", "missing part confirmed", "spray-paint tags should be recorded as graffiti")],
        "environmental": [("lithologist", "wind drying drives the cavities", ""),
                          ("pathologist", "agree on moss and alveolization", ""),
                          ("conservator", "", "graffiti noted but not listed")],
        "conservator": [("lithologist", "agree", ""),
                        ("pathologist", "agree on all patterns", ""),
                        ("environmental", "agree on moss", "")],
    },
}

DIAGNOSES = {
    "case01": """\
The specialists agree on the crust, the disintegration and the salts. The pathologist's delamination on
the pilaster is kept because the lifting clearly follows the bedding. The conservator's dark mark is
read as part of the same pollution pattern and not listed separately.

```diagnosis
description: Limestone ashlar facade with a moulded cornice, north-west facing onto an urban street; damp at the base.
confidence: high
finding: black crust | underside of the cornice and recessed mouldings | hard dark layer in rain-sheltered zones
finding: granular disintegration | plinth and lower three courses | grains detach on contact
finding: efflorescence | top of the damp band above the plinth | white salts at the evaporation front
finding: delamination | third block of the left pilaster | detachment along the bedding
resolved: delamination vs scaling on the pilaster settled as delamination because the layers follow the bedding
resolved: the unclassified dark mark is treated as part of the crust pattern
```
""",
    "case02": """\
Agreement on lichens and the crack. The colour change around the joints is recorded as discolouration,
following the pathologist and the environmental expert.

```diagnosis
description: Dry-laid granite boundary wall in an exposed rural setting.
confidence: medium
finding: lichen | coping stones and upper edges | circular crustose growths
finding: flaking | weathered faces of the upper blocks | thin flakes detaching
finding: crack | through the two central blocks | open fissure, earlier grout debonded
finding: discolouration | around and below the joints | reddish-brown colour change from run-off
resolved: staining and colour change merged as discolouration
resolved: cement repair excluded as an intervention not a pattern
```
""",
    "case03": """\
Full agreement on the cavities, the lost baluster, the mosses and the spalled handrail. The
spray-paint tags noted by the conservator are added as graffiti.

```diagnosis
description: Sandstone balustrade of a seaside terrace exposed to marine aerosol and wind.
confidence: high
finding: alveolization | seaward faces of the balusters | interconnected cavities from salt weathering
finding: missing part | upper half of the fourth baluster | portion of the element lost
finding: moss | open joints of the base | green cushions where water collects
finding: spalling | underside of the handrail | centimetric pieces detached
finding: graffiti | top of the handrail | spray-paint tags
resolved: graffiti added from the discussion although no specialist listed it
```
""",
}

BASELINES = {
    "case01": """\
A. A limestone facade with a cornice, in an urban setting.
B. Patterns below.

```findings
description: Limestone facade with a cornice in an urban setting.
finding: black crust | under the cornice | dark layer
finding: dark stain | right side of the facade | dark area
```
""",
    "case02": """\
A. A granite wall.
B. Patterns below.

```findings
description: Granite wall.
finding: biological colonization | top of the wall | growths on the coping
finding: crack | centre of the wall | visible fissure
```
""",
    "case03": """\
A. A sandstone balustrade by the sea.
B. Patterns below.

```findings
description: Sandstone balustrade by the sea.
finding: erosion | balusters | worn surfaces
finding: missing part | one baluster | broken
finding: patina | handrail | colour change
```
""",
}

MALFORMED_FIRST_TRY = ("case02", "lithologist")


def commentary_reply(case_id: str, agent_id: str) -> str:
    rows = ["```commentary"]
    for target, agree, disagree in COMMENTARIES[case_id][agent_id]:
        rows.append(f"on: {target}")
        if agree:
            rows.append(f"agree: {agree}")
        if disagree:
            rows.append(f"disagree: {disagree}")
    rows.append("```")
    return "Comments from my side follow.\n\n" + "\n".join(rows) + "\n"


def build_transcript() -> dict:
    table = {}
    for case in CASES:
        cid = case["case_id"]
        for agent in SPECIALISTS:
            p, c = USAGE["individual"]
            if (cid, agent) == MALFORMED_FIRST_TRY:
                table[(cid, agent, "individual", 0)] = ScriptedReply(
                    "Coarse-grained granite with open fissures and thin flakes; see notes above.", p, 1200
                )
                table[(cid, agent, "individual", 1)] = ScriptedReply(ANALYSES[(cid, agent)], p + 1300, c)
            else:
                table[(cid, agent, "individual", 0)] = ScriptedReply(ANALYSES[(cid, agent)], p, c)
        for agent in SPECIALISTS:
            p, c = USAGE["discussion"]
            table[(cid, agent, "discussion", 0)] = ScriptedReply(commentary_reply(cid, agent), p, c)
        p, c = USAGE["consensus"]
        table[(cid, "coordinator", "consensus", 0)] = ScriptedReply(DIAGNOSES[cid], p, c)
        p, c = USAGE["baseline"]
        table[(cid, "foundational", "baseline", 0)] = ScriptedReply(BASELINES[cid], p, c)
    return table


def build_store() -> VectorStore:
    backend = MockBackend()
    store = VectorStore(backend.dimension, backend.embedding_model_id)
    for doc in sorted((DATA / "kb").glob("*.md")):
        for chunk in chunk_document(doc.name, doc.read_text(encoding="utf-8"), 256, 32):
            store.upsert(EmbeddedChunk(chunk, embed_text(backend, chunk.text)))
    return store


CONFIG = {
    "backend": {
        "mode": "mock",
        "transcript": "transcript.jsonl",
        "model_id": "o4-mini",
        "effort": "high",
        "embedding_dimension": 64,
        "price_table": {"prompt_per_million": "1.10", "completion_per_million": "4.40"},
    },
    "taxonomy": "../taxonomy.jsonl",
    "roster": "../roster.json",
    "kb": "kb.store",
    "retrieval": {"enabled": True, "k": 4, "target_tokens": 256, "overlap_tokens": 32},
    "temperatures": {"specialist": 0.2, "coordinator": 0.0},
    "retry_limit": 1,
    "output_dir": "runs",
}


def build(dest: Path = FIXTURES) -> None:
    (dest / "images").mkdir(parents=True, exist_ok=True)
    corpus_lines = []
    for case in CASES:
        (dest / case["image"]).write_bytes(png(case["color"]))
        record = {k: case[k] for k in ("case_id", "image", "expected", "notes")}
        corpus_lines.append(json.dumps(record, ensure_ascii=False))
    (dest / "corpus.jsonl").write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")
    (dest / "transcript.jsonl").write_text(dump_transcript(build_transcript()), encoding="utf-8")
    save_store(build_store(), dest / "kb.store")
    (dest / "config.json").write_text(json.dumps(CONFIG, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="regenerate the bundled fixture corpus")
    parser.add_argument("--out", type=Path, default=FIXTURES)
    build(parser.parse_args().out)
