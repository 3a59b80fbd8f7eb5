"""Prompt assembly for the three workflow phases and the single-shot baseline.

Prompts are plain text split into sections by ``=== NAME ===`` delimiter
lines. Rendering is a pure function of its inputs, so identical inputs give
byte-identical prompts.
"""

from __future__ import annotations

from typing import Sequence

from ..errors import MisuseError, PhaseOrderError
from ..records import DiscussionLog, Phase, StructuredAnalysis
from ..taxonomy import PatternTaxonomy
from .identity import AgentIdentity, BaseProtocol, Roster
from .replies import render_analysis_reply

# Test prompt shared by the agentic system and the single-model baseline.
DEFAULT_TEST_PROMPT = (
    "I would like you to analyze this image. I would like the output to be very concise "
    "and include the following points:\n"
    "\n"
    "A. A brief description of the element and its context and, if feasible, the "
    "identification of the most likely lithological type.\n"
    "B. Identification, in bullet form, of the deterioration patterns you can identify.\n"
    "\n"
    "For better identification, indicate in each bullet where the respective pattern is "
    "present. At this stage, it is not necessary to present a discussion of the results or "
    "comments on the genesis of the patterns."
)

IDENTITY = "=== IDENTITY CARD ==="
PROTOCOL = "=== BASE PROTOCOL ==="
GROUNDING = "=== GROUNDING DOCUMENTS ==="
CASE = "=== CASE ==="
OUTPUT = "=== OUTPUT FORMAT ==="
PEERS = "=== COLLEAGUES' ANALYSES ==="
TASK = "=== TASK ==="
LOG = "=== DISCUSSION LOG ==="

NO_GROUNDING_MARKER = "[no grounding documents]"

_ANALYSIS_CONTRACT = """\
Write your reasoning as prose first. Then end the reply with exactly one fenced
block tagged `analysis`, one field per line:

```analysis
element_type: <kind of architectural element>
exposure: <exposure factors, comma separated>
lithology: <most likely stone type>
zone: <zone label> | <phenomenon>; <phenomenon>
finding: <deterioration pattern> | <where it is present> | <one-line justification>
```

Repeat `zone:` and `finding:` lines as needed. Use glossary terms for patterns.
Escape a literal `|`, `;`, `,` or `\\` inside a value with a backslash."""

_FINDINGS_CONTRACT = """\
End the reply with exactly one fenced block tagged `findings`:

```findings
description: <brief description of the element, its context and likely stone type>
finding: <deterioration pattern> | <where it is present> | <one-line justification>
```

Repeat the `finding:` line once per pattern."""

_DIAGNOSIS_CONTRACT = """\
End the reply with exactly one fenced block tagged `diagnosis`:

```diagnosis
description: <brief description of the element, its context and likely stone type>
confidence: <high | medium | low>
finding: <deterioration pattern> | <where it is present> | <one-line justification>
resolved: <a divergence between specialists and how you settled it>
```

Repeat `finding:` once per pattern in the integrated diagnosis and `resolved:`
once per divergence you settled."""


def _bullets(items: Sequence[str]) -> list[str]:
    return [f"- {x}" for x in items] if items else ["- (none stated)"]


def render_identity_card(identity: AgentIdentity) -> str:
    lines = [
        IDENTITY,
        f"Role: {identity.role_name} (agent id: {identity.id})",
        "Areas of competence:",
        *_bullets(identity.competence_areas),
        "Personality traits:",
        *_bullets(identity.personality_traits),
        f"Directive: {identity.specialization_directive}",
        "Reason strictly within your own field. Leave matters outside it to your colleagues.",
    ]
    return "\n".join(lines)


def render_protocol(protocol: BaseProtocol) -> str:
    lines = [PROTOCOL, "Work through the following stages in order. Do not skip ahead."]
    for i, stage in enumerate(protocol.stages, start=1):
        lines.append(f"--- Stage {i}: {stage.name} ---")
        lines.append(stage.instruction)
        lines.append("Record: " + ", ".join(stage.required_outputs))
    return "\n".join(lines)


def render_grounding(retrieved) -> str:
    lines = [GROUNDING]
    if not retrieved:
        lines.append(NO_GROUNDING_MARKER)
        return "\n".join(lines)
    lines.append("Use the definitions and criteria below when naming patterns.")
    for chunk in retrieved:
        lines.append(f"[source: {chunk.chunk_id}]")
        lines.extend("> " + line for line in chunk.text.splitlines())
    return "\n".join(lines)


def render_individual_prompt(identity: AgentIdentity, protocol: BaseProtocol, retrieved,
                             case_prompt: str) -> str:
    """Phase-1 prompt: identity, protocol stages, grounding, case, output contract."""
    if identity.is_coordinator:
        raise MisuseError(f"coordinator {identity.id!r} does not take part in the individual phase")
    sections = [
        render_identity_card(identity),
        render_protocol(protocol),
        render_grounding(retrieved),
        f"{CASE}\n{case_prompt}",
        f"{OUTPUT}\n{_ANALYSIS_CONTRACT}",
    ]
    return "\n\n".join(sections) + "\n"


def render_discussion_prompt(identity: AgentIdentity, analyses: Sequence[StructuredAnalysis],
                             roster: Roster, taxonomy: PatternTaxonomy) -> str:
    """Phase-2 prompt presenting every colleague's analysis except the reader's own."""
    if identity.is_coordinator:
        raise MisuseError("the coordinator does not comment in the discussion phase")
    expected = {a.id for a in roster.specialists}
    got = [a.agent_id for a in analyses]
    if set(got) != expected or len(got) != len(expected):
        raise MisuseError(f"discussion needs one analysis per specialist {sorted(expected)}, got {got}")
    peers = [a for a in analyses if a.agent_id != identity.id]
    if not peers:
        raise MisuseError("discussion phase needs at least two specialists")

    lines = [render_identity_card(identity), "", PEERS]
    for analysis in peers:
        peer = roster.get(analysis.agent_id)
        lines.append(f"--- {peer.role_name} ({peer.id}) ---")
        lines.append(render_analysis_reply(analysis, taxonomy).rstrip("\n"))
    lines += [
        "",
        TASK,
        f"Comment on each colleague's analysis from your unique perspective as {identity.role_name}. "
        "For every colleague, list where you agree (concordances) and where you disagree "
        "(discordances), and say why from your own field. Do not rewrite their analyses.",
        "",
        OUTPUT,
        "End the reply with exactly one fenced block tagged `commentary`. "
        "Address each colleague by agent id:",
        "",
        "```commentary",
    ]
    for analysis in peers:
        lines += [f"on: {analysis.agent_id}", "agree: <point of agreement>", "disagree: <point of disagreement>"]
    lines.append("```")
    return "\n".join(lines) + "\n"


def render_consensus_prompt(coordinator: AgentIdentity, log: DiscussionLog) -> str:
    """Phase-3 prompt: the full discussion log, verbatim and in order."""
    if not coordinator.is_coordinator:
        raise MisuseError(f"{coordinator.id!r} is not the coordinator")
    individual = log.phase_entries(Phase.INDIVIDUAL)
    discussion = log.phase_entries(Phase.DISCUSSION)
    if not individual or len(discussion) != len(individual) or log.phase_entries(Phase.CONSENSUS):
        raise PhaseOrderError(
            f"consensus needs completed individual and discussion phases "
            f"(have {len(individual)} analyses, {len(discussion)} commentaries)"
        )
    lines = [render_identity_card(coordinator), "", LOG]
    for entry in log.entries:
        lines.append(f"--- #{entry.seq} {entry.phase.value} | {entry.agent_id} ---")
        lines.append(entry.raw.rstrip("\n"))
    lines += [
        "",
        TASK,
        "Synthesize the specialists' analyses and comments into one integrated diagnosis. "
        "Where they diverge, settle each divergence by explicit logical reasoning and state how. "
        "Rate your confidence as high, medium or low according to how consistent the evidence is.",
        "",
        CASE,
        log.case_prompt,
        "",
        OUTPUT,
        _DIAGNOSIS_CONTRACT,
    ]
    return "\n".join(lines) + "\n"


def render_baseline_prompt(case_prompt: str) -> str:
    """Single-shot prompt for the foundational-model comparison arm."""
    return f"{case_prompt}\n\n{OUTPUT}\n{_FINDINGS_CONTRACT}\n"
