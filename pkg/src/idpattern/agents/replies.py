"""Parsing and rendering of the fenced output blocks agents end their replies with.

Every reply may contain free prose, followed by exactly one fenced block whose
info string names its kind::

    ```analysis
    element_type: vertical facade wall
    exposure: RAIN, POLLUTION
    lithology: Limestone
    zone: upper cornice | blackening; dripping deposits
    finding: black crust | underside of the cornice | sheltered from rain wash
    ```

Values escape ``\\``, ``|``, ``;``, ``,`` and newlines with a backslash so
that rendering and parsing are exact inverses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional

from ..errors import MalformedOutputError
from ..records import (
    AnalysisContext,
    Commentary,
    Confidence,
    Finding,
    StructuredAnalysis,
    Zone,
)
from ..taxonomy import PatternRef, PatternTaxonomy, Unknown, normalize_label
from .identity import AgentIdentity

_FENCE_OPEN = re.compile(r"^\s*```\s*([A-Za-z_]+)\s*$")
_FENCE_CLOSE = re.compile(r"^\s*```\s*$")
_KEY_LINE = re.compile(r"^\s*(?:[-*]\s+)?([A-Za-z_]+)\s*:(.*)$")
_SPECIALS = "\\|;,"


def escape(text: str) -> str:
    out = []
    for ch in text:
        if ch in _SPECIALS:
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        else:
            out.append(ch)
    return "".join(out)


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append("\n" if nxt == "n" else nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def split_field(value: str, sep: str, unescape: bool = True) -> list[str]:
    """Split on unescaped ``sep``; pieces are stripped then (optionally) unescaped."""
    pieces, current, i = [], [], 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            current.append(value[i : i + 2])
            i += 2
            continue
        if ch == sep:
            pieces.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    pieces.append("".join(current))
    pieces = [p.strip() for p in pieces]
    return [_unescape(p) for p in pieces] if unescape else pieces


@dataclass(frozen=True)
class Block:
    kind: str
    lines: tuple[tuple[str, str], ...]
    prose: str


def extract_block(raw: str, kind: str) -> Block:
    """Locate the last ```kind fenced block and return its key/value lines."""
    lines = raw.splitlines()
    start = None
    for i, line in enumerate(lines):
        m = _FENCE_OPEN.match(line)
        if m and m.group(1).lower() == kind:
            start = i
    if start is None:
        raise MalformedOutputError(f"reply has no ```{kind} output block")
    end = None
    for j in range(start + 1, len(lines)):
        if _FENCE_CLOSE.match(lines[j]):
            end = j
            break
    if end is None:
        raise MalformedOutputError(f"```{kind} output block is not closed")

    pairs = []
    for lineno, line in enumerate(lines[start + 1 : end], start=start + 2):
        if not line.strip():
            continue
        m = _KEY_LINE.match(line)
        if not m:
            raise MalformedOutputError(f"line {lineno}: expected 'key: value', got {line.strip()!r}")
        pairs.append((m.group(1).lower(), m.group(2).strip()))

    before = "\n".join(lines[:start]).strip()
    after = "\n".join(lines[end + 1 :]).strip()
    prose = "\n\n".join(p for p in (before, after) if p)
    return Block(kind, tuple(pairs), prose)


def fence(kind: str, rows: Iterable[str]) -> str:
    return "\n".join([f"```{kind}", *rows, "```"])


# -- findings --------------------------------------------------------------


def _parse_finding(value: str, taxonomy: PatternTaxonomy) -> Finding:
    parts = split_field(value, "|")
    if len(parts) == 2:
        parts.append("")
    if len(parts) != 3:
        raise MalformedOutputError(f"finding needs 'pattern | location | rationale', got {value!r}")
    pattern, location, rationale = parts
    if not pattern:
        raise MalformedOutputError(f"finding without a pattern term: {value!r}")
    if not location:
        raise MalformedOutputError(f"finding {pattern!r} has no location")
    return Finding(normalize_label(pattern, taxonomy), location, rationale)


def _pattern_text(ref: PatternRef, taxonomy: PatternTaxonomy) -> str:
    if isinstance(ref, Unknown):
        return ref.raw
    return taxonomy.label(ref).display_name


def render_finding(finding: Finding, taxonomy: PatternTaxonomy) -> str:
    return "finding: " + " | ".join(
        escape(x) for x in (_pattern_text(finding.pattern, taxonomy), finding.location, finding.rationale)
    )


# -- individual analyses ---------------------------------------------------


def parse_structured_analysis(raw: str, taxonomy: PatternTaxonomy, agent_id: str) -> StructuredAnalysis:
    block = extract_block(raw, "analysis")
    element_type = ""
    exposure: list[PatternRef] = []
    lithology: Optional[PatternRef] = None
    zones: list[Zone] = []
    findings: list[Finding] = []
    for key, value in block.lines:
        if key == "element_type":
            element_type = _unescape(value)
        elif key == "exposure":
            exposure = [taxonomy.normalize_exposure(x) for x in split_field(value, ",") if x]
        elif key == "lithology":
            text = _unescape(value)
            lithology = taxonomy.normalize_lithology(text) if text else None
        elif key == "zone":
            parts = split_field(value, "|", unescape=False)
            if len(parts) > 2 or not parts[0]:
                raise MalformedOutputError(f"zone needs 'label | phenomenon; ...', got {value!r}")
            phenomena = split_field(parts[1], ";") if len(parts) == 2 else []
            zones.append(Zone(_unescape(parts[0]), tuple(p for p in phenomena if p)))
        elif key == "finding":
            findings.append(_parse_finding(value, taxonomy))
        else:
            raise MalformedOutputError(f"unexpected field {key!r} in analysis block")
    return StructuredAnalysis(
        agent_id=agent_id,
        context=AnalysisContext(element_type, tuple(exposure), lithology),
        zones=tuple(zones),
        findings=tuple(findings),
        synthesis=block.prose,
    )


def _context_text(ref: Optional[PatternRef]) -> str:
    if ref is None:
        return ""
    return ref.raw if isinstance(ref, Unknown) else ref


def render_analysis_block(analysis: StructuredAnalysis, taxonomy: PatternTaxonomy) -> str:
    ctx = analysis.context
    rows = [
        "element_type: " + escape(ctx.element_type),
        "exposure: " + ", ".join(escape(_context_text(x)) for x in ctx.exposure),
        "lithology: " + escape(_context_text(ctx.lithology)),
    ]
    for zone in analysis.zones:
        rows.append(f"zone: {escape(zone.label)} | " + "; ".join(escape(p) for p in zone.phenomena))
    rows.extend(render_finding(f, taxonomy) for f in analysis.findings)
    return fence("analysis", (r.rstrip() for r in rows))


def render_analysis_reply(analysis: StructuredAnalysis, taxonomy: PatternTaxonomy) -> str:
    """Machine-generated reply that parses back to ``analysis``."""
    block = render_analysis_block(analysis, taxonomy)
    return f"{analysis.synthesis}\n\n{block}\n" if analysis.synthesis else block + "\n"


# -- commentaries ----------------------------------------------------------


def parse_commentary(raw: str, agent_id: str, roster: Iterable[AgentIdentity]) -> tuple[Commentary, ...]:
    known = {a.id for a in roster}
    block = extract_block(raw, "commentary")
    records: list[dict] = []
    for key, value in block.lines:
        if key == "on":
            target = _unescape(value)
            if target not in known:
                raise MalformedOutputError(f"commentary addresses unknown agent {target!r}")
            if target == agent_id:
                raise MalformedOutputError(f"agent {agent_id!r} commented on its own analysis")
            if any(r["target"] == target for r in records):
                raise MalformedOutputError(f"agent {target!r} addressed twice")
            records.append({"target": target, "agree": [], "disagree": []})
        elif key in ("agree", "disagree"):
            if not records:
                raise MalformedOutputError(f"{key!r} line before any 'on:' line")
            records[-1][key].append(_unescape(value))
        else:
            raise MalformedOutputError(f"unexpected field {key!r} in commentary block")
    if not records:
        raise MalformedOutputError("commentary block addresses no colleague")
    return tuple(Commentary(agent_id, r["target"], tuple(r["agree"]), tuple(r["disagree"])) for r in records)


def render_commentary_reply(commentaries: Iterable[Commentary], prose: str = "") -> str:
    rows = []
    for c in commentaries:
        rows.append("on: " + escape(c.target_agent_id))
        rows.extend("agree: " + escape(x) for x in c.concordances)
        rows.extend("disagree: " + escape(x) for x in c.discordances)
    block = fence("commentary", rows)
    return f"{prose}\n\n{block}\n" if prose else block + "\n"


# -- coordinator diagnosis and single-shot predictions ---------------------


@dataclass(frozen=True)
class DiagnosisBlock:
    description: str
    confidence: Optional[Confidence]
    findings: tuple[Finding, ...]
    resolved: tuple[str, ...]
    prose: str


def _parse_report_block(raw: str, kind: str, taxonomy: PatternTaxonomy) -> DiagnosisBlock:
    block = extract_block(raw, kind)
    description = ""
    confidence = None
    findings: list[Finding] = []
    resolved: list[str] = []
    for key, value in block.lines:
        if key == "description":
            description = _unescape(value)
        elif key == "confidence" and kind == "diagnosis":
            try:
                confidence = Confidence.parse(_unescape(value))
            except ValueError as exc:
                raise MalformedOutputError(str(exc)) from None
        elif key == "finding":
            findings.append(_parse_finding(value, taxonomy))
        elif key == "resolved" and kind == "diagnosis":
            resolved.append(_unescape(value))
        else:
            raise MalformedOutputError(f"unexpected field {key!r} in {kind} block")
    return DiagnosisBlock(description, confidence, tuple(findings), tuple(resolved), block.prose)


def parse_diagnosis_block(raw: str, taxonomy: PatternTaxonomy) -> DiagnosisBlock:
    parsed = _parse_report_block(raw, "diagnosis", taxonomy)
    if parsed.confidence is None:
        raise MalformedOutputError("diagnosis block has no confidence field")
    return parsed


def parse_findings_block(raw: str, taxonomy: PatternTaxonomy) -> DiagnosisBlock:
    return _parse_report_block(raw, "findings", taxonomy)


def render_diagnosis_reply(
    description: str,
    confidence: Confidence,
    findings: Iterable[Finding],
    taxonomy: PatternTaxonomy,
    resolved: Iterable[str] = (),
    prose: str = "",
) -> str:
    rows = ["description: " + escape(description), "confidence: " + confidence.value.lower()]
    rows.extend(render_finding(f, taxonomy) for f in findings)
    rows.extend("resolved: " + escape(r) for r in resolved)
    block = fence("diagnosis", rows)
    return f"{prose}\n\n{block}\n" if prose else block + "\n"


def render_findings_reply(description: str, findings: Iterable[Finding], taxonomy: PatternTaxonomy,
                          prose: str = "") -> str:
    rows = ["description: " + escape(description)]
    rows.extend(render_finding(f, taxonomy) for f in findings)
    block = fence("findings", rows)
    return f"{prose}\n\n{block}\n" if prose else block + "\n"
