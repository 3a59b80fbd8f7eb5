"""Immutable records exchanged between agents, the orchestrator and scoring.

Also holds the JSON encoding used for log, diagnosis and prediction files.
Field order in every encoder is fixed so that files are byte-reproducible.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .taxonomy import PatternRef, Unknown

ZERO_TIMESTAMP = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class Finding:
    pattern: PatternRef
    location: str
    rationale: str = ""

    def __post_init__(self):
        if not self.location.strip():
            raise ValueError("a finding needs a location")


@dataclass(frozen=True)
class Zone:
    label: str
    phenomena: tuple[str, ...] = ()


@dataclass(frozen=True)
class AnalysisContext:
    element_type: str = ""
    exposure: tuple[PatternRef, ...] = ()
    lithology: Optional[PatternRef] = None


@dataclass(frozen=True)
class StructuredAnalysis:
    agent_id: str
    context: AnalysisContext
    zones: tuple[Zone, ...] = ()
    findings: tuple[Finding, ...] = ()
    synthesis: str = ""


@dataclass(frozen=True)
class Commentary:
    agent_id: str
    target_agent_id: str
    concordances: tuple[str, ...] = ()
    discordances: tuple[str, ...] = ()

    def __post_init__(self):
        if self.agent_id == self.target_agent_id:
            raise ValueError(f"agent {self.agent_id} cannot comment on itself")


class Confidence(str, enum.Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @classmethod
    def parse(cls, text: str) -> "Confidence":
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"confidence must be high, medium or low, got {text!r}")


@dataclass(frozen=True)
class FinalDiagnosis:
    case_id: str
    description: str
    findings: tuple[Finding, ...]
    confidence: Confidence
    provenance: dict[int, frozenset[str]] = field(default_factory=dict)
    divergences_resolved: tuple[str, ...] = ()

    @property
    def coordinator_added(self) -> tuple[int, ...]:
        """Indices of findings no specialist reported in the individual phase."""
        return tuple(i for i in range(len(self.findings)) if not self.provenance.get(i))


class Phase(str, enum.Enum):
    INDIVIDUAL = "Individual"
    DISCUSSION = "Discussion"
    CONSENSUS = "Consensus"

    @property
    def rank(self) -> int:
        return list(Phase).index(self)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.prompt_tokens + other.prompt_tokens, self.completion_tokens + other.completion_tokens)


LogContent = Union[StructuredAnalysis, tuple, FinalDiagnosis, str]


@dataclass(frozen=True)
class LogEntry:
    seq: int
    phase: Phase
    agent_id: str
    raw: str
    content: LogContent
    usage: Usage = Usage()
    attempts: int = 1
    timestamp: str = ZERO_TIMESTAMP


@dataclass
class DiscussionLog:
    case_id: str
    case_prompt: str = ""
    entries: list[LogEntry] = field(default_factory=list)
    complete: bool = False

    def append(self, phase: Phase, agent_id: str, raw: str, content: LogContent, usage: Usage,
               attempts: int = 1, timestamp: str = ZERO_TIMESTAMP) -> LogEntry:
        if self.entries:
            last = self.entries[-1]
            if phase.rank < last.phase.rank:
                raise ValueError(f"{phase.value} entry cannot follow {last.phase.value}")
        entry = LogEntry(len(self.entries) + 1, phase, agent_id, raw, content, usage, attempts, timestamp)
        self.entries.append(entry)
        return entry

    def phase_entries(self, phase: Phase) -> list[LogEntry]:
        return [e for e in self.entries if e.phase is phase]

    @property
    def usage(self) -> Usage:
        total = Usage()
        for entry in self.entries:
            total = total + entry.usage
        return total


# -- JSON encoding ---------------------------------------------------------


def encode_ref(ref: Optional[PatternRef]) -> Any:
    if ref is None or isinstance(ref, str):
        return ref
    return {"unknown": ref.raw}


def decode_ref(value: Any) -> Optional[PatternRef]:
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, dict) and isinstance(value.get("unknown"), str):
        return Unknown(value["unknown"])
    raise ValueError(f"cannot decode pattern reference {value!r}")


def encode_finding(finding: Finding) -> dict:
    return {"pattern": encode_ref(finding.pattern), "location": finding.location, "rationale": finding.rationale}


def decode_finding(data: dict) -> Finding:
    return Finding(decode_ref(data["pattern"]), data["location"], data.get("rationale", ""))


def encode_analysis(a: StructuredAnalysis) -> dict:
    return {
        "agent_id": a.agent_id,
        "context": {
            "element_type": a.context.element_type,
            "exposure": [encode_ref(x) for x in a.context.exposure],
            "lithology": encode_ref(a.context.lithology),
        },
        "zones": [{"label": z.label, "phenomena": list(z.phenomena)} for z in a.zones],
        "findings": [encode_finding(f) for f in a.findings],
        "synthesis": a.synthesis,
    }


def decode_analysis(data: dict) -> StructuredAnalysis:
    ctx = data["context"]
    return StructuredAnalysis(
        agent_id=data["agent_id"],
        context=AnalysisContext(
            ctx["element_type"], tuple(decode_ref(x) for x in ctx["exposure"]), decode_ref(ctx["lithology"])
        ),
        zones=tuple(Zone(z["label"], tuple(z["phenomena"])) for z in data["zones"]),
        findings=tuple(decode_finding(f) for f in data["findings"]),
        synthesis=data["synthesis"],
    )


def encode_commentary(c: Commentary) -> dict:
    return {
        "agent_id": c.agent_id,
        "target_agent_id": c.target_agent_id,
        "concordances": list(c.concordances),
        "discordances": list(c.discordances),
    }


def decode_commentary(data: dict) -> Commentary:
    return Commentary(
        data["agent_id"], data["target_agent_id"], tuple(data["concordances"]), tuple(data["discordances"])
    )


def encode_diagnosis(d: FinalDiagnosis, system: str = "Id-Pattern") -> dict:
    findings = []
    for i, f in enumerate(d.findings):
        item = encode_finding(f)
        item["supported_by"] = sorted(d.provenance.get(i, ()))
        findings.append(item)
    return {
        "case_id": d.case_id,
        "system": system,
        "description": d.description,
        "confidence": d.confidence.value,
        "findings": findings,
        "coordinator_added": list(d.coordinator_added),
        "divergences_resolved": list(d.divergences_resolved),
    }


def decode_diagnosis(data: dict) -> FinalDiagnosis:
    findings = tuple(decode_finding(f) for f in data["findings"])
    provenance = {i: frozenset(f.get("supported_by", ())) for i, f in enumerate(data["findings"])}
    return FinalDiagnosis(
        case_id=data["case_id"],
        description=data["description"],
        findings=findings,
        confidence=Confidence.parse(data["confidence"]),
        provenance=provenance,
        divergences_resolved=tuple(data.get("divergences_resolved", ())),
    )


def _encode_content(entry: LogEntry) -> Any:
    c = entry.content
    if isinstance(c, StructuredAnalysis):
        return {"type": "analysis", "analysis": encode_analysis(c)}
    if isinstance(c, FinalDiagnosis):
        return {"type": "diagnosis", "diagnosis": encode_diagnosis(c)}
    if isinstance(c, tuple):
        return {"type": "commentary", "commentary": [encode_commentary(x) for x in c]}
    return {"type": "text", "text": c}


def _decode_content(data: dict) -> LogContent:
    kind = data["type"]
    if kind == "analysis":
        return decode_analysis(data["analysis"])
    if kind == "diagnosis":
        return decode_diagnosis(data["diagnosis"])
    if kind == "commentary":
        return tuple(decode_commentary(x) for x in data["commentary"])
    return data["text"]


def encode_log(log: DiscussionLog) -> dict:
    return {
        "case_id": log.case_id,
        "complete": log.complete,
        "case_prompt": log.case_prompt,
        "entries": [
            {
                "seq": e.seq,
                "phase": e.phase.value,
                "agent_id": e.agent_id,
                "timestamp": e.timestamp,
                "attempts": e.attempts,
                "usage": {"prompt_tokens": e.usage.prompt_tokens, "completion_tokens": e.usage.completion_tokens},
                "content": _encode_content(e),
                "raw": e.raw,
            }
            for e in log.entries
        ],
    }


def decode_log(data: dict) -> DiscussionLog:
    log = DiscussionLog(data["case_id"], data.get("case_prompt", ""))
    for e in data["entries"]:
        log.append(
            Phase(e["phase"]),
            e["agent_id"],
            e["raw"],
            _decode_content(e["content"]),
            Usage(e["usage"]["prompt_tokens"], e["usage"]["completion_tokens"]),
            e.get("attempts", 1),
            e.get("timestamp", ZERO_TIMESTAMP),
        )
    log.complete = bool(data["complete"])
    return log


def dumps(document: dict) -> str:
    return json.dumps(document, ensure_ascii=False, indent=2) + "\n"


def write_json(path: str | Path, document: dict) -> None:
    Path(path).write_text(dumps(document), encoding="utf-8")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
