"""Three-phase diagnostic workflow over one image case.

1. Individual: every specialist analyses the image concurrently under the
   base protocol, grounded by its own top-k retrieval.
2. Discussion: specialists, one after another, comment on their colleagues'
   individual analyses.
3. Consensus: the coordinator reads the whole log and writes the final
   diagnosis with a confidence level.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agents import (
    DEFAULT_TEST_PROMPT,
    AgentIdentity,
    Roster,
    parse_commentary,
    parse_diagnosis_block,
    parse_findings_block,
    parse_structured_analysis,
    render_baseline_prompt,
    render_consensus_prompt,
    render_discussion_prompt,
    render_individual_prompt,
)
from .errors import ConfigurationError, MalformedOutputError, PhaseFailure, RunFailure
from .gateway import (
    Backend,
    ChatRequest,
    Effort,
    FinishReason,
    Image,
    Message,
    RequestTags,
    Role,
    UsageLedger,
    complete,
    embed_text,
    media_type_for,
)
from .rag import DEFAULT_TOP_K, VectorStore, build_query_text
from .records import (
    ZERO_TIMESTAMP,
    Commentary,
    DiscussionLog,
    FinalDiagnosis,
    Finding,
    LogEntry,
    Phase,
    StructuredAnalysis,
    Usage,
    encode_diagnosis,
    encode_finding,
    encode_log,
    write_json,
)
from .taxonomy import PatternTaxonomy

logger = logging.getLogger(__name__)

BASELINE_AGENT_ID = "foundational"


@dataclass(frozen=True)
class CaseInput:
    case_id: str
    image_path: Path
    media_type: str = ""
    case_prompt: str = DEFAULT_TEST_PROMPT

    def __post_init__(self):
        object.__setattr__(self, "image_path", Path(self.image_path))
        if not self.media_type:
            object.__setattr__(self, "media_type", media_type_for(self.image_path))

    def load_image(self) -> Image:
        return Image.from_file(self.image_path, self.media_type)


@dataclass(frozen=True)
class RunConfig:
    roster: Roster
    taxonomy: PatternTaxonomy
    store: Optional[VectorStore] = None
    retrieval_enabled: bool = True
    k: int = DEFAULT_TOP_K
    model_id: str = "o4-mini"
    effort: Optional[Effort] = Effort.HIGH
    specialist_temperature: float = 0.2
    coordinator_temperature: float = 0.0
    retry_limit: int = 1
    phase2_order: Optional[tuple[str, ...]] = None
    max_output_tokens: Optional[int] = None

    def __post_init__(self):
        specialists = [a.id for a in self.roster.specialists]
        if self.phase2_order is not None:
            object.__setattr__(self, "phase2_order", tuple(self.phase2_order))
            if sorted(self.phase2_order) != sorted(specialists):
                raise ConfigurationError(
                    f"phase-2 order {list(self.phase2_order)} is not a permutation of {specialists}"
                )
        if self.k < 1:
            raise ConfigurationError("retrieval k must be at least 1")
        if self.retry_limit < 0:
            raise ConfigurationError("retry limit must be >= 0")

    @property
    def discussion_order(self) -> tuple[str, ...]:
        return self.phase2_order or tuple(a.id for a in self.roster.specialists)


@dataclass
class CaseResult:
    diagnosis: FinalDiagnosis
    log: DiscussionLog
    ledger: UsageLedger


@dataclass(frozen=True)
class _Reply:
    raw: str
    parsed: object
    usage: Usage
    attempts: int
    timestamp: str


@dataclass
class Prediction:
    """Single-shot output of the foundational-model comparison arm."""

    case_id: str
    description: str
    findings: tuple[Finding, ...]
    raw: str = field(default="", repr=False)
    usage: Usage = Usage()


def compute_provenance(findings: Sequence[Finding], analyses: Sequence[StructuredAnalysis]) -> dict[int, frozenset[str]]:
    """Map each final finding to the specialists that reported the same canonical id."""
    provenance = {}
    for i, finding in enumerate(findings):
        if isinstance(finding.pattern, str):
            provenance[i] = frozenset(
                a.agent_id for a in analyses if any(f.pattern == finding.pattern for f in a.findings)
            )
        else:
            provenance[i] = frozenset()
    return provenance


class Orchestrator:
    def __init__(self, backend: Backend, config: RunConfig, ledger: Optional[UsageLedger] = None,
                 clock: Optional[Callable[[], str]] = None):
        self.backend = backend
        self.config = config
        self.ledger = ledger if ledger is not None else UsageLedger()
        store = config.store
        if store is not None and config.retrieval_enabled and store.embedding_model_id != backend.embedding_model_id:
            raise ConfigurationError(
                f"store was embedded with {store.embedding_model_id!r}, backend embeds with "
                f"{backend.embedding_model_id!r}"
            )
        if clock is None:
            clock = (lambda: ZERO_TIMESTAMP) if backend.deterministic else _utc_now
        self._clock = clock

    # -- plumbing ----------------------------------------------------------

    def _ask(self, case: CaseInput, identity: AgentIdentity, phase: Phase, prompt: str, parse,
             temperature: float, image: Optional[Image] = None) -> _Reply:
        messages = [Message.text(Role.USER, prompt, image)]
        usage = Usage()
        for attempt in range(self.config.retry_limit + 1):
            request = ChatRequest(
                model_id=self.config.model_id,
                messages=tuple(messages),
                temperature=temperature,
                effort=self.config.effort,
                max_output_tokens=self.config.max_output_tokens,
                tags=RequestTags(case.case_id, identity.id, phase.value.lower(), attempt),
            )
            response = complete(self.backend, request, self.ledger)
            usage = usage + Usage(response.prompt_tokens, response.completion_tokens)
            try:
                if response.finish_reason is FinishReason.ERROR:
                    raise MalformedOutputError("backend reported finish_reason=error")
                parsed = parse(response.text)
            except MalformedOutputError as exc:
                if attempt == self.config.retry_limit:
                    raise
                logger.info("%s/%s %s reply malformed (%s); asking for a repair", case.case_id, identity.id,
                            phase.value, exc)
                messages += [
                    Message.text(Role.ASSISTANT, response.text),
                    Message.text(
                        Role.USER,
                        f"Your previous reply could not be parsed: {exc}. Reply again and end it with "
                        "the required fenced block exactly as specified.",
                    ),
                ]
                continue
            return _Reply(response.text, parsed, usage, attempt + 1, self._clock())
        raise AssertionError("unreachable")

    def _retrieve(self, identity: AgentIdentity, case_prompt: str):
        store = self.config.store
        if not self.config.retrieval_enabled or store is None or not len(store):
            return []
        query = embed_text(self.backend, build_query_text(identity, case_prompt))
        return [entry.chunk for entry, _ in store.query(query, self.config.k)]

    # -- phases ------------------------------------------------------------

    def run_individual_phase(self, case: CaseInput, log: Optional[DiscussionLog] = None):
        """Return ``(analyses, entries)`` in roster order."""
        log = log if log is not None else DiscussionLog(case.case_id, case.case_prompt)
        cfg = self.config
        image = case.load_image()
        specialists = cfg.roster.specialists

        def analyse(identity: AgentIdentity) -> _Reply:
            prompt = render_individual_prompt(
                identity, cfg.roster.protocol, self._retrieve(identity, case.case_prompt), case.case_prompt
            )
            return self._ask(
                case, identity, Phase.INDIVIDUAL, prompt,
                lambda raw: parse_structured_analysis(raw, cfg.taxonomy, identity.id),
                cfg.specialist_temperature, image,
            )

        with ThreadPoolExecutor(max_workers=len(specialists)) as pool:
            futures = [pool.submit(analyse, identity) for identity in specialists]
        analyses, entries = [], []
        for identity, future in zip(specialists, futures):
            exc = future.exception()
            if exc is not None:
                raise PhaseFailure(Phase.INDIVIDUAL.value, identity.id, exc) from exc
            reply = future.result()
            analyses.append(reply.parsed)
            entries.append(
                log.append(Phase.INDIVIDUAL, identity.id, reply.raw, reply.parsed, reply.usage, reply.attempts,
                           reply.timestamp)
            )
        return analyses, entries

    def run_discussion_phase(self, case: CaseInput, analyses: Sequence[StructuredAnalysis],
                             log: Optional[DiscussionLog] = None):
        """Return ``(commentaries per agent, entries)`` in execution order."""
        log = log if log is not None else DiscussionLog(case.case_id, case.case_prompt)
        cfg = self.config
        specialists = cfg.roster.specialists
        results: list[tuple[Commentary, ...]] = []
        entries: list[LogEntry] = []
        for agent_id in cfg.discussion_order:
            identity = cfg.roster.get(agent_id)
            try:
                prompt = render_discussion_prompt(identity, analyses, cfg.roster, cfg.taxonomy)
                reply = self._ask(
                    case, identity, Phase.DISCUSSION, prompt,
                    lambda raw: parse_commentary(raw, identity.id, specialists),
                    cfg.specialist_temperature,
                )
            except Exception as exc:
                raise PhaseFailure(Phase.DISCUSSION.value, agent_id, exc) from exc
            results.append(reply.parsed)
            entries.append(
                log.append(Phase.DISCUSSION, agent_id, reply.raw, reply.parsed, reply.usage, reply.attempts,
                           reply.timestamp)
            )
        return results, entries

    def run_consensus_phase(self, case: CaseInput, log: DiscussionLog) -> FinalDiagnosis:
        cfg = self.config
        coordinator = cfg.roster.coordinator
        prompt = render_consensus_prompt(coordinator, log)
        try:
            reply = self._ask(
                case, coordinator, Phase.CONSENSUS, prompt,
                lambda raw: parse_diagnosis_block(raw, cfg.taxonomy),
                cfg.coordinator_temperature,
            )
        except Exception as exc:
            raise PhaseFailure(Phase.CONSENSUS.value, coordinator.id, exc) from exc
        block = reply.parsed
        analyses = [e.content for e in log.phase_entries(Phase.INDIVIDUAL)]
        diagnosis = FinalDiagnosis(
            case_id=case.case_id,
            description=block.description,
            findings=block.findings,
            confidence=block.confidence,
            provenance=compute_provenance(block.findings, analyses),
            divergences_resolved=block.resolved,
        )
        log.append(Phase.CONSENSUS, coordinator.id, reply.raw, diagnosis, reply.usage, reply.attempts,
                   reply.timestamp)
        return diagnosis

    def run_case(self, case: CaseInput, out_dir: str | Path | None = None) -> CaseResult:
        """Run all three phases; the log is written to ``out_dir`` before returning or raising."""
        log = DiscussionLog(case.case_id, case.case_prompt)
        try:
            analyses, _ = self.run_individual_phase(case, log)
            self.run_discussion_phase(case, analyses, log)
            diagnosis = self.run_consensus_phase(case, log)
        except Exception as exc:
            log.complete = False
            if out_dir is not None:
                write_case_outputs(out_dir, log)
            raise RunFailure(case.case_id, exc, log) from exc
        log.complete = True
        if out_dir is not None:
            write_case_outputs(out_dir, log, diagnosis)
        return CaseResult(diagnosis, log, self.ledger.for_case(case.case_id))


def write_case_outputs(out_dir: str | Path, log: DiscussionLog, diagnosis: FinalDiagnosis | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "log.json", encode_log(log))
    if diagnosis is not None:
        write_json(out / "diagnosis.json", encode_diagnosis(diagnosis))


def run_baseline(backend: Backend, case: CaseInput, taxonomy: PatternTaxonomy, model_id: str = "o4-mini",
                 effort: Optional[Effort] = Effort.HIGH, temperature: float = 0.0, retry_limit: int = 1,
                 ledger: Optional[UsageLedger] = None) -> Prediction:
    """Single request with the test prompt and the image: no agents, no retrieval."""
    messages = [Message.text(Role.USER, render_baseline_prompt(case.case_prompt), case.load_image())]
    usage = Usage()
    for attempt in range(retry_limit + 1):
        request = ChatRequest(model_id, tuple(messages), temperature, effort,
                              tags=RequestTags(case.case_id, BASELINE_AGENT_ID, "baseline", attempt))
        response = complete(backend, request, ledger)
        usage = usage + Usage(response.prompt_tokens, response.completion_tokens)
        try:
            block = parse_findings_block(response.text, taxonomy)
        except MalformedOutputError as exc:
            if attempt == retry_limit:
                raise
            messages += [
                Message.text(Role.ASSISTANT, response.text),
                Message.text(Role.USER, f"Your previous reply could not be parsed: {exc}. Reply again and end "
                                        "it with the required fenced block exactly as specified."),
            ]
            continue
        return Prediction(case.case_id, block.description, block.findings, response.text, usage)
    raise AssertionError("unreachable")


def encode_prediction(prediction: Prediction, system: str = "Foundational") -> dict:
    return {
        "case_id": prediction.case_id,
        "system": system,
        "description": prediction.description,
        "findings": [encode_finding(f) for f in prediction.findings],
    }


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
