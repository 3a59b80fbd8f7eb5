from __future__ import annotations

import pytest

from idpattern.agents import NO_GROUNDING_MARKER, load_roster
from idpattern.cli import data_path
from idpattern.errors import ConfigurationError, MalformedOutputError, PhaseFailure, RunFailure
from idpattern.gateway import MockBackend, ScriptedReply, load_transcript
from idpattern.orchestrator import CaseInput, Orchestrator, RunConfig, run_baseline
from idpattern.rag import VectorStore, load_store
from idpattern.records import Confidence, Phase, decode_log, dumps, encode_log, read_json
from idpattern.taxonomy import Unknown, load_taxonomy


class RecordingBackend(MockBackend):
    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return super().complete(request)


@pytest.fixture(scope="module")
def roster():
    return load_roster(data_path("roster.json"))


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy(data_path("taxonomy.jsonl"))


@pytest.fixture
def backend(fixtures_dir):
    return RecordingBackend(load_transcript(fixtures_dir / "transcript.jsonl"))


def make(backend, roster, taxonomy, fixtures_dir, **kw):
    kw.setdefault("store", load_store(fixtures_dir / "kb.store"))
    return Orchestrator(backend, RunConfig(roster, taxonomy, k=4, **kw))


def case(fixtures_dir, case_id="case01"):
    return CaseInput(case_id, fixtures_dir / "images" / f"{case_id}.png")


def prompt_text(request):
    return request.messages[0].parts[0].text


def prompt_text_last(request):
    return request.messages[-1].parts[0].text


def test_individual_phase_roster_order(backend, roster, taxonomy, fixtures_dir):
    orch = make(backend, roster, taxonomy, fixtures_dir)
    analyses, entries = orch.run_individual_phase(case(fixtures_dir))
    ids = [a.id for a in roster.specialists]
    assert [a.agent_id for a in analyses] == ids
    assert [(e.seq, e.agent_id) for e in entries] == list(zip(range(1, 5), ids))
    for r in backend.requests:
        assert r.messages[0].parts[1].media_type == "image/png"
        assert r.temperature == 0.2


def test_retrieval_grounds_prompts(backend, roster, taxonomy, fixtures_dir):
    make(backend, roster, taxonomy, fixtures_dir).run_individual_phase(case(fixtures_dir))
    for r in backend.requests:
        text = prompt_text(r)
        assert NO_GROUNDING_MARKER not in text
        assert text.count("[source: ") == 4


def test_retrieval_disabled_marker(backend, roster, taxonomy, fixtures_dir):
    make(backend, roster, taxonomy, fixtures_dir, retrieval_enabled=False).run_individual_phase(case(fixtures_dir))
    assert all(NO_GROUNDING_MARKER in prompt_text(r) for r in backend.requests)


def test_store_from_other_embedding_model_rejected(backend, roster, taxonomy, fixtures_dir):
    with pytest.raises(ConfigurationError, match="embedded with"):
        make(backend, roster, taxonomy, fixtures_dir, store=VectorStore(64, "text-embedding-3-small"))


def test_repair_retry_recorded(backend, roster, taxonomy, fixtures_dir):
    _, entries = make(backend, roster, taxonomy, fixtures_dir).run_individual_phase(case(fixtures_dir, "case02"))
    lith = entries[0]
    assert lith.agent_id == "lithologist" and lith.attempts == 2
    assert lith.usage.prompt_tokens == 6000 + 7300
    retry = [r for r in backend.requests if r.tags.attempt == 1]
    assert len(retry) == 1 and len(retry[0].messages) == 3
    assert "could not be parsed" in prompt_text_last(retry[0])


def test_discussion_addresses_three_peers(backend, roster, taxonomy, fixtures_dir):
    orch = make(backend, roster, taxonomy, fixtures_dir)
    analyses, _ = orch.run_individual_phase(case(fixtures_dir))
    results, entries = orch.run_discussion_phase(case(fixtures_dir), analyses)
    assert len(entries) == 4
    for agent_results in results:
        assert len({c.target_agent_id for c in agent_results}) == 3


def test_discussion_follows_configured_order(backend, roster, taxonomy, fixtures_dir):
    order = ("pathologist", "lithologist", "conservator", "environmental")
    orch = make(backend, roster, taxonomy, fixtures_dir, phase2_order=order)
    analyses, _ = orch.run_individual_phase(case(fixtures_dir))
    _, entries = orch.run_discussion_phase(case(fixtures_dir), analyses)
    assert tuple(e.agent_id for e in entries) == order


def test_bad_phase2_order_rejected(roster, taxonomy):
    with pytest.raises(ConfigurationError):
        RunConfig(roster, taxonomy, phase2_order=("pathologist", "lithologist"))


def test_full_case(backend, roster, taxonomy, fixtures_dir, tmp_path):
    result = make(backend, roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir), tmp_path)
    log = result.log
    assert len(log.entries) == 9 and log.complete
    assert [e.phase for e in log.entries] == [Phase.INDIVIDUAL] * 4 + [Phase.DISCUSSION] * 4 + [Phase.CONSENSUS]
    d = result.diagnosis
    assert d.confidence is Confidence.HIGH
    assert [f.pattern for f in d.findings] == ["BLACK_CRUST", "GRANULAR_DISINTEGRATION", "EFFLORESCENCE",
                                                "DELAMINATION"]
    # provenance recomputed by scanning the phase-1 findings directly
    for i, f in enumerate(d.findings):
        reporters = {e.agent_id for e in log.phase_entries(Phase.INDIVIDUAL)
                     if f.pattern in [g.pattern for g in e.content.findings]}
        assert d.provenance[i] == reporters
    assert len(d.provenance[0]) == 3
    assert read_json(tmp_path / "diagnosis.json")["findings"][0]["supported_by"] == sorted(d.provenance[0])
    coordinator_request = backend.requests[-1]
    assert coordinator_request.temperature == 0.0
    assert len(coordinator_request.messages[0].parts) == 1  # the coordinator reads text only


def test_coordinator_added_finding(backend, roster, taxonomy, fixtures_dir):
    d = make(backend, roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir, "case03")).diagnosis
    assert [d.findings[i].pattern for i in d.coordinator_added] == ["GRAFFITI"]


def test_token_budget_per_case(backend, roster, taxonomy, fixtures_dir):
    log = make(backend, roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir)).log
    conversational = sum(e.usage.completion_tokens for e in log.entries if e.phase is not Phase.CONSENSUS)
    final = log.phase_entries(Phase.CONSENSUS)[0].usage.completion_tokens
    assert 9_000 <= conversational <= 11_000
    assert final < 1_000


def test_two_runs_identical(fixtures_dir, roster, taxonomy):
    def run():
        b = MockBackend(load_transcript(fixtures_dir / "transcript.jsonl"))
        return dumps(encode_log(make(b, roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir)).log))

    first = run()
    assert first == run()
    assert "1970-01-01T00:00:00Z" in first


def test_log_json_round_trip(backend, roster, taxonomy, fixtures_dir):
    log = make(backend, roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir, "case02")).log
    assert decode_log(encode_log(log)) == log


def test_phase2_failure_persists_partial_log(fixtures_dir, roster, taxonomy, tmp_path):
    table = load_transcript(fixtures_dir / "transcript.jsonl")
    del table[("case01", "environmental", "discussion", 0)]
    orch = make(MockBackend(table), roster, taxonomy, fixtures_dir)
    with pytest.raises(RunFailure) as info:
        orch.run_case(case(fixtures_dir), tmp_path)
    assert isinstance(info.value.cause, PhaseFailure)
    saved = read_json(tmp_path / "log.json")
    assert saved["complete"] is False
    assert [e["phase"] for e in saved["entries"]] == ["Individual"] * 4 + ["Discussion"] * 2
    assert not (tmp_path / "diagnosis.json").exists()


def test_missing_confidence_fails_after_retry(fixtures_dir, roster, taxonomy):
    table = load_transcript(fixtures_dir / "transcript.jsonl")
    bad = "```diagnosis\ndescription: wall\nfinding: crack | base\n```\n"
    table[("case01", "coordinator", "consensus", 0)] = ScriptedReply(bad)
    table[("case01", "coordinator", "consensus", 1)] = ScriptedReply(bad)
    with pytest.raises(RunFailure) as info:
        make(MockBackend(table), roster, taxonomy, fixtures_dir).run_case(case(fixtures_dir))
    assert isinstance(info.value.cause.cause, MalformedOutputError)
    assert len(info.value.log.entries) == 8


def test_baseline_arm(backend, taxonomy, fixtures_dir):
    prediction = run_baseline(backend, case(fixtures_dir), taxonomy)
    assert [f.pattern for f in prediction.findings] == ["BLACK_CRUST", Unknown("dark stain")]
    (request,) = backend.requests
    assert request.tags.agent_id == "foundational" and request.tags.phase == "baseline"
    assert "[source:" not in prompt_text(request)
