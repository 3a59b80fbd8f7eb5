"""Scoring the agentic run against the single-shot baseline.

Runs both arms over the fixture corpus with the scripted backend, matches
each prediction list against the expert ground truth and prints the
comparison table plus per-image recall.

    python demos/04_comparative_eval.py
"""

from __future__ import annotations

from idpattern.agents import load_roster
from idpattern.cli import data_path
from idpattern.evaluation import aggregate, emit_report, load_corpus, match_findings, per_image_summary
from idpattern.gateway import MockBackend
from idpattern.orchestrator import CaseInput, Orchestrator, RunConfig, run_baseline
from idpattern.rag import load_store
from idpattern.taxonomy import load_taxonomy

fixtures = data_path("fixtures")
taxonomy = load_taxonomy(data_path("taxonomy.jsonl"))
backend = MockBackend.from_file(fixtures / "transcript.jsonl")
orchestrator = Orchestrator(
    backend, RunConfig(load_roster(data_path("roster.json")), taxonomy, load_store(fixtures / "kb.store"), k=4)
)

agentic, baseline = [], []
for truth in load_corpus(fixtures / "corpus.jsonl"):
    case = CaseInput(truth.case_id, fixtures / truth.image)
    diagnosis = orchestrator.run_case(case).diagnosis
    agentic.append(match_findings(diagnosis.findings, truth, taxonomy))
    baseline.append(match_findings(run_baseline(backend, case, taxonomy).findings, truth, taxonomy))

systems = [("Foundational", aggregate(baseline)), ("Agentic", aggregate(agentic))]
print(emit_report(systems, [("Foundational", per_image_summary(baseline)), ("Agentic", per_image_summary(agentic))]))
for name, m in systems:
    print(f"{name}: {m.ambiguous} ambiguous calls left out of the metrics")
