"""One full three-phase run on a fixture case with the scripted backend.

Phase 1 runs the four specialists concurrently, phase 2 has them comment on
each other in turn, phase 3 lets the coordinator settle the diagnosis. The
scripted transcript makes the run offline and byte-reproducible; swap in
OpenAICompatibleBackend for real model calls.

    python demos/03_mock_diagnosis.py [out_dir]
"""

from __future__ import annotations

import sys
from decimal import Decimal

from idpattern.agents import load_roster
from idpattern.cli import data_path
from idpattern.gateway import MockBackend, PriceTable, UsageLedger, format_cost, ledger_totals
from idpattern.orchestrator import CaseInput, Orchestrator, RunConfig
from idpattern.rag import load_store
from idpattern.taxonomy import load_taxonomy

fixtures = data_path("fixtures")
backend = MockBackend.from_file(fixtures / "transcript.jsonl")
config = RunConfig(
    roster=load_roster(data_path("roster.json")),
    taxonomy=load_taxonomy(data_path("taxonomy.jsonl")),
    store=load_store(fixtures / "kb.store"),
    k=4,
)
ledger = UsageLedger(PriceTable(Decimal("1.10"), Decimal("4.40")))
case = CaseInput("case02", fixtures / "images" / "case02.png")
out_dir = sys.argv[1] if len(sys.argv) > 1 else None
result = Orchestrator(backend, config, ledger).run_case(case, out_dir)

for entry in result.log.entries:
    retry = f" ({entry.attempts} attempts)" if entry.attempts > 1 else ""
    print(f"#{entry.seq} {entry.phase.value:10} {entry.agent_id:13} {entry.usage.completion_tokens:5} tokens out{retry}")

d = result.diagnosis
print(f"\n{d.description}\nconfidence: {d.confidence.value}")
for i, f in enumerate(d.findings):
    print(f"  {f.pattern:16} {f.location}  <- {', '.join(sorted(d.provenance[i])) or 'coordinator'}")
for note in d.divergences_resolved:
    print(f"  resolved: {note}")
totals = ledger_totals(ledger)
print(f"\n{totals.total_tokens} tokens, {format_cost(totals.cost)}")
