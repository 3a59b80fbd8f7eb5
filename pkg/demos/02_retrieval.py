"""Grounding each specialist with its own top-k knowledge-base passages.

The bundled store holds the sample documents chunked and embedded with the
offline hash embedding. Each agent queries with its role and competences
plus the case prompt, so the specialists get different passages.

    python demos/02_retrieval.py
"""

from __future__ import annotations

from idpattern.agents import DEFAULT_TEST_PROMPT, load_roster
from idpattern.cli import data_path
from idpattern.gateway import MockBackend, embed_text
from idpattern.rag import build_query_text, load_store

store = load_store(data_path("fixtures") / "kb.store")
roster = load_roster(data_path("roster.json"))
backend = MockBackend()
print(f"store: {len(store)} chunks, {store.dimension}-d, model {store.embedding_model_id}\n")

for agent in roster.specialists:
    query = embed_text(backend, build_query_text(agent, DEFAULT_TEST_PROMPT))
    hits = store.query(query, k=3)
    print(f"{agent.role_name}:")
    for entry, score in hits:
        print(f"  {score:+.4f}  {entry.chunk_id}")
