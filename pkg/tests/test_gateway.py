from __future__ import annotations

import json
from decimal import Decimal

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idpattern.errors import FixtureError, NetworkError, ProtocolError
from idpattern.gateway import (
    ChatRequest,
    Effort,
    FinishReason,
    Image,
    Message,
    MockBackend,
    OpenAICompatibleBackend,
    PriceTable,
    RequestTags,
    Role,
    ScriptedReply,
    UsageLedger,
    complete,
    dump_transcript,
    format_cost,
    ledger_totals,
    load_transcript,
    mock_embedding,
    parse_transcript,
)

PNG = Image("image/png", "iVBORw0KGgo=")


def request(case="case1", agent="lithologist", phase="individual", attempt=0, image=None):
    return ChatRequest("o4-mini", (Message.text(Role.USER, "hello", image),), 0.2, Effort.HIGH,
                       tags=RequestTags(case, agent, phase, attempt))


# -- mock ------------------------------------------------------------------


def test_mock_replays_byte_exact():
    reply = "line one\n```analysis\nfinding: crack | base\n```\n"
    backend = MockBackend({("case1", "lithologist", "individual", 0): ScriptedReply(reply, 10, 5)})
    response = backend.complete(request())
    assert response.text == reply
    assert (response.prompt_tokens, response.completion_tokens) == (10, 5)
    assert response.finish_reason is FinishReason.STOP


def test_mock_missing_key():
    with pytest.raises(FixtureError):
        MockBackend().complete(request())


def test_transcript_round_trip(fixtures_dir):
    table = load_transcript(fixtures_dir / "transcript.jsonl")
    assert parse_transcript(dump_transcript(table)) == table
    assert ("case02", "lithologist", "individual", 1) in table


def test_transcript_duplicate_key():
    line = json.dumps({"case_id": "c", "agent_id": "a", "phase": "individual", "reply": "x"})
    with pytest.raises(FixtureError, match="duplicate"):
        parse_transcript(line + "\n" + line + "\n")


def test_mock_embedding_deterministic_and_unit():
    a, b = mock_embedding("black crust under the cornice"), mock_embedding("black crust under the cornice")
    assert a.tobytes() == b.tobytes()
    assert abs(float(np.dot(a, a)) - 1.0) < 1e-12


@given(st.text(min_size=1, max_size=30), st.text(min_size=1, max_size=30))
def test_distinct_texts_not_parallel(x, y):
    if x != y:
        assert float(np.dot(mock_embedding(x), mock_embedding(y))) < 1.0 - 1e-9


# -- ledger ----------------------------------------------------------------


def test_empty_ledger():
    totals = ledger_totals(UsageLedger(PriceTable(Decimal("1.10"), Decimal("4.40"))))
    assert (totals.prompt_tokens, totals.completion_tokens, totals.cost) == (0, 0, 0)


def test_unit_rate():
    ledger = UsageLedger(PriceTable(Decimal("1.00"), Decimal("0")))
    ledger.record("c", "a", "individual", 1_000_000, 0)
    assert format_cost(ledger_totals(ledger).cost) == "$1.00"


def test_cost_is_exact_decimal():
    ledger = UsageLedger(PriceTable(Decimal("1.10"), Decimal("4.40")))
    for _ in range(3):
        ledger.record("c", "a", "discussion", 1, 1)
    assert ledger_totals(ledger).cost == Decimal("0.0000165")


def test_complete_records_by_tags():
    backend = MockBackend({("c", "a", "baseline", 0): ScriptedReply("x", 7, 3)})
    ledger = UsageLedger()
    complete(backend, request("c", "a", "baseline"), ledger)
    assert [(e.case_id, e.agent_id, e.phase, e.prompt_tokens) for e in ledger.entries] == [("c", "a", "baseline", 7)]


def test_full_test_run_cost_order_of_magnitude():
    # ~$0.30 per image for 27 images; with the default o4-mini prices a case of
    # 80k prompt and 48k completion tokens (reasoning included) costs $0.2992.
    ledger = UsageLedger(PriceTable(Decimal("1.10"), Decimal("4.40")))
    for i in range(27):
        ledger.record(f"case{i:02d}", "all", "individual", 80_000, 48_000)
    total = ledger_totals(ledger).cost
    assert Decimal(6) <= total <= Decimal(9)
    assert format_cost(total) == "$8.08"


# -- live client over a mock transport ------------------------------------


def make_live(handler, sleeps=None, **kw):
    sleeps = sleeps if sleeps is not None else []
    return OpenAICompatibleBackend("https://llm.example", transport=httpx.MockTransport(handler),
                                   sleep=sleeps.append, **kw)


def chat_ok(text="ok", finish="stop"):
    return httpx.Response(200, json={
        "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 34},
    })


def test_wire_format(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-test")
    seen = {}

    def handler(req: httpx.Request):
        seen["url"] = str(req.url)
        seen["auth"] = req.headers.get("authorization")
        seen["body"] = json.loads(req.content)
        return chat_ok("fine")

    response = make_live(handler, api_key_env="TEST_KEY").complete(request(image=PNG))
    body = seen["body"]
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert body["model"] == "o4-mini" and body["reasoning_effort"] == "high"
    content = body["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": "hello"}
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
    assert "tags" not in json.dumps(body) and "lithologist" not in json.dumps(body)
    assert (response.text, response.prompt_tokens, response.completion_tokens) == ("fine", 12, 34)
    assert response.finish_reason is FinishReason.STOP


def test_no_credential_no_header(monkeypatch):
    monkeypatch.delenv("ABSENT_KEY", raising=False)
    seen = {}

    def handler(req):
        seen["auth"] = req.headers.get("authorization")
        return chat_ok()

    make_live(handler, api_key_env="ABSENT_KEY").complete(request())
    assert seen["auth"] is None


def test_unknown_finish_reason_maps_to_error():
    assert make_live(lambda r: chat_ok(finish="content_filter")).complete(request()).finish_reason is FinishReason.ERROR


def test_transport_errors_retried_with_backoff():
    calls = []

    def handler(req):
        calls.append(1)
        if len(calls) < 3:
            raise httpx.ConnectError("refused")
        return chat_ok()

    sleeps = []
    make_live(handler, sleeps, backoff_s=0.5).complete(request())
    assert len(calls) == 3 and sleeps == [0.5, 1.0]


def test_transport_errors_exhausted():
    def handler(req):
        raise httpx.ReadTimeout("slow")

    with pytest.raises(NetworkError):
        make_live(handler).complete(request())


def test_http_error_status_not_retried():
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(429, text="rate limited")

    with pytest.raises(ProtocolError) as info:
        make_live(handler).complete(request())
    assert info.value.status == 429 and len(calls) == 1


def test_embeddings_endpoint():
    seen = {}

    def handler(req):
        seen["url"] = str(req.url)
        seen["body"] = json.loads(req.content)
        return httpx.Response(200, json={"data": [{"embedding": [0.5, 0.5, 0.5, 0.5]}]})

    vec = make_live(handler, embedding_model_id="emb-1").embed("text")
    assert seen["url"].endswith("/v1/embeddings") and seen["body"] == {"model": "emb-1", "input": "text"}
    assert vec.tolist() == [0.5] * 4


def test_request_allows_one_image():
    with pytest.raises(ValueError):
        ChatRequest("m", (Message.text(Role.USER, "a", PNG), Message.text(Role.USER, "b", PNG)), 0.0)


def test_rejected_effort_dropped_once():
    bodies = []

    def handler(req):
        body = json.loads(req.content)
        bodies.append(body)
        if "reasoning_effort" in body:
            return httpx.Response(400, json={"error": {"message": "Unrecognized request argument: reasoning_effort"}})
        return chat_ok()

    backend = make_live(handler)
    backend.complete(request())
    backend.complete(request())
    assert ["reasoning_effort" in b for b in bodies] == [True, False, False]


def test_other_bad_request_still_raises():
    with pytest.raises(ProtocolError):
        make_live(lambda r: httpx.Response(400, text="bad image")).complete(request())
