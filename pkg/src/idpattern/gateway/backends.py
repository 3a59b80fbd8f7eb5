"""Model backends: an OpenAI-compatible HTTP client and a scripted mock.

Mock transcript files are JSON Lines, one reply per line::

    {"case_id": "case01", "agent_id": "lithologist", "phase": "individual",
     "attempt": 0, "reply": "...", "prompt_tokens": 6000, "completion_tokens": 1500}

``attempt`` is optional (default 0); attempt 1 answers the repair retry.

Mock embeddings are a documented hash construction so retrieval runs offline:
the text is folded (see :func:`idpattern.taxonomy.fold`) and split into words;
each word seeds ``numpy.random.default_rng`` with the first 8 bytes
(big-endian) of ``blake2b(b"w:" + word)`` and contributes one standard-normal
vector; a final vector seeded from ``blake2b(b"t:" + text)`` and scaled by 0.25
keeps distinct texts apart even when their word multisets coincide. The sum is
L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx
import numpy as np

from ..errors import FixtureError, NetworkError, ProtocolError
from ..taxonomy import fold
from .ledger import UsageLedger
from .messages import ChatRequest, ChatResponse, FinishReason, Image, Text

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


class Backend(Protocol):
    deterministic: bool
    embedding_model_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...

    def embed(self, text: str) -> np.ndarray: ...


def complete(backend: Backend, request: ChatRequest, ledger: Optional[UsageLedger] = None) -> ChatResponse:
    """Run one chat completion and record its usage under the request tags."""
    response = backend.complete(request)
    if ledger is not None and request.tags is not None:
        t = request.tags
        ledger.record(t.case_id, t.agent_id, t.phase, response.prompt_tokens, response.completion_tokens)
    return response


def embed_text(backend: Backend, text: str) -> np.ndarray:
    """Embed ``text`` and L2-normalize the result whatever the backend returns."""
    if not text:
        raise ValueError("cannot embed empty text")
    vec = np.asarray(backend.embed(text), dtype=np.float64)
    norm = math.sqrt(math.fsum(vec * vec))
    if norm == 0.0:
        raise ValueError("backend returned a zero embedding")
    return vec / norm


# -- mock ------------------------------------------------------------------


def _seed(prefix: bytes, text: str) -> int:
    return int.from_bytes(hashlib.blake2b(prefix + text.encode("utf-8"), digest_size=8).digest(), "big")


def mock_embedding(text: str, dimension: int = 64) -> np.ndarray:
    vec = np.zeros(dimension)
    for word in fold(text).split():
        vec += np.random.default_rng(_seed(b"w:", word)).standard_normal(dimension)
    vec += 0.25 * np.random.default_rng(_seed(b"t:", text)).standard_normal(dimension)
    return vec / math.sqrt(math.fsum(vec * vec))


@dataclass(frozen=True)
class ScriptedReply:
    reply: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


TranscriptKey = tuple[str, str, str, int]


def parse_transcript(text: str) -> dict[TranscriptKey, ScriptedReply]:
    table: dict[TranscriptKey, ScriptedReply] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            key = (rec["case_id"], rec["agent_id"], rec["phase"], int(rec.get("attempt", 0)))
            reply = ScriptedReply(rec["reply"], int(rec.get("prompt_tokens", 0)), int(rec.get("completion_tokens", 0)))
        except (ValueError, KeyError, TypeError) as exc:
            raise FixtureError(f"transcript line {lineno}: {exc}") from None
        if key in table:
            raise FixtureError(f"transcript line {lineno}: duplicate key {key}")
        table[key] = reply
    return table


def load_transcript(path: str | Path) -> dict[TranscriptKey, ScriptedReply]:
    return parse_transcript(Path(path).read_text(encoding="utf-8"))


def dump_transcript(table: dict[TranscriptKey, ScriptedReply]) -> str:
    lines = []
    for (case_id, agent_id, phase, attempt), r in table.items():
        rec = {"case_id": case_id, "agent_id": agent_id, "phase": phase}
        if attempt:
            rec["attempt"] = attempt
        rec.update(reply=r.reply, prompt_tokens=r.prompt_tokens, completion_tokens=r.completion_tokens)
        lines.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(lines) + "\n"


class MockBackend:
    """Replays scripted replies keyed by (case_id, agent_id, phase, attempt)."""

    deterministic = True

    def __init__(self, transcript: dict[TranscriptKey, ScriptedReply] | None = None, dimension: int = 64):
        self.transcript = dict(transcript or {})
        self.dimension = dimension
        self.embedding_model_id = f"mock-hash-{dimension}"

    @classmethod
    def from_file(cls, path: str | Path, dimension: int = 64) -> "MockBackend":
        return cls(load_transcript(path), dimension)

    def complete(self, request: ChatRequest) -> ChatResponse:
        t = request.tags
        if t is None:
            raise FixtureError("mock backend needs tagged requests")
        key = (t.case_id, t.agent_id, t.phase, t.attempt)
        try:
            scripted = self.transcript[key]
        except KeyError:
            raise FixtureError(f"no scripted reply for {key}") from None
        return ChatResponse(scripted.reply, scripted.prompt_tokens, scripted.completion_tokens, FinishReason.STOP)

    def embed(self, text: str) -> np.ndarray:
        return mock_embedding(text, self.dimension)


# -- live ------------------------------------------------------------------


def _wire_message(message) -> dict:
    content = []
    for part in message.parts:
        if isinstance(part, Text):
            content.append({"type": "text", "text": part.text})
        elif isinstance(part, Image):
            content.append({"type": "image_url", "image_url": {"url": part.data_url}})
    return {"role": message.role.value, "content": content}


def chat_payload(request: ChatRequest) -> dict:
    payload: dict = {
        "model": request.model_id,
        "messages": [_wire_message(m) for m in request.messages],
        "temperature": request.temperature,
    }
    if request.effort is not None:
        payload["reasoning_effort"] = request.effort.value
    if request.max_output_tokens is not None:
        payload["max_completion_tokens"] = request.max_output_tokens
    return payload


_FINISH = {"stop": FinishReason.STOP, "length": FinishReason.LENGTH}


class OpenAICompatibleBackend:
    """Chat completions and embeddings over ``{endpoint}/v1/...``.

    The credential is read from the environment variable named by
    ``api_key_env`` at request time and never stored in config.
    """

    deterministic = False

    def __init__(
        self,
        endpoint: str = "https://api.openai.com",
        embedding_model_id: str = "text-embedding-3-small",
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout_s: float = 600.0,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.embedding_model_id = embedding_model_id
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._send_effort = True

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}{path}"
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(url, json=payload, headers=self._headers())
                break
            except httpx.TransportError as exc:
                if attempt == self.max_attempts:
                    raise NetworkError(f"{url}: {exc}") from exc
                delay = self.backoff_s * 2 ** (attempt - 1)
                logger.warning("transport error on %s (attempt %d), retrying in %.1fs", url, attempt, delay)
                self._sleep(delay)
        if response.status_code // 100 != 2:
            raise ProtocolError(response.status_code, response.text)
        try:
            return response.json()
        except ValueError:
            raise ProtocolError(response.status_code, "response body is not JSON: " + response.text) from None

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = chat_payload(request)
        if not self._send_effort:
            payload.pop("reasoning_effort", None)
        try:
            data = self._post("/v1/chat/completions", payload)
        except ProtocolError as exc:
            # effort has no portable wire name; drop it for endpoints that refuse it
            if exc.status != 400 or "reasoning_effort" not in payload or "reasoning_effort" not in exc.body:
                raise
            logger.warning("endpoint rejected reasoning_effort; sending requests without it")
            self._send_effort = False
            payload.pop("reasoning_effort")
            data = self._post("/v1/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"].get("content") or ""
            usage = data.get("usage") or {}
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(200, "unexpected response shape: " + json.dumps(data)[:200]) from None
        return ChatResponse(
            text,
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
            _FINISH.get(choice.get("finish_reason"), FinishReason.ERROR),
        )

    def embed(self, text: str) -> np.ndarray:
        data = self._post("/v1/embeddings", {"model": self.embedding_model_id, "input": text})
        try:
            return np.asarray(data["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(200, "unexpected embeddings response shape") from None

    def close(self) -> None:
        self._client.close()
