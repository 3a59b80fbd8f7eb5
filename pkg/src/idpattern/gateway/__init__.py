"""Model gateway: chat and embedding backends plus usage accounting."""

from .backends import (
    Backend,
    MockBackend,
    OpenAICompatibleBackend,
    ScriptedReply,
    chat_payload,
    complete,
    dump_transcript,
    embed_text,
    load_transcript,
    mock_embedding,
    parse_transcript,
)
from .ledger import LedgerTotals, PriceTable, UsageEntry, UsageLedger, format_cost, ledger_totals
from .messages import (
    ChatRequest,
    ChatResponse,
    Effort,
    FinishReason,
    Image,
    Message,
    RequestTags,
    Role,
    Text,
    media_type_for,
)

__all__ = [
    "Backend", "ChatRequest", "ChatResponse", "Effort", "FinishReason", "Image", "LedgerTotals",
    "Message", "MockBackend", "OpenAICompatibleBackend", "PriceTable", "RequestTags", "Role",
    "ScriptedReply", "Text", "UsageEntry", "UsageLedger", "chat_payload", "complete",
    "dump_transcript", "embed_text", "format_cost", "ledger_totals", "load_transcript",
    "media_type_for", "mock_embedding", "parse_transcript",
]
