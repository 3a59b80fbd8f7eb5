from __future__ import annotations

import base64
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

SUPPORTED_MEDIA_TYPES = ("image/jpeg", "image/png")
_SUFFIX_MEDIA = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


def media_type_for(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in _SUFFIX_MEDIA:
        raise ValueError(f"unsupported image type {suffix!r} for {path}")
    return _SUFFIX_MEDIA[suffix]


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class Image:
    media_type: str
    data: str  # base64 payload

    def __post_init__(self):
        if self.media_type not in SUPPORTED_MEDIA_TYPES:
            raise ValueError(f"unsupported media type {self.media_type!r}")

    @classmethod
    def from_file(cls, path: str | Path, media_type: str | None = None) -> "Image":
        payload = Path(path).read_bytes()
        return cls(media_type or media_type_for(path), base64.b64encode(payload).decode("ascii"))

    @property
    def data_url(self) -> str:
        return f"data:{self.media_type};base64,{self.data}"


Part = Union[Text, Image]


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    parts: tuple[Part, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("message has no parts")

    @classmethod
    def text(cls, role: Role, text: str, image: Optional[Image] = None) -> "Message":
        parts: tuple[Part, ...] = (Text(text),) + ((image,) if image is not None else ())
        return cls(role, parts)


class Effort(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True)
class RequestTags:
    """Bookkeeping key for a request; never sent over the wire."""

    case_id: str
    agent_id: str
    phase: str
    attempt: int = 0


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    effort: Optional[Effort] = None
    max_output_tokens: Optional[int] = None
    tags: Optional[RequestTags] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request has no messages")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        images = sum(isinstance(p, Image) for m in self.messages for p in m.parts)
        if images > 1:
            raise ValueError("at most one image per request")


class FinishReason(str, enum.Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    finish_reason: FinishReason = FinishReason.STOP

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
