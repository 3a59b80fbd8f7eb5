"""Agent identity cards, protocol-driven prompts and reply parsing."""

from .identity import (
    DEFAULT_STAGE_ORDER,
    AgentIdentity,
    BaseProtocol,
    ProtocolStage,
    Roster,
    load_roster,
    roster_from_dict,
    roster_to_dict,
)
from .prompts import (
    DEFAULT_TEST_PROMPT,
    NO_GROUNDING_MARKER,
    render_baseline_prompt,
    render_consensus_prompt,
    render_discussion_prompt,
    render_individual_prompt,
)
from .replies import (
    parse_commentary,
    parse_diagnosis_block,
    parse_findings_block,
    parse_structured_analysis,
    render_analysis_reply,
    render_commentary_reply,
    render_diagnosis_reply,
    render_findings_reply,
)

__all__ = [
    "DEFAULT_STAGE_ORDER",
    "DEFAULT_TEST_PROMPT",
    "NO_GROUNDING_MARKER",
    "AgentIdentity",
    "BaseProtocol",
    "ProtocolStage",
    "Roster",
    "load_roster",
    "parse_commentary",
    "parse_diagnosis_block",
    "parse_findings_block",
    "parse_structured_analysis",
    "render_analysis_reply",
    "render_baseline_prompt",
    "render_commentary_reply",
    "render_consensus_prompt",
    "render_diagnosis_reply",
    "render_discussion_prompt",
    "render_findings_reply",
    "render_individual_prompt",
    "roster_from_dict",
    "roster_to_dict",
]
