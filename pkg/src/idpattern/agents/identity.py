"""Agent identity cards, the base protocol, and roster files.

A roster file is a JSON document::

    {
      "protocol": {"stages": [{"name": ..., "instruction": ..., "required_outputs": [...]}, ...]},
      "agents": [{"id": ..., "role_name": ..., "competence_areas": [...],
                  "personality_traits": [...], "specialization_directive": ...,
                  "is_coordinator": false}, ...]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigurationError

DEFAULT_STAGE_ORDER = (
    "ContextualAnalysis",
    "SystematicObservation",
    "CompatibilityAssessment",
    "DiagnosticSynthesis",
)


@dataclass(frozen=True)
class AgentIdentity:
    id: str
    role_name: str
    competence_areas: tuple[str, ...] = ()
    personality_traits: tuple[str, ...] = ()
    specialization_directive: str = ""
    is_coordinator: bool = False


@dataclass(frozen=True)
class ProtocolStage:
    name: str
    instruction: str
    required_outputs: tuple[str, ...]

    def __post_init__(self):
        if not self.required_outputs:
            raise ConfigurationError(f"protocol stage {self.name} declares no required outputs")


@dataclass(frozen=True)
class BaseProtocol:
    stages: tuple[ProtocolStage, ...]

    def __post_init__(self):
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate protocol stage names: {names}")
        if not names:
            raise ConfigurationError("protocol has no stages")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.stages)


@dataclass(frozen=True)
class Roster:
    agents: tuple[AgentIdentity, ...]
    protocol: BaseProtocol

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate agent ids in roster: {ids}")
        coordinators = [a.id for a in self.agents if a.is_coordinator]
        if len(coordinators) != 1:
            raise ConfigurationError(f"roster needs exactly one coordinator, found {coordinators}")
        if not self.specialists:
            raise ConfigurationError("roster needs at least one specialist")

    @property
    def coordinator(self) -> AgentIdentity:
        return next(a for a in self.agents if a.is_coordinator)

    @property
    def specialists(self) -> tuple[AgentIdentity, ...]:
        return tuple(a for a in self.agents if not a.is_coordinator)

    def get(self, agent_id: str) -> AgentIdentity:
        for agent in self.agents:
            if agent.id == agent_id:
                return agent
        raise KeyError(agent_id)


def _strings(value, what: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigurationError(f"{what} must be a list of strings")
    return tuple(value)


def roster_from_dict(data: dict) -> Roster:
    try:
        stages = tuple(
            ProtocolStage(s["name"], s["instruction"], _strings(s["required_outputs"], f"stage {s['name']}"))
            for s in data["protocol"]["stages"]
        )
        agents = tuple(
            AgentIdentity(
                id=a["id"],
                role_name=a["role_name"],
                competence_areas=_strings(a.get("competence_areas", []), f"{a['id']}.competence_areas"),
                personality_traits=_strings(a.get("personality_traits", []), f"{a['id']}.personality_traits"),
                specialization_directive=a.get("specialization_directive", ""),
                is_coordinator=bool(a.get("is_coordinator", False)),
            )
            for a in data["agents"]
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed roster: missing {exc}") from None
    return Roster(agents, BaseProtocol(stages))


def roster_to_dict(roster: Roster) -> dict:
    return {
        "protocol": {
            "stages": [
                {"name": s.name, "instruction": s.instruction, "required_outputs": list(s.required_outputs)}
                for s in roster.protocol.stages
            ]
        },
        "agents": [
            {
                "id": a.id,
                "role_name": a.role_name,
                "competence_areas": list(a.competence_areas),
                "personality_traits": list(a.personality_traits),
                "specialization_directive": a.specialization_directive,
                "is_coordinator": a.is_coordinator,
            }
            for a in roster.agents
        ],
    }


def load_roster(path: str | Path) -> Roster:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno}") from None
    return roster_from_dict(data)
