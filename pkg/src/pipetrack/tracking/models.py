"""Domain records of the tracking service: pipes, notification rules, events."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from pipetrack.locate import OUTSIDE, Position

RULE_KINDS = ("zone_transition", "dwell_threshold", "occupancy_threshold")
EVENT_KINDS = RULE_KINDS


class RecordValidationError(ValueError):
    """A record failed validation; .fields names the offending fields."""

    def __init__(self, fields: list[str]):
        super().__init__("invalid fields: " + ", ".join(fields))
        self.fields = fields


@dataclass
class PipeRecord:
    """Tracked asset metadata plus its live tracking summary."""

    pipe_id: str
    material: str = ""
    diameter_mm: float = 0.0
    description: str = ""
    status: str = "unknown"
    registered: bool = True
    current_zone: str = OUTSIDE
    last_position: Optional[Position] = None

    def validate(self) -> list[str]:
        bad = []
        if not self.pipe_id or not isinstance(self.pipe_id, str):
            bad.append("pipe_id")
        if self.diameter_mm < 0:
            bad.append("diameter_mm")
        if not isinstance(self.material, str):
            bad.append("material")
        if not isinstance(self.status, str):
            bad.append("status")
        return bad


@dataclass(frozen=True)
class Rule:
    """One business-intelligence rule.

    kind zone_transition: params may name from_zone / to_zone to narrow the
    transitions it reports (absent means any).
    kind dwell_threshold: params zone and duration_ms.
    kind occupancy_threshold: params zone and count (rising edge).
    """

    rule_id: str
    kind: str
    params: dict
    enabled: bool = True

    def validate(self) -> list[str]:
        bad = []
        if self.kind not in RULE_KINDS:
            bad.append("kind")
        elif self.kind == "dwell_threshold":
            if "zone" not in self.params or "duration_ms" not in self.params:
                bad.append("params")
        elif self.kind == "occupancy_threshold":
            if "zone" not in self.params or "count" not in self.params:
                bad.append("params")
        return bad


@dataclass(frozen=True)
class Event:
    """An emitted notification."""

    event_id: int
    pipe_id: str
    kind: str
    from_zone: Optional[str]
    to_zone: Optional[str]
    t: int
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "pipe_id": self.pipe_id,
            "kind": self.kind,
            "from_zone": self.from_zone,
            "to_zone": self.to_zone,
            "t": self.t,
            "payload": self.payload,
        }
