"""Request/response models of the tracking service API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class PositionOut(BaseModel):
    x: float
    y: float
    residual: float
    t: int
    degenerate: bool = False


class PipeOut(BaseModel):
    pipe_id: str
    material: str = ""
    diameter_mm: float = 0.0
    description: str = ""
    status: str = "unknown"
    registered: bool = True
    current_zone: str = "outside"
    position: Optional[PositionOut] = None


class PipeIn(BaseModel):
    pipe_id: str = Field(min_length=1)
    material: str = ""
    diameter_mm: float = 0.0
    description: str = ""
    status: str = "unknown"


class ZoneOut(BaseModel):
    id: str
    name: str
    polygon: list[tuple[float, float]]
    occupancy: int


class ZonesResponse(BaseModel):
    width: float
    height: float
    zones: list[ZoneOut]
    outside: int
    untracked: int


class EventOut(BaseModel):
    event_id: int
    pipe_id: str
    kind: str
    from_zone: Optional[str] = None
    to_zone: Optional[str] = None
    t: int
    payload: dict = Field(default_factory=dict)


class DwellRow(BaseModel):
    zone: str
    total_ms: int
    visits: int


class HealthResponse(BaseModel):
    status: str
    samples_seen: int
    samples_per_s: float
    tracked_pipes: int
    registered_pipes: int
    events: int
    late_dropped: int
    stream_clients: int
    uptime_s: float
