"""Service configuration file handling.

JSON document, all paths relative to the config file:
{
  "floor_map": "floormap.json",
  "model": {"rss_d0": -54.5, "n": 1.8638, "sigma": 0.6, "d0": 1.0} | "model.json",
  "technique": "sc",
  "epoch_ms": 500,
  "hysteresis_m": 1.0,
  "port": 8000,
  "tcp_port": 9100,
  "pipe_store": "pipes.json",          // optional SAP/MES stand-in
  "rules": [{"rule_id": ..., "kind": ..., "params": {...}}],
  "filter": {"process_noise": 0.3, "measurement_noise": 1.0} | null,
  "db": "tracking.db" | ":memory:",
  "replay": {"log": "samples.jsonl", "speed": 1.0}   // optional feed
}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from pipetrack.channel import PathLossModel, load_model
from pipetrack.diversity import TECHNIQUES
from pipetrack.filters import KalmanParams
from pipetrack.locate import FloorMap, load_floor_map
from pipetrack.tracking.models import PipeRecord, Rule


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    floor_map: FloorMap
    model: PathLossModel
    technique: str = "sc"
    epoch_ms: int = 500
    hysteresis_m: float = 1.0
    port: int = 8000
    tcp_port: int = 9100
    db_path: str = ":memory:"
    filter_params: Optional[KalmanParams] = None
    rules: list[Rule] = field(default_factory=list)
    pipe_records: list[PipeRecord] = field(default_factory=list)
    replay_log: Optional[Path] = None
    replay_speed: float = 1.0
    cluster_radius_m: float = 2.0
    staleness_ms: int = 3_600_000

    def validate(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown technique {self.technique!r}")
        if self.epoch_ms <= 0:
            raise ConfigError(f"epoch_ms must be > 0, got {self.epoch_ms}")
        if not (0 < self.port < 65536):
            raise ConfigError(f"port out of range: {self.port}")
        if not (0 <= self.tcp_port < 65536):
            raise ConfigError(f"tcp_port out of range: {self.tcp_port}")
        if self.tcp_port and self.port == self.tcp_port:
            raise ConfigError(f"http and tcp ports collide on {self.port}")
        if self.replay_log is not None and not self.replay_log.exists():
            raise ConfigError(f"replay log not found: {self.replay_log}")


def load_pipe_store(path: str | Path) -> list[PipeRecord]:
    """Load the pipe-information file standing in for the SAP/MES backend."""
    docs = json.loads(Path(path).read_text())
    records = []
    for doc in docs:
        records.append(PipeRecord(
            pipe_id=str(doc["pipe_id"]),
            material=str(doc.get("material", "")),
            diameter_mm=float(doc.get("diameter_mm", 0.0)),
            description=str(doc.get("description", "")),
            status=str(doc.get("status", "unknown")),
        ))
    return records


def load_config(path: str | Path, **overrides) -> ServiceConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}")
    base = p.parent

    fm = doc.get("floor_map")
    if fm is None:
        raise ConfigError("config is missing floor_map")
    floor_map = load_floor_map(base / fm) if isinstance(fm, str) else None
    if floor_map is None:
        from pipetrack.locate import floor_map_from_dict
        floor_map = floor_map_from_dict(fm)

    m = doc.get("model")
    if m is None:
        raise ConfigError("config is missing the path-loss model")
    if isinstance(m, str):
        model = load_model(base / m)
    else:
        model = PathLossModel(
            rss_d0=float(m["rss_d0"]), n=float(m["n"]),
            sigma=float(m.get("sigma", 0.0)), d0=float(m.get("d0", 1.0)),
        )

    filt = None
    if doc.get("filter"):
        f = doc["filter"]
        filt = KalmanParams(
            process_noise=float(f.get("process_noise", 0.008)),
            measurement_noise=float(f.get("measurement_noise", 4.0)),
            initial_variance=float(f.get("initial_variance", 10.0)),
        )

    rules = [
        Rule(rule_id=str(r["rule_id"]), kind=str(r["kind"]),
             params=dict(r.get("params", {})), enabled=bool(r.get("enabled", True)))
        for r in doc.get("rules", [])
    ]

    pipes = []
    if doc.get("pipe_store"):
        pipes = load_pipe_store(base / doc["pipe_store"])

    replay_log = None
    replay_speed = 1.0
    if doc.get("replay"):
        replay_log = base / doc["replay"]["log"]
        replay_speed = float(doc["replay"].get("speed", 1.0))

    cfg = ServiceConfig(
        floor_map=floor_map,
        model=model,
        technique=str(doc.get("technique", "sc")),
        epoch_ms=int(doc.get("epoch_ms", 500)),
        hysteresis_m=float(doc.get("hysteresis_m", 1.0)),
        port=int(doc.get("port", 8000)),
        tcp_port=int(doc.get("tcp_port", 9100)),
        db_path=str(doc.get("db", ":memory:")),
        filter_params=filt,
        rules=rules,
        pipe_records=pipes,
        replay_log=replay_log,
        replay_speed=replay_speed,
        cluster_radius_m=float(doc.get("cluster_radius_m", 2.0)),
        staleness_ms=int(doc.get("staleness_ms", 3_600_000)),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg
