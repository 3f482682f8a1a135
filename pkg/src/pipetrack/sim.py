"""Workshop radio simulator.

Moves tags along waypoint trajectories, generates per-antenna RSS with
log-normal shadowing, optional position-keyed multipath fades, read-range
and read-probability dropout, and an optional angle-coverage gate. Output
is a sample stream plus a ground-truth stream, byte-reproducible for a
given seed.

Fades are keyed to (antenna, position cell) rather than redrawn per epoch:
a standing reflection pattern is a property of the geometry, so a tag
dwelling in one spot keeps seeing the same notch. The depth is exponential,
truncated implicitly by the receiver sensitivity floor (a reading that
falls below the floor is simply never produced).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from pipetrack.channel import PathLossModel, sample_rss
from pipetrack.diversity import CombinerConfig
from pipetrack.filters import KalmanParams
from pipetrack.ingest import RssSample
from pipetrack.locate import AntennaArray, FloorMap, floor_map_from_dict, load_floor_map

DEFAULT_SENSITIVITY_DBM = -88.0


class ScenarioError(ValueError):
    """Scenario validation failed; .problems lists every violation."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid scenario: " + "; ".join(problems))
        self.problems = problems


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class TagClass:
    """A family of tags sharing a propagation model and read range."""

    name: str
    max_read_range: float
    model: PathLossModel
    read_probability: float = 0.95

    def __post_init__(self):
        if not self.max_read_range > 0:
            raise ValueError("max_read_range must be > 0")
        if not (0 < self.read_probability <= 1):
            raise ValueError("read_probability must be in (0, 1]")


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path: (t_ms, x, y) waypoints, clamped at the ends."""

    waypoints: tuple[tuple[int, float, float], ...]

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    def position_at(self, t: int) -> tuple[float, float]:
        wp = self.waypoints
        if t <= wp[0][0]:
            return wp[0][1], wp[0][2]
        if t >= wp[-1][0]:
            return wp[-1][1], wp[-1][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(wp, wp[1:]):
            if t0 <= t <= t1:
                f = (t - t0) / (t1 - t0)
                return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        return wp[-1][1], wp[-1][2]


@dataclass(frozen=True)
class SimTag:
    tag_id: str
    class_name: str
    trajectory: Trajectory


@dataclass(frozen=True)
class FadeConfig:
    """Position-keyed fade mixture: with the given probability a grid cell
    carries a standing notch, its depth uniform in [depth_min_db, depth_max_db]."""

    probability: float = 0.0
    depth_min_db: float = 3.0
    depth_max_db: float = 9.0
    cell_m: float = 0.25

    def __post_init__(self):
        if not (0 <= self.probability <= 1):
            raise ValueError("fade probability must be in [0, 1]")
        if not (0 <= self.depth_min_db <= self.depth_max_db):
            raise ValueError("need 0 <= depth_min_db <= depth_max_db")
        if not self.cell_m > 0:
            raise ValueError("fade cell size must be > 0")


@dataclass(frozen=True)
class AngleRule:
    """One readability band: readable up to max_distance_m when the tag
    bearing relative to the array axis falls inside the angle band."""

    min_angle_deg: float
    max_angle_deg: float
    max_distance_m: float


@dataclass
class Scenario:
    floor_map: FloorMap
    tag_classes: dict[str, TagClass]
    tags: list[SimTag]
    epoch_ms: int = 500
    seed: int = 0
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
    fade: Optional[FadeConfig] = None
    angle_coverage: Optional[dict[str, list[AngleRule]]] = None
    filter_params: Optional[KalmanParams] = None
    combiner_cfg: Optional[CombinerConfig] = None
    name: str = "scenario"

    def validate(self) -> list[str]:
        problems = []
        if self.epoch_ms <= 0:
            problems.append(f"epoch_ms must be > 0, got {self.epoch_ms}")
        if not self.tags:
            problems.append("scenario has no tags")
        seen = set()
        for tag in self.tags:
            if tag.tag_id in seen:
                problems.append(f"duplicate tag id {tag.tag_id!r}")
            seen.add(tag.tag_id)
            if tag.class_name not in self.tag_classes:
                problems.append(
                    f"tag {tag.tag_id!r} references unknown class {tag.class_name!r}"
                )
        if not self.floor_map.arrays:
            problems.append("floor map has no antenna arrays")
        problems.extend(self.floor_map.validate())
        return problems


class SpatialFadeField:
    """Deterministic fade lookup keyed by (reader, antenna, position cell).

    Draws are derived from a string-seeded generator so the field does not
    depend on visit order, only on the scenario seed.
    """

    def __init__(self, cfg: FadeConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self._cache: dict[tuple, float] = {}

    def depth_at(self, reader_id: str, antenna: int, x: float, y: float) -> float:
        if self.cfg.probability == 0.0:
            return 0.0
        cx = math.floor(x / self.cfg.cell_m)
        cy = math.floor(y / self.cfg.cell_m)
        key = (reader_id, antenna, cx, cy)
        if key not in self._cache:
            r = random.Random(f"fade:{self.seed}:{reader_id}:{antenna}:{cx}:{cy}")
            depth = 0.0
            if r.random() < self.cfg.probability:
                depth = r.uniform(self.cfg.depth_min_db, self.cfg.depth_max_db)
            self._cache[key] = depth
        return self._cache[key]


def _array_axis(array: AntennaArray) -> Optional[tuple[float, float]]:
    x0, y0, _ = array.antennas[0]
    for x1, y1, _ in array.antennas[1:]:
        if math.hypot(x1 - x0, y1 - y0) > 1e-9:
            return x1 - x0, y1 - y0
    return None


def _bearing_deg(array: AntennaArray, x: float, y: float) -> Optional[float]:
    """Angle between the array axis and the direction to the tag, 0..180."""
    axis = _array_axis(array)
    if axis is None:
        return None
    cx, cy = array.centroid()
    dx, dy = x - cx, y - cy
    norm = math.hypot(dx, dy) * math.hypot(*axis)
    if norm < 1e-12:
        return None
    cosang = max(-1.0, min(1.0, (axis[0] * dx + axis[1] * dy) / norm))
    return math.degrees(math.acos(cosang))


def _angle_readable(rules: list[AngleRule], angle: Optional[float], d: float) -> bool:
    if angle is None:
        return True
    for rule in rules:
        if rule.min_angle_deg <= angle <= rule.max_angle_deg and d <= rule.max_distance_m:
            return True
    return False


@dataclass(frozen=True)
class TruthRecord:
    t: int
    tag_id: str
    x: float
    y: float

    def to_line(self) -> str:
        return json.dumps(
            {"t": int(self.t), "tag": self.tag_id, "x": self.x, "y": self.y},
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> "TruthRecord":
        doc = json.loads(line)
        return cls(t=int(doc["t"]), tag_id=str(doc["tag"]),
                   x=float(doc["x"]), y=float(doc["y"]))


@dataclass
class SimResult:
    samples: list[RssSample]
    truth: list[TruthRecord]
    epochs: int
    candidate_readings: int = 0

    @property
    def dropout_rate(self) -> float:
        if self.candidate_readings == 0:
            return 0.0
        return 1.0 - len(self.samples) / self.candidate_readings


def run(scenario: Scenario, duration_ms: int) -> SimResult:
    """Simulate the scenario for the given duration.

    Per epoch, per tag, per antenna: the tag is readable when it sits
    within its class read range (slant distance, tag at floor level) and
    inside an enabled angle-coverage band; a readable pairing produces one
    sample with the class read probability, drawn from the channel model
    minus any standing fade at the tag's current cell, and only if the
    result clears the receiver sensitivity floor.
    """
    problems = scenario.validate()
    if problems:
        raise ScenarioError(problems)
    rng = random.Random(scenario.seed)
    fade = SpatialFadeField(scenario.fade, scenario.seed) if scenario.fade else None
    epochs = max(0, int(duration_ms) // scenario.epoch_ms)
    samples: list[RssSample] = []
    truth: list[TruthRecord] = []
    candidates = 0
    for k in range(epochs):
        t = k * scenario.epoch_ms
        for tag in scenario.tags:
            x, y = tag.trajectory.position_at(t)
            truth.append(TruthRecord(t=t, tag_id=tag.tag_id, x=x, y=y))
            cls = scenario.tag_classes[tag.class_name]
            for array in scenario.floor_map.arrays:
                rules = (scenario.angle_coverage or {}).get(array.geometry_tag)
                angle = _bearing_deg(array, x, y) if rules else None
                for ant, (ax, ay, az) in enumerate(array.antennas):
                    d = math.sqrt((x - ax) ** 2 + (y - ay) ** 2 + az * az)
                    d = max(d, 1e-6)
                    if d > cls.max_read_range:
                        continue
                    if rules and not _angle_readable(rules, angle, d):
                        continue
                    candidates += 1
                    if rng.random() >= cls.read_probability:
                        continue
                    rss = sample_rss(cls.model, d, rng)
                    if fade is not None:
                        rss -= fade.depth_at(array.reader_id, ant, x, y)
                    if rss <= scenario.sensitivity_dbm:
                        continue
                    samples.append(RssSample(
                        t=t, tag_id=tag.tag_id, reader_id=array.reader_id,
                        antenna=ant, rss=rss,
                    ))
    return SimResult(samples=samples, truth=truth, epochs=epochs,
                     candidate_readings=candidates)


def write_samples(samples: Iterable[RssSample], path: str | Path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(s.to_line() + "\n")
            n += 1
    return n


def write_truth(truth: Iterable[TruthRecord], path: str | Path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in truth:
            fh.write(rec.to_line() + "\n")
            n += 1
    return n


def read_truth(path: str | Path) -> list[TruthRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(TruthRecord.from_line(line))
    return out


def _model_from_dict(doc: dict) -> PathLossModel:
    return PathLossModel(
        rss_d0=float(doc["rss_d0"]), n=float(doc["n"]),
        sigma=float(doc.get("sigma", 0.0)), d0=float(doc.get("d0", 1.0)),
    )


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    base = base_dir or Path(".")
    fm = doc["floor_map"]
    floor_map = load_floor_map(base / fm) if isinstance(fm, str) else floor_map_from_dict(fm)
    classes = {}
    for c in doc.get("tag_classes", []):
        classes[str(c["name"])] = TagClass(
            name=str(c["name"]),
            max_read_range=float(c["max_read_range_m"]),
            model=_model_from_dict(c["model"]),
            read_probability=float(c.get("read_probability", 0.95)),
        )
    tags = [
        SimTag(
            tag_id=str(tg["tag_id"]),
            class_name=str(tg["class"]),
            trajectory=Trajectory(tuple(
                (int(t), float(x), float(y)) for t, x, y in tg["waypoints"]
            )),
        )
        for tg in doc.get("tags", [])
    ]
    fade = None
    if doc.get("fade"):
        f = doc["fade"]
        fade = FadeConfig(
            probability=float(f.get("probability", 0.0)),
            depth_min_db=float(f.get("depth_min_db", 3.0)),
            depth_max_db=float(f.get("depth_max_db", 9.0)),
            cell_m=float(f.get("cell_m", 0.25)),
        )
    angle = None
    if doc.get("angle_coverage"):
        angle = {
            geom: [
                AngleRule(
                    min_angle_deg=float(r["min_angle_deg"]),
                    max_angle_deg=float(r["max_angle_deg"]),
                    max_distance_m=float(r["max_distance_m"]),
                )
                for r in rules
            ]
            for geom, rules in doc["angle_coverage"].items()
        }
    comb = None
    if doc.get("combiner"):
        c = doc["combiner"]
        comb = CombinerConfig(
            rss_min=float(c.get("rss_min", -90.0)),
            calibration_k=float(c.get("calibration_k", 1.0)),
        )
    filt = None
    if doc.get("filter"):
        f = doc["filter"]
        filt = KalmanParams(
            process_noise=float(f.get("process_noise", 0.008)),
            measurement_noise=float(f.get("measurement_noise", 4.0)),
            initial_variance=float(f.get("initial_variance", 10.0)),
        )
    return Scenario(
        floor_map=floor_map,
        tag_classes=classes,
        tags=tags,
        epoch_ms=int(doc.get("epoch_ms", 500)),
        seed=int(doc.get("seed", 0)),
        sensitivity_dbm=float(doc.get("sensitivity_dbm", DEFAULT_SENSITIVITY_DBM)),
        fade=fade,
        angle_coverage=angle,
        filter_params=filt,
        combiner_cfg=comb,
        name=str(doc.get("name", "scenario")),
    )


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return scenario_from_dict(json.loads(p.read_text()), base_dir=p.parent)
