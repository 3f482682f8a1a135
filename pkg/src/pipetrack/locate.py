"""Position estimation: ranging to 2D fixes on a floor map.

Per-antenna RSS readings become per-antenna distances through the channel
model; distances to known antenna positions become a 2D position through
iterative least squares; positions resolve to named floor-map zones.
Antenna positions carry a height (z), so ranges are treated as slant
ranges to a tag at floor level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

from pipetrack.channel import PathLossModel, invert_distance
from pipetrack.diversity import RssVector
from pipetrack.filters import KalmanBank

OUTSIDE = "outside"

MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-6  # meters
_COLLINEAR_EPS = 1e-9


@dataclass(frozen=True)
class Zone:
    zone_id: str
    name: str
    polygon: tuple[tuple[float, float], ...]

    def shape(self) -> Polygon:
        return Polygon(self.polygon)


@dataclass(frozen=True)
class AntennaArray:
    """One reader's antennas, ordered to match RssVector reading order.

    facing is a unit-ish direction the array looks toward; it disambiguates
    the mirror solution when the antennas are collinear.
    """

    reader_id: str
    antennas: tuple[tuple[float, float, float], ...]
    geometry_tag: str = "custom"
    facing: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not self.antennas:
            raise ValueError(f"array {self.reader_id!r} has no antennas")
        for p in self.antennas:
            if not all(math.isfinite(c) for c in p):
                raise ValueError(f"array {self.reader_id!r} has non-finite antenna position {p}")

    @property
    def antenna_count(self) -> int:
        return len(self.antennas)

    def centroid(self) -> tuple[float, float]:
        xs = [a[0] for a in self.antennas]
        ys = [a[1] for a in self.antennas]
        return sum(xs) / len(xs), sum(ys) / len(ys)


@dataclass(frozen=True)
class Position:
    """A 2D fix in floor-map coordinates with its RMS range misfit."""

    x: float
    y: float
    residual: float
    epoch: int
    source_antenna_count: int
    degenerate: bool = False


@dataclass(frozen=True)
class FloorMap:
    width: float
    height: float
    zones: tuple[Zone, ...] = ()
    arrays: tuple[AntennaArray, ...] = ()

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValueError("invalid floor map: " + "; ".join(problems))

    def validate(self) -> list[str]:
        problems = []
        if not (self.width > 0 and self.height > 0):
            problems.append(f"non-positive extent {self.width} x {self.height}")
        seen = set()
        for z in self.zones:
            if z.zone_id in seen:
                problems.append(f"duplicate zone id {z.zone_id!r}")
            seen.add(z.zone_id)
            if z.zone_id == OUTSIDE:
                problems.append(f"zone id {OUTSIDE!r} is reserved")
            if len(z.polygon) < 3:
                problems.append(f"zone {z.zone_id!r} has fewer than 3 vertices")
        shapes = {z.zone_id: z.shape() for z in self.zones}
        for i, a in enumerate(self.zones):
            for b in self.zones[i + 1:]:
                inter = shapes[a.zone_id].intersection(shapes[b.zone_id])
                if inter.area > 1e-9:
                    problems.append(f"zones {a.zone_id!r} and {b.zone_id!r} overlap")
        for arr in self.arrays:
            for x, y, _ in arr.antennas:
                if not (0 <= x <= self.width and 0 <= y <= self.height):
                    problems.append(
                        f"array {arr.reader_id!r} antenna at ({x}, {y}) outside bounds"
                    )
        return problems

    def array(self, reader_id: str) -> AntennaArray:
        for arr in self.arrays:
            if arr.reader_id == reader_id:
                return arr
        raise KeyError(f"unknown reader {reader_id!r}")

    def zone(self, zone_id: str) -> Zone:
        for z in self.zones:
            if z.zone_id == zone_id:
                return z
        raise KeyError(f"unknown zone {zone_id!r}")


def load_floor_map(path: str | Path) -> FloorMap:
    """Load the JSON floor-map document.

    Schema: {width, height, zones: [{id, name, polygon: [[x, y], ...]}],
    arrays: [{reader_id, geometry, antennas: [[x, y, z], ...], facing?}]}.
    """
    doc = json.loads(Path(path).read_text())
    return floor_map_from_dict(doc)


def floor_map_from_dict(doc: dict) -> FloorMap:
    zones = tuple(
        Zone(
            zone_id=str(z["id"]),
            name=str(z.get("name", z["id"])),
            polygon=tuple((float(x), float(y)) for x, y in z["polygon"]),
        )
        for z in doc.get("zones", [])
    )
    arrays = tuple(
        AntennaArray(
            reader_id=str(a["reader_id"]),
            antennas=tuple(
                (float(x), float(y), float(z)) for x, y, z in a["antennas"]
            ),
            geometry_tag=str(a.get("geometry", "custom")),
            facing=tuple(float(c) for c in a["facing"]) if a.get("facing") else None,
        )
        for a in doc.get("arrays", [])
    )
    return FloorMap(
        width=float(doc["width"]), height=float(doc["height"]),
        zones=zones, arrays=arrays,
    )


def resolve_zone(floor_map: FloorMap, x: float, y: float) -> str:
    """Containing zone id for a point, or "outside".

    Boundary points belong to the first zone in map order that touches them.
    """
    p = Point(x, y)
    for z in floor_map.zones:
        if z.shape().covers(p):
            return z.zone_id
    return OUTSIDE


def zone_penetration(floor_map: FloorMap, zone_id: str, x: float, y: float) -> float:
    """How deep a point sits inside the given zone (meters).

    For "outside" this is the clearance to the nearest zone. Returns 0 when
    the point is not in the zone at all.
    """
    p = Point(x, y)
    if zone_id == OUTSIDE:
        if not floor_map.zones:
            return math.inf
        union = unary_union([z.shape() for z in floor_map.zones])
        return 0.0 if union.covers(p) else union.distance(p)
    shape = floor_map.zone(zone_id).shape()
    if not shape.covers(p):
        return 0.0
    return shape.exterior.distance(p)


def estimate_distances(
    model: PathLossModel,
    v: RssVector,
    filter_bank: KalmanBank | None = None,
    stream_key=None,
) -> list[Optional[float]]:
    """Per-antenna distance estimates for one epoch's vector.

    Present readings are optionally smoothed by the per-antenna Kalman bank
    (keyed by (stream_key, antenna)) and then inverted through the channel
    model; absent readings stay absent, with the matching filter advanced.
    """
    out: list[Optional[float]] = []
    for i, r in enumerate(v.readings):
        if r is None:
            if filter_bank is not None:
                filter_bank.advance([(stream_key, i)])
            out.append(None)
            continue
        if filter_bank is not None:
            r = filter_bank.step((stream_key, i), r)
        out.append(invert_distance(model, r))
    return out


def _slant(px: float, py: float, anchor: tuple[float, float, float]) -> float:
    ax, ay, az = anchor
    return math.sqrt((px - ax) ** 2 + (py - ay) ** 2 + az * az)


def _collinear(anchors: Sequence[tuple[float, float, float]]) -> bool:
    if len(anchors) < 3:
        return True
    x0, y0 = anchors[0][0], anchors[0][1]
    vx, vy = None, None
    for ax, ay, _ in anchors[1:]:
        dx, dy = ax - x0, ay - y0
        if abs(dx) < _COLLINEAR_EPS and abs(dy) < _COLLINEAR_EPS:
            continue
        if vx is None:
            vx, vy = dx, dy
            continue
        if abs(vx * dy - vy * dx) > 1e-6 * max(1.0, abs(vx), abs(vy)):
            return False
    return True


def _weighted_centroid(
    anchors: Sequence[tuple[float, float, float]], distances: Sequence[float]
) -> tuple[float, float]:
    weights = [1.0 / max(d, 1e-6) for d in distances]
    total = sum(weights)
    x = sum(w * a[0] for w, a in zip(weights, anchors)) / total
    y = sum(w * a[1] for w, a in zip(weights, anchors)) / total
    return x, y


def _rms_misfit(
    x: float, y: float,
    anchors: Sequence[tuple[float, float, float]], distances: Sequence[float],
) -> float:
    sq = [(_slant(x, y, a) - d) ** 2 for a, d in zip(anchors, distances)]
    return math.sqrt(sum(sq) / len(sq))


def solve_ranges(
    anchors: Sequence[tuple[float, float, float]],
    distances: Sequence[float],
    epoch: int = 0,
    facing: Optional[tuple[float, float]] = None,
) -> Optional[Position]:
    """Least-squares 2D fix from slant ranges to known anchors.

    With three or more anchors in general position this runs Gauss-Newton
    from the inverse-distance weighted centroid, capped at 50 iterations,
    converging when the step drops under 1e-6 m. With one or two anchors
    (or a collinear set without a facing hint) the fix degrades to the
    weighted centroid and is flagged degenerate. Collinear sets with a
    facing direction are solved and reflected into the faced half-plane.
    """
    pairs = [(a, d) for a, d in zip(anchors, distances) if d is not None]
    if not pairs:
        return None
    anc = [a for a, _ in pairs]
    dist = [d for _, d in pairs]
    n = len(pairs)

    x, y = _weighted_centroid(anc, dist)
    if n <= 2:
        return Position(x, y, _rms_misfit(x, y, anc, dist), epoch, n, degenerate=True)

    collinear = _collinear(anc)
    if collinear:
        if facing is None:
            return Position(x, y, _rms_misfit(x, y, anc, dist), epoch, n,
                            degenerate=True)
        # Start off-axis so the perpendicular direction has gradient.
        norm = math.hypot(*facing)
        fx, fy = facing[0] / norm, facing[1] / norm
        x, y = x + fx, y + fy

    for _ in range(MAX_ITERATIONS):
        jac = np.zeros((n, 2))
        res = np.zeros(n)
        for i, (a, d) in enumerate(zip(anc, dist)):
            rho = max(_slant(x, y, a), 1e-9)
            res[i] = rho - d
            jac[i, 0] = (x - a[0]) / rho
            jac[i, 1] = (y - a[1]) / rho
        jtj = jac.T @ jac
        # Levenberg damping keeps near-singular geometries stable.
        jtj += 1e-12 * np.eye(2)
        try:
            delta = np.linalg.solve(jtj, -jac.T @ res)
        except np.linalg.LinAlgError:
            break
        x += float(delta[0])
        y += float(delta[1])
        if math.hypot(float(delta[0]), float(delta[1])) < STEP_TOLERANCE:
            break

    if collinear and facing is not None:
        # Reflect across the array axis if the fix landed behind it.
        x0, y0 = anc[0][0], anc[0][1]
        axis = next(
            ((a[0] - x0, a[1] - y0) for a in anc[1:]
             if math.hypot(a[0] - x0, a[1] - y0) > _COLLINEAR_EPS),
            None,
        )
        if axis is not None:
            side = (x - x0) * facing[0] + (y - y0) * facing[1]
            if side < 0:
                ax, ay = axis
                norm2 = ax * ax + ay * ay
                t = ((x - x0) * ax + (y - y0) * ay) / norm2
                footx, footy = x0 + t * ax, y0 + t * ay
                x, y = 2 * footx - x, 2 * footy - y

    return Position(x, y, _rms_misfit(x, y, anc, dist), epoch, n)


def multilaterate(
    array: AntennaArray, distances: Sequence[Optional[float]], epoch: int = 0
) -> Optional[Position]:
    """2D fix for one array from its per-antenna distance estimates."""
    if len(distances) != array.antenna_count:
        raise ValueError(
            f"{len(distances)} distances for {array.antenna_count} antennas"
        )
    return solve_ranges(array.antennas, distances, epoch=epoch, facing=array.facing)
