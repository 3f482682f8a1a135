"""The tracking pipeline: samples in, positions and notifications out.

Per closed epoch window the engine turns each tag's per-antenna readings
into distances, fuses every contributing antenna into one 2D fix, resolves
the floor-map zone with a hysteresis margin against boundary chatter, and
runs the notification rules. Pipe state is held in memory and written
through to the store; events fan out to registered callbacks.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from pipetrack.channel import PathLossModel
from pipetrack.diversity import Combiner, CombinerConfig, RssVector
from pipetrack.filters import KalmanBank, KalmanParams
from pipetrack.ingest import EpochWindower, RssSample
from pipetrack.locate import (
    OUTSIDE,
    FloorMap,
    Position,
    estimate_distances,
    resolve_zone,
    solve_ranges,
    zone_penetration,
)
from pipetrack.tracking.models import Event, PipeRecord, RecordValidationError, Rule
from pipetrack.tracking.store import TrackingStore

UNTRACKED = "untracked"

DEFAULT_HYSTERESIS_M = 1.0
DEFAULT_STALENESS_MS = 3_600_000
DEFAULT_UNTRACKED_GAP_MS = 60_000


@dataclass
class Cluster:
    centroid: tuple[float, float]
    members: list[str]


def cluster_positions(
    positions: Iterable[tuple[str, float, float]], radius: float = 2.0
) -> list[Cluster]:
    """Greedy centroid clustering of (pipe_id, x, y) points.

    Each unassigned point seeds a cluster which absorbs, one at a time, the
    first remaining point within radius of the running centroid, until a
    fixpoint. Deterministic in input order; chains of nearby points can
    therefore merge differently if the input order changes.
    """
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    remaining = list(positions)
    clusters: list[Cluster] = []
    while remaining:
        pid, x, y = remaining.pop(0)
        members = [(pid, x, y)]
        cx, cy = x, y
        absorbed = True
        while absorbed and remaining:
            absorbed = False
            for i, (qid, qx, qy) in enumerate(remaining):
                if math.hypot(qx - cx, qy - cy) <= radius:
                    members.append(remaining.pop(i))
                    cx = sum(m[1] for m in members) / len(members)
                    cy = sum(m[2] for m in members) / len(members)
                    absorbed = True
                    break
        clusters.append(Cluster(centroid=(cx, cy), members=[m[0] for m in members]))
    return clusters


@dataclass
class _PipeState:
    record: PipeRecord
    zone_initialized: bool = False
    pending_zone: Optional[str] = None
    pending_onset: int = 0
    zone_entered_t: int = 0
    dwell_fired: set = field(default_factory=set)
    last_seen_t: Optional[int] = None
    segments: list[list] = field(default_factory=list)  # [zone, start, end]
    last_combined: dict = field(default_factory=dict)  # reader -> dBm


class TrackerEngine:
    """Single-writer tracking core.

    feed() is called by exactly one source at a time per engine (the lock
    also makes interleaved sources safe); reads take the same lock briefly
    and work on snapshots.
    """

    def __init__(
        self,
        floor_map: FloorMap,
        model: PathLossModel,
        store: TrackingStore | None = None,
        technique: str = "sc",
        epoch_ms: int = 500,
        hysteresis_m: float = DEFAULT_HYSTERESIS_M,
        filter_params: Optional[KalmanParams] = None,
        combiner_cfg: Optional[CombinerConfig] = None,
        rules: Iterable[Rule] = (),
        staleness_ms: int = DEFAULT_STALENESS_MS,
        untracked_gap_ms: int = DEFAULT_UNTRACKED_GAP_MS,
        cluster_radius_m: float = 2.0,
    ):
        self.floor_map = floor_map
        self.model = model
        self.store = store or TrackingStore()
        self.technique = technique
        self.epoch_ms = int(epoch_ms)
        self.hysteresis_m = float(hysteresis_m)
        self.combiner_cfg = combiner_cfg or CombinerConfig()
        self.staleness_ms = int(staleness_ms)
        self.untracked_gap_ms = int(untracked_gap_ms)
        self.cluster_radius_m = float(cluster_radius_m)

        self._bank = KalmanBank(filter_params) if filter_params else None
        self._windower = EpochWindower(
            self.epoch_ms,
            {a.reader_id: a.antenna_count for a in floor_map.arrays},
        )
        self._pipes: dict[str, _PipeState] = {}
        self._combiners: dict[tuple[str, str], Combiner] = {}
        self._rules: list[Rule] = []
        self._occupancy_edge: dict[str, bool] = {}
        self._event_seq = self.store.max_event_id()
        self._samples_seen = 0
        self._lock = threading.RLock()

        self.on_event: list[Callable[[Event], None]] = []
        self.on_positions: list[Callable[[list[dict]], None]] = []
        self.on_clusters: list[Callable[[list[Cluster], int], None]] = []

        for rec in self.store.list_pipes():
            self._pipes[rec.pipe_id] = _PipeState(record=rec)
        for rule in rules:
            self.add_rule(rule)
        for rule in self.store.list_rules():
            if all(r.rule_id != rule.rule_id for r in self._rules):
                self._rules.append(rule)

    # -- registry ----------------------------------------------------------

    def upsert_pipe(self, rec: PipeRecord) -> None:
        bad = rec.validate()
        if bad:
            raise RecordValidationError(bad)
        with self._lock:
            state = self._pipes.get(rec.pipe_id)
            if state is None:
                self._pipes[rec.pipe_id] = _PipeState(record=rec)
            else:
                # Keep live tracking fields, refresh the metadata.
                rec.current_zone = state.record.current_zone
                rec.last_position = state.record.last_position
                state.record = rec
            self.store.upsert_pipe(rec)

    def get_pipe(self, pipe_id: str) -> PipeRecord:
        with self._lock:
            state = self._pipes.get(pipe_id)
            if state is None:
                raise KeyError(f"unknown pipe {pipe_id!r}")
            return state.record

    def list_pipes(
        self,
        pipe_id_contains: str | None = None,
        zone: str | None = None,
        material: str | None = None,
    ) -> list[PipeRecord]:
        with self._lock:
            records = [s.record for s in self._pipes.values()]
        if pipe_id_contains:
            records = [r for r in records if pipe_id_contains in r.pipe_id]
        if zone:
            records = [r for r in records if r.current_zone == zone]
        if material:
            records = [r for r in records if r.material == material]
        return sorted(records, key=lambda r: r.pipe_id)

    def add_rule(self, rule: Rule) -> None:
        bad = rule.validate()
        if bad:
            raise RecordValidationError(bad)
        with self._lock:
            self._rules = [r for r in self._rules if r.rule_id != rule.rule_id]
            self._rules.append(rule)
            self.store.upsert_rule(rule)

    def _ensure_pipe(self, tag_id: str) -> _PipeState:
        state = self._pipes.get(tag_id)
        if state is None:
            # A tag reported a position before registration: track it anyway.
            rec = PipeRecord(pipe_id=tag_id, registered=False)
            state = _PipeState(record=rec)
            self._pipes[tag_id] = state
            self.store.upsert_pipe(rec)
        return state

    # -- feeding -----------------------------------------------------------

    def feed(self, sample: RssSample) -> None:
        with self._lock:
            self._samples_seen += 1
            closed = self._windower.push(sample)
            if closed:
                self._process_closed(closed)

    def feed_many(self, samples: Iterable[RssSample]) -> None:
        for s in samples:
            self.feed(s)

    def flush(self) -> None:
        """Process every still-open window (end of stream)."""
        with self._lock:
            closed = self._windower.flush()
            if closed:
                self._process_closed(closed)

    def _process_closed(self, closed: list[tuple[str, str, RssVector]]) -> None:
        by_epoch_tag: dict[tuple[int, str], list[tuple[str, RssVector]]] = {}
        for tag_id, reader_id, vec in closed:
            by_epoch_tag.setdefault((vec.epoch, tag_id), []).append((reader_id, vec))
        for (t, tag_id) in sorted(by_epoch_tag):
            self._process_tag_epoch(tag_id, t, by_epoch_tag[(t, tag_id)])
        for t in sorted({t for t, _ in by_epoch_tag}):
            self._emit_epoch_outputs(t)

    def _process_tag_epoch(
        self, tag_id: str, t: int, reader_vectors: list[tuple[str, RssVector]]
    ) -> None:
        state = self._ensure_pipe(tag_id)
        anchors: list[tuple[float, float, float]] = []
        dists: list[float] = []
        arrays_used = []
        for reader_id, vec in sorted(reader_vectors):
            array = self.floor_map.array(reader_id)
            d = estimate_distances(self.model, vec, self._bank, stream_key=(tag_id, reader_id))
            for ant, dist in enumerate(d):
                if dist is not None and ant < array.antenna_count:
                    anchors.append(array.antennas[ant])
                    dists.append(dist)
            arrays_used.append(array)
            combiner = self._combiners.get((tag_id, reader_id))
            if combiner is None:
                combiner = Combiner(self.technique, self.combiner_cfg)
                self._combiners[(tag_id, reader_id)] = combiner
            combined = combiner.combine(vec)
            if combined is not None:
                state.last_combined[reader_id] = combined
        if not anchors:
            return
        facing = arrays_used[0].facing if arrays_used else None
        fix = solve_ranges(anchors, dists, epoch=t, facing=facing)
        if fix is None:
            return
        self._apply_position(state, fix)

    # -- position / zone state machine --------------------------------------

    def process_position(self, pipe_id: str, pos: Position) -> list[Event]:
        """Apply one externally computed fix (e.g. in tests or backfill)."""
        with self._lock:
            state = self._ensure_pipe(pipe_id)
            return self._apply_position(state, pos)

    def _apply_position(self, state: _PipeState, pos: Position) -> list[Event]:
        rec = state.record
        t = pos.epoch
        z_est = resolve_zone(self.floor_map, pos.x, pos.y)
        emitted: list[Event] = []
        zone_changed = False

        if not state.zone_initialized:
            # First fix: adopt the estimated zone. A transition is only
            # reported when the registry already claimed a real zone.
            prior = rec.current_zone
            state.zone_initialized = True
            state.zone_entered_t = t
            rec.current_zone = z_est
            zone_changed = True
            if prior != OUTSIDE and prior != z_est:
                emitted.append(self._emit(
                    state, "zone_transition", from_zone=prior, to_zone=z_est, t=t,
                ))
        elif z_est == rec.current_zone:
            state.pending_zone = None
        else:
            penetration = zone_penetration(self.floor_map, z_est, pos.x, pos.y)
            if state.pending_zone != z_est:
                state.pending_zone = z_est
                state.pending_onset = t
            if penetration >= self.hysteresis_m:
                emitted.append(self._emit(
                    state, "zone_transition",
                    from_zone=rec.current_zone, to_zone=z_est,
                    t=state.pending_onset,
                    payload={"confirmed_t": t},
                ))
                rec.current_zone = z_est
                zone_changed = True
                state.zone_entered_t = state.pending_onset
                state.pending_zone = None
                state.dwell_fired.clear()

        rec.last_position = pos
        state.last_seen_t = t
        self._extend_segments(state, rec.current_zone, t)
        emitted.extend(self._check_dwell_rules(state, t))
        if zone_changed:
            emitted.extend(self._check_occupancy_rules(t))
        self.store.upsert_pipe(rec)
        return emitted

    def _extend_segments(self, state: _PipeState, zone: str, t: int) -> None:
        segs = state.segments
        if segs:
            last = segs[-1]
            if t - last[2] <= self.untracked_gap_ms:
                if last[0] == zone:
                    last[2] = t
                    return
                # Zone changed between fixes: the change takes effect at this
                # fix, so the preceding interval still belongs to the old zone.
                last[2] = t
        segs.append([zone, t, t])

    def _emit(self, state: _PipeState, kind: str, from_zone=None, to_zone=None,
              t: int = 0, payload: dict | None = None) -> Event:
        self._event_seq += 1
        event = Event(
            event_id=self._event_seq, pipe_id=state.record.pipe_id, kind=kind,
            from_zone=from_zone, to_zone=to_zone, t=t, payload=payload or {},
        )
        self.store.append_event(event)
        for cb in self.on_event:
            cb(event)
        return event

    def _check_dwell_rules(self, state: _PipeState, t: int) -> list[Event]:
        out = []
        for rule in self._rules:
            if not rule.enabled or rule.kind != "dwell_threshold":
                continue
            zone = rule.params["zone"]
            duration = int(rule.params["duration_ms"])
            if state.record.current_zone != zone or rule.rule_id in state.dwell_fired:
                continue
            if t - state.zone_entered_t >= duration:
                state.dwell_fired.add(rule.rule_id)
                out.append(self._emit(
                    state, "dwell_threshold", from_zone=zone, to_zone=zone, t=t,
                    payload={"rule_id": rule.rule_id, "duration_ms": duration,
                             "entered_t": state.zone_entered_t},
                ))
        return out

    def _check_occupancy_rules(self, t: int) -> list[Event]:
        out = []
        for rule in self._rules:
            if not rule.enabled or rule.kind != "occupancy_threshold":
                continue
            zone = rule.params["zone"]
            threshold = int(rule.params["count"])
            count = self._occupancy_unlocked(zone, t)
            above = count >= threshold
            was_above = self._occupancy_edge.get(rule.rule_id, False)
            self._occupancy_edge[rule.rule_id] = above
            if above and not was_above:
                # Attribute the notification to the zone, not one pipe.
                self._event_seq += 1
                event = Event(
                    event_id=self._event_seq, pipe_id="", kind="occupancy_threshold",
                    from_zone=zone, to_zone=zone, t=t,
                    payload={"rule_id": rule.rule_id, "count": count,
                             "threshold": threshold},
                )
                self.store.append_event(event)
                for cb in self.on_event:
                    cb(event)
                out.append(event)
        return out

    # -- queries -----------------------------------------------------------

    def _occupancy_unlocked(self, zone_id: str, now_t: int | None = None) -> int:
        count = 0
        for state in self._pipes.values():
            # A pipe that never produced a fix has an unknown zone, which is
            # not the same as being outside every zone.
            if state.record.last_position is None:
                continue
            if state.record.current_zone != zone_id:
                continue
            if now_t is not None and state.last_seen_t is not None:
                if now_t - state.last_seen_t > self.staleness_ms:
                    continue
            count += 1
        return count

    def occupancy(self, zone_id: str, now_t: int | None = None) -> int:
        if zone_id != OUTSIDE and all(z.zone_id != zone_id for z in self.floor_map.zones):
            raise KeyError(f"unknown zone {zone_id!r}")
        with self._lock:
            return self._occupancy_unlocked(zone_id, now_t)

    def stale_pipes(self, now_t: int) -> list[str]:
        with self._lock:
            return sorted(
                s.record.pipe_id for s in self._pipes.values()
                if s.last_seen_t is not None
                and now_t - s.last_seen_t > self.staleness_ms
            )

    def dwell_stats(
        self, pipe_id: str | None = None, zone_id: str | None = None,
        t_start: int = 0, t_end: int | None = None,
    ) -> list[tuple[str, int, int]]:
        """Rows of (zone, total_ms, visits) over [t_start, t_end].

        Residence is reconstructed from the per-pipe tracking segments;
        stretches without fixes longer than the untracked gap are reported
        under the pseudo-zone "untracked".
        """
        with self._lock:
            if pipe_id is not None:
                state = self._pipes.get(pipe_id)
                if state is None:
                    raise KeyError(f"unknown pipe {pipe_id!r}")
                states = [state]
            elif zone_id is not None:
                known = {z.zone_id for z in self.floor_map.zones} | {OUTSIDE}
                if zone_id not in known:
                    raise KeyError(f"unknown zone {zone_id!r}")
                states = list(self._pipes.values())
            else:
                raise ValueError("pass pipe_id or zone_id")
            segments = [
                (seg[0], seg[1], seg[2]) for s in states for seg in s.segments
            ]

        if t_end is None:
            t_end = max((e for _, _, e in segments), default=t_start)
        totals: dict[str, int] = {}
        visits: dict[str, int] = {}
        tracked_span = 0
        for zone, start, end in segments:
            lo, hi = max(start, t_start), min(end, t_end)
            if hi < lo:
                continue
            if zone_id is not None and zone != zone_id:
                tracked_span += hi - lo
                continue
            totals[zone] = totals.get(zone, 0) + (hi - lo)
            visits[zone] = visits.get(zone, 0) + 1
            tracked_span += hi - lo
        if pipe_id is not None:
            untracked = (t_end - t_start) - tracked_span
            if untracked > 0:
                totals[UNTRACKED] = untracked
                visits[UNTRACKED] = 0
        return [(z, totals[z], visits[z]) for z in sorted(totals)]

    def positions_snapshot(self, fresh_within_ms: int | None = None) -> list[dict]:
        with self._lock:
            rows = []
            newest = max(
                (s.last_seen_t for s in self._pipes.values()
                 if s.last_seen_t is not None),
                default=None,
            )
            for state in sorted(self._pipes.values(), key=lambda s: s.record.pipe_id):
                pos = state.record.last_position
                if pos is None:
                    continue
                if (fresh_within_ms is not None and newest is not None
                        and newest - pos.epoch > fresh_within_ms):
                    continue
                rows.append({
                    "pipe_id": state.record.pipe_id,
                    "x": pos.x, "y": pos.y,
                    "zone": state.record.current_zone,
                    "t": pos.epoch,
                })
            return rows

    def clusters(self, radius: float | None = None) -> list[Cluster]:
        rows = self.positions_snapshot(fresh_within_ms=self.staleness_ms)
        return cluster_positions(
            [(r["pipe_id"], r["x"], r["y"]) for r in rows],
            radius or self.cluster_radius_m,
        )

    def stats(self) -> dict:
        with self._lock:
            return {
                "samples_seen": self._samples_seen,
                "late_dropped": self._windower.late_dropped,
                "tracked_pipes": sum(
                    1 for s in self._pipes.values() if s.record.last_position
                ),
                "registered_pipes": len(self._pipes),
                "events": self._event_seq,
            }

    # -- epoch outputs -------------------------------------------------------

    def _emit_epoch_outputs(self, t: int) -> None:
        if self.on_positions:
            rows = self.positions_snapshot(fresh_within_ms=0)
            rows = [r for r in rows if r["t"] == t]
            if rows:
                for cb in self.on_positions:
                    cb(rows)
        if self.on_clusters:
            for cb in self.on_clusters:
                cb(self.clusters(), t)
