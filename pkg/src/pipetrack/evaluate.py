"""Pipeline evaluation against simulator ground truth.

Replays a sample stream through configurable processing pipelines
(technique x antenna subset x Kalman filtering on/off) and scores each
against the truth stream: mean absolute error of the RSS-derived distance
to each reader, and mean 2D position error of the multilaterated fixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from pipetrack.channel import PathLossModel, invert_distance
from pipetrack.diversity import (
    CalibrationError,
    Combiner,
    CombinerConfig,
    RssVector,
    calibrate_threshold,
)
from pipetrack.filters import KalmanParams, KalmanState, advance, step
from pipetrack.ingest import RssSample, window
from pipetrack.locate import solve_ranges
from pipetrack.sim import EvaluationError, Scenario, TruthRecord


@dataclass(frozen=True)
class PipelineConfig:
    """One pipeline under test.

    antennas is the subset size; by default the first antennas of each
    array are used, or pass subset to pick explicit indices. filter_order
    places the Kalman stage before or after combining; "auto" smooths
    per-antenna inputs for the merging techniques and the selector output
    for the switching ones (a hardware switch sees raw RSS).
    """

    technique: str
    antennas: int
    filtered: bool
    subset: Optional[tuple[int, ...]] = None
    filter_order: str = "auto"

    def __post_init__(self):
        if self.filter_order not in ("auto", "pre", "post"):
            raise ValueError(f"bad filter_order {self.filter_order!r}")


@dataclass(frozen=True)
class EvalRow:
    technique: str
    antennas: int
    filtered: bool
    mean_distance_error_m: float
    mean_position_error_m: float
    distance_samples: int
    position_samples: int
    subset: Optional[tuple[int, ...]] = None


def default_matrix(max_antennas: int) -> list[PipelineConfig]:
    counts = [k for k in (2, 3, 4) if k <= max_antennas] or [max_antennas]
    return [
        PipelineConfig(technique=t, antennas=k, filtered=f)
        for t in ("egc", "mrc", "sc", "ssc", "scanc")
        for k in counts
        for f in (False, True)
    ]


def _filter_streams(
    epochs: list[int],
    vectors: dict[int, RssVector],
    n_ant: int,
    params: KalmanParams,
) -> dict[int, list[Optional[float]]]:
    """Kalman-smooth each antenna's series over the epoch range.

    Absent readings stay absent (the combiner never sees them); the filter
    only advances its uncertainty across the gap.
    """
    states = [KalmanState() for _ in range(n_ant)]
    out: dict[int, list[Optional[float]]] = {}
    for e in range(epochs[0], epochs[-1] + 1):
        v = vectors.get(e)
        row: list[Optional[float]] = [None] * n_ant
        for a in range(n_ant):
            z = v.readings[a] if v is not None and a < len(v.readings) else None
            if z is None:
                states[a] = advance(states[a], params)
            else:
                states[a] = step(states[a], params, z)
                row[a] = states[a].mu
        if v is not None:
            out[e] = row
    return out


def _subset_vector(
    readings: Sequence[Optional[float]],
    indices: Sequence[int],
    epoch: int,
) -> RssVector:
    sub = [readings[i] if i < len(readings) else None for i in indices]
    return RssVector(epoch=epoch, readings=tuple(sub))


def evaluate(
    samples: Iterable[RssSample],
    truth: Iterable[TruthRecord],
    scenario: Scenario,
    pipelines: Sequence[PipelineConfig] | None = None,
    model_override: PathLossModel | None = None,
    combiner_cfg: CombinerConfig | None = None,
    max_true_distance: float | None = None,
) -> list[EvalRow]:
    """Score each pipeline configuration against ground truth.

    The channel model used for ranging is, per tag, the tag class's model
    from the scenario, unless model_override is given (e.g. a fitted model
    under test). True reader distance is measured to the array centroid.
    max_true_distance restricts scoring to epochs where the tag sat within
    that range of the reader, mirroring cumulative error-vs-range tables.
    """
    samples = list(samples)
    truth = list(truth)
    cfg = combiner_cfg or scenario.combiner_cfg or CombinerConfig()
    filt_params = scenario.filter_params or KalmanParams()
    epoch_ms = scenario.epoch_ms

    truth_at = {(rec.tag_id, rec.t // epoch_ms): (rec.x, rec.y) for rec in truth}
    antenna_counts = {a.reader_id: a.antenna_count for a in scenario.floor_map.arrays}
    windows = window(samples, epoch_ms, antenna_counts)
    streams: dict[tuple[str, str], dict[int, RssVector]] = {}
    for tag_id, reader_id, vec in windows:
        streams.setdefault((tag_id, reader_id), {})[vec.epoch // epoch_ms] = vec

    overlap = [
        (key, e) for key, vecs in streams.items() for e in vecs
        if (key[0], e) in truth_at
    ]
    if not overlap:
        raise EvaluationError("sample stream and truth stream do not overlap")

    if pipelines is None:
        pipelines = default_matrix(max(antenna_counts.values(), default=1))

    arrays = {a.reader_id: a for a in scenario.floor_map.arrays}
    class_of = {t.tag_id: scenario.tag_classes[t.class_name] for t in scenario.tags}

    def model_for(tag_id: str) -> PathLossModel:
        if model_override is not None:
            return model_override
        return class_of[tag_id].model

    # Precompute per-stream epoch lists and filtered variants once.
    prepared = {}
    for (tag_id, reader_id), vecs in sorted(streams.items()):
        epochs = sorted(vecs)
        n_ant = antenna_counts.get(reader_id) or max(
            v.antenna_count for v in vecs.values()
        )
        filtered = _filter_streams(epochs, vecs, n_ant, filt_params)
        prepared[(tag_id, reader_id)] = (epochs, vecs, filtered, n_ant)

    rows = []
    for pc in pipelines:
        dist_errs: list[float] = []
        pos_err_by_te: dict[tuple[str, int], list[tuple]] = {}
        for (tag_id, reader_id), (epochs, vecs, filtered, n_ant) in prepared.items():
            if tag_id not in class_of:
                raise EvaluationError(f"sample tag {tag_id!r} not in scenario")
            model = model_for(tag_id)
            array = arrays[reader_id]
            cx, cy = array.centroid()
            cz = sum(a[2] for a in array.antennas) / array.antenna_count
            indices = pc.subset if pc.subset is not None else tuple(
                range(min(pc.antennas, n_ant))
            )
            selector = pc.technique in ("ssc", "scanc")
            post_filter = pc.filtered and (
                pc.filter_order == "post"
                or (pc.filter_order == "auto" and selector)
            )
            pre_filter = pc.filtered and not post_filter

            sub_vectors = {}
            raw_sub = {}
            for e in epochs:
                raw = _subset_vector(vecs[e].readings, indices, e * epoch_ms)
                raw_sub[e] = raw
                readings = filtered[e] if pre_filter else vecs[e].readings
                sub = _subset_vector(readings, indices, e * epoch_ms)
                if sub.present():
                    sub_vectors[e] = sub
            if not sub_vectors:
                continue

            threshold = None
            if selector:
                try:
                    threshold = calibrate_threshold(
                        [v for v in raw_sub.values() if v.present()], cfg
                    )
                except CalibrationError:
                    threshold = cfg.threshold
            combiner = Combiner(pc.technique, cfg, threshold=threshold)

            combined_at: dict[int, float] = {}
            state = KalmanState()
            for e in range(epochs[0], epochs[-1] + 1):
                sub = sub_vectors.get(e)
                combined = combiner.combine(sub) if sub is not None else None
                if combined is None:
                    if post_filter:
                        state = advance(state, filt_params)
                    continue
                if post_filter:
                    state = step(state, filt_params, combined)
                    combined = state.mu
                combined_at[e] = combined

            for e in sorted(combined_at):
                pos = truth_at.get((tag_id, e))
                if pos is None:
                    continue
                true_d = math.sqrt((pos[0] - cx) ** 2 + (pos[1] - cy) ** 2 + cz * cz)
                if max_true_distance is not None and true_d > max_true_distance:
                    continue
                dist_errs.append(abs(invert_distance(model, combined_at[e]) - true_d))
                # Collect per-antenna anchors for the position fix.
                anchors = pos_err_by_te.setdefault((tag_id, e), [])
                per_ant = (filtered[e] if pc.filtered else vecs[e].readings)
                for a in indices:
                    if a < min(len(per_ant), array.antenna_count) and per_ant[a] is not None:
                        anchors.append((
                            array.antennas[a],
                            invert_distance(model, per_ant[a]),
                            pos,
                        ))

        pos_errs: list[float] = []
        for (tag_id, e), entries in pos_err_by_te.items():
            anchors = [a for a, _, _ in entries]
            dists = [d for _, d, _ in entries]
            pos = entries[0][2]
            fix = solve_ranges(anchors, dists, epoch=e * epoch_ms)
            if fix is not None and not fix.degenerate:
                pos_errs.append(math.hypot(fix.x - pos[0], fix.y - pos[1]))

        rows.append(EvalRow(
            technique=pc.technique,
            antennas=pc.antennas,
            filtered=pc.filtered,
            mean_distance_error_m=(
                sum(dist_errs) / len(dist_errs) if dist_errs else math.nan
            ),
            mean_position_error_m=(
                sum(pos_errs) / len(pos_errs) if pos_errs else math.nan
            ),
            distance_samples=len(dist_errs),
            position_samples=len(pos_errs),
            subset=pc.subset,
        ))
    return rows


def write_report(rows: Iterable[EvalRow], path: str | Path) -> None:
    """Comma-separated error table: technique, antennas, filtered, mean_error_m."""
    lines = ["technique,antennas,filtered,mean_error_m"]
    for r in rows:
        lines.append(
            f"{r.technique},{r.antennas},{'yes' if r.filtered else 'no'},"
            f"{r.mean_distance_error_m:.4f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
