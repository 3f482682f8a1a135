"""Spatial diversity over one epoch's multi-antenna RSS vector.

Five techniques: two combiners that merge all present readings (equal-gain
and quality-weighted) and three selectors that pick a single antenna
(best-pick, blind switch-and-stay, threshold scan). Antennas that produced
no reading in the epoch are simply absent; combiners operate on the present
subset and the switching selectors treat an absent current antenna as below
threshold.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

TECHNIQUES = ("egc", "mrc", "sc", "ssc", "scanc")

DEFAULT_RSS_MIN = -90.0  # receiver sensitivity floor, dBm


class CombinerConfigError(ValueError):
    """A reading violated the combiner configuration (e.g. at or below rss_min)."""


class CalibrationError(ValueError):
    """Not enough data to calibrate a switching threshold."""


@dataclass(frozen=True)
class RssVector:
    """Per-antenna readings for one tag in one epoch; None marks no reading."""

    epoch: int
    readings: tuple[Optional[float], ...]

    @property
    def antenna_count(self) -> int:
        return len(self.readings)

    def present(self) -> list[tuple[int, float]]:
        return [(i, r) for i, r in enumerate(self.readings) if r is not None]


@dataclass(frozen=True)
class CombinerConfig:
    """Shared combiner settings.

    rss_min must sit strictly below any physically possible reading; it is
    the weighting floor of the quality-weighted combiner. calibration_k
    scales the dispersion term when deriving a switching threshold.
    """

    rss_min: float = DEFAULT_RSS_MIN
    threshold: float = -75.0
    calibration_k: float = 1.0


@dataclass(frozen=True)
class SwitchState:
    """Current antenna and threshold of a switching selector."""

    current_antenna: int = 0
    threshold: float = -75.0


def egc(v: RssVector) -> Optional[float]:
    """Equal-gain combining: arithmetic mean of the present readings."""
    present = [r for _, r in v.present()]
    if not present:
        return None
    return sum(present) / len(present)


def mrc(v: RssVector, cfg: CombinerConfig) -> Optional[float]:
    """Quality-weighted combining.

    Each reading is weighted by its margin above cfg.rss_min, normalized so
    the weights sum to one. Readings at or below the floor are a
    configuration error rather than a signal condition.
    """
    present = [r for _, r in v.present()]
    if not present:
        return None
    for r in present:
        if r <= cfg.rss_min:
            raise CombinerConfigError(
                f"reading {r} dBm at or below rss_min {cfg.rss_min} dBm"
            )
    total = sum(r - cfg.rss_min for r in present)
    return sum((r - cfg.rss_min) / total * r for r in present)


def sc(v: RssVector) -> Optional[tuple[float, int]]:
    """Selection combining: the strongest present reading and its antenna.

    Ties break toward the lowest antenna index.
    """
    present = v.present()
    if not present:
        return None
    best_i, best_r = present[0]
    for i, r in present[1:]:
        if r > best_r:
            best_i, best_r = i, r
    return best_r, best_i


def ssc(state: SwitchState, v: RssVector) -> tuple[Optional[float], SwitchState]:
    """Switch-and-stay: keep the current antenna while it stays at or above
    the threshold; otherwise hop to the next antenna blindly and emit
    whatever it reads, even if that is worse or absent."""
    n = v.antenna_count
    cur = state.current_antenna
    reading = v.readings[cur] if cur < n else None
    if reading is not None and reading >= state.threshold:
        return reading, state
    nxt = (cur + 1) % n
    return v.readings[nxt], replace(state, current_antenna=nxt)


def scanc(state: SwitchState, v: RssVector) -> tuple[Optional[float], SwitchState]:
    """Scan combining: like switch-and-stay, but the hop searches the
    antennas in cyclic order for one at or above the threshold. When no
    antenna qualifies the selector stays put and emits the current
    antenna's reading, absent or not."""
    n = v.antenna_count
    cur = state.current_antenna
    reading = v.readings[cur] if cur < n else None
    if reading is not None and reading >= state.threshold:
        return reading, state
    for k in range(1, n):
        cand = (cur + k) % n
        r = v.readings[cand]
        if r is not None and r >= state.threshold:
            return r, replace(state, current_antenna=cand)
    return reading, state


def calibrate_threshold(window: Sequence[RssVector], cfg: CombinerConfig) -> float:
    """Switching threshold from a calibration window: mean minus
    calibration_k population standard deviations of all present readings."""
    values = [r for v in window for _, r in v.present()]
    if len(values) < 2:
        raise CalibrationError(
            f"threshold calibration needs >= 2 readings, got {len(values)}"
        )
    return statistics.fmean(values) - cfg.calibration_k * statistics.pstdev(values)


class Combiner:
    """Stateful dispatcher applying one named technique to a vector stream.

    The switching selectors carry per-stream state, so use one Combiner per
    tag stream. The stateless techniques ignore the carried state.
    """

    def __init__(self, technique: str, cfg: CombinerConfig | None = None,
                 threshold: float | None = None):
        if technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {technique!r}, expected one of {TECHNIQUES}")
        self.technique = technique
        self.cfg = cfg or CombinerConfig()
        self._switch = SwitchState(
            current_antenna=0,
            threshold=self.cfg.threshold if threshold is None else threshold,
        )

    def combine(self, v: RssVector) -> Optional[float]:
        if self.technique == "egc":
            return egc(v)
        if self.technique == "mrc":
            return mrc(v, self.cfg)
        if self.technique == "sc":
            picked = sc(v)
            return None if picked is None else picked[0]
        if self.technique == "ssc":
            out, self._switch = ssc(self._switch, v)
            return out
        out, self._switch = scanc(self._switch, v)
        return out
