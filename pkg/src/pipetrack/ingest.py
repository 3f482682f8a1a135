"""Sample acquisition and collection: the append-only RSS log, replay, and
epoch windowing from raw samples to per-antenna vectors.

Log records are one JSON object per line with normative field names:
{"t": <int ms>, "tag": "<id>", "reader": "<id>", "ant": <int>, "rss": <float dbm>}
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from pipetrack.diversity import RssVector

log = logging.getLogger(__name__)

REORDER_WINDOW_EPOCHS = 2


class ReplayError(RuntimeError):
    """The log could not be read back for replay."""


@dataclass(frozen=True)
class RssSample:
    """One reading of one tag by one reader antenna."""

    t: int
    tag_id: str
    reader_id: str
    antenna: int
    rss: float

    def __post_init__(self):
        if not math.isfinite(self.rss):
            raise ValueError(f"non-finite rss {self.rss}")
        if self.antenna < 0:
            raise ValueError(f"negative antenna index {self.antenna}")

    def to_line(self) -> str:
        return json.dumps(
            {"t": int(self.t), "tag": self.tag_id, "reader": self.reader_id,
             "ant": int(self.antenna), "rss": self.rss},
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> "RssSample":
        doc = json.loads(line)
        return cls(
            t=int(doc["t"]), tag_id=str(doc["tag"]), reader_id=str(doc["reader"]),
            antenna=int(doc["ant"]), rss=float(doc["rss"]),
        )


class SampleLog:
    """Append-only line-delimited sample store.

    One writer, any number of concurrent readers. Reads tolerate corrupt
    lines (including a record truncated by a crash), skipping them with a
    warning so the rest of the log stays usable.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.skipped = 0

    def append(self, sample: RssSample) -> None:
        line = sample.to_line() + "\n"
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()

    def append_many(self, samples: Iterable[RssSample]) -> int:
        count = 0
        with self.path.open("a", encoding="utf-8") as fh:
            for s in samples:
                fh.write(s.to_line() + "\n")
                count += 1
            fh.flush()
        return count

    def scan(self) -> Iterator[RssSample]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield RssSample.from_line(line)
                except (ValueError, KeyError, json.JSONDecodeError):
                    self.skipped += 1
                    log.warning("skipping malformed record %s:%d", self.path, lineno)

    def count(self) -> int:
        return sum(1 for _ in self.scan())


def replay(
    log_store: SampleLog,
    speed: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[RssSample]:
    """Yield the log's samples in stored order, pacing the gaps between
    consecutive timestamps by 1/speed. Infinite speed replays as fast as
    possible."""
    if not speed > 0:
        raise ValueError(f"speed must be > 0, got {speed}")
    if not log_store.path.exists():
        raise ReplayError(f"no log at {log_store.path}")
    paced = math.isfinite(speed)
    prev_t: Optional[int] = None
    for sample in log_store.scan():
        if paced and prev_t is not None and sample.t > prev_t:
            sleep((sample.t - prev_t) / 1000.0 / speed)
        prev_t = sample.t
        yield sample


class EpochWindower:
    """Groups a time-ordered sample stream into tumbling epoch windows.

    A sample with timestamp t belongs to window t // epoch_ms; a sample
    exactly on a boundary opens the new window. Within a window the latest
    sample per antenna wins. Windows close when the stream's high-water
    mark passes the reorder allowance (2 epochs); later stragglers are
    dropped and counted.
    """

    def __init__(self, epoch_ms: int, antenna_counts: dict[str, int] | None = None):
        if not epoch_ms > 0:
            raise ValueError(f"epoch must be > 0 ms, got {epoch_ms}")
        self.epoch_ms = int(epoch_ms)
        self.antenna_counts = dict(antenna_counts or {})
        self.late_dropped = 0
        self._open: dict[int, dict[tuple[str, str], dict[int, tuple[int, float]]]] = {}
        self._watermark: Optional[int] = None  # below this index windows are closed

    def _vector(self, window: int, readings: dict[int, tuple[int, float]],
                reader_id: str) -> RssVector:
        n = self.antenna_counts.get(reader_id, 0)
        n = max(n, 1 + max(readings))
        slots: list[Optional[float]] = [None] * n
        for ant, (_, rss) in readings.items():
            slots[ant] = rss
        return RssVector(epoch=window * self.epoch_ms, readings=tuple(slots))

    def _close_through(self, last: int) -> list[tuple[str, str, RssVector]]:
        emitted = []
        for w in sorted(k for k in self._open if k <= last):
            groups = self._open.pop(w)
            for (tag_id, reader_id), readings in sorted(groups.items()):
                emitted.append((tag_id, reader_id, self._vector(w, readings, reader_id)))
        return emitted

    def push(self, sample: RssSample) -> list[tuple[str, str, RssVector]]:
        """Add one sample; returns any windows that closed as
        (tag_id, reader_id, vector) tuples in epoch order."""
        w = sample.t // self.epoch_ms
        if self._watermark is not None and w < self._watermark:
            self.late_dropped += 1
            return []
        slot = self._open.setdefault(w, {}).setdefault(
            (sample.tag_id, sample.reader_id), {}
        )
        prev = slot.get(sample.antenna)
        if prev is None or sample.t >= prev[0]:
            slot[sample.antenna] = (sample.t, sample.rss)
        new_mark = w - REORDER_WINDOW_EPOCHS
        if self._watermark is None or new_mark > self._watermark:
            self._watermark = new_mark
            return self._close_through(self._watermark - 1)
        return []

    def flush(self) -> list[tuple[str, str, RssVector]]:
        """Close every remaining window (end of stream)."""
        if not self._open:
            return []
        return self._close_through(max(self._open))


def window(
    stream: Iterable[RssSample],
    epoch_ms: int,
    antenna_counts: dict[str, int] | None = None,
) -> list[tuple[str, str, RssVector]]:
    """Batch windowing of a whole stream; see EpochWindower."""
    w = EpochWindower(epoch_ms, antenna_counts)
    out = []
    for s in stream:
        out.extend(w.push(s))
    out.extend(w.flush())
    return out
