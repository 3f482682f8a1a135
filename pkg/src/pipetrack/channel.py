"""Log-distance path-loss channel model.

Forward prediction of RSS from distance, the exact inverse (ranging),
least-squares fitting of the model parameters from measured
(distance, RSS) pairs, and stochastic sampling with log-normal shadowing.
All power values are dBm, all distances meters.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    """Raised when a fit is attempted on fewer than two distinct distances."""


@dataclass(frozen=True)
class PathLossModel:
    """Parameters of the log-distance propagation model.

    rss_d0: signal strength at the reference distance (dBm)
    n: path-loss exponent, > 0
    sigma: shadowing standard deviation (dB), >= 0
    d0: reference distance (m), > 0
    """

    rss_d0: float
    n: float
    sigma: float = 0.0
    d0: float = 1.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"path-loss exponent must be > 0, got {self.n}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.d0 > 0:
            raise ValueError(f"reference distance must be > 0, got {self.d0}")


@dataclass(frozen=True)
class RangingSample:
    """One empirical (distance, RSS) measurement."""

    distance: float
    rss: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be > 0, got {self.distance}")


def predict_rss(model: PathLossModel, d: float) -> float:
    """Mean RSS at distance d, without the shadowing term.

    Strictly decreasing in d. Raises ValueError for non-positive d.
    """
    if not d > 0:
        raise ValueError(f"distance must be > 0, got {d}")
    return model.rss_d0 - 10.0 * model.n * math.log10(d / model.d0)


def invert_distance(model: PathLossModel, rss: float) -> float:
    """Distance at which the model predicts the given RSS.

    Exact inverse of predict_rss; total over all real rss values.
    """
    return model.d0 * 10.0 ** ((model.rss_d0 - rss) / (10.0 * model.n))


def sample_rss(model: PathLossModel, d: float, rng: random.Random) -> float:
    """One noisy RSS draw at distance d: predicted mean plus N(0, sigma)."""
    mean = predict_rss(model, d)
    if model.sigma == 0.0:
        return mean
    return mean + rng.gauss(0.0, model.sigma)


def fit_model(samples: Sequence[RangingSample], d0: float = 1.0) -> PathLossModel:
    """Least-squares fit of (rss_d0, n) on x = log10(d / d0).

    The regression minimizes the mean squared difference between measured
    RSS and the model prediction. sigma is set to the residual standard
    deviation (divisor N - 2). Requires samples at two or more distinct
    distances.
    """
    if not d0 > 0:
        raise ValueError(f"reference distance must be > 0, got {d0}")
    xs = [math.log10(s.distance / d0) for s in samples]
    ys = [s.rss for s in samples]
    if len(set(s.distance for s in samples)) < 2:
        raise InsufficientDataError(
            f"need samples at >= 2 distinct distances, got {len(set(xs))}"
        )
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    # RSS(d) = rss_d0 - 10 n log10(d/d0)  =>  slope = -10 n
    exponent = -slope / 10.0
    if not exponent > 0:
        raise ValueError(
            f"fitted path-loss exponent is non-positive ({exponent:.4f}); "
            "samples do not decay with distance"
        )
    residuals = [y - (intercept + slope * x) for x, y in zip(xs, ys)]
    if n > 2:
        sigma = math.sqrt(sum(r * r for r in residuals) / (n - 2))
    else:
        sigma = 0.0
    return PathLossModel(rss_d0=intercept, n=exponent, sigma=sigma, d0=d0)


def residual_mse(model: PathLossModel, samples: Iterable[RangingSample]) -> float:
    """Mean squared prediction error of a model on a set of samples."""
    errs = [(s.rss - predict_rss(model, s.distance)) ** 2 for s in samples]
    if not errs:
        raise InsufficientDataError("no samples")
    return sum(errs) / len(errs)


def save_model(model: PathLossModel, path: str | Path) -> None:
    """Write a model as a flat key-value JSON record."""
    record = {
        "rss_d0": model.rss_d0,
        "n": model.n,
        "sigma": model.sigma,
        "d0": model.d0,
    }
    Path(path).write_text(json.dumps(record, indent=2) + "\n")


def load_model(path: str | Path) -> PathLossModel:
    """Read a model from the flat key-value record written by save_model."""
    record = json.loads(Path(path).read_text())
    return PathLossModel(
        rss_d0=float(record["rss_d0"]),
        n=float(record["n"]),
        sigma=float(record.get("sigma", 0.0)),
        d0=float(record.get("d0", 1.0)),
    )


def load_ranging_csv(path: str | Path) -> list[RangingSample]:
    """Read (distance_m, rss_dbm) pairs from comma-separated text.

    Lines that do not parse as two numbers (headers, blanks, corrupt rows)
    are skipped with a warning count.
    """
    samples: list[RangingSample] = []
    skipped = 0
    for i, line in enumerate(Path(path).read_text().splitlines()):
        parts = [p.strip() for p in line.strip().split(",")]
        if i == 0 and parts[:1] == ["distance_m"]:
            continue
        if len(parts) != 2:
            if line.strip():
                skipped += 1
            continue
        try:
            samples.append(RangingSample(float(parts[0]), float(parts[1])))
        except ValueError:
            skipped += 1
    if skipped:
        log.warning("skipped %d unparseable line(s) in %s", skipped, path)
    return samples


def save_ranging_csv(samples: Iterable[RangingSample], path: str | Path) -> None:
    lines = ["distance_m,rss_dbm"]
    lines += [f"{s.distance:.10g},{s.rss:.10g}" for s in samples]
    Path(path).write_text("\n".join(lines) + "\n")
