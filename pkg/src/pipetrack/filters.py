"""Scalar Kalman filter for per-antenna RSS streams.

The underlying signal model is a constant: the asset is assumed stationary
between consecutive readings, so the state transition is the identity and
both the process and the observation are one-dimensional. Operations are
pure state transitions; one state instance belongs to exactly one
tag-antenna stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

DEFAULT_PROCESS_NOISE = 0.008  # dB^2 per step
DEFAULT_MEASUREMENT_NOISE = 4.0  # dB^2
DEFAULT_INITIAL_VARIANCE = 10.0  # dB^2


class UninitializedStateError(RuntimeError):
    """predict() was called before the state saw its first observation."""


@dataclass(frozen=True)
class KalmanParams:
    """Noise configuration: process noise R, measurement noise Q."""

    process_noise: float = DEFAULT_PROCESS_NOISE
    measurement_noise: float = DEFAULT_MEASUREMENT_NOISE
    initial_variance: float = DEFAULT_INITIAL_VARIANCE

    def __post_init__(self):
        if self.process_noise < 0:
            raise ValueError("process noise must be >= 0")
        if not self.measurement_noise > 0:
            raise ValueError("measurement noise must be > 0")
        if not self.initial_variance > 0:
            raise ValueError("initial variance must be > 0")


@dataclass(frozen=True)
class KalmanState:
    """Current estimate and its variance for one RSS stream."""

    mu: float = 0.0
    variance: float = 0.0
    initialized: bool = False
    rejected: int = 0


def predict(state: KalmanState, params: KalmanParams) -> KalmanState:
    """Time update: the estimate is carried over, uncertainty grows by R."""
    if not state.initialized:
        raise UninitializedStateError("predict on uninitialized Kalman state")
    return replace(state, variance=state.variance + params.process_noise)


def update(state: KalmanState, params: KalmanParams, z: float) -> KalmanState:
    """Measurement update with observation z (dBm).

    The first observation initializes the estimate directly. Non-finite
    observations are rejected: the state is returned unchanged apart from
    the rejection counter.
    """
    if not math.isfinite(z):
        return replace(state, rejected=state.rejected + 1)
    if not state.initialized:
        return KalmanState(mu=z, variance=params.initial_variance, initialized=True,
                           rejected=state.rejected)
    gain = state.variance / (state.variance + params.measurement_noise)
    mu = state.mu + gain * (z - state.mu)
    variance = (1.0 - gain) * state.variance
    return replace(state, mu=mu, variance=variance)


def step(state: KalmanState, params: KalmanParams, z: float) -> KalmanState:
    """One predict+update cycle; initializes on the first observation."""
    if state.initialized:
        state = predict(state, params)
    return update(state, params, z)


def advance(state: KalmanState, params: KalmanParams) -> KalmanState:
    """Time update for an epoch with no observation; no-op before init."""
    if not state.initialized:
        return state
    return predict(state, params)


def filter_series(params: KalmanParams, series: Sequence[float]) -> list[float]:
    """Filter an ordered RSS series, returning the post-update estimate
    after each observation. An empty series yields an empty list."""
    out: list[float] = []
    state = KalmanState()
    for z in series:
        state = step(state, params, z)
        out.append(state.mu)
    return out


class KalmanBank:
    """Independent filters keyed by stream id (e.g. (tag, reader, antenna)).

    Convenience owner for pipelines that smooth many streams with shared
    noise parameters.
    """

    def __init__(self, params: KalmanParams | None = None):
        self.params = params or KalmanParams()
        self._states: dict = {}

    def step(self, key, z: float) -> float:
        state = step(self._states.get(key, KalmanState()), self.params, z)
        self._states[key] = state
        return state.mu

    def advance(self, keys: Iterable | None = None) -> None:
        """Grow uncertainty for streams that produced no reading this epoch."""
        for key in list(self._states) if keys is None else keys:
            if key in self._states:
                self._states[key] = advance(self._states[key], self.params)

    def state(self, key) -> KalmanState:
        return self._states.get(key, KalmanState())
