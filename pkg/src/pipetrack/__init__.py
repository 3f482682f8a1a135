"""RSS-based localization and tracking for tagged assets on an industrial floor."""

__version__ = "0.1.0"

from pipetrack.channel import PathLossModel, RangingSample
from pipetrack.diversity import CombinerConfig, RssVector, SwitchState
from pipetrack.filters import KalmanParams, KalmanState
from pipetrack.ingest import RssSample, SampleLog
from pipetrack.locate import AntennaArray, FloorMap, Position, Zone

__all__ = [
    "PathLossModel",
    "RangingSample",
    "RssVector",
    "CombinerConfig",
    "SwitchState",
    "KalmanParams",
    "KalmanState",
    "RssSample",
    "SampleLog",
    "FloorMap",
    "Zone",
    "AntennaArray",
    "Position",
]
