from pipetrack.tracking.engine import Cluster, TrackerEngine, cluster_positions
from pipetrack.tracking.models import Event, PipeRecord, Rule
from pipetrack.tracking.store import TrackingStore

__all__ = [
    "TrackerEngine",
    "TrackingStore",
    "PipeRecord",
    "Rule",
    "Event",
    "Cluster",
    "cluster_positions",
]
