"""FastAPI application wrapping the tracking engine.

HTTP endpoints serve registry queries and zone summaries; a websocket
pushes live position, cluster, and event messages to any number of
dashboard clients; a raw TCP listener ingests newline-delimited sample
records from readers or the replay tool.
"""

from __future__ import annotations

import asyncio
import collections
import json
import logging
import math
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from pipetrack.ingest import RssSample, SampleLog, replay as replay_stream
from pipetrack.locate import OUTSIDE
from pipetrack.service.config import ServiceConfig
from pipetrack.service.schemas import (
    DwellRow,
    EventOut,
    HealthResponse,
    PipeIn,
    PipeOut,
    PositionOut,
    ZoneOut,
    ZonesResponse,
)
from pipetrack.tracking.engine import TrackerEngine
from pipetrack.tracking.models import Event, PipeRecord, RecordValidationError
from pipetrack.tracking.store import TrackingStore

log = logging.getLogger(__name__)

WS_QUEUE_LIMIT = 512


class StreamHub:
    """Fan-out of engine outputs to websocket clients.

    Engine callbacks arrive on feeder threads; messages hop onto the event
    loop and into one bounded queue per client. A slow client loses oldest
    messages rather than stalling the pipeline.
    """

    def __init__(self):
        self._clients: set[asyncio.Queue] = set()
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._lock = threading.Lock()

    def attach_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    def register(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=WS_QUEUE_LIMIT)
        with self._lock:
            self._clients.add(q)
        return q

    def unregister(self, q: asyncio.Queue) -> None:
        with self._lock:
            self._clients.discard(q)

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def publish(self, message: dict) -> None:
        loop = self._loop
        if loop is None or loop.is_closed():
            return
        loop.call_soon_threadsafe(self._deliver, message)

    def _deliver(self, message: dict) -> None:
        with self._lock:
            clients = list(self._clients)
        for q in clients:
            if q.full():
                try:
                    q.get_nowait()
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(message)


def _pipe_out(rec: PipeRecord) -> PipeOut:
    pos = rec.last_position
    return PipeOut(
        pipe_id=rec.pipe_id, material=rec.material, diameter_mm=rec.diameter_mm,
        description=rec.description, status=rec.status, registered=rec.registered,
        current_zone=rec.current_zone,
        position=PositionOut(
            x=pos.x, y=pos.y, residual=pos.residual, t=pos.epoch,
            degenerate=pos.degenerate,
        ) if pos else None,
    )


def _event_message(event: Event) -> dict:
    return {"type": "event", **event.to_dict()}


def create_app(config: ServiceConfig, static_dir: str | Path | None = None) -> FastAPI:
    config.validate()
    store = TrackingStore(config.db_path)
    engine = TrackerEngine(
        floor_map=config.floor_map,
        model=config.model,
        store=store,
        technique=config.technique,
        epoch_ms=config.epoch_ms,
        hysteresis_m=config.hysteresis_m,
        filter_params=config.filter_params,
        rules=config.rules,
        staleness_ms=config.staleness_ms,
        cluster_radius_m=config.cluster_radius_m,
    )
    for rec in config.pipe_records:
        engine.upsert_pipe(rec)

    hub = StreamHub()
    engine.on_event.append(lambda ev: hub.publish(_event_message(ev)))
    engine.on_positions.append(
        lambda rows: hub.publish({"type": "positions", "positions": rows})
    )
    engine.on_clusters.append(
        lambda clusters, t: hub.publish({
            "type": "clusters", "t": t,
            "clusters": [
                {"centroid": list(c.centroid), "members": c.members}
                for c in clusters
            ],
        })
    )

    started = time.monotonic()
    rate_window: collections.deque = collections.deque(maxlen=64)
    stop_replay = threading.Event()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        hub.attach_loop(asyncio.get_running_loop())
        tcp_server = None
        if config.tcp_port:
            tcp_server = await asyncio.start_server(
                _tcp_reader, host="0.0.0.0", port=config.tcp_port
            )
            log.info("sample feed listening on tcp:%d", config.tcp_port)
        replay_thread = None
        if config.replay_log is not None:
            replay_thread = threading.Thread(
                target=_replay_worker, name="replay-feed", daemon=True
            )
            replay_thread.start()
        try:
            yield
        finally:
            stop_replay.set()
            if tcp_server is not None:
                tcp_server.close()
                await tcp_server.wait_closed()

    async def _tcp_reader(reader: asyncio.StreamReader,
                          writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        log.info("reader feed connected: %s", peer)
        bad = 0
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                text = line.decode("utf-8", errors="replace").strip()
                if not text:
                    continue
                try:
                    engine.feed(RssSample.from_line(text))
                except (ValueError, KeyError, json.JSONDecodeError):
                    bad += 1
        finally:
            if bad:
                log.warning("feed %s: %d malformed line(s) dropped", peer, bad)
            engine.flush()
            writer.close()

    def _replay_worker() -> None:
        sample_log = SampleLog(config.replay_log)
        try:
            for sample in replay_stream(sample_log, speed=config.replay_speed):
                if stop_replay.is_set():
                    return
                engine.feed(sample)
        finally:
            engine.flush()

    app = FastAPI(title="pipetrack", lifespan=lifespan)
    app.state.engine = engine
    app.state.hub = hub
    app.state.config = config

    @app.get("/health", response_model=HealthResponse)
    def health():
        stats = engine.stats()
        now = time.monotonic()
        rate_window.append((now, stats["samples_seen"]))
        rate = 0.0
        for t0, n0 in rate_window:
            if now - t0 <= 10.0:
                rate = (stats["samples_seen"] - n0) / max(now - t0, 1e-9)
                break
        return HealthResponse(
            status="ok",
            samples_seen=stats["samples_seen"],
            samples_per_s=rate,
            tracked_pipes=stats["tracked_pipes"],
            registered_pipes=stats["registered_pipes"],
            events=stats["events"],
            late_dropped=stats["late_dropped"],
            stream_clients=hub.client_count,
            uptime_s=now - started,
        )

    @app.get("/pipes", response_model=list[PipeOut])
    def list_pipes(
        id: Optional[str] = Query(default=None),
        zone: Optional[str] = Query(default=None),
        material: Optional[str] = Query(default=None),
    ):
        records = engine.list_pipes(pipe_id_contains=id, zone=zone, material=material)
        return [_pipe_out(r) for r in records]

    @app.post("/pipes", response_model=PipeOut)
    def upsert_pipe(pipe: PipeIn):
        rec = PipeRecord(
            pipe_id=pipe.pipe_id, material=pipe.material,
            diameter_mm=pipe.diameter_mm, description=pipe.description,
            status=pipe.status,
        )
        try:
            engine.upsert_pipe(rec)
        except RecordValidationError as exc:
            raise HTTPException(status_code=422, detail={"fields": exc.fields})
        return _pipe_out(engine.get_pipe(pipe.pipe_id))

    @app.get("/pipes/{pipe_id}", response_model=PipeOut)
    def get_pipe(pipe_id: str):
        try:
            return _pipe_out(engine.get_pipe(pipe_id))
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown pipe {pipe_id!r}")

    @app.get("/pipes/{pipe_id}/dwell", response_model=list[DwellRow])
    def pipe_dwell(pipe_id: str, start: int = 0, end: Optional[int] = None):
        try:
            rows = engine.dwell_stats(pipe_id=pipe_id, t_start=start, t_end=end)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown pipe {pipe_id!r}")
        return [DwellRow(zone=z, total_ms=total, visits=v) for z, total, v in rows]

    @app.get("/zones", response_model=ZonesResponse)
    def zones():
        fm = engine.floor_map
        stats = engine.stats()
        zone_rows = [
            ZoneOut(
                id=z.zone_id, name=z.name,
                polygon=[(x, y) for x, y in z.polygon],
                occupancy=engine.occupancy(z.zone_id),
            )
            for z in fm.zones
        ]
        return ZonesResponse(
            width=fm.width, height=fm.height, zones=zone_rows,
            outside=engine.occupancy(OUTSIDE),
            untracked=stats["registered_pipes"] - stats["tracked_pipes"],
        )

    @app.get("/events", response_model=list[EventOut])
    def events(pipe_id: Optional[str] = None, since_id: int = 0, limit: int = 200):
        rows = engine.store.list_events(pipe_id=pipe_id, since_id=since_id,
                                        limit=limit)
        return [EventOut(**e.to_dict()) for e in rows]

    @app.websocket("/ws/live")
    async def live(ws: WebSocket):
        await ws.accept()
        q = hub.register()
        try:
            fm = engine.floor_map
            await ws.send_json({
                "type": "snapshot",
                "map": {
                    "width": fm.width, "height": fm.height,
                    "zones": [
                        {"id": z.zone_id, "name": z.name,
                         "polygon": [list(p) for p in z.polygon]}
                        for z in fm.zones
                    ],
                },
                "pipes": [
                    json.loads(_pipe_out(r).model_dump_json())
                    for r in engine.list_pipes()
                ],
            })
            while True:
                message = await q.get()
                await ws.send_json(message)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            hub.unregister(q)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
