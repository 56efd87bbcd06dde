"""HTTP API: server-sent events, session control, records, images.

Endpoints:
  GET  /events                server-push stream (SSE), one JSON object per event
  POST /control               apply a control command to the active session
  POST /sessions              start a MIDI-file replay session
  GET  /sessions              list sessions
  GET  /sessions/{id}/export  canonical session record (byte-stable JSON)
  GET  /images/{digest}.png   stored image by content digest

CORS is open: the studio UI is served separately during development.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response, StreamingResponse

from .session import EVENT_SCHEMA, ConfigError, SessionConfig, SessionEngine
from .smf import FileReplaySource

_KEEPALIVE_S = 0.5


class EventBus:
    """Fan-out of engine events to any number of SSE subscribers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def publish(self, event: dict) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(event)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)


class ServerState:
    """All sessions this server has started, plus the shared event bus."""

    def __init__(self, config: SessionConfig | None = None) -> None:
        self.config = config or SessionConfig()
        self.bus = EventBus()
        self._lock = threading.Lock()
        self.engines: dict[str, SessionEngine] = {}
        self.active_id: str | None = None

    def start_replay(
        self,
        midi_file: str | Path,
        speed: float | None = None,
        config: SessionConfig | None = None,
    ) -> SessionEngine:
        """Start a replay session in a background thread.

        With a speed factor the replay is paced in wall time (so events
        arrive progressively, speed× faster than real time); without one it
        runs flat out.
        """
        config = config or self.config
        engine = SessionEngine(config, emit=self.bus.publish)
        paced = speed is not None
        source = FileReplaySource(
            midi_file, realtime=paced, speed=speed if paced else 1.0
        )
        with self._lock:
            self.engines[engine.session_id] = engine
            self.active_id = engine.session_id

        def run() -> None:
            if paced:
                engine.run_realtime(source)
            else:
                for _ in engine.run_replay(source):
                    pass

        thread = threading.Thread(target=run, daemon=True)
        thread.start()
        return engine

    def active_engine(self) -> SessionEngine | None:
        with self._lock:
            if self.active_id is None:
                return None
            return self.engines.get(self.active_id)

    def find_image(self, digest: str) -> Path | None:
        with self._lock:
            engines = list(self.engines.values())
        for engine in engines:
            if engine.store.has(digest):
                return engine.store.path(digest)
        return None


def _sse_line(event: dict) -> str:
    return f"data: {json.dumps(event, separators=(',', ':'))}\n\n"


def create_app(state: ServerState | None = None) -> FastAPI:
    state = state or ServerState()
    app = FastAPI(title="tonecanvas", docs_url=None, redoc_url=None)
    app.state.tonecanvas = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/events")
    def events(request: Request) -> StreamingResponse:
        q = state.bus.subscribe()

        def stream():
            active = state.active_engine()
            hello = {
                "type": "hello",
                "schema": EVENT_SCHEMA,
                "session_id": active.session_id if active else None,
                "server_time_ms": int(time.time() * 1000),
            }
            try:
                yield _sse_line(hello)
                while True:
                    try:
                        event = q.get(timeout=_KEEPALIVE_S)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield _sse_line(event)
            finally:
                state.bus.unsubscribe(q)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.post("/control")
    async def control(request: Request) -> JSONResponse:
        engine = state.active_engine()
        if engine is None:
            return JSONResponse(
                {"error": "no active session"}, status_code=409
            )
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        try:
            ack = engine.control(payload)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse(ack)

    @app.post("/sessions")
    async def start_session(request: Request) -> JSONResponse:
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        midi_file = payload.get("midi_file")
        if not midi_file or not Path(midi_file).is_file():
            return JSONResponse(
                {"error": f"midi_file not found: {midi_file!r}"}, status_code=400
            )
        speed = payload.get("speed")
        if speed is not None:
            speed = float(speed)
            if speed <= 0:
                return JSONResponse(
                    {"error": "speed must be positive"}, status_code=400
                )
        config = state.config
        if "config" in payload:
            try:
                config = SessionConfig.from_dict(payload["config"])
            except ConfigError as exc:
                return JSONResponse({"error": str(exc)}, status_code=400)
        engine = state.start_replay(midi_file, speed=speed, config=config)
        return JSONResponse(
            {"session_id": engine.session_id, "state": engine.state_snapshot()},
            status_code=201,
        )

    @app.get("/sessions")
    def list_sessions() -> JSONResponse:
        with state._lock:
            engines = list(state.engines.values())
            active = state.active_id
        return JSONResponse(
            {
                "sessions": [
                    {
                        "session_id": e.session_id,
                        "active": e.session_id == active,
                        "finished": e.finished,
                        "clips": len(e.record.entries),
                    }
                    for e in engines
                ]
            }
        )

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str) -> Response:
        engine = state.engines.get(session_id)
        if engine is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return Response(
            engine.record.canonical_json(), media_type="application/json"
        )

    @app.get("/images/{digest}.png")
    def image(digest: str) -> Response:
        path = state.find_image(digest)
        if path is None:
            return JSONResponse({"error": "unknown image"}, status_code=404)
        return FileResponse(path, media_type="image/png")

    return app


def serve(config: SessionConfig) -> None:
    """Bind the API server and block until interrupted."""
    import uvicorn

    state = ServerState(config)
    app = create_app(state)
    uvicorn.run(
        app, host=config.listen_host, port=config.listen_port, log_level="warning"
    )
