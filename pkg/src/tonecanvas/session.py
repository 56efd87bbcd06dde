"""End-to-end session orchestration.

One engine per session owns all mutable session state and runs the loop:
close window → analyze → encode ABC → describe imagery (with visual
clauses appended to the image prompt) → generate → pacing → emit events.
Every stage outcome lands in an append-only session record persisted as
one directory (record JSON plus content-addressed PNGs).
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from .analysis import AnalysisParams, analyze
from .describe import (
    CONVERGENT_TEMPERATURE,
    DEFAULT_MODEL_ID,
    DIVERGENT_TEMPERATURE,
    FixtureBackend,
    GenerationMode,
    HttpChatBackend,
    MockBackend,
    describe_imagery,
)
from .imaging import (
    DEFAULT_IMAGE_SIZE,
    Cadence,
    FixedCadence,
    HttpImageBackend,
    ImageRequest,
    ImageStore,
    MockImageBackend,
    STYLE_TAGS,
    cadence_from_dict,
    generate,
    pacing_decide,
)
from .midi import Clip, IngestBuffer, MidiSource
from .notation import EncodeOptions, encode_clip, render_abc
from .theory import Meter
from .visuals import VisualParams, map_features, params_to_prompt_clauses

EVENT_SCHEMA = "tonecanvas.event/1"

# Keys whose values vary run to run (wall clock, measured latencies, ids);
# the canonical record form used for determinism hashing excludes them.
_VOLATILE_KEYS = frozenset(
    {
        "session_id",
        "created_at",
        "finished_at",
        "latency_ms",
        "llm_latency_ms",
        "gen_latency_ms",
        "t_wall",
    }
)


class ConfigError(ValueError):
    """The session configuration is malformed."""


@dataclass(frozen=True)
class SessionConfig:
    window_length_s: float = 10.0
    meter: str = "4/4"
    mode: str = "divergent"
    temperatures: dict = field(
        default_factory=lambda: {
            "divergent": DIVERGENT_TEMPERATURE,
            "convergent": CONVERGENT_TEMPERATURE,
        }
    )
    llm_backend: str = "mock"
    image_backend: str = "mock"
    model_id: str = DEFAULT_MODEL_ID
    llm_endpoint: str | None = None
    llm_api_key: str | None = None
    llm_timeout_s: float = 10.0
    llm_fallback: bool = True
    fixture_path: str | None = None
    image_endpoint: str | None = None
    image_size: tuple = DEFAULT_IMAGE_SIZE
    style: str = "photorealistic"
    cadence: dict = field(default_factory=lambda: {"kind": "fixed", "interval_s": 10.0})
    seed: int = 7
    smoothing_alpha: float = 0.5
    store_root: str = "sessions"
    listen_host: str = "127.0.0.1"
    listen_port: int = 8765

    def __post_init__(self) -> None:
        if self.window_length_s <= 0:
            raise ConfigError("window_length_s must be positive")
        try:
            Meter.parse(self.meter)
        except ValueError as error:
            raise ConfigError(str(error)) from error
        if self.mode not in ("divergent", "convergent"):
            raise ConfigError(f"unknown mode: {self.mode!r}")
        unknown_modes = set(self.temperatures) - {"divergent", "convergent"}
        if unknown_modes:
            raise ConfigError(f"unknown temperature keys: {sorted(unknown_modes)}")
        missing_modes = {"divergent", "convergent"} - set(self.temperatures)
        if missing_modes:
            raise ConfigError(f"temperatures must define: {sorted(missing_modes)}")
        for kind, temp in self.temperatures.items():
            if not 0.0 <= float(temp) <= 1.0:
                raise ConfigError(f"temperature for {kind} outside [0, 1]: {temp}")
        if self.llm_backend not in ("mock", "fixture", "live"):
            raise ConfigError(f"unknown llm backend: {self.llm_backend!r}")
        if self.image_backend not in ("mock", "live"):
            raise ConfigError(f"unknown image backend: {self.image_backend!r}")
        if self.llm_backend == "live" and not self.llm_endpoint:
            raise ConfigError("llm_backend 'live' requires llm_endpoint")
        if self.llm_backend == "fixture" and not self.fixture_path:
            raise ConfigError("llm_backend 'fixture' requires fixture_path")
        if self.image_backend == "live" and not self.image_endpoint:
            raise ConfigError("image_backend 'live' requires image_endpoint")
        if self.style not in STYLE_TAGS:
            raise ConfigError(f"unknown style: {self.style!r}")
        try:
            cadence_from_dict(self.cadence)
        except ValueError as error:
            raise ConfigError(str(error)) from error
        if not 0.0 < self.smoothing_alpha <= 1.0:
            raise ConfigError("smoothing_alpha must be in (0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(data)
        if "image_size" in merged:
            size = merged["image_size"]
            if not (isinstance(size, (list, tuple)) and len(size) == 2):
                raise ConfigError("image_size must be a [width, height] pair")
            merged["image_size"] = (int(size[0]), int(size[1]))
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SessionConfig":
        with open(path, "r", encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["image_size"] = list(self.image_size)
        return data


# ---------------------------------------------------------------------------
# Session record
# ---------------------------------------------------------------------------

def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {
            k: _strip_volatile(v) for k, v in obj.items() if k not in _VOLATILE_KEYS
        }
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


class SessionRecord:
    """Append-only log of everything a session did.

    ``canonical_dict`` strips wall-clock timestamps, measured latencies and
    the session id, leaving a form that is byte-stable across identical
    replays — the determinism hash is the SHA-256 of its sorted JSON.
    """

    def __init__(self, session_id: str, config: SessionConfig) -> None:
        self.session_id = session_id
        self.created_at = datetime.now(timezone.utc).isoformat()
        self.finished_at: str | None = None
        self.config = config.to_dict()
        self.entries: list[dict] = []
        self.controls: list[dict] = []

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "config": self.config,
            "entries": self.entries,
            "controls": self.controls,
        }

    def canonical_dict(self) -> dict:
        return _strip_volatile(self.to_dict())

    def canonical_json(self) -> str:
        return json.dumps(
            self.canonical_dict(), sort_keys=True, separators=(",", ":")
        )

    def determinism_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "record.json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class SessionEngine:
    """Owns one session's pipeline state and runs clips through it.

    All mutable state is guarded by one lock so control commands may arrive
    from another thread (the HTTP server); each clip is processed under a
    single consistent snapshot of mode/style/cadence/pause.
    """

    def __init__(
        self,
        config: SessionConfig,
        store_dir: str | Path | None = None,
        emit: Callable[[dict], None] | None = None,
        analysis_params: AnalysisParams | None = None,
    ) -> None:
        self.config = config
        self.session_id = uuid.uuid4().hex[:12]
        self.record = SessionRecord(self.session_id, config)
        self._emit = emit
        self._lock = threading.RLock()
        self._params = analysis_params or AnalysisParams()
        self._meter = Meter.parse(config.meter)
        self._encode_options = EncodeOptions()

        if store_dir is None:
            store_dir = Path(config.store_root) / self.session_id
        self.store_dir = Path(store_dir)
        self.store = ImageStore(self.store_dir / "images")

        self._llm = self._build_llm_backend()
        self._fallback = (
            MockBackend(dict(config.temperatures)) if config.llm_fallback else None
        )
        self._image_backend = (
            MockImageBackend()
            if config.image_backend == "mock"
            else HttpImageBackend(config.image_endpoint)
        )

        self.mode = GenerationMode(
            config.mode, float(config.temperatures[config.mode])
        )
        self.paused = False
        self.style = config.style
        self.cadence: Cadence = cadence_from_dict(config.cadence)
        self.visual_params = VisualParams()
        self._last_display_us: int | None = None
        self._advance_requested = False
        self._inflight = False
        self.finished = False

    def _build_llm_backend(self):
        config = self.config
        if config.llm_backend == "mock":
            return MockBackend(dict(config.temperatures))
        if config.llm_backend == "fixture":
            return FixtureBackend(config.fixture_path)
        return HttpChatBackend(
            config.llm_endpoint, config.llm_api_key, config.llm_timeout_s
        )

    # -- events ------------------------------------------------------------

    def _publish(self, event: dict) -> None:
        if self._emit is not None:
            self._emit(event)

    def state_snapshot(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                "mode": self.mode.kind,
                "temperature": self.mode.temperature,
                "paused": self.paused,
                "style": self.style,
                "cadence": self.cadence.to_dict(),
                "clips": len(self.record.entries),
                "finished": self.finished,
            }

    # -- control -----------------------------------------------------------

    def control(self, command: dict) -> dict:
        """Apply a control command; takes effect before the next clip."""
        if not isinstance(command, dict) or "command" not in command:
            raise ValueError("control payload needs a 'command' field")
        name = command["command"]
        with self._lock:
            if name == "set_mode":
                kind = command.get("kind")
                if kind not in ("divergent", "convergent"):
                    raise ValueError(f"unknown mode kind: {kind!r}")
                self.mode = GenerationMode(
                    kind, float(self.config.temperatures[kind])
                )
                self._publish(
                    {
                        "type": "mode",
                        "session_id": self.session_id,
                        "mode": self.mode.kind,
                        "temperature": self.mode.temperature,
                    }
                )
            elif name == "pause":
                self.paused = True
            elif name == "resume":
                self.paused = False
            elif name == "advance":
                self._advance_requested = True
            elif name == "set_style":
                style = command.get("style")
                if style not in STYLE_TAGS:
                    raise ValueError(f"unknown style: {style!r}")
                self.style = style
            elif name == "set_cadence":
                self.cadence = cadence_from_dict(command.get("cadence", {}))
            else:
                raise ValueError(f"unknown command: {name!r}")
            self.record.controls.append(
                {
                    "t_wall": datetime.now(timezone.utc).isoformat(),
                    **{k: v for k, v in command.items()},
                }
            )
            return {"ok": True, "state": self.state_snapshot()}

    # -- pipeline ----------------------------------------------------------

    def process_clip(self, clip: Clip) -> list[dict]:
        """Run one clip through the full pipeline; returns emitted events."""
        started = time.perf_counter()
        with self._lock:
            mode = self.mode
            style = self.style
            cadence = self.cadence
            paused = self.paused
            advance = self._advance_requested
            prev_params = self.visual_params

        features, emotion = analyze(clip, self._meter, self._params)
        score = encode_clip(
            clip, features.tempo_bpm, self._meter, features.key, self._encode_options
        )
        abc = render_abc(score)

        params = map_features(
            features, emotion, prev_params, self.config.smoothing_alpha
        )
        clauses = params_to_prompt_clauses(params)

        description = describe_imagery(
            abc,
            mode,
            self._llm,
            fallback=self._fallback,
            model_id=self.config.model_id,
        )
        image_prompt = description.text
        if clauses:
            image_prompt = f"{image_prompt} {', '.join(clauses)}."

        event_time_us = clip.window_end
        display = pacing_decide(
            event_time_us / 1e6,
            None if self._last_display_us is None else self._last_display_us / 1e6,
            cadence,
            paused,
            tempo_bpm=features.tempo_bpm,
            meter=self._meter,
            advance_requested=advance,
        )

        request = ImageRequest(
            prompt=image_prompt,
            style_tag=style,
            seed=self.config.seed,
            size=tuple(self.config.image_size),
            visual_params=params,
        )
        image_event = generate(request, self._image_backend, self.store, clip.clip_index)

        with self._lock:
            self.visual_params = params
            if display:
                self._last_display_us = event_time_us
                if advance:
                    self._advance_requested = False

        latency_ms = (time.perf_counter() - started) * 1000.0
        entry = {
            "clip_index": clip.clip_index,
            "window_start_us": clip.window_start,
            "window_end_us": clip.window_end,
            "skipped": False,
            "abc": abc,
            "features": features.to_dict(),
            "emotion": emotion.to_dict(),
            "mode": mode.kind,
            "temperature": mode.temperature,
            "request_temperature": description.request.temperature,
            "prompt": description.request.prompt,
            "completion": description.text,
            "completion_backend": description.result.backend_id,
            "fallback": description.fallback,
            "llm_latency_ms": description.result.latency_ms,
            "visual_params": params.to_dict(),
            "clauses": clauses,
            "style": style,
            "image_prompt": image_event.prompt,
            "image": {
                "digest": image_event.digest,
                "image_ref": image_event.image_ref,
                "error": image_event.error,
            },
            "gen_latency_ms": image_event.gen_latency_ms,
            "displayed": display,
            "displayed_at_us": event_time_us if display else None,
            "latency_ms": latency_ms,
        }
        self.record.entries.append(entry)

        telemetry = {
            "type": "telemetry",
            "session_id": self.session_id,
            "clip_index": clip.clip_index,
            "window_start_us": clip.window_start,
            "window_end_us": clip.window_end,
            "skipped": False,
            "key": entry["features"]["key"],
            "tempo_bpm": features.tempo_bpm,
            "meter": str(self._meter),
            "contour": features.contour,
            "emotion": entry["emotion"],
            "abc": abc,
            "prompt": description.text,
            "fallback": description.fallback,
            "mode": mode.kind,
            "temperature": mode.temperature,
            "style": style,
            "visual_params": entry["visual_params"],
            "clauses": clauses,
            "flags": entry["features"]["flags"],
        }
        image = {
            "type": "image",
            "session_id": self.session_id,
            **image_event.to_dict(),
            "displayed_at": event_time_us if display else None,
            "displayed": display,
            "fallback": description.fallback,
        }
        events = [telemetry, image]
        for event in events:
            self._publish(event)
        return events

    def _skip_clip(self, clip: Clip, reason: str) -> list[dict]:
        entry = {
            "clip_index": clip.clip_index,
            "window_start_us": clip.window_start,
            "window_end_us": clip.window_end,
            "skipped": True,
            "reason": reason,
        }
        self.record.entries.append(entry)
        telemetry = {
            "type": "telemetry",
            "session_id": self.session_id,
            "clip_index": clip.clip_index,
            "window_start_us": clip.window_start,
            "window_end_us": clip.window_end,
            "skipped": True,
            "reason": reason,
        }
        self._publish(telemetry)
        return [telemetry]

    # -- run loops ----------------------------------------------------------

    def _window_clips(self, source: MidiSource) -> Iterator[Clip]:
        """Closed windows in event-time order; trailing partial included."""
        buffer = IngestBuffer(
            window_length=int(self.config.window_length_s * 1_000_000)
        )
        last_ts = 0
        for event in source.events():
            while buffer.window_ready(event.timestamp):
                clip = buffer.close_window(event.timestamp)
                if clip is not None:
                    yield clip
            buffer.push_event(event)
            last_ts = max(last_ts, event.timestamp)
        for clip in buffer.drain(last_ts + 1):
            yield clip

    def run_replay(self, source: MidiSource) -> Iterator[dict]:
        """Process every window synchronously in event time (drops nothing)."""
        for clip in self._window_clips(source):
            yield from self.process_clip(clip)
        self.finish()

    def run_realtime(self, source: MidiSource) -> None:
        """Process windows as they close, dropping clips that arrive busy.

        If a clip is still being analyzed/generated when the next window
        closes, the newer clip is logged and skipped — freshness over
        completeness. Events go out through the emit callback.
        """
        def work(clip: Clip) -> None:
            try:
                self.process_clip(clip)
            finally:
                with self._lock:
                    self._inflight = False

        threads: list[threading.Thread] = []
        for clip in self._window_clips(source):
            with self._lock:
                busy = self._inflight
                if not busy:
                    self._inflight = True
            if busy:
                self._skip_clip(clip, "busy")
                continue
            thread = threading.Thread(target=work, args=(clip,), daemon=True)
            thread.start()
            threads.append(thread)
        for thread in threads:
            thread.join()
        self.finish()

    def finish(self) -> None:
        if self.finished:
            return
        self.finished = True
        self.record.finished_at = datetime.now(timezone.utc).isoformat()
        self.record.save(self.store_dir)


def run_session(
    config: SessionConfig,
    midi_source: MidiSource,
    store_dir: str | Path | None = None,
) -> Iterator[dict]:
    """Replay ``midi_source`` through a fresh session, yielding its events.

    The generator's return value is the finished SessionRecord, so callers
    that need it can use ``record = yield from run_session(...)``.
    """
    engine = SessionEngine(config, store_dir=store_dir)
    yield from engine.run_replay(midi_source)
    return engine.record
