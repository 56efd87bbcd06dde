"""Command-line interface.

Verbs:
  serve                start the HTTP API server
  replay MIDI_FILE     run a MIDI file through a full offline session
  analyze MIDI_FILE    print per-clip features, emotion, and ABC text
  export SESSION_ID    print a saved session's canonical record JSON
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import AnalysisParams, analyze
from .midi import IngestBuffer
from .notation import encode_clip, render_abc
from .session import ConfigError, SessionConfig, SessionEngine, _strip_volatile
from .smf import FileReplaySource, SmfParseError
from .theory import Meter


def _load_config(args: argparse.Namespace) -> SessionConfig:
    if getattr(args, "config", None):
        return SessionConfig.from_json_file(args.config)
    return SessionConfig()


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    config = _load_config(args)
    if args.host or args.port:
        data = config.to_dict()
        if args.host:
            data["listen_host"] = args.host
        if args.port:
            data["listen_port"] = args.port
        config = SessionConfig.from_dict(data)
    print(f"listening on http://{config.listen_host}:{config.listen_port}")
    serve(config)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    config = _load_config(args)
    store_dir = Path(args.out) if args.out else None
    engine = SessionEngine(config, store_dir=store_dir)
    source = FileReplaySource(args.midi_file)
    for event in engine.run_replay(source):
        if args.json:
            print(json.dumps(event, separators=(",", ":")))
        elif event["type"] == "image":
            shown = "displayed" if event["displayed"] else "held"
            flags = " [fallback]" if event["fallback"] else ""
            flags += " [error]" if event["error"] else ""
            print(f"clip {event['clip_index']}: {event['image_ref']} ({shown}){flags}")
        elif event["type"] == "telemetry" and not event.get("skipped"):
            key = event["key"]
            words = ", ".join(event["emotion"]["words"])
            print(
                f"clip {event['clip_index']}: {key['tonic']} {key['mode']}, "
                f"{event['tempo_bpm']:g} BPM, {event['contour']}, [{words}]"
            )
    print(f"session {engine.session_id} saved to {engine.store_dir}", file=sys.stderr)
    print(f"determinism hash: {engine.record.determinism_hash()}", file=sys.stderr)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    meter = Meter.parse(args.meter)
    params = AnalysisParams()
    buffer = IngestBuffer(window_length=int(args.window_length * 1_000_000))
    source = FileReplaySource(args.midi_file)
    clips = []
    last_ts = 0
    for event in source.events():
        while buffer.window_ready(event.timestamp):
            clip = buffer.close_window(event.timestamp)
            if clip is not None:
                clips.append(clip)
        buffer.push_event(event)
        last_ts = max(last_ts, event.timestamp)
    clips.extend(buffer.drain(last_ts + 1))

    for clip in clips:
        features, emotion = analyze(clip, meter, params)
        abc = render_abc(
            encode_clip(clip, features.tempo_bpm, meter, features.key)
        )
        if args.json:
            print(
                json.dumps(
                    {
                        "clip_index": clip.clip_index,
                        "features": features.to_dict(),
                        "emotion": emotion.to_dict(),
                        "abc": abc,
                    },
                    separators=(",", ":"),
                )
            )
        else:
            print(f"--- clip {clip.clip_index} "
                  f"[{clip.window_start / 1e6:.1f}s .. {clip.window_end / 1e6:.1f}s]")
            print(f"key: {features.key.tonic} {features.key.mode} "
                  f"(confidence {features.key_confidence:.2f})")
            print(f"tempo: {features.tempo_bpm:g} BPM   meter: {features.meter}   "
                  f"contour: {features.contour}")
            print(f"emotion: valence {emotion.valence:+.2f}, "
                  f"arousal {emotion.arousal:+.2f}  [{', '.join(emotion.words)}]")
            print(abc, end="")
    if not clips:
        print("no notes found", file=sys.stderr)
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    record_path = Path(args.store) / args.session_id / "record.json"
    if not record_path.is_file():
        print(f"no session record at {record_path}", file=sys.stderr)
        return 1
    with open(record_path, "r", encoding="utf-8") as handle:
        record = json.load(handle)
    canonical = _strip_volatile(record)
    print(json.dumps(canonical, sort_keys=True, separators=(",", ":")))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tonecanvas",
        description="Real-time MIDI-to-image co-creation engine.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_serve = sub.add_parser("serve", help="start the HTTP API server")
    p_serve.add_argument("--config", help="path to a JSON config file")
    p_serve.add_argument("--host", help="listen host override")
    p_serve.add_argument("--port", type=int, help="listen port override")
    p_serve.set_defaults(fn=_cmd_serve)

    p_replay = sub.add_parser("replay", help="replay a MIDI file offline")
    p_replay.add_argument("midi_file", help="Standard MIDI File to replay")
    p_replay.add_argument("--config", help="path to a JSON config file")
    p_replay.add_argument("--out", help="session output directory")
    p_replay.add_argument(
        "--json", action="store_true", help="print events as JSON lines"
    )
    p_replay.set_defaults(fn=_cmd_replay)

    p_analyze = sub.add_parser("analyze", help="print per-clip analysis")
    p_analyze.add_argument("midi_file", help="Standard MIDI File to analyze")
    p_analyze.add_argument(
        "--window-length", type=float, default=10.0, dest="window_length",
        help="clip window length in seconds (default 10)",
    )
    p_analyze.add_argument("--meter", default="4/4", help="meter (default 4/4)")
    p_analyze.add_argument(
        "--json", action="store_true", help="print clips as JSON lines"
    )
    p_analyze.set_defaults(fn=_cmd_analyze)

    p_export = sub.add_parser("export", help="print a saved session record")
    p_export.add_argument("session_id", help="session id to export")
    p_export.add_argument(
        "--store", default="sessions", help="session store root (default ./sessions)"
    )
    p_export.set_defaults(fn=_cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, SmfParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
