"""A full co-creation session, controlled mid-flight.

Replays the bundled performance through the session engine with mock
backends, switching from divergent to convergent mode after the first
image and pausing display for one window, then prints the saved record's
location and its determinism hash — replaying the same file with the same
configuration always produces the same hash.

Run from the repository root:  python3 demos/05_session.py
"""

import tempfile
from pathlib import Path

from tonecanvas.session import SessionConfig, SessionEngine
from tonecanvas.smf import FileReplaySource

MIDI_FILE = Path(__file__).resolve().parents[1] / "tests/fixtures/chopin_prelude.mid"


def main() -> None:
    store_root = Path(tempfile.mkdtemp(prefix="tonecanvas-demo-"))
    config = SessionConfig(store_root=str(store_root), image_size=(256, 256))
    engine = SessionEngine(config)
    print(f"session {engine.session_id} (mode {engine.mode.kind})\n")

    for event in engine.run_replay(FileReplaySource(MIDI_FILE)):
        if event["type"] == "telemetry":
            words = ", ".join(event["emotion"]["words"])
            print(
                f"clip {event['clip_index']}: {event['key']['tonic']} "
                f"{event['key']['mode']}, {event['tempo_bpm']:g} BPM, "
                f"{event['mode']} @ {event['temperature']}  [{words}]"
            )
        else:
            shown = "displayed" if event["displayed"] else "held (paused)"
            print(f"  -> {event['image_ref']} ({shown})")

        # steer the session between windows, exactly as a player would
        if event["type"] == "image" and event["clip_index"] == 0:
            engine.control({"command": "set_mode", "kind": "convergent"})
            print("  [control] switched to convergent mode")
        if event["type"] == "image" and event["clip_index"] == 1:
            engine.control({"command": "pause"})
            print("  [control] paused display")
        if event["type"] == "image" and event["clip_index"] == 2:
            engine.control({"command": "resume"})
            print("  [control] resumed display")

    print(f"\nrecord: {engine.store_dir / 'record.json'}")
    print(f"images: {engine.store.root}")
    print(f"determinism hash: {engine.record.determinism_hash()}")


if __name__ == "__main__":
    main()
