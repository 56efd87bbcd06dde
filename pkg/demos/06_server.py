"""The live API: server-sent events, session control, and export over HTTP.

Starts the API server in-process on a free port, opens the /events stream,
launches a paced replay of the bundled performance (20x faster than real
time), switches the generation mode while it runs, and prints each event as
it arrives — ending with the canonical record export.

Run from the repository root:  python3 demos/06_server.py
"""

import json
import socket
import tempfile
import threading
import time
from pathlib import Path

import requests
import uvicorn

from tonecanvas.server import ServerState, create_app
from tonecanvas.session import SessionConfig

MIDI_FILE = Path(__file__).resolve().parents[1] / "tests/fixtures/chopin_prelude.mid"


def start_server(state: ServerState) -> str:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(
        uvicorn.Config(create_app(state), host="127.0.0.1", port=port,
                       log_level="warning")
    )
    threading.Thread(target=server.run, daemon=True).start()
    while not server.started:
        time.sleep(0.01)
    return f"http://127.0.0.1:{port}"


def main() -> None:
    store_root = tempfile.mkdtemp(prefix="tonecanvas-demo-")
    state = ServerState(SessionConfig(store_root=store_root, image_size=(256, 256)))
    base = start_server(state)
    print(f"server up at {base}\n")

    with requests.get(f"{base}/events", stream=True, timeout=(5, 30)) as stream:
        lines = stream.iter_lines(decode_unicode=True)

        started = requests.post(
            f"{base}/sessions",
            json={"midi_file": str(MIDI_FILE), "speed": 20},
            timeout=5,
        ).json()
        session_id = started["session_id"]
        print(f"replay session {session_id} started at 20x\n")

        images_seen = 0
        for line in lines:
            if not line or not line.startswith("data: "):
                continue
            event = json.loads(line[len("data: ") :])
            if event["type"] == "hello":
                print(f"hello: schema {event['schema']}")
            elif event["type"] == "telemetry":
                print(
                    f"telemetry clip {event['clip_index']}: "
                    f"{event['key']['tonic']} {event['key']['mode']}, "
                    f"{event['mode']} @ {event['temperature']}"
                )
            elif event["type"] == "mode":
                print(f"mode changed -> {event['mode']} @ {event['temperature']}")
            elif event["type"] == "image":
                print(f"image clip {event['clip_index']}: {base}/{event['image_ref']}")
                images_seen += 1
                if images_seen == 1:
                    requests.post(
                        f"{base}/control",
                        json={"command": "set_mode", "kind": "convergent"},
                        timeout=5,
                    )
                if images_seen == 4:
                    break

    record = requests.get(f"{base}/sessions/{session_id}/export", timeout=5).json()
    print(f"\nexported record: {len(record['entries'])} clips, "
          f"modes {[entry['mode'] for entry in record['entries']]}")


if __name__ == "__main__":
    main()
