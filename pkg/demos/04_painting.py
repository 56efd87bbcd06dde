"""From analysis to pixels: visual parameters, prompt clauses, and PNGs.

Walks the bundled performance window by window, advancing the smoothed
visual state (brightness / warmth / motion / openness), showing the prompt
clauses those parameters contribute, and rendering one mock image per
window into ./demo_images — content-addressed, so re-running reuses the
identical files.

Run from the repository root:  python3 demos/04_painting.py
"""

from pathlib import Path

from tonecanvas.analysis import analyze
from tonecanvas.imaging import ImageRequest, ImageStore, MockImageBackend, generate
from tonecanvas.midi import IngestBuffer
from tonecanvas.smf import replay_midi_file
from tonecanvas.theory import Meter
from tonecanvas.visuals import VisualParams, map_features, params_to_prompt_clauses

MIDI_FILE = Path(__file__).resolve().parents[1] / "tests/fixtures/chopin_prelude.mid"
OUT_DIR = Path("demo_images")


def window_file(path: Path, window_length_s: float = 10.0):
    events = replay_midi_file(path)
    buffer = IngestBuffer(window_length=int(window_length_s * 1_000_000))
    clips = []
    for event in events:
        while buffer.window_ready(event.timestamp):
            clip = buffer.close_window(event.timestamp)
            if clip is not None:
                clips.append(clip)
        buffer.push_event(event)
    last = events[-1].timestamp if events else 0
    clips.extend(buffer.drain(last + 1))
    return clips


def main() -> None:
    meter = Meter(4, 4)
    store = ImageStore(OUT_DIR)
    backend = MockImageBackend()
    params = VisualParams()

    for clip in window_file(MIDI_FILE):
        features, emotion = analyze(clip, meter)
        params = map_features(features, emotion, params)
        clauses = params_to_prompt_clauses(params)

        print(f"window {clip.clip_index}:")
        print(
            f"  brightness {params.brightness:+.2f}, warmth {params.warmth:+.2f}, "
            f"motion {params.motion:.2f}, openness {params.openness:.2f}"
        )
        print(f"  clauses: {', '.join(clauses) if clauses else '(none)'}")

        prompt = "A quiet rain-washed valley at dusk"
        if clauses:
            prompt = f"{prompt} {', '.join(clauses)}."
        request = ImageRequest(
            prompt=prompt,
            style_tag="photorealistic",
            seed=7,
            size=(256, 256),
            visual_params=params,
        )
        event = generate(request, backend, store, clip.clip_index)
        print(f"  image: {store.root / (event.digest + '.png')}"
              f"  ({event.gen_latency_ms:.0f} ms)\n")


if __name__ == "__main__":
    main()
