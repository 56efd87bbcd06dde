"""From ABC text to an imagery description, in both generation modes.

Simulates a short keyboard phrase as raw MIDI events, windows it into a
clip, encodes the clip, and asks the deterministic mock completion backend
to describe imagery for it — first in wide-roaming divergent mode, then in
theme-holding convergent mode — showing the exact prompt, the request
temperatures, and the 80-word output cap at work.

Run from the repository root:  python3 demos/03_description.py
"""

from tonecanvas.analysis import analyze
from tonecanvas.describe import (
    GenerationMode,
    MockBackend,
    build_prompt,
    describe_imagery,
)
from tonecanvas.midi import IngestBuffer, RawMidiEvent
from tonecanvas.notation import encode_clip, render_abc
from tonecanvas.theory import Meter

# an eight-note E minor phrase, one note every 625 ms (96 BPM quarters)
PHRASE = [64, 67, 71, 74, 71, 67, 64, 59]


def performed_clip():
    events = []
    for i, pitch in enumerate(PHRASE):
        onset = i * 625_000
        events.append(RawMidiEvent("note_on", pitch, 72, onset))
        events.append(RawMidiEvent("note_off", pitch, 0, onset + 500_000))
    buffer = IngestBuffer(window_length=10_000_000)
    for event in events:
        buffer.push_event(event)
    return buffer.drain(events[-1].timestamp + 1)[0]


def main() -> None:
    clip = performed_clip()
    meter = Meter(4, 4)
    features, _ = analyze(clip, meter)
    abc = render_abc(encode_clip(clip, features.tempo_bpm, meter, features.key))

    print("the clip as ABC text:\n")
    print(abc)
    print("the imagery prompt sent to the model:\n")
    print(build_prompt("imagery", abc))
    print()

    backend = MockBackend()
    for mode in (GenerationMode.divergent(), GenerationMode.convergent()):
        description = describe_imagery(abc, mode, backend)
        words = len(description.text.split())
        print(f"{mode.kind} mode (request temperature {description.request.temperature}):")
        print(f"  {description.text}")
        print(f"  [{words} words, backend {description.result.backend_id}]\n")


if __name__ == "__main__":
    main()
