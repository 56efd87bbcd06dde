"""From a MIDI file to ABC text and back.

Windows a Standard MIDI File into ten-second clips, encodes the first clip
as a two-voice ABC score, prints the text, then parses that text back and
shows the round trip lands exactly on the quantized source notes.

Run from the repository root:  python3 demos/01_notation.py
"""

from pathlib import Path

from tonecanvas.analysis import analyze
from tonecanvas.midi import IngestBuffer
from tonecanvas.notation import (
    encode_clip,
    parse_abc,
    quantized_score_notes,
    render_abc,
    score_to_notes,
)
from tonecanvas.smf import replay_midi_file
from tonecanvas.theory import Meter

MIDI_FILE = Path(__file__).resolve().parents[1] / "tests/fixtures/chopin_prelude.mid"


def window_file(path: Path, window_length_s: float = 10.0):
    """All closed windows of a MIDI file, trailing partial included."""
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
    clips = window_file(MIDI_FILE)
    print(f"{MIDI_FILE.name}: {len(clips)} ten-second windows\n")

    clip = clips[0]
    meter = Meter(4, 4)
    features, _ = analyze(clip, meter)
    print(
        f"window 0 analysis: {features.key.tonic} {features.key.mode}, "
        f"{features.tempo_bpm:g} BPM, {len(clip.notes)} notes\n"
    )

    score = encode_clip(clip, features.tempo_bpm, meter, features.key)
    text = render_abc(score)
    print("encoded ABC:")
    print(text)

    recovered = score_to_notes(parse_abc(text))
    reference = quantized_score_notes(clip, features.tempo_bpm, meter)
    assert recovered == reference
    print(f"round trip: parsed {len(recovered)} notes, all exactly as quantized")


if __name__ == "__main__":
    main()
