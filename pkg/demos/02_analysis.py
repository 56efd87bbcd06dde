"""What the engine hears: features and emotion, window by window.

Runs the bundled forty-second performance through the analysis layer and
prints each window's key, tempo, contour, repetition, and the valence/
arousal reading with its three emotion words.

Run from the repository root:  python3 demos/02_analysis.py
"""

from pathlib import Path

from tonecanvas.analysis import analyze
from tonecanvas.midi import IngestBuffer
from tonecanvas.smf import replay_midi_file
from tonecanvas.theory import Meter

MIDI_FILE = Path(__file__).resolve().parents[1] / "tests/fixtures/chopin_prelude.mid"


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
    for clip in window_file(MIDI_FILE):
        features, emotion = analyze(clip, meter)
        start = clip.window_start / 1e6
        end = clip.window_end / 1e6
        print(f"window {clip.clip_index}  [{start:4.1f}s .. {end:4.1f}s]")
        print(
            f"  key {features.key.tonic} {features.key.mode} "
            f"(confidence {features.key_confidence:.3f}), "
            f"tempo {features.tempo_bpm:g} BPM, contour {features.contour}"
        )
        print(
            f"  repetition {features.repetition:.2f}, "
            f"mean velocity {features.mean_velocity:.1f}, "
            f"density {features.note_density:.1f} notes/s, "
            f"span {features.register_span} semitones"
        )
        print(
            f"  emotion: valence {emotion.valence:+.2f}, "
            f"arousal {emotion.arousal:+.2f}  ->  {', '.join(emotion.words)}"
        )
        if features.flags:
            print(f"  flags: {', '.join(features.flags)}")
        print()


if __name__ == "__main__":
    main()
