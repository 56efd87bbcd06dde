"""Test-side utilities.

The SMF writer here is written independently of the production reader
(different structure, no shared code) so reader tests compare two
implementations of the format, not one implementation with itself.
"""

from __future__ import annotations

from dataclasses import dataclass

from tonecanvas.midi import Clip, NoteEvent

# ---------------------------------------------------------------------------
# Independent SMF writer
# ---------------------------------------------------------------------------


def varlen(value: int) -> bytes:
    """SMF variable-length quantity."""
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def meta_tempo(us_per_quarter: int) -> bytes:
    return b"\xff\x51\x03" + us_per_quarter.to_bytes(3, "big")


def meta_end_of_track() -> bytes:
    return b"\xff\x2f\x00"


def note_on(pitch: int, velocity: int, channel: int = 0) -> bytes:
    return bytes([0x90 | channel, pitch, velocity])


def note_off(pitch: int, velocity: int = 0, channel: int = 0) -> bytes:
    return bytes([0x80 | channel, pitch, velocity])


def control_change(controller: int, value: int, channel: int = 0) -> bytes:
    return bytes([0xB0 | channel, controller, value])


def track_chunk(events: list[tuple[int, bytes]], end_of_track: bool = True) -> bytes:
    """Encode (delta_ticks, event_bytes) rows as an MTrk chunk."""
    body = b"".join(varlen(delta) + payload for delta, payload in events)
    if end_of_track:
        body += varlen(0) + meta_end_of_track()
    return b"MTrk" + len(body).to_bytes(4, "big") + body


def smf_bytes(tracks: list[list[tuple[int, bytes]]], division: int = 480, fmt: int | None = None) -> bytes:
    if fmt is None:
        fmt = 0 if len(tracks) == 1 else 1
    header = b"MThd" + (6).to_bytes(4, "big")
    header += fmt.to_bytes(2, "big") + len(tracks).to_bytes(2, "big") + division.to_bytes(2, "big")
    return header + b"".join(track_chunk(track) for track in tracks)


@dataclass(frozen=True)
class SpecNote:
    """Fixture note in musical ticks (480 per quarter)."""

    onset: int
    duration: int
    pitch: int
    velocity: int


def track_from_notes(notes: list[SpecNote], channel: int = 0) -> list[tuple[int, bytes]]:
    """Delta-encode on/off pairs for a list of fixture notes."""
    moments: list[tuple[int, int, bytes]] = []
    for note in notes:
        # offs sort before ons at the same tick so re-struck pitches pair cleanly
        moments.append((note.onset, 1, note_on(note.pitch, note.velocity, channel)))
        moments.append((note.onset + note.duration, 0, note_off(note.pitch, channel=channel)))
    moments.sort(key=lambda m: (m[0], m[1]))
    events: list[tuple[int, bytes]] = []
    clock = 0
    for tick, _, payload in moments:
        events.append((tick - clock, payload))
        clock = tick
    return events


def smf_from_notes(
    note_tracks: list[list[SpecNote]], us_per_quarter: int = 500_000, division: int = 480
) -> bytes:
    """Format-1 file: tempo track plus one track per note list."""
    tempo_track: list[tuple[int, bytes]] = [(0, meta_tempo(us_per_quarter))]
    tracks = [tempo_track] + [
        track_from_notes(notes, channel=i) for i, notes in enumerate(note_tracks)
    ]
    return smf_bytes(tracks, division=division, fmt=1)


# ---------------------------------------------------------------------------
# Clip builders
# ---------------------------------------------------------------------------


def make_clip(
    rows: list[tuple[int, int, int, int]],
    window_start: int = 0,
    window_length: int = 10_000_000,
    clip_index: int = 0,
) -> Clip:
    """Build a Clip from (onset_us, duration_us, pitch, velocity) rows."""
    notes = tuple(
        sorted(
            (
                NoteEvent(pitch=p, velocity=v, onset=onset, duration=duration)
                for onset, duration, p, v in rows
            ),
            key=lambda n: (n.onset, n.pitch, n.duration, n.velocity),
        )
    )
    return Clip(
        clip_index=clip_index,
        window_start=window_start,
        window_end=window_start + window_length,
        notes=notes,
    )


def clip_from_melody(
    pitches: list[int],
    ioi_us: int = 500_000,
    duration_us: int | None = None,
    velocity: int = 80,
    window_length: int | None = None,
) -> Clip:
    """Monophonic clip: one note per inter-onset interval."""
    duration = duration_us if duration_us is not None else int(ioi_us * 0.9)
    rows = [(i * ioi_us, duration, pitch, velocity) for i, pitch in enumerate(pitches)]
    span = len(pitches) * ioi_us
    length = window_length if window_length is not None else max(10_000_000, span)
    return make_clip(rows, window_length=length)


def windowed_clips(path, window_length: int = 10_000_000) -> list[Clip]:
    """All closed windows of a MIDI file, trailing partial included."""
    from tonecanvas.midi import IngestBuffer
    from tonecanvas.smf import replay_midi_file

    events = replay_midi_file(str(path))
    buffer = IngestBuffer(window_length=window_length)
    clips: list[Clip] = []
    for event in events:
        while buffer.window_ready(event.timestamp):
            clip = buffer.close_window(event.timestamp)
            if clip is not None:
                clips.append(clip)
        buffer.push_event(event)
    last = events[-1].timestamp if events else 0
    clips.extend(buffer.drain(last + 1))
    return clips
