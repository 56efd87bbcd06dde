"""Live MIDI ingest: raw events, note pairing, and fixed-length windowing.

Responsibilities:
- validate raw events at the ingest boundary (pitch/velocity ranges,
  non-decreasing timestamps)
- pair note_on/note_off into NoteEvents (FIFO per pitch; velocity-0
  note_on counts as note_off)
- cut the stream into back-to-back windows and emit immutable Clips

All timestamps are integer microseconds on the session clock. The buffer
is safe for one producer thread and one consumer thread.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Protocol

__all__ = [
    "NOTE_ON",
    "NOTE_OFF",
    "CONTROL_CHANGE",
    "SUSTAIN_CONTROLLER",
    "RawMidiEvent",
    "NoteEvent",
    "Clip",
    "InvalidEventError",
    "IngestBuffer",
    "MidiSource",
    "IterableSource",
]

NOTE_ON = "note_on"
NOTE_OFF = "note_off"
CONTROL_CHANGE = "control_change"

SUSTAIN_CONTROLLER = 64

_KINDS = (NOTE_ON, NOTE_OFF, CONTROL_CHANGE)


@dataclass(frozen=True)
class RawMidiEvent:
    """One wire-level event. For control_change, pitch is the controller
    number and velocity is the controller value."""

    kind: str
    pitch: int
    velocity: int
    timestamp: int  # microseconds, session clock


@dataclass(frozen=True)
class NoteEvent:
    """A paired note: onset/duration in microseconds, duration > 0."""

    pitch: int
    velocity: int
    onset: int
    duration: int
    voice: int = 0


@dataclass(frozen=True)
class Clip:
    """All notes whose onsets fall in [window_start, window_end)."""

    clip_index: int
    window_start: int
    window_end: int
    notes: tuple[NoteEvent, ...]

    @property
    def length(self) -> int:
        return self.window_end - self.window_start


class InvalidEventError(ValueError):
    """Raised when push_event rejects a malformed event."""


class MidiSource(Protocol):
    """Anything that yields RawMidiEvents in timestamp order.

    Live hardware adapters implement this; platforms without MIDI devices
    use file replay (see smf.FileReplaySource).
    """

    def events(self) -> Iterator[RawMidiEvent]: ...


@dataclass
class IterableSource:
    """Wrap a plain iterable of events as a MidiSource."""

    items: Iterable[RawMidiEvent]

    def events(self) -> Iterator[RawMidiEvent]:
        return iter(self.items)


@dataclass
class _PendingNote:
    velocity: int
    onset: int


class IngestBuffer:
    """Pairs note events and cuts them into fixed windows.

    Windows are back-to-back: window k covers
    [start + k*window_length, start + (k+1)*window_length). A note belongs
    to the window containing its onset; notes still sounding at the window
    boundary are truncated there and not re-emitted later, so the emitted
    clip sequence depends only on the event stream, not on when
    close_window is called.
    """

    def __init__(self, window_length: int = 10_000_000, start: int = 0) -> None:
        if window_length <= 0:
            raise ValueError("window_length must be positive")
        self.window_length = window_length
        self.start = start
        self._lock = threading.Lock()
        self._pending: dict[int, list[_PendingNote]] = {}
        self._completed: list[NoteEvent] = []
        self._window_index = 0
        self._last_timestamp = start
        self.unmatched_note_offs = 0
        self.clamped_timestamps = 0
        self.sustain_events: list[RawMidiEvent] = []

    # ------------------------------------------------------------------
    # Ingest side
    # ------------------------------------------------------------------

    def push_event(self, event: RawMidiEvent) -> None:
        """Validate and ingest one raw event.

        Raises InvalidEventError (buffer untouched) for unknown kinds or
        out-of-range pitch/velocity. Out-of-order timestamps are clamped
        to the last seen timestamp and counted, not rejected.
        """
        if event.kind not in _KINDS:
            raise InvalidEventError(f"unknown event kind: {event.kind!r}")
        if not 0 <= event.pitch <= 127:
            raise InvalidEventError(f"pitch out of range 0..127: {event.pitch}")
        if not 0 <= event.velocity <= 127:
            raise InvalidEventError(f"velocity out of range 0..127: {event.velocity}")

        with self._lock:
            timestamp = event.timestamp
            if timestamp < self._last_timestamp:
                timestamp = self._last_timestamp
                self.clamped_timestamps += 1
            self._last_timestamp = timestamp

            kind = event.kind
            if kind == NOTE_ON and event.velocity == 0:
                kind = NOTE_OFF  # running-status convention

            if kind == NOTE_ON:
                self._pending.setdefault(event.pitch, []).append(
                    _PendingNote(velocity=event.velocity, onset=timestamp)
                )
            elif kind == NOTE_OFF:
                queue = self._pending.get(event.pitch)
                if not queue:
                    self.unmatched_note_offs += 1
                    return
                started = queue.pop(0)  # FIFO pairing for stacked same-pitch notes
                if not queue:
                    del self._pending[event.pitch]
                if timestamp > started.onset:
                    self._completed.append(
                        NoteEvent(
                            pitch=event.pitch,
                            velocity=started.velocity,
                            onset=started.onset,
                            duration=timestamp - started.onset,
                        )
                    )
                # zero-length notes (on/off at the same microsecond) are dropped
            else:
                if event.pitch == SUSTAIN_CONTROLLER:
                    self.sustain_events.append(replace(event, timestamp=timestamp))
                # other controllers are ignored: the ABC path carries no CC data

    # ------------------------------------------------------------------
    # Window side
    # ------------------------------------------------------------------

    @property
    def window_start(self) -> int:
        return self.start + self._window_index * self.window_length

    def window_ready(self, now: int) -> bool:
        return now >= self.window_start + self.window_length

    def close_window(self, now: int) -> Clip | None:
        """Close the next window if `now` has passed its end.

        Returns the Clip, or None when the window is not ready yet or
        contained zero notes (the window ordinal still advances for an
        empty window, so clip indices map 1:1 to time).
        """
        with self._lock:
            window_start = self.start + self._window_index * self.window_length
            window_end = window_start + self.window_length
            if now < window_end:
                return None
            return self._cut(window_start, window_end)

    def drain(self, now: int) -> list[Clip]:
        """Flush at end of stream: close every window up to `now`.

        The trailing partial window is closed early with notes truncated
        at `now` instead of the window boundary. Deterministic for a given
        event stream because replay passes the final event timestamp.
        """
        clips: list[Clip] = []
        with self._lock:
            while True:
                window_start = self.start + self._window_index * self.window_length
                if window_start >= now:
                    break
                window_end = min(window_start + self.window_length, now)
                clip = self._cut(window_start, window_end, full_end=window_start + self.window_length)
                if clip is not None:
                    clips.append(clip)
        return clips

    def _cut(self, window_start: int, window_end: int, full_end: int | None = None) -> Clip | None:
        """Collect the window's notes. Caller holds the lock."""
        notes: list[NoteEvent] = []
        keep: list[NoteEvent] = []
        for note in self._completed:
            if window_start <= note.onset < window_end:
                end = min(note.onset + note.duration, window_end)
                if end > note.onset:
                    notes.append(replace(note, duration=end - note.onset))
            elif note.onset >= window_end:
                keep.append(note)
            # notes from already-closed windows cannot appear: they were consumed
        self._completed = keep

        for pitch in list(self._pending):
            queue = self._pending[pitch]
            remaining = []
            for started in queue:
                if window_start <= started.onset < window_end:
                    if window_end > started.onset:
                        notes.append(
                            NoteEvent(
                                pitch=pitch,
                                velocity=started.velocity,
                                onset=started.onset,
                                duration=window_end - started.onset,
                            )
                        )
                    # consumed: the eventual note_off will count as unmatched
                else:
                    remaining.append(started)
            if remaining:
                self._pending[pitch] = remaining
            else:
                del self._pending[pitch]

        index = self._window_index
        self._window_index += 1
        if not notes:
            return None
        notes.sort(key=lambda n: (n.onset, n.pitch, n.duration, n.velocity))
        return Clip(
            clip_index=index,
            window_start=window_start,
            window_end=full_end if full_end is not None else window_end,
            notes=tuple(notes),
        )
