"""Standard MIDI File reader for session replay.

Supports format 0 and format 1 files, running status, sysex skipping, and
tempo-map resolution (meta 0x51) so every event gets an absolute time in
microseconds. SMPTE divisions are handled; format 2 is rejected. Parse
errors carry the offending byte offset.

Only the events the pipeline consumes are emitted: note_on, note_off and
control_change. Channel numbers are dropped (the ingest stage merges all
channels into one keyboard stream).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .midi import CONTROL_CHANGE, NOTE_OFF, NOTE_ON, MidiSource, RawMidiEvent

__all__ = ["SmfParseError", "parse_smf", "replay_midi_file", "FileReplaySource"]

_DEFAULT_TEMPO = 500_000  # microseconds per quarter note

# data-byte counts per channel-message status nibble
_CHANNEL_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


class SmfParseError(ValueError):
    """Malformed SMF data; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class _TrackEvent:
    tick: int
    track: int
    index: int
    status: int
    data: tuple[int, ...]


class _Reader:
    def __init__(self, data: bytes, pos: int = 0) -> None:
        self.data = data
        self.pos = pos

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise SmfParseError(f"truncated {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return int.from_bytes(self.take(2, what), "big")

    def u32(self, what: str) -> int:
        return int.from_bytes(self.take(4, what), "big")

    def varlen(self, what: str) -> int:
        value = 0
        for i in range(4):
            byte = self.byte(what)
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise SmfParseError(f"variable-length {what} exceeds 4 bytes", self.pos - 1)


def _parse_track(data: bytes, start: int, length: int, track_index: int) -> list[_TrackEvent]:
    reader = _Reader(data, start)
    end = start + length
    events: list[_TrackEvent] = []
    tick = 0
    running_status: int | None = None
    index = 0
    while reader.pos < end:
        tick += reader.varlen("delta time")
        status_offset = reader.pos
        first = reader.byte("event status")
        if first < 0x80:
            if running_status is None:
                raise SmfParseError("data byte with no running status", status_offset)
            status = running_status
            data_bytes = [first]
        else:
            status = first
            data_bytes = []

        if status == 0xFF:
            meta_type = reader.byte("meta type")
            meta_len = reader.varlen("meta length")
            payload = reader.take(meta_len, "meta payload")
            running_status = None
            events.append(_TrackEvent(tick, track_index, index, status, (meta_type, *payload)))
            index += 1
            if meta_type == 0x2F:  # end of track
                break
            continue
        if status in (0xF0, 0xF7):
            sysex_len = reader.varlen("sysex length")
            reader.take(sysex_len, "sysex payload")
            running_status = None
            continue
        if status < 0x80 or status >= 0xF0:
            raise SmfParseError(f"unsupported status byte 0x{status:02X}", status_offset)

        needed = _CHANNEL_DATA_BYTES[status >> 4]
        while len(data_bytes) < needed:
            byte = reader.byte("event data")
            if byte >= 0x80:
                raise SmfParseError(f"status byte 0x{byte:02X} inside event data", reader.pos - 1)
            data_bytes.append(byte)
        running_status = status
        events.append(_TrackEvent(tick, track_index, index, status, tuple(data_bytes)))
        index += 1
    return events


def _tick_to_us(tick: int, tempo_map: list[tuple[int, int, int]], division: int) -> int:
    """tempo_map rows are (start_tick, us_at_start, us_per_quarter)."""
    row = tempo_map[0]
    for candidate in tempo_map:
        if candidate[0] <= tick:
            row = candidate
        else:
            break
    start_tick, us_at_start, tempo = row
    return us_at_start + (tick - start_tick) * tempo // division


def parse_smf(data: bytes) -> list[RawMidiEvent]:
    """Decode SMF bytes into time-ordered raw events (µs timestamps).

    Timestamps are normalized so the first emitted event is at t=0.
    """
    reader = _Reader(data)
    magic = reader.take(4, "header")
    if magic != b"MThd":
        raise SmfParseError(f"expected MThd header, found {magic!r}", reader.pos - 4)
    header_len = reader.u32("header length")
    if header_len < 6:
        raise SmfParseError(f"header length {header_len} < 6", reader.pos - 4)
    fmt = reader.u16("format")
    ntrks = reader.u16("track count")
    division = reader.u16("division")
    reader.take(header_len - 6, "header padding")
    if fmt not in (0, 1):
        raise SmfParseError(f"unsupported SMF format {fmt}", reader.pos - 6 - (header_len - 6))
    if fmt == 0 and ntrks != 1:
        raise SmfParseError(f"format 0 file declares {ntrks} tracks", reader.pos - 4)

    smpte_us_per_tick: float | None = None
    if division & 0x8000:
        fps = 256 - (division >> 8)  # two's complement of the signed high byte
        ticks_per_frame = division & 0xFF
        if fps == 0 or ticks_per_frame == 0:
            raise SmfParseError("invalid SMPTE division", reader.pos - 2)
        smpte_us_per_tick = 1_000_000 / (fps * ticks_per_frame)
    elif division == 0:
        raise SmfParseError("division must be nonzero", reader.pos - 2)

    tracks: list[list[_TrackEvent]] = []
    while len(tracks) < ntrks:
        chunk_start = reader.pos
        chunk_type = reader.take(4, "track chunk type")
        chunk_len = reader.u32("track chunk length")
        if chunk_type != b"MTrk":
            # alien chunks are skipped per the SMF spec and do not count
            reader.take(chunk_len, "unknown chunk body")
            continue
        if reader.pos + chunk_len > len(data):
            raise SmfParseError("track chunk overruns file", chunk_start + 4)
        tracks.append(_parse_track(data, reader.pos, chunk_len, len(tracks)))
        reader.pos += chunk_len

    if smpte_us_per_tick is not None:
        def to_us(tick: int) -> int:
            return round(tick * smpte_us_per_tick)
    else:
        tempo_events = sorted(
            (
                (ev.tick, ev.track, ev.index, (ev.data[1] << 16) | (ev.data[2] << 8) | ev.data[3])
                for track in tracks
                for ev in track
                if ev.status == 0xFF and ev.data and ev.data[0] == 0x51 and len(ev.data) >= 4
            ),
        )
        tempo_map: list[tuple[int, int, int]] = [(0, 0, _DEFAULT_TEMPO)]
        for tick, _track, _idx, tempo in tempo_events:
            us = _tick_to_us(tick, tempo_map, division)
            last_tick, _, last_tempo = tempo_map[-1]
            if tick == last_tick and us == tempo_map[-1][1]:
                tempo_map[-1] = (tick, us, tempo)
            else:
                tempo_map.append((tick, us, tempo))

        def to_us(tick: int) -> int:
            return _tick_to_us(tick, tempo_map, division)

    merged: list[tuple[int, int, int, RawMidiEvent]] = []
    for track in tracks:
        for ev in track:
            if ev.status == 0xFF:
                continue
            kind_nibble = ev.status >> 4
            if kind_nibble == 0x9:
                kind = NOTE_ON
            elif kind_nibble == 0x8:
                kind = NOTE_OFF
            elif kind_nibble == 0xB:
                kind = CONTROL_CHANGE
            else:
                continue
            us = to_us(ev.tick)
            merged.append(
                (us, ev.track, ev.index, RawMidiEvent(kind, ev.data[0], ev.data[1], us))
            )
    merged.sort(key=lambda row: (row[0], row[1], row[2]))
    if not merged:
        return []
    base = merged[0][0]
    return [
        RawMidiEvent(ev.kind, ev.pitch, ev.velocity, ev.timestamp - base)
        for _, _, _, ev in merged
    ]


def replay_midi_file(path: str | Path) -> list[RawMidiEvent]:
    """Read an SMF file and return its note/controller events in order."""
    return parse_smf(Path(path).read_bytes())


@dataclass
class FileReplaySource(MidiSource):
    """MidiSource over an SMF file.

    With realtime=True the iterator sleeps so events arrive at performance
    pace (divided by `speed`); otherwise events are yielded immediately.
    """

    path: str | Path
    realtime: bool = False
    speed: float = 1.0

    def events(self) -> Iterator[RawMidiEvent]:
        events = replay_midi_file(self.path)
        if not self.realtime:
            yield from events
            return
        origin = time.monotonic()
        for event in events:
            target = origin + event.timestamp / 1_000_000 / self.speed
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            yield event
