"""ABC notation codec: clips to ABC text and back.

The supported subset is what a keyboard clip needs: headers (X, M, L, Q,
K, V, %%MIDI program), notes with key-aware accidentals and octave marks,
duration multipliers, rests, chords in brackets, barlines, and a ">"
accent prefix. Ties, tuplets, grace notes and lyrics are out of scope.

Encoding is loss-aware and canonical. Notes snap to a 1/16-note grid at
the given tempo, split into a treble and a bass voice at `split_pitch`,
and are arranged so each voice is a strict sequence: notes sharing a
quantized onset become one chord with the group's minimum duration, and
durations are trimmed at the next onset in the voice and at the bar end
(no ties means nothing may cross a barline). That arrangement defines the
"quantized note list" of a clip, and the round-trip guarantee is exact:
score_to_notes(parse_abc(render_abc(encode_clip(c)))) equals it.

Accidentals apply only to the note they mark (no within-bar propagation);
the encoder spells every out-of-key pitch explicitly, so the text never
depends on that convention.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .midi import Clip
from .theory import Key, Meter, key_signature

__all__ = [
    "GRID",
    "AbcParseError",
    "EncodeOptions",
    "VoiceInfo",
    "AbcHeader",
    "NoteToken",
    "ChordToken",
    "RestToken",
    "BarToken",
    "AbcScore",
    "ScoreNote",
    "QuantNote",
    "pitch_to_abc",
    "duration_to_abc",
    "quantize_clip",
    "quantized_score_notes",
    "encode_clip",
    "render_abc",
    "parse_abc",
    "score_to_notes",
]

GRID = 16  # quantization grid: 1/16 of a whole note

_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_LETTERS = ("C", "D", "E", "F", "G", "A", "B")

# Fallback chromatic spelling when no key-signature letter matches:
# flats for Db/Eb/Ab/Bb, sharp for F#.
_CHROMATIC = {
    0: ("C", 0), 1: ("D", -1), 2: ("D", 0), 3: ("E", -1), 4: ("E", 0),
    5: ("F", 0), 6: ("F", 1), 7: ("G", 0), 8: ("A", -1), 9: ("A", 0),
    10: ("B", -1), 11: ("B", 0),
}

_ACCIDENTAL_MARK = {1: "^", -1: "_", 0: "="}
_MARK_ACCIDENTAL = {"^": 1, "_": -1, "=": 0}


class AbcParseError(ValueError):
    """Malformed ABC text; line and column are 1-based."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Score structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VoiceInfo:
    voice_id: int
    label: str | None = None
    program: tuple[int, int] | None = None  # (channel, program)


@dataclass(frozen=True)
class AbcHeader:
    index: int = 1
    meter: Meter = Meter(4, 4)
    unit_note_length: Fraction = Fraction(1, 8)
    tempo: tuple[Fraction, int] = (Fraction(1, 4), 120)
    key: Key = Key("C", "major")
    voices: tuple[VoiceInfo, ...] = ()


@dataclass(frozen=True)
class NoteToken:
    pitch: int
    duration: Fraction  # whole-note units
    accent: bool = False


@dataclass(frozen=True)
class ChordToken:
    """Simultaneous notes. The voice clock advances by the first note's
    duration (the canonical encoder always emits equal durations)."""

    notes: tuple[tuple[int, Fraction], ...]  # (pitch, duration)
    accent: bool = False

    @property
    def duration(self) -> Fraction:
        return self.notes[0][1]


@dataclass(frozen=True)
class RestToken:
    duration: Fraction


@dataclass(frozen=True)
class BarToken:
    pass


Token = NoteToken | ChordToken | RestToken | BarToken


@dataclass(frozen=True)
class AbcScore:
    """Parsed or encoded tune: header plus per-voice token sequences."""

    header: AbcHeader
    voices: tuple[tuple[int, tuple[Token, ...]], ...]

    def voice_tokens(self, voice_id: int) -> tuple[Token, ...]:
        for vid, tokens in self.voices:
            if vid == voice_id:
                return tokens
        raise KeyError(f"no voice {voice_id}")


@dataclass(frozen=True)
class ScoreNote:
    """A note recovered from a score: onset/duration in quarter-note beats."""

    pitch: int
    onset: Fraction
    duration: Fraction
    voice: int


@dataclass(frozen=True)
class QuantNote:
    """A clip note on the 1/16 grid (integer grid steps), voice assigned."""

    pitch: int
    onset: int
    duration: int
    voice: int
    velocity: int


@dataclass(frozen=True)
class EncodeOptions:
    unit_note_length: Fraction = Fraction(1, 8)
    split_pitch: int = 60  # notes below this go to the bass voice
    accent_velocity: int = 100
    bars_per_line: int = 4

    def __post_init__(self) -> None:
        if (self.unit_note_length * GRID).denominator != 1:
            raise ValueError("unit_note_length must sit on the 1/16 grid")


# ---------------------------------------------------------------------------
# Pitch and duration spelling
# ---------------------------------------------------------------------------


def pitch_to_abc(pitch: int, key: Key) -> str:
    """Spell a MIDI pitch in ABC for the given key.

    Pitches covered by the key signature render as bare letters; anything
    else gets an explicit ^/_/= mark using flat spellings for Db/Eb/Ab/Bb
    and sharp for F#. Octave marks follow ABC convention (C = middle C,
    c = an octave up, commas/apostrophes beyond).
    """
    if not 0 <= pitch <= 127:
        raise ValueError(f"pitch out of range 0..127: {pitch}")
    signature = key_signature(key)
    pc = pitch % 12
    letter = None
    for candidate in _LETTERS:
        alt = signature.get(candidate, 0)
        if (_LETTER_PC[candidate] + alt) % 12 == pc:
            letter, total_alt, mark = candidate, alt, ""
            break
    if letter is None:
        letter, total_alt = _CHROMATIC[pc]
        mark = _ACCIDENTAL_MARK[total_alt]
        if signature.get(letter, 0) == total_alt:
            mark = ""  # already implied; cannot happen after the loop, kept for safety
    written = pitch - total_alt
    octave = (written - _LETTER_PC[letter]) // 12 - 1
    if octave >= 5:
        return mark + letter.lower() + "'" * (octave - 5)
    return mark + letter + "," * (4 - octave)


def duration_to_abc(duration, unit_note_length: Fraction = Fraction(1, 8)) -> str:
    """Duration suffix for a note lasting `duration` quarter-note beats.

    A quarter note with L:1/8 renders as "2", a sixteenth as "/2", a
    dotted quarter as "3". Returns "" when the duration equals the unit.
    """
    beats = duration if isinstance(duration, Fraction) else Fraction(duration).limit_denominator(64)
    ratio = beats / 4 / unit_note_length
    return _suffix_for_ratio(ratio)


def _suffix_for_ratio(ratio: Fraction) -> str:
    if ratio <= 0:
        raise ValueError(f"duration ratio must be positive, got {ratio}")
    if ratio == 1:
        return ""
    if ratio.denominator == 1:
        return str(ratio.numerator)
    if ratio.numerator == 1:
        return f"/{ratio.denominator}"
    return f"{ratio.numerator}/{ratio.denominator}"


# ---------------------------------------------------------------------------
# Quantization (the canonical arrangement)
# ---------------------------------------------------------------------------


def _round_to_grid(numerator: int, denominator: int) -> int:
    """Nearest integer, ties away from zero (inputs are non-negative)."""
    return (2 * numerator + denominator) // (2 * denominator)


def quantize_clip(
    clip: Clip,
    tempo_bpm: float,
    meter: Meter,
    options: EncodeOptions = EncodeOptions(),
) -> list[QuantNote]:
    """Snap a clip onto the grid and arrange it into two strict voices.

    This is the codec's definition of the clip's quantized note list: the
    round-trip through rendered ABC reproduces it exactly.
    """
    if not clip.notes:
        raise ValueError("cannot quantize an empty clip")
    bpm = max(1, int(round(tempo_bpm)))
    # one grid step = 1/16 whole note = 15_000_000/bpm microseconds
    per_voice: dict[int, list[tuple[int, int, int, int]]] = {}
    for note in clip.notes:
        onset = _round_to_grid((note.onset - clip.window_start) * bpm, 15_000_000)
        duration = max(1, _round_to_grid(note.duration * bpm, 15_000_000))
        voice = 2 if note.pitch < options.split_pitch else 1
        per_voice.setdefault(voice, []).append((onset, note.pitch, duration, note.velocity))

    bar = int(meter.bar_length * GRID)
    result: list[QuantNote] = []
    for voice, rows in per_voice.items():
        rows.sort()
        groups: list[tuple[int, list[tuple[int, int, int, int]]]] = []
        for row in rows:
            if groups and groups[-1][0] == row[0]:
                groups[-1][1].append(row)
            else:
                groups.append((row[0], [row]))
        for i, (onset, members) in enumerate(groups):
            duration = min(m[2] for m in members)
            bar_end = (onset // bar + 1) * bar
            duration = min(duration, bar_end - onset)
            if i + 1 < len(groups):
                duration = min(duration, groups[i + 1][0] - onset)
            for _, pitch, _, velocity in members:
                result.append(QuantNote(pitch, onset, duration, voice, velocity))
    result.sort(key=lambda q: (q.onset, q.voice, q.pitch, q.velocity))
    return result


def quantized_score_notes(
    clip: Clip,
    tempo_bpm: float,
    meter: Meter,
    options: EncodeOptions = EncodeOptions(),
) -> list[ScoreNote]:
    """The quantized note list in beats: the round-trip reference."""
    return [
        ScoreNote(q.pitch, Fraction(q.onset, 4), Fraction(q.duration, 4), q.voice)
        for q in quantize_clip(clip, tempo_bpm, meter, options)
    ]


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_clip(
    clip: Clip,
    tempo_bpm: float,
    meter: Meter,
    key: Key,
    options: EncodeOptions = EncodeOptions(),
) -> AbcScore:
    """Encode a clip as a two-voice ABC score.

    The treble voice is V:1; notes below `split_pitch` form V:2, labeled
    "bass". Velocities at or above `accent_velocity` put a ">" accent on
    the token. Raises ValueError for an empty clip.
    """
    quantized = quantize_clip(clip, tempo_bpm, meter, options)
    bar = int(meter.bar_length * GRID)
    unit_steps = int(options.unit_note_length * GRID)

    voices: list[tuple[int, tuple[Token, ...]]] = []
    infos: list[VoiceInfo] = []
    for voice_id in (1, 2):
        rows = [q for q in quantized if q.voice == voice_id]
        if not rows:
            continue
        tokens: list[Token] = []
        clock = 0

        def advance(steps: int) -> None:
            nonlocal clock
            clock += steps
            if clock % bar == 0:
                tokens.append(BarToken())

        groups: list[tuple[int, list[QuantNote]]] = []
        for q in rows:
            if groups and groups[-1][0] == q.onset:
                groups[-1][1].append(q)
            else:
                groups.append((q.onset, [q]))
        for onset, members in groups:
            while clock < onset:
                bar_end = (clock // bar + 1) * bar
                rest = min(onset, bar_end) - clock
                tokens.append(RestToken(Fraction(rest, GRID)))
                advance(rest)
            duration = Fraction(members[0].duration, GRID)
            accent = any(m.velocity >= options.accent_velocity for m in members)
            if len(members) == 1:
                tokens.append(NoteToken(members[0].pitch, duration, accent))
            else:
                tokens.append(
                    ChordToken(tuple((m.pitch, duration) for m in members), accent)
                )
            advance(members[0].duration)
        if not tokens or not isinstance(tokens[-1], BarToken):
            tokens.append(BarToken())
        voices.append((voice_id, tuple(tokens)))
        infos.append(
            VoiceInfo(
                voice_id,
                label="bass" if voice_id == 2 else None,
                program=(voice_id, 0),
            )
        )

    header = AbcHeader(
        index=1,
        meter=meter,
        unit_note_length=options.unit_note_length,
        tempo=(Fraction(1, 4), max(1, int(round(tempo_bpm)))),
        key=key,
        voices=tuple(infos),
    )
    return AbcScore(header=header, voices=tuple(voices))


def render_abc(score: AbcScore, bars_per_line: int = 4) -> str:
    """Serialize a score to ABC text (newline-terminated)."""
    header = score.header
    lines = [
        f"X:{header.index}",
        f"M:{header.meter}",
        f"L:{header.unit_note_length.numerator}/{header.unit_note_length.denominator}",
        f"Q:{header.tempo[0].numerator}/{header.tempo[0].denominator}={header.tempo[1]}",
        f"K:{header.key.abc_name()}",
    ]
    info_by_id = {info.voice_id: info for info in header.voices}
    for voice_id, tokens in score.voices:
        info = info_by_id.get(voice_id, VoiceInfo(voice_id))
        voice_line = f"V:{voice_id}"
        if info.label:
            voice_line += f' name="{info.label}"'
        lines.append(voice_line)
        if info.program is not None:
            lines.append(f"%%MIDI program {info.program[0]} {info.program[1]}")
        lines.extend(_render_tokens(tokens, score.header, bars_per_line))
    return "\n".join(lines) + "\n"


def _render_token(token: Token, header: AbcHeader) -> str:
    unit = header.unit_note_length
    if isinstance(token, BarToken):
        return "|"
    if isinstance(token, RestToken):
        return "z" + _suffix_for_ratio(token.duration / unit)
    accent = ">" if getattr(token, "accent", False) else ""
    if isinstance(token, NoteToken):
        return accent + pitch_to_abc(token.pitch, header.key) + _suffix_for_ratio(
            token.duration / unit
        )
    if isinstance(token, ChordToken):
        shared = token.notes[0][1]
        if all(duration == shared for _, duration in token.notes):
            body = "".join(pitch_to_abc(p, header.key) for p, _ in token.notes)
            return accent + "[" + body + "]" + _suffix_for_ratio(shared / unit)
        body = "".join(
            pitch_to_abc(p, header.key) + _suffix_for_ratio(d / unit) for p, d in token.notes
        )
        return accent + "[" + body + "]"
    raise TypeError(f"unknown token {token!r}")


def _render_tokens(tokens: tuple[Token, ...], header: AbcHeader, bars_per_line: int) -> list[str]:
    lines: list[str] = []
    current: list[str] = []
    bars = 0
    for token in tokens:
        current.append(_render_token(token, header))
        if isinstance(token, BarToken):
            bars += 1
            if bars % bars_per_line == 0:
                lines.append(" ".join(current))
                current = []
    if current:
        lines.append(" ".join(current))
    return lines


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_VOICE_RE = re.compile(r"^V:\s*(\d+)\s*(.*)$")
_VOICE_NAME_RE = re.compile(r'^name="([^"]*)"$')
_MIDI_PROGRAM_RE = re.compile(r"^%%MIDI\s+program\s+(\d+)\s+(\d+)\s*$")


class _BodyScanner:
    def __init__(self, text: str, line_no: int) -> None:
        self.text = text
        self.line_no = line_no
        self.pos = 0

    def error(self, message: str, column: int | None = None) -> AbcParseError:
        col = (self.pos if column is None else column) + 1
        return AbcParseError(message, self.line_no, col)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def read_suffix(self) -> Fraction:
        """Duration multiplier: "", "3", "/2", "3/2", "/" (= /2)."""
        num = 0
        while self.peek().isdigit():
            num = num * 10 + int(self.take())
        numerator = num if num else 1
        if self.peek() == "/":
            self.take()
            den = 0
            while self.peek().isdigit():
                den = den * 10 + int(self.take())
            return Fraction(numerator, den if den else 2)
        return Fraction(numerator)

    def read_pitch(self, key: Key) -> int:
        start = self.pos
        alt: int | None = None
        if self.peek() in _MARK_ACCIDENTAL:
            alt = _MARK_ACCIDENTAL[self.take()]
        ch = self.peek()
        if not ch or ch.upper() not in _LETTER_PC:
            raise self.error(f"expected note letter, found {ch!r}" if ch else "expected note letter")
        self.take()
        letter = ch.upper()
        octave = 4 if ch.isupper() else 5
        while self.peek() in (",", "'"):
            octave += 1 if self.take() == "'" else -1
        if alt is None:
            alt = key_signature(key).get(letter, 0)
        pitch = 12 * (octave + 1) + _LETTER_PC[letter] + alt
        if not 0 <= pitch <= 127:
            raise self.error(f"pitch {pitch} outside MIDI range", start)
        return pitch


def parse_abc(text: str) -> AbcScore:
    """Parse ABC text in the supported subset.

    Header fields are optional and default to X:1, M:4/4, L:1/8,
    Q:1/4=120, K:C; a body line before any V: declaration goes to an
    implicit voice 1. Raises AbcParseError with 1-based line/column.
    """
    index = 1
    meter = Meter(4, 4)
    unit = Fraction(1, 8)
    tempo = (Fraction(1, 4), 120)
    key = Key("C", "major")

    voice_order: list[int] = []
    voice_tokens: dict[int, list[Token]] = {}
    voice_infos: dict[int, VoiceInfo] = {}
    current_voice: int | None = None
    body_started = False

    def ensure_voice(voice_id: int, line_no: int, label: str | None = None) -> None:
        nonlocal current_voice
        if voice_id in voice_tokens:
            raise AbcParseError(f"voice {voice_id} already declared", line_no, 1)
        voice_order.append(voice_id)
        voice_tokens[voice_id] = []
        voice_infos[voice_id] = VoiceInfo(voice_id, label=label)
        current_voice = voice_id

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.rstrip()
        if not line.strip():
            continue

        program_match = _MIDI_PROGRAM_RE.match(line)
        if program_match:
            if current_voice is None:
                ensure_voice(1, line_no)
            info = voice_infos[current_voice]
            voice_infos[current_voice] = VoiceInfo(
                info.voice_id, info.label, (int(program_match.group(1)), int(program_match.group(2)))
            )
            continue
        if line.startswith("%"):
            continue  # comment or unsupported directive

        voice_match = _VOICE_RE.match(line)
        if voice_match:
            voice_id = int(voice_match.group(1))
            attrs = voice_match.group(2).strip()
            label = None
            if attrs:
                name_match = _VOICE_NAME_RE.match(attrs)
                if not name_match:
                    raise AbcParseError(
                        f"unsupported voice attributes {attrs!r}", line_no, len(line) - len(attrs) + 1
                    )
                label = name_match.group(1)
            ensure_voice(voice_id, line_no, label)
            continue

        if len(line) > 1 and line[1] == ":" and line[0] in "XMLQK":
            if body_started:
                raise AbcParseError(f"{line[0]}: field after tune body", line_no, 1)
            value = line[2:].strip()
            try:
                if line[0] == "X":
                    index = int(value)
                elif line[0] == "M":
                    meter = Meter.parse(value)
                elif line[0] == "L":
                    num, den = value.split("/")
                    unit = Fraction(int(num), int(den))
                elif line[0] == "Q":
                    beat_text, bpm_text = value.split("=")
                    num, den = beat_text.split("/")
                    tempo = (Fraction(int(num), int(den)), int(bpm_text))
                else:
                    key = Key.from_abc_name(value)
            except (ValueError, ZeroDivisionError) as exc:
                raise AbcParseError(f"bad {line[0]}: field value {value!r}", line_no, 3) from exc
            continue

        # anything else is tune body
        body_started = True
        if current_voice is None:
            ensure_voice(1, line_no)
        voice_tokens[current_voice].extend(_parse_body_line(line, line_no, unit, key))

    header = AbcHeader(
        index=index,
        meter=meter,
        unit_note_length=unit,
        tempo=tempo,
        key=key,
        voices=tuple(voice_infos[v] for v in voice_order),
    )
    return AbcScore(
        header=header,
        voices=tuple((v, tuple(voice_tokens[v])) for v in voice_order),
    )


def _parse_body_line(line: str, line_no: int, unit: Fraction, key: Key) -> list[Token]:
    scanner = _BodyScanner(line, line_no)
    tokens: list[Token] = []
    pending_accent = False

    def attach(token: Token) -> None:
        nonlocal pending_accent
        tokens.append(token)
        pending_accent = False

    while scanner.pos < len(scanner.text):
        ch = scanner.peek()
        if ch in " \t":
            scanner.take()
            continue
        if ch == ">":
            if pending_accent:
                raise scanner.error("doubled accent mark")
            scanner.take()
            pending_accent = True
            continue
        if ch == "|":
            if pending_accent:
                raise scanner.error("accent mark before barline")
            scanner.take()
            if scanner.peek() in ("|", "]"):
                scanner.take()
            tokens.append(BarToken())
            continue
        if ch in ("z", "Z"):
            scanner.take()
            if pending_accent:
                raise scanner.error("accent mark before rest")
            attach(RestToken(scanner.read_suffix() * unit))
            continue
        if ch == "[":
            open_col = scanner.pos
            scanner.take()
            notes: list[tuple[int, Fraction]] = []
            while True:
                if scanner.peek() == "":
                    raise scanner.error("unclosed chord bracket", open_col)
                if scanner.peek() == "]":
                    scanner.take()
                    break
                if scanner.peek() in " \t":
                    scanner.take()
                    continue
                pitch = scanner.read_pitch(key)
                notes.append((pitch, scanner.read_suffix() * unit))
            if not notes:
                raise scanner.error("empty chord", open_col)
            outer = scanner.read_suffix()
            attach(
                ChordToken(tuple((p, d * outer) for p, d in notes), accent=pending_accent)
            )
            continue
        if ch in _MARK_ACCIDENTAL or ch.upper() in _LETTER_PC:
            pitch = scanner.read_pitch(key)
            attach(NoteToken(pitch, scanner.read_suffix() * unit, accent=pending_accent))
            continue
        raise scanner.error(f"unexpected character {ch!r}")
    if pending_accent:
        raise scanner.error("accent mark with nothing to accent", len(line) - 1)
    return tokens


# ---------------------------------------------------------------------------
# Score to notes
# ---------------------------------------------------------------------------


def score_to_notes(score: AbcScore) -> list[ScoreNote]:
    """Expand a score into notes with onsets/durations in beats.

    Each voice has its own clock; barlines carry no time. The merged list
    is sorted by (onset, voice, pitch, duration).
    """
    notes: list[ScoreNote] = []
    for voice_id, tokens in score.voices:
        clock = Fraction(0)
        for token in tokens:
            if isinstance(token, BarToken):
                continue
            if isinstance(token, RestToken):
                clock += token.duration
                continue
            if isinstance(token, NoteToken):
                notes.append(ScoreNote(token.pitch, clock * 4, token.duration * 4, voice_id))
                clock += token.duration
                continue
            for pitch, duration in token.notes:
                notes.append(ScoreNote(pitch, clock * 4, duration * 4, voice_id))
            clock += token.duration
    notes.sort(key=lambda n: (n.onset, n.voice, n.pitch, n.duration))
    return notes
