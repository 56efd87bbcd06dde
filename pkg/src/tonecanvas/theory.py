"""Shared music-theory vocabulary: pitch classes, keys, signatures, meters.

Kept deliberately small; this module owns the naming conventions the codec
and the analysis stage must agree on (a key estimate has to render as a
valid ABC ``K:`` field and parse back to the same key).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "Key",
    "Meter",
    "MAJOR",
    "MINOR",
    "TONIC_NAMES_MAJOR",
    "TONIC_NAMES_MINOR",
    "key_signature",
    "name_to_pc",
]

MAJOR = "major"
MINOR = "minor"

# Conventional spellings for the 12 tonics, capped at 6 accidentals.
TONIC_NAMES_MAJOR = ("C", "Db", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")
TONIC_NAMES_MINOR = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "G#", "A", "Bb", "B")

_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# Circle-of-fifths position per major tonic pitch class, matching the
# spellings above (F# major = +6, Db major = -5, ...).
_MAJOR_FIFTHS = {0: 0, 1: -5, 2: 2, 3: -3, 4: 4, 5: -1, 6: 6, 7: 1, 8: -4, 9: 3, 10: -2, 11: 5}

_SHARP_ORDER = ("F", "C", "G", "D", "A", "E", "B")
_FLAT_ORDER = ("B", "E", "A", "D", "G", "C", "F")


def name_to_pc(name: str) -> int:
    """Pitch class of a tonic name like "C", "F#", "Eb"."""
    letter = name[0].upper()
    if letter not in _LETTER_PC:
        raise ValueError(f"unknown note name: {name!r}")
    pc = _LETTER_PC[letter]
    for ch in name[1:]:
        if ch == "#":
            pc += 1
        elif ch == "b":
            pc -= 1
        else:
            raise ValueError(f"unknown accidental in note name: {name!r}")
    return pc % 12


@dataclass(frozen=True)
class Key:
    """A key as (tonic name, mode), e.g. Key("E", "minor")."""

    tonic: str
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in (MAJOR, MINOR):
            raise ValueError(f"mode must be major or minor, got {self.mode!r}")
        name_to_pc(self.tonic)  # validates spelling

    @property
    def tonic_pc(self) -> int:
        return name_to_pc(self.tonic)

    @classmethod
    def from_pc(cls, pc: int, mode: str) -> "Key":
        names = TONIC_NAMES_MAJOR if mode == MAJOR else TONIC_NAMES_MINOR
        return cls(names[pc % 12], mode)

    def abc_name(self) -> str:
        """Render for an ABC K: field ("Em", "C", "Bb")."""
        return self.tonic + ("m" if self.mode == MINOR else "")

    @classmethod
    def from_abc_name(cls, text: str) -> "Key":
        text = text.strip()
        if not text:
            raise ValueError("empty key name")
        mode = MAJOR
        if text.endswith("m"):
            mode, text = MINOR, text[:-1]
        pc = name_to_pc(text)
        # Normalize to the conventional spelling table so signatures stay
        # within 6 accidentals regardless of input spelling.
        return cls.from_pc(pc, mode)


def key_signature(key: Key) -> dict[str, int]:
    """Per-letter alteration map for the key's signature.

    Returns {"F": 1} for E minor, {"B": -1, "E": -1, "A": -1} for Eb major,
    and so on. Letters not present are unaltered.
    """
    if key.mode == MAJOR:
        fifths = _MAJOR_FIFTHS[key.tonic_pc]
    else:
        fifths = _MAJOR_FIFTHS[(key.tonic_pc + 3) % 12]
    if fifths >= 0:
        return {letter: 1 for letter in _SHARP_ORDER[:fifths]}
    return {letter: -1 for letter in _FLAT_ORDER[:-fifths]}


@dataclass(frozen=True)
class Meter:
    """A time signature kept as written (4/4 is not reduced to 1/1)."""

    numerator: int
    denominator: int

    _ALLOWED_DENOMS = (2, 4, 8, 16)

    def __post_init__(self) -> None:
        if self.numerator < 1:
            raise ValueError("meter numerator must be >= 1")
        if self.denominator not in self._ALLOWED_DENOMS:
            raise ValueError(
                f"meter denominator must be one of {self._ALLOWED_DENOMS}, got {self.denominator}"
            )

    @classmethod
    def parse(cls, text: str) -> "Meter":
        try:
            num, den = text.strip().split("/")
            return cls(int(num), int(den))
        except (ValueError, AttributeError) as exc:
            raise ValueError(f"cannot parse meter {text!r}, expected 'N/D'") from exc

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    @property
    def bar_length(self) -> Fraction:
        """Bar length in whole-note units (4/4 -> 1, 3/4 -> 3/4)."""
        return Fraction(self.numerator, self.denominator)
