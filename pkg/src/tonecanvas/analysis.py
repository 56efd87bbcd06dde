"""Symbolic music analysis over clips.

Everything here is a pure function of the clip (plus config), so analysis
can be re-run on logged clips and reproduce logged results exactly:

- key estimation: Krumhansl-Schmuckler profile correlation over a
  duration-weighted pitch-class histogram
- tempo: onset-lag clustering with a tactus preference, clamped
- melodic contour over the upper envelope (regression slope + split halves)
- repetition: normalized edit distance between per-bar interval strings
- dynamics, density, register span
- a valence/arousal emotion estimate with three lexicon words
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .midi import Clip
from .theory import MAJOR, MINOR, Key, Meter

__all__ = [
    "MAJOR_PROFILE",
    "MINOR_PROFILE",
    "LEXICON",
    "AnalysisParams",
    "KeyEstimate",
    "TempoEstimate",
    "MusicFeatures",
    "EmotionEstimate",
    "estimate_key",
    "estimate_tempo",
    "melodic_contour",
    "repetition_score",
    "infer_emotion",
    "analyze",
]

# Krumhansl & Kessler probe-tone profiles, from Krumhansl,
# "Cognitive Foundations of Musical Pitch", p. 30.
MAJOR_PROFILE = np.array(
    [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
)
MINOR_PROFILE = np.array(
    [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]
)

CONTOUR_CLASSES = ("ascending", "descending", "arched", "flat", "wavering")


@dataclass(frozen=True)
class AnalysisParams:
    """Tunable thresholds, defaults as calibrated."""

    tempo_clamp: tuple[float, float] = (40.0, 208.0)
    tempo_default: float = 96.0
    min_onsets_for_tempo: int = 4
    # onset-lag window and clustering tolerance (relative, scale-free)
    lag_window_us: tuple[int, int] = (200_000, 3_000_000)
    lag_cluster_tolerance: float = 0.04
    # tactus preference: log-normal around a comfortable beat rate
    tactus_center_bpm: float = 100.0
    tactus_width_octaves: float = 0.5
    contour_slope_threshold: float = 0.5  # semitones per second
    contour_wavering_rms: float = 2.0  # semitones of residual
    min_bars_for_repetition: int = 2


@dataclass(frozen=True)
class KeyEstimate:
    key: Key
    confidence: float  # normalized margin between best and runner-up, in [0, 1]


@dataclass(frozen=True)
class TempoEstimate:
    bpm: float
    low_confidence: bool


@dataclass(frozen=True)
class MusicFeatures:
    key: Key
    key_confidence: float
    tempo_bpm: float
    meter: Meter
    contour: str
    repetition: float
    mean_velocity: float
    velocity_range: int
    note_density: float  # notes per second over the window
    register_span: int  # semitones between lowest and highest pitch
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "key": {
                "tonic": self.key.tonic,
                "mode": self.key.mode,
                "confidence": self.key_confidence,
            },
            "tempo_bpm": self.tempo_bpm,
            "meter": str(self.meter),
            "contour": self.contour,
            "repetition": self.repetition,
            "dynamics": {
                "mean_velocity": self.mean_velocity,
                "velocity_range": self.velocity_range,
            },
            "note_density": self.note_density,
            "register_span": self.register_span,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class EmotionEstimate:
    valence: float
    arousal: float
    words: tuple[str, str, str]

    def to_dict(self) -> dict:
        return {"valence": self.valence, "arousal": self.arousal, "words": list(self.words)}


# ---------------------------------------------------------------------------
# Key
# ---------------------------------------------------------------------------


def estimate_key(clip: Clip) -> KeyEstimate:
    """Krumhansl-Schmuckler key estimate.

    Correlates the duration-weighted pitch-class histogram against all 24
    rotated profiles. For each candidate tonic the histogram itself is
    rotated onto a fixed profile, so transposing the clip permutes the
    candidate scores exactly and the winner transposes with the input.
    Exact ties break toward the lower pitch class, major before minor.
    """
    if not clip.notes:
        raise ValueError("cannot estimate key of an empty clip")
    histogram = np.zeros(12)
    for note in clip.notes:
        histogram[note.pitch % 12] += note.duration

    if np.ptp(histogram) == 0:
        return KeyEstimate(Key.from_pc(0, MAJOR), 0.0)

    scores: list[tuple[float, int, str]] = []
    for pc in range(12):
        rotated = np.roll(histogram, -pc)
        for mode, profile in ((MAJOR, MAJOR_PROFILE), (MINOR, MINOR_PROFILE)):
            scores.append((float(np.corrcoef(rotated, profile)[0, 1]), pc, mode))

    best_score, best_pc, best_mode = scores[0]
    for score, pc, mode in scores[1:]:
        if score > best_score:
            best_score, best_pc, best_mode = score, pc, mode
    ordered = sorted((s for s, _, _ in scores), reverse=True)
    spread = ordered[0] - ordered[-1]
    confidence = (ordered[0] - ordered[1]) / spread if spread > 0 else 0.0
    return KeyEstimate(Key.from_pc(best_pc, best_mode), confidence)


# ---------------------------------------------------------------------------
# Tempo
# ---------------------------------------------------------------------------


def _tactus_preference(bpm: float, params: AnalysisParams) -> float:
    octaves = math.log2(bpm / params.tactus_center_bpm)
    return math.exp(-0.5 * (octaves / params.tactus_width_octaves) ** 2)


def estimate_tempo(clip: Clip, params: AnalysisParams = AnalysisParams()) -> TempoEstimate:
    """Estimate the beat rate from onset lags.

    All pairwise onset lags inside the lag window are clustered by
    relative tolerance; each cluster is scored by its count times a
    tactus preference centered near 100 BPM, which picks the beat level
    when the texture is subdivided (steady eighths at 96 BPM estimate 96,
    not 192). Sparse clips (< 4 distinct onsets) return the default with
    the low-confidence flag. The result is clamped to the configured
    range.
    """
    onsets = sorted({note.onset for note in clip.notes})
    if len(onsets) < params.min_onsets_for_tempo:
        return TempoEstimate(params.tempo_default, True)

    low, high = params.lag_window_us
    lags: list[int] = []
    for i in range(len(onsets)):
        for j in range(i + 1, len(onsets)):
            lag = onsets[j] - onsets[i]
            if lag > high:
                break
            if lag >= low:
                lags.append(lag)
    if not lags:
        return TempoEstimate(params.tempo_default, True)

    lags.sort()
    clusters: list[tuple[int, int, int]] = []  # (first_lag, total, count)
    for lag in lags:
        if clusters and lag <= clusters[-1][0] * (1 + params.lag_cluster_tolerance):
            first, total, count = clusters[-1]
            clusters[-1] = (first, total + lag, count + 1)
        else:
            clusters.append((lag, lag, 1))

    best_bpm = params.tempo_default
    best_score = -1.0
    for _, total, count in clusters:
        mean_lag = total / count
        bpm = 60_000_000 / mean_lag
        score = count * _tactus_preference(bpm, params)
        if score > best_score:
            best_score = score
            best_bpm = bpm

    clamped = min(max(best_bpm, params.tempo_clamp[0]), params.tempo_clamp[1])
    return TempoEstimate(clamped, False)


# ---------------------------------------------------------------------------
# Contour
# ---------------------------------------------------------------------------


def _slope(times: list[float], pitches: list[int]) -> float:
    """Least-squares slope in semitones per second."""
    n = len(times)
    mean_t = sum(times) / n
    mean_p = sum(pitches) / n
    cov = sum((t - mean_t) * (p - mean_p) for t, p in zip(times, pitches))
    var = sum((t - mean_t) ** 2 for t in times)
    if var == 0:
        return 0.0
    return cov / var


def melodic_contour(clip: Clip, params: AnalysisParams = AnalysisParams()) -> str:
    """Classify the upper-envelope contour.

    Uses the highest pitch at each distinct onset. Pitches are taken
    relative to the first note so transposition cannot change the class.
    Fewer than two envelope points classify as flat.
    """
    envelope: dict[int, int] = {}
    for note in clip.notes:
        if note.onset not in envelope or note.pitch > envelope[note.onset]:
            envelope[note.onset] = note.pitch
    if len(envelope) < 2:
        return "flat"
    onsets = sorted(envelope)
    base_onset, base_pitch = onsets[0], envelope[onsets[0]]
    times = [(onset - base_onset) / 1_000_000 for onset in onsets]
    pitches = [envelope[onset] - base_pitch for onset in onsets]

    threshold = params.contour_slope_threshold
    if len(onsets) >= 3:
        mid = len(onsets) // 2
        rise = _slope(times[: mid + 1], pitches[: mid + 1])
        fall = _slope(times[mid:], pitches[mid:])
        if rise > threshold and fall < -threshold:
            return "arched"
    slope = _slope(times, pitches)
    if slope >= threshold:
        return "ascending"
    if slope <= -threshold:
        return "descending"
    mean_t = sum(times) / len(times)
    mean_p = sum(pitches) / len(pitches)
    residual = math.sqrt(
        sum((p - (mean_p + slope * (t - mean_t))) ** 2 for t, p in zip(times, pitches))
        / len(times)
    )
    return "wavering" if residual >= params.contour_wavering_rms else "flat"


# ---------------------------------------------------------------------------
# Repetition
# ---------------------------------------------------------------------------


def _edit_distance(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i]
        for j, item_b in enumerate(b, start=1):
            cost = 0 if item_a == item_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def repetition_score(
    clip: Clip,
    tempo_bpm: float,
    meter: Meter = Meter(4, 4),
    params: AnalysisParams = AnalysisParams(),
) -> tuple[float, bool]:
    """Mean pairwise bar similarity in [0, 1], plus an insufficient flag.

    Each complete bar becomes its string of successive pitch intervals;
    similarity of a bar pair is 1 minus their edit distance normalized by
    the longer length. Interval strings make the score transposition
    invariant. Returns (0.0, True) with fewer than two complete bars.
    """
    bar_us = float(meter.bar_length) * 240_000_000 / tempo_bpm
    n_bars = int(clip.length / bar_us)
    if n_bars < params.min_bars_for_repetition:
        return 0.0, True

    ordered = sorted(clip.notes, key=lambda n: (n.onset, n.pitch))
    bars: list[list[int]] = [[] for _ in range(n_bars)]
    for note in ordered:
        index = int((note.onset - clip.window_start) / bar_us)
        if index < n_bars:
            bars[index].append(note.pitch)
    strings = [
        tuple(b - a for a, b in zip(pitches, pitches[1:])) for pitches in bars
    ]

    total = 0.0
    pairs = 0
    for i in range(n_bars):
        for j in range(i + 1, n_bars):
            a, b = strings[i], strings[j]
            pairs += 1
            if not a and not b:
                total += 1.0
            elif not a or not b:
                total += 0.0
            else:
                total += 1.0 - _edit_distance(a, b) / max(len(a), len(b))
    return total / pairs, False


# ---------------------------------------------------------------------------
# Emotion
# ---------------------------------------------------------------------------

# Word cells for the four valence/arousal quadrants plus the neutral
# center. Three words are sampled per estimate.
LEXICON: dict[str, tuple[str, ...]] = {
    "bright": ("energetic", "lively", "joyful", "upbeat", "vibrant", "exciting"),
    "turbulent": ("urgent", "intense", "dramatic", "stormy", "restless", "fierce"),
    "melancholy": ("melancholic", "reflective", "somber", "introspective", "pensive", "tranquil"),
    "serene": ("serene", "tranquil", "soothing", "harmonious", "gentle", "graceful"),
    "neutral": ("calm", "balanced", "contemplative", "steady", "composed", "mellow"),
}

_NEUTRAL_BAND = 0.15
_VELOCITY_MID = 63.5
_DENSITY_MID = 3.0  # notes per second

def _lexicon_cell(valence: float, arousal: float) -> str:
    if abs(valence) <= _NEUTRAL_BAND and abs(arousal) <= _NEUTRAL_BAND:
        return "neutral"
    if valence >= 0:
        return "bright" if arousal >= 0 else "serene"
    return "turbulent" if arousal >= 0 else "melancholy"


def emotion_words(valence: float, arousal: float) -> tuple[str, str, str]:
    """Pick three descriptive words for a point on the valence/arousal plane.

    Words are drawn without replacement from the lexicon cell, seeded by
    the quantized (valence, arousal) coordinates so equal estimates always
    word identically.
    """
    cell = _lexicon_cell(valence, arousal)
    quant_v = round(valence * 4)
    quant_a = round(arousal * 4)
    rng = random.Random((quant_v + 4) * 100 + (quant_a + 4))
    w = rng.sample(LEXICON[cell], 3)
    return (w[0], w[1], w[2])


def infer_emotion(features: MusicFeatures) -> EmotionEstimate:
    """Map features to a valence/arousal estimate plus three words.

    Valence: +-0.5 from mode, shifted up to +-0.25 by mean velocity.
    Arousal: affine in tempo over the clamp range, shifted up to +-0.25
    by note density. Both clamped to [-1, 1].
    """
    valence = 0.5 if features.key.mode == MAJOR else -0.5
    valence += 0.25 * (features.mean_velocity - _VELOCITY_MID) / _VELOCITY_MID
    valence = min(max(valence, -1.0), 1.0)

    arousal = (features.tempo_bpm - 124.0) / 84.0
    density_shift = (features.note_density - _DENSITY_MID) / _DENSITY_MID
    arousal += 0.25 * min(max(density_shift, -1.0), 1.0)
    arousal = min(max(arousal, -1.0), 1.0)

    return EmotionEstimate(valence, arousal, emotion_words(valence, arousal))


# ---------------------------------------------------------------------------
# Composite
# ---------------------------------------------------------------------------


def analyze(
    clip: Clip,
    meter: Meter = Meter(4, 4),
    params: AnalysisParams = AnalysisParams(),
) -> tuple[MusicFeatures, EmotionEstimate]:
    """Full feature extraction plus emotion estimate for one clip."""
    if not clip.notes:
        raise ValueError("cannot analyze an empty clip")
    key_estimate = estimate_key(clip)
    tempo = estimate_tempo(clip, params)
    repetition, too_short = repetition_score(clip, tempo.bpm, meter, params)
    velocities = [note.velocity for note in clip.notes]
    pitches = [note.pitch for note in clip.notes]
    flags = []
    if tempo.low_confidence:
        flags.append("tempo_default")
    if too_short:
        flags.append("repetition_insufficient")
    features = MusicFeatures(
        key=key_estimate.key,
        key_confidence=key_estimate.confidence,
        tempo_bpm=tempo.bpm,
        meter=meter,
        contour=melodic_contour(clip, params),
        repetition=repetition,
        mean_velocity=sum(velocities) / len(velocities),
        velocity_range=max(velocities) - min(velocities),
        note_density=len(clip.notes) / (clip.length / 1_000_000),
        register_span=max(pitches) - min(pitches),
        flags=tuple(flags),
    )
    return features, infer_emotion(features)
