"""Musical features to visual parameters, realized as prompt clauses.

The mapping is parametric and immediately responsive: each clip nudges the
visual state halfway toward a target derived from the clip's features, so
playing louder brightens the next image within one step while the scene
stays temporally coherent. Parameters become prompt text through a clause
table shipped as an editable data file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .analysis import EmotionEstimate, MusicFeatures
from .theory import MINOR

SMOOTHING_ALPHA = 0.5
MINOR_BRIGHTNESS_DELTA = -0.3
_VELOCITY_MAX = 127.0
_SPAN_MAX = 48.0


@dataclass(frozen=True)
class VisualParams:
    """Visual state: brightness/warmth in [-1, 1], motion/openness in [0, 1]."""

    brightness: float = 0.0
    warmth: float = 0.0
    motion: float = 0.0
    openness: float = 0.0

    def to_dict(self) -> dict:
        return {
            "brightness": self.brightness,
            "warmth": self.warmth,
            "motion": self.motion,
            "openness": self.openness,
        }


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def map_features(
    features: MusicFeatures,
    emotion: EmotionEstimate,
    prev: VisualParams,
    alpha: float = SMOOTHING_ALPHA,
) -> VisualParams:
    """Advance the visual state one smoothing step toward the clip's target.

    Targets: brightness is affine in mean velocity ([0,127] onto [-1,1]),
    with a -0.3 delta in minor mode; warmth is the emotion valence; motion
    is arousal rescaled to [0,1]; openness is the register span over four
    octaves. Each target is clamped to its range, then the output moves
    ``alpha`` of the way there from ``prev`` (and is clamped again, so the
    state is range-safe for arbitrary inputs).
    """
    brightness_target = (features.mean_velocity / _VELOCITY_MAX) * 2.0 - 1.0
    if features.key.mode == MINOR:
        brightness_target += MINOR_BRIGHTNESS_DELTA
    warmth_target = emotion.valence
    motion_target = (emotion.arousal + 1.0) / 2.0
    openness_target = features.register_span / _SPAN_MAX

    def step(prev_value: float, target: float, low: float, high: float) -> float:
        target = _clamp(target, low, high)
        out = prev_value + alpha * (target - prev_value)
        return _clamp(out, low, high)

    return VisualParams(
        brightness=step(prev.brightness, brightness_target, -1.0, 1.0),
        warmth=step(prev.warmth, warmth_target, -1.0, 1.0),
        motion=step(prev.motion, motion_target, 0.0, 1.0),
        openness=step(prev.openness, openness_target, 0.0, 1.0),
    )


@lru_cache(maxsize=1)
def _clause_table() -> tuple[dict, ...]:
    raw = resources.files("tonecanvas.data").joinpath("clause_table.json")
    entries = json.loads(raw.read_text(encoding="utf-8"))
    for entry in entries:
        if entry["param"] not in ("brightness", "warmth", "motion", "openness"):
            raise ValueError(f"clause table names unknown param: {entry['param']!r}")
        if "below" not in entry and "above" not in entry:
            raise ValueError("clause table entry needs a 'below' or 'above' bound")
    return tuple(entries)


def params_to_prompt_clauses(params: VisualParams) -> list[str]:
    """Select prompt clauses for parameters outside their neutral bands.

    Thresholds come from the clause table data file; selection is
    deterministic in table order. All-neutral parameters yield no clauses.
    """
    values = params.to_dict()
    clauses: list[str] = []
    for entry in _clause_table():
        value = values[entry["param"]]
        if "below" in entry and value < entry["below"]:
            clauses.append(entry["clause"])
        elif "above" in entry and value > entry["above"]:
            clauses.append(entry["clause"])
    return clauses
