"""Imagery description via chat-completion backends.

Builds the four fixed prompt templates over ABC text, sends them to a
pluggable chat-completion backend with a mode-dependent temperature, and
enforces an 80-word output budget. Three backends ship: a live HTTP
chat-completion client, a recorded-fixture replayer for offline runs, and
a deterministic mock driven by local music analysis.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Protocol

from .analysis import (
    AnalysisParams,
    EmotionEstimate,
    MusicFeatures,
    _lexicon_cell,
    analyze,
)
from .midi import Clip, NoteEvent
from .notation import AbcScore, NoteToken, ChordToken, RestToken, parse_abc
from .theory import Meter

DEFAULT_MODEL_ID = "gpt-4-0125-preview"
MAX_OUTPUT_TOKENS = 80
MAX_WORDS = 80

DIVERGENT_TEMPERATURE = 0.8
CONVERGENT_TEMPERATURE = 0.4


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str  # contains exactly one "{abc}" slot
    token_budget: int


TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in (
        PromptTemplate(
            "features",
            "What musical features can you extract from the following "
            "musical piece written in ABC Notation? {abc}",
            256,
        ),
        PromptTemplate(
            "emotion",
            "What emotion can you infer from this musical piece written "
            "in ABC Notation? {abc}",
            256,
        ),
        PromptTemplate(
            "emotion3",
            "What emotion can you infer from this musical piece written "
            "in ABC Notation? Answer this question using only three "
            "words. {abc}",
            16,
        ),
        PromptTemplate(
            "imagery",
            "Based on the perceived emotion of the following musical "
            "piece written in ABC notation, and melodic structure/contour, "
            "describe a visual imagery people may see when hearing this "
            "music. Answer this question only with the text description "
            "of the image within 80 token. {abc}",
            MAX_OUTPUT_TOKENS,
        ),
    )
}


def build_prompt(template_id: str, abc_text: str) -> str:
    """Substitute ``abc_text`` into the template's ``{abc}`` slot."""
    if template_id not in TEMPLATES:
        raise KeyError(f"unknown template id: {template_id!r}")
    if not abc_text:
        raise ValueError("abc_text must be non-empty")
    return TEMPLATES[template_id].text.replace("{abc}", abc_text)


# ---------------------------------------------------------------------------
# Generation modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationMode:
    kind: str  # "divergent" | "convergent"
    temperature: float

    def __post_init__(self) -> None:
        if self.kind not in ("divergent", "convergent"):
            raise ValueError(f"unknown mode kind: {self.kind!r}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be within [0, 1]")

    @classmethod
    def divergent(cls, temperature: float = DIVERGENT_TEMPERATURE) -> "GenerationMode":
        return cls("divergent", temperature)

    @classmethod
    def convergent(cls, temperature: float = CONVERGENT_TEMPERATURE) -> "GenerationMode":
        return cls("convergent", temperature)


# ---------------------------------------------------------------------------
# Completion wire types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompletionRequest:
    model: str
    prompt: str
    temperature: float
    max_tokens: int = MAX_OUTPUT_TOKENS

    def to_payload(self) -> dict:
        """JSON chat-completion payload (role/content message form)."""
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": self.prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: float
    backend_id: str


class CompletionTimeout(TimeoutError):
    """The backend did not answer within the configured timeout."""


class EmptyCompletion(RuntimeError):
    """The backend answered with an empty or refused completion."""


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...


# ---------------------------------------------------------------------------
# Live HTTP backend
# ---------------------------------------------------------------------------

class HttpChatBackend:
    """Generic HTTP JSON chat-completion client.

    Retries once on transport errors, never on timeout: the real-time loop
    must not stall behind a slow backend.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout_s: float = 10.0,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete(self, request: CompletionRequest) -> CompletionResult:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = request.to_payload()
        started = time.perf_counter()
        for attempt in (0, 1):
            try:
                response = requests.post(
                    self.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                break
            except requests.Timeout as exc:
                raise CompletionTimeout(
                    f"no completion within {self.timeout_s}s"
                ) from exc
            except requests.RequestException:
                if attempt == 1:
                    raise
        response.raise_for_status()
        body = response.json()
        text = body["choices"][0]["message"]["content"]
        latency_ms = (time.perf_counter() - started) * 1000.0
        if not text or not text.strip():
            raise EmptyCompletion("backend returned an empty completion")
        return CompletionResult(text, latency_ms, f"http:{self.endpoint}")


# ---------------------------------------------------------------------------
# Recorded-fixture backend
# ---------------------------------------------------------------------------

class FixtureMismatch(KeyError):
    """No recorded exchange matches the live request."""


class FixtureBackend:
    """Replays recorded request/response exchanges byte-for-byte.

    The fixture file is a JSON array of ``{"request": {...}, "response":
    {"text": ...}}`` pairs. Each live request consumes the first unconsumed
    pair whose recorded prompt and temperature match.
    """

    def __init__(self, fixture: str | Path | list[dict]) -> None:
        if isinstance(fixture, (str, Path)):
            with open(fixture, "r", encoding="utf-8") as handle:
                exchanges = json.load(handle)
            self._source = str(fixture)
        else:
            exchanges = fixture
            self._source = "<inline>"
        if not isinstance(exchanges, list):
            raise ValueError("fixture must be a JSON array of exchanges")
        self._exchanges: list[dict] = list(exchanges)
        self._consumed: list[bool] = [False] * len(self._exchanges)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        for i, exchange in enumerate(self._exchanges):
            if self._consumed[i]:
                continue
            recorded = exchange["request"]
            if recorded.get("prompt") != request.prompt:
                continue
            if recorded.get("temperature") not in (None, request.temperature):
                continue
            self._consumed[i] = True
            text = exchange["response"]["text"]
            if not text or not text.strip():
                raise EmptyCompletion("recorded completion is empty")
            return CompletionResult(text, 0.0, f"fixture:{self._source}")
        raise FixtureMismatch(
            f"no recorded exchange for temperature={request.temperature} "
            f"prompt={request.prompt[:60]!r}..."
        )


# ---------------------------------------------------------------------------
# Deterministic mock backend
# ---------------------------------------------------------------------------

# Scene families keyed by valence/arousal cell. Divergent mode samples the
# whole family list; convergent mode sticks to the previous family. Each
# family carries interchangeable detail clauses.
_SCENE_FAMILIES: dict[str, tuple[dict, ...]] = {
    "bright": (
        {
            "id": "sunlit-meadow",
            "scene": "A sunlit meadow bursting with wildflowers",
            "details": (
                "butterflies spiraling over the grass",
                "a kite dancing high on the wind",
                "children chasing each other along a path",
            ),
        },
        {
            "id": "street-festival",
            "scene": "A lively street festival strung with paper lanterns",
            "details": (
                "dancers whirling in bright costumes",
                "confetti drifting between the stalls",
                "a brass band parading past the crowd",
            ),
        },
        {
            "id": "morning-harbor",
            "scene": "A bustling harbor sparkling in morning sun",
            "details": (
                "sails snapping taut in the breeze",
                "gulls wheeling over the bright water",
                "fishermen hauling glittering nets",
            ),
        },
        {
            "id": "carousel-fair",
            "scene": "A spinning carousel at a summer fair",
            "details": (
                "painted horses rising and falling in rhythm",
                "ribbons streaming from the canopy",
                "sparklers tracing loops in the dusk",
            ),
        },
    ),
    "turbulent": (
        {
            "id": "storm-sea",
            "scene": "A storm-tossed sea under rolling black clouds",
            "details": (
                "waves shattering against jagged rocks",
                "a lone ship heeling into the gale",
                "lightning forking over the swell",
            ),
        },
        {
            "id": "burning-sky",
            "scene": "A city skyline under a burning crimson sky",
            "details": (
                "smoke towers leaning in the wind",
                "windows flashing with reflected fire",
                "flocks of birds scattering from rooftops",
            ),
        },
        {
            "id": "canyon-wind",
            "scene": "A dust storm racing through a narrow canyon",
            "details": (
                "tumbleweeds hurled across the trail",
                "red dust swallowing the sun",
                "a rider bent low against the blast",
            ),
        },
        {
            "id": "night-chase",
            "scene": "A rain-slicked avenue lit by streaking headlights",
            "details": (
                "neon signs smearing across wet asphalt",
                "figures sprinting between the shadows",
                "a train thundering over the viaduct",
            ),
        },
    ),
    "melancholy": (
        {
            "id": "rain-room",
            "scene": "A dimly lit, cozy room with rain tracing the window",
            "details": (
                "a cup of tea cooling beside an open book",
                "an armchair draped with a worn blanket",
                "a candle guttering on the sill",
            ),
        },
        {
            "id": "autumn-park",
            "scene": "An empty park bench under bare autumn trees",
            "details": (
                "wet leaves gathering along the path",
                "a single streetlamp glowing through the mist",
                "footprints fading on the damp gravel",
            ),
        },
        {
            "id": "grey-shore",
            "scene": "A deserted shoreline beneath a heavy grey sky",
            "details": (
                "an overturned rowboat half-buried in sand",
                "foam tracing slow arcs on the tide line",
                "a distant lighthouse blinking through haze",
            ),
        },
        {
            "id": "old-attic",
            "scene": "A quiet attic where dust drifts through thin light",
            "details": (
                "faded photographs spilling from a box",
                "a shrouded mirror leaning against the beam",
                "a violin case latched shut for years",
            ),
        },
    ),
    "serene": (
        {
            "id": "moonlit-lake",
            "scene": "A serene, moonlit landscape around a still lake",
            "details": (
                "silver ripples folding into the reeds",
                "a rowboat resting at a wooden dock",
                "fireflies blinking along the shore",
            ),
        },
        {
            "id": "mountain-dawn",
            "scene": "A mountain valley waking under soft dawn light",
            "details": (
                "mist pooling between the pines",
                "a stream threading through mossy stones",
                "deer grazing at the meadow's edge",
            ),
        },
        {
            "id": "garden-dusk",
            "scene": "A walled garden settling into violet dusk",
            "details": (
                "lavender swaying along the path",
                "a fountain murmuring beneath the arbor",
                "petals drifting onto warm flagstones",
            ),
        },
        {
            "id": "snow-field",
            "scene": "A snow-covered field silent under pale stars",
            "details": (
                "a farmhouse window glowing amber far off",
                "smoke rising straight from a chimney",
                "fence posts casting long blue shadows",
            ),
        },
    ),
    "neutral": (
        {
            "id": "window-study",
            "scene": "A tidy study lit evenly through tall windows",
            "details": (
                "papers squared neatly on the desk",
                "a clock keeping steady time on the shelf",
                "a plant turning slowly toward the light",
            ),
        },
        {
            "id": "country-road",
            "scene": "A level country road between open fields",
            "details": (
                "telephone poles pacing off the distance",
                "clouds holding still above the horizon",
                "a cyclist keeping an even cadence",
            ),
        },
    ),
}

_CONTOUR_SETTINGS: dict[str, str] = {
    "ascending": "the whole view climbing toward a widening brightness",
    "descending": "the scene settling gradually downward into shadow",
    "arched": "the landscape rising to a crest before easing away",
    "flat": "everything holding a calm, level line",
    "wavering": "shapes swaying back and forth with the air",
}


def _lighting_clause(mean_velocity: float) -> str:
    if mean_velocity < 50.0:
        return "under faint, hushed light"
    if mean_velocity < 90.0:
        return "in soft, even light"
    return "in bold, radiant light"


class MockImageryComposer:
    """Assembles deterministic imagery sentences from analysis output.

    Divergent mode samples a scene family from the cell's full list with an
    RNG seeded by (clip index, mode); convergent mode reuses the previous
    family and varies only the detail clause. ``last_family_id`` exposes the
    family chosen by the most recent call.
    """

    def __init__(self) -> None:
        self.last_family_id: str | None = None
        self._last_family: dict | None = None

    @staticmethod
    def _rng(clip_index: int, mode: GenerationMode) -> random.Random:
        kind_salt = 1 if mode.kind == "divergent" else 2
        return random.Random(clip_index * 1000 + kind_salt)

    def describe(
        self,
        features: MusicFeatures,
        emotion: EmotionEstimate,
        mode: GenerationMode,
        clip_index: int,
    ) -> str:
        cell = _lexicon_cell(emotion.valence, emotion.arousal)
        families = _SCENE_FAMILIES[cell]
        rng = self._rng(clip_index, mode)
        if mode.kind == "convergent" and self._last_family is not None:
            family = self._last_family
        else:
            family = rng.choice(families)
        detail = rng.choice(family["details"])
        setting = _CONTOUR_SETTINGS[features.contour]
        lighting = _lighting_clause(features.mean_velocity)
        self._last_family = family
        self.last_family_id = family["id"]
        return f"{family['scene']}, {detail}, {setting}, {lighting}."


def _score_to_clip(score: AbcScore) -> tuple[Clip, Meter]:
    """Rebuild a Clip (microsecond note events) from a parsed ABC score.

    Accented tokens map to forte velocity, plain ones to mezzo, so dynamics
    survive the text round trip well enough for re-analysis.
    """
    unit_num, unit_bpm = score.header.tempo
    us_per_whole = Fraction(60_000_000) / (Fraction(unit_bpm) * unit_num)
    notes: list[NoteEvent] = []
    for voice_id, tokens in score.voices:
        clock = Fraction(0)
        for token in tokens:
            if isinstance(token, NoteToken):
                onset = int(clock * us_per_whole)
                duration = max(1, int(token.duration * us_per_whole))
                velocity = 100 if token.accent else 76
                notes.append(NoteEvent(token.pitch, velocity, onset, duration, voice_id - 1))
                clock += token.duration
            elif isinstance(token, ChordToken):
                onset = int(clock * us_per_whole)
                velocity = 100 if token.accent else 76
                for pitch, dur in token.notes:
                    duration = max(1, int(dur * us_per_whole))
                    notes.append(NoteEvent(pitch, velocity, onset, duration, voice_id - 1))
                clock += token.duration
            elif isinstance(token, RestToken):
                clock += token.duration
    notes.sort(key=lambda n: (n.onset, n.pitch, n.duration, n.velocity))
    end = max((n.onset + n.duration for n in notes), default=0)
    clip = Clip(0, 0, max(end, 1), tuple(notes))
    return clip, score.header.meter


class MockBackend:
    """Deterministic chat-completion stand-in driven by local analysis.

    Recovers the ABC text from the known prompt templates, re-analyzes it,
    and composes an answer appropriate to the template. The generation mode
    is inferred from the request temperature (nearest configured value);
    an internal counter stands in for the clip index.
    """

    backend_id = "mock"

    def __init__(
        self,
        temperatures: dict[str, float] | None = None,
        params: AnalysisParams | None = None,
    ) -> None:
        temps = temperatures or {
            "divergent": DIVERGENT_TEMPERATURE,
            "convergent": CONVERGENT_TEMPERATURE,
        }
        self._temperatures = dict(temps)
        self._params = params or AnalysisParams()
        self.composer = MockImageryComposer()
        self._calls = 0

    def _split(self, prompt: str) -> tuple[str, str]:
        """Return (template id, abc text) for a templated prompt.

        Matches the longest template prefix: the three-word emotion prompt
        extends the plain emotion prompt, so first-match would misfile it.
        """
        best: tuple[str, str] | None = None
        best_len = -1
        for template in TEMPLATES.values():
            prefix = template.text.split("{abc}", 1)[0]
            if prompt.startswith(prefix) and len(prefix) > best_len:
                best = (template.id, prompt[len(prefix):])
                best_len = len(prefix)
        if best is None:
            raise ValueError("prompt does not match any known template")
        return best

    def _mode_for(self, temperature: float) -> GenerationMode:
        kind = min(
            self._temperatures,
            key=lambda k: (abs(self._temperatures[k] - temperature), k),
        )
        return GenerationMode(kind, self._temperatures[kind])

    def complete(self, request: CompletionRequest) -> CompletionResult:
        started = time.perf_counter()
        template_id, abc_text = self._split(request.prompt)
        score = parse_abc(abc_text)
        clip, meter = _score_to_clip(score)
        features, emotion = analyze(clip, meter, self._params)
        if template_id == "imagery":
            mode = self._mode_for(request.temperature)
            text = self.composer.describe(features, emotion, mode, self._calls)
            self._calls += 1
        elif template_id == "emotion3":
            text = ", ".join(emotion.words)
        elif template_id == "emotion":
            text = (
                f"This piece feels {emotion.words[0]}, {emotion.words[1]}, "
                f"and {emotion.words[2]}, with valence {emotion.valence:+.2f} "
                f"and arousal {emotion.arousal:+.2f} on a [-1, 1] scale."
            )
        else:  # features
            key = features.key
            text = (
                f"Key: {key.tonic} {key.mode}. Tempo: about "
                f"{features.tempo_bpm:g} BPM. Meter: {features.meter}. "
                f"Melodic contour: {features.contour}. Mean velocity: "
                f"{features.mean_velocity:.1f}. Note density: "
                f"{features.note_density:.2f} notes/s. Register span: "
                f"{features.register_span} semitones."
            )
        latency_ms = (time.perf_counter() - started) * 1000.0
        return CompletionResult(text, latency_ms, self.backend_id)


# ---------------------------------------------------------------------------
# Output budget
# ---------------------------------------------------------------------------

def truncate_to_word_budget(text: str, max_words: int = MAX_WORDS) -> str:
    """Cap ``text`` at ``max_words`` whitespace-delimited words.

    When the text runs over, it is cut at the last sentence boundary within
    the budget; if no sentence ends inside the budget, it is cut hard at
    ``max_words`` words.
    """
    words = text.split()
    if len(words) <= max_words:
        return text.strip()
    kept = words[:max_words]
    last_boundary = None
    for i, word in enumerate(kept):
        if word.rstrip("\"')]}»").endswith((".", "!", "?")):
            last_boundary = i
    if last_boundary is not None:
        kept = kept[: last_boundary + 1]
    return " ".join(kept)


# ---------------------------------------------------------------------------
# describe_imagery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageryDescription:
    """An imagery description plus the exchange that produced it."""

    text: str
    fallback: bool
    request: CompletionRequest
    result: CompletionResult

    def __str__(self) -> str:
        return self.text


def describe_imagery(
    abc_text: str,
    mode: GenerationMode,
    backend: CompletionBackend,
    fallback: MockBackend | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    log: list | None = None,
) -> ImageryDescription:
    """Produce an imagery description for ``abc_text`` under ``mode``.

    Sends the imagery prompt at the mode's temperature with an 80-token
    output cap, then truncates the completion to 80 words. Backend failures
    (timeout, transport, empty completion) degrade to the mock ``fallback``
    when one is provided — flagged in the returned record — and re-raise
    otherwise. The request/result exchange is appended to ``log`` when given.
    """
    prompt = build_prompt("imagery", abc_text)
    request = CompletionRequest(
        model=model_id,
        prompt=prompt,
        temperature=mode.temperature,
        max_tokens=MAX_OUTPUT_TOKENS,
    )
    used_fallback = False
    try:
        result = backend.complete(request)
        if not result.text.strip():
            raise EmptyCompletion("backend returned an empty completion")
    except Exception:
        if fallback is None:
            raise
        result = fallback.complete(request)
        used_fallback = True
    text = truncate_to_word_budget(result.text, MAX_WORDS)
    description = ImageryDescription(text, used_fallback, request, result)
    if log is not None:
        log.append(description)
    return description
