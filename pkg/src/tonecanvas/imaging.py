"""Text-to-image generation, content-addressed storage, display pacing.

The image backend is pluggable: a live HTTP client for a served diffusion
model, and a deterministic procedural mock for offline runs. Generated
PNGs are stored content-addressed by digest; a generation failure yields a
placeholder event with an error flag rather than stalling the pipeline.
Pacing decides when a generated image is actually displayed.
"""

from __future__ import annotations

import base64
import hashlib
import io
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Union

import numpy as np
from PIL import Image, ImageDraw

from .theory import Meter
from .visuals import VisualParams

DEFAULT_IMAGE_SIZE = (768, 768)

STYLE_TAGS = ("photorealistic", "abstract", "geometric", "painterly")

_STYLE_CLAUSES = {
    "photorealistic": "photorealistic, rich natural detail",
    "abstract": "abstract, surreal, non-photorealistic forms",
    "geometric": "crisp geometric shapes, clean lines",
    "painterly": "loose painterly brushwork, visible strokes",
}


# ---------------------------------------------------------------------------
# Requests and events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageRequest:
    prompt: str
    style_tag: str = "photorealistic"
    seed: int = 0
    size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    visual_params: VisualParams | None = None

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.style_tag not in STYLE_TAGS:
            raise ValueError(f"unknown style tag: {self.style_tag!r}")
        w, h = self.size
        if not (16 <= w <= 4096 and 16 <= h <= 4096):
            raise ValueError(f"size out of backend limits: {self.size}")


@dataclass(frozen=True)
class ImageEvent:
    clip_index: int
    prompt: str
    image_ref: str
    digest: str
    gen_latency_ms: float
    displayed_at: int | None = None  # event-time microseconds; None = suppressed
    error: bool = False
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "clip_index": self.clip_index,
            "prompt": self.prompt,
            "image_ref": self.image_ref,
            "digest": self.digest,
            "gen_latency_ms": self.gen_latency_ms,
            "displayed_at": self.displayed_at,
            "error": self.error,
            "fallback": self.fallback,
        }


def styled_prompt(prompt: str, style_tag: str) -> str:
    """Suffix the prompt with the style clause for ``style_tag``."""
    return f"{prompt} Style: {_STYLE_CLAUSES[style_tag]}."


# ---------------------------------------------------------------------------
# Content-addressed store
# ---------------------------------------------------------------------------

class ImageStore:
    """PNG files under a root directory, named by SHA-256 of their bytes."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / f"{digest}.png"
        if not path.exists():
            path.write_bytes(data)
        return digest

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.png"

    def has(self, digest: str) -> bool:
        return self.path(digest).exists()


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class ImageBackend(Protocol):
    def render(self, request: ImageRequest) -> bytes: ...


class MockImageBackend:
    """Procedural PNG renderer: a pure function of (prompt, seed, style, size).

    Draws a two-color vertical gradient with a diagonal tint, all colors
    derived from a hash of the inputs, and overlays the prompt's leading
    words so the image is visually traceable to its prompt.
    """

    backend_id = "mock"

    def render(self, request: ImageRequest) -> bytes:
        w, h = request.size
        material = (
            f"{request.prompt}\x00{request.seed}\x00"
            f"{request.style_tag}\x00{w}x{h}"
        ).encode("utf-8")
        digest = hashlib.sha256(material).digest()
        top = digest[0:3]
        bottom = digest[3:6]
        tint = digest[6:9]

        ys = np.linspace(0.0, 1.0, h, dtype=np.float64)[:, None, None]
        xs = np.linspace(0.0, 1.0, w, dtype=np.float64)[None, :, None]
        top_v = np.array(list(top), dtype=np.float64)[None, None, :]
        bottom_v = np.array(list(bottom), dtype=np.float64)[None, None, :]
        tint_v = np.array(list(tint), dtype=np.float64)[None, None, :]
        pixels = top_v * (1.0 - ys) + bottom_v * ys
        pixels = pixels * 0.75 + tint_v * 0.25 * (xs + ys) / 2.0
        array = np.clip(pixels, 0, 255).astype(np.uint8)

        image = Image.fromarray(array, "RGB")
        draw = ImageDraw.Draw(image)
        caption = " ".join(request.prompt.split()[:8])
        draw.text((9, 9), caption, fill=(0, 0, 0))
        draw.text((8, 8), caption, fill=(255, 255, 255))

        buffer = io.BytesIO()
        image.save(buffer, format="PNG", compress_level=1)
        return buffer.getvalue()


class HttpImageBackend:
    """Client for a generic HTTP JSON text-to-image API.

    Sends ``{prompt, seed, steps, size}`` and expects a base64 PNG back —
    the wire contract a locally served fast diffusion model fulfills.
    """

    def __init__(self, endpoint: str, timeout_s: float = 30.0, steps: int = 4) -> None:
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.steps = steps
        self.backend_id = f"http:{endpoint}"

    def render(self, request: ImageRequest) -> bytes:
        import requests

        response = requests.post(
            self.endpoint,
            json={
                "prompt": request.prompt,
                "seed": request.seed,
                "steps": self.steps,
                "size": list(request.size),
            },
            timeout=self.timeout_s,
        )
        response.raise_for_status()
        return base64.b64decode(response.json()["image_b64"])


def placeholder_png(size: tuple[int, int] = DEFAULT_IMAGE_SIZE) -> bytes:
    """A deterministic 'image unavailable' PNG used when a backend fails."""
    image = Image.new("RGB", size, (40, 40, 46))
    draw = ImageDraw.Draw(image)
    draw.text((9, 9), "image unavailable", fill=(0, 0, 0))
    draw.text((8, 8), "image unavailable", fill=(200, 200, 200))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG", compress_level=1)
    return buffer.getvalue()


def generate(
    request: ImageRequest,
    backend: ImageBackend,
    store: ImageStore,
    clip_index: int,
) -> ImageEvent:
    """Render ``request`` (style clause appended), persist, build the event.

    Backend failures degrade to a stored placeholder image with the event's
    error flag set; generation never stalls the pipeline. ``displayed_at``
    is left unset — display is the pacing stage's decision.
    """
    final_prompt = styled_prompt(request.prompt, request.style_tag)
    styled = replace(request, prompt=final_prompt)
    started = time.perf_counter()
    error = False
    try:
        data = backend.render(styled)
    except Exception:
        data = placeholder_png(request.size)
        error = True
    latency_ms = (time.perf_counter() - started) * 1000.0
    digest = store.put(data)
    return ImageEvent(
        clip_index=clip_index,
        prompt=final_prompt,
        image_ref=f"images/{digest}.png",
        digest=digest,
        gen_latency_ms=latency_ms,
        displayed_at=None,
        error=error,
    )


# ---------------------------------------------------------------------------
# Pacing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedCadence:
    interval_s: float = 10.0

    def to_dict(self) -> dict:
        return {"kind": "fixed", "interval_s": self.interval_s}


@dataclass(frozen=True)
class BarAlignedCadence:
    bars: int = 4
    tolerance_bars: float = 0.05

    def to_dict(self) -> dict:
        return {
            "kind": "bar_aligned",
            "bars": self.bars,
            "tolerance_bars": self.tolerance_bars,
        }


@dataclass(frozen=True)
class ManualCadence:
    def to_dict(self) -> dict:
        return {"kind": "manual"}


Cadence = Union[FixedCadence, BarAlignedCadence, ManualCadence]


def cadence_from_dict(data: dict) -> Cadence:
    kind = data.get("kind")
    known = {k for k in data if k != "kind"}
    if kind == "fixed":
        if not known <= {"interval_s"}:
            raise ValueError(f"unknown cadence keys: {sorted(known - {'interval_s'})}")
        interval = float(data.get("interval_s", 10.0))
        if interval <= 0:
            raise ValueError("fixed cadence interval must be positive")
        return FixedCadence(interval)
    if kind == "bar_aligned":
        if not known <= {"bars", "tolerance_bars"}:
            raise ValueError(
                f"unknown cadence keys: {sorted(known - {'bars', 'tolerance_bars'})}"
            )
        bars = int(data.get("bars", 4))
        if bars < 1:
            raise ValueError("bar_aligned cadence needs at least one bar")
        return BarAlignedCadence(bars, float(data.get("tolerance_bars", 0.05)))
    if kind == "manual":
        if known:
            raise ValueError(f"unknown cadence keys: {sorted(known)}")
        return ManualCadence()
    raise ValueError(f"unknown cadence kind: {kind!r}")


def pacing_decide(
    now_s: float,
    last_display_s: float | None,
    cadence: Cadence,
    paused: bool,
    tempo_bpm: float | None = None,
    meter: Meter | None = None,
    advance_requested: bool = False,
) -> bool:
    """True to display now, False to hold.

    Fixed cadence displays once the interval has elapsed since the last
    display; bar-aligned displays on bar boundaries (from tempo and meter)
    after the configured number of bars; manual displays only on an
    explicit advance. Paused always holds; an advance request overrides
    any cadence but never a pause.
    """
    if paused:
        return False
    if advance_requested:
        return True
    if isinstance(cadence, ManualCadence):
        return False
    if last_display_s is None:
        return True
    elapsed = now_s - last_display_s
    if isinstance(cadence, FixedCadence):
        return elapsed >= cadence.interval_s - 1e-9
    if tempo_bpm is None or meter is None:
        raise ValueError("bar-aligned pacing needs tempo and meter")
    bar_s = float(meter.bar_length) * 240.0 / tempo_bpm
    elapsed_bars = elapsed / bar_s
    if elapsed_bars < cadence.bars - cadence.tolerance_bars:
        return False
    distance_to_boundary = abs(elapsed_bars - round(elapsed_bars))
    return distance_to_boundary <= cadence.tolerance_bars
