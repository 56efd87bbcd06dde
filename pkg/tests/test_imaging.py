"""Tests for image generation, the content-addressed store, and display
pacing."""

from __future__ import annotations

import hashlib
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from tonecanvas.imaging import (
    DEFAULT_IMAGE_SIZE,
    STYLE_TAGS,
    BarAlignedCadence,
    FixedCadence,
    ImageEvent,
    ImageRequest,
    ImageStore,
    ManualCadence,
    MockImageBackend,
    cadence_from_dict,
    generate,
    pacing_decide,
    placeholder_png,
    styled_prompt,
)
from tonecanvas.theory import Meter

SMALL = (64, 64)


def _request(prompt: str = "a quiet lake", **kwargs) -> ImageRequest:
    kwargs.setdefault("size", SMALL)
    return ImageRequest(prompt=prompt, **kwargs)


# ---------------------------------------------------------------------------
# Requests and styling
# ---------------------------------------------------------------------------


class TestImageRequest:
    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            ImageRequest(prompt="")

    def test_unknown_style_rejected(self):
        with pytest.raises(ValueError):
            ImageRequest(prompt="x", style_tag="cubist")

    @pytest.mark.parametrize("size", [(15, 64), (64, 4097)])
    def test_size_bounds_rejected(self, size):
        with pytest.raises(ValueError):
            ImageRequest(prompt="x", size=size)

    @pytest.mark.parametrize("size", [(16, 16), (4096, 4096)])
    def test_size_bounds_accepted(self, size):
        assert ImageRequest(prompt="x", size=size).size == size

    def test_defaults(self):
        request = ImageRequest(prompt="x")
        assert request.size == DEFAULT_IMAGE_SIZE == (768, 768)
        assert request.style_tag == "photorealistic"
        assert request.seed == 0


class TestStyledPrompt:
    def test_appends_style_clause(self):
        assert (
            styled_prompt("A misty valley", "photorealistic")
            == "A misty valley Style: photorealistic, rich natural detail."
        )

    def test_every_tag_has_a_clause(self):
        for tag in STYLE_TAGS:
            out = styled_prompt("x", tag)
            assert out.startswith("x Style: ") and out.endswith(".")

    def test_style_changes_the_prompt(self):
        assert len({styled_prompt("x", tag) for tag in STYLE_TAGS}) == len(STYLE_TAGS)


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class TestImageStore:
    def test_put_names_by_content_digest(self, tmp_path):
        store = ImageStore(tmp_path / "images")
        data = b"not-really-a-png"
        digest = store.put(data)
        assert digest == hashlib.sha256(data).hexdigest()
        assert store.has(digest)
        assert store.path(digest).read_bytes() == data
        assert store.path(digest).name == f"{digest}.png"

    def test_put_is_idempotent(self, tmp_path):
        store = ImageStore(tmp_path)
        first = store.put(b"abc")
        second = store.put(b"abc")
        assert first == second
        assert len(list(store.root.glob("*.png"))) == 1

    def test_distinct_content_distinct_files(self, tmp_path):
        store = ImageStore(tmp_path)
        assert store.put(b"a") != store.put(b"b")
        assert len(list(store.root.glob("*.png"))) == 2

    def test_missing_digest(self, tmp_path):
        assert not ImageStore(tmp_path).has("0" * 64)

    def test_root_is_created(self, tmp_path):
        root = tmp_path / "deep" / "nested"
        ImageStore(root)
        assert root.is_dir()


# ---------------------------------------------------------------------------
# Mock backend and placeholder
# ---------------------------------------------------------------------------


class TestMockImageBackend:
    def test_rendering_is_deterministic_across_instances(self):
        request = _request()
        assert MockImageBackend().render(request) == MockImageBackend().render(request)

    def test_seed_changes_the_image(self):
        assert MockImageBackend().render(_request(seed=1)) != MockImageBackend().render(
            _request(seed=2)
        )

    def test_prompt_changes_the_image(self):
        backend = MockImageBackend()
        assert backend.render(_request("a storm")) != backend.render(_request("a meadow"))

    def test_style_changes_the_image(self):
        backend = MockImageBackend()
        assert backend.render(_request(style_tag="abstract")) != backend.render(
            _request(style_tag="painterly")
        )

    def test_output_is_a_png_of_the_requested_size(self):
        data = MockImageBackend().render(_request(size=(48, 32)))
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        image = Image.open(io.BytesIO(data))
        assert image.size == (48, 32)
        assert image.mode == "RGB"


class TestPlaceholder:
    def test_deterministic_png(self):
        assert placeholder_png(SMALL) == placeholder_png(SMALL)
        assert placeholder_png(SMALL)[:8] == b"\x89PNG\r\n\x1a\n"

    def test_size_honored(self):
        image = Image.open(io.BytesIO(placeholder_png((40, 24))))
        assert image.size == (40, 24)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


class _SpyBackend:
    def __init__(self) -> None:
        self.requests: list[ImageRequest] = []

    def render(self, request: ImageRequest) -> bytes:
        self.requests.append(request)
        return b"fake-png-bytes"


class _BrokenBackend:
    def render(self, request: ImageRequest) -> bytes:
        raise RuntimeError("diffusion service unreachable")


class TestGenerate:
    def test_style_clause_is_applied_before_rendering(self, tmp_path):
        backend = _SpyBackend()
        event = generate(_request("A misty valley"), backend, ImageStore(tmp_path), 3)
        styled = "A misty valley Style: photorealistic, rich natural detail."
        assert backend.requests[0].prompt == styled
        assert event.prompt == styled

    def test_success_event_fields(self, tmp_path):
        store = ImageStore(tmp_path)
        event = generate(_request(), _SpyBackend(), store, 7)
        expected_digest = hashlib.sha256(b"fake-png-bytes").hexdigest()
        assert event.clip_index == 7
        assert event.digest == expected_digest
        assert event.image_ref == f"images/{expected_digest}.png"
        assert event.displayed_at is None
        assert event.error is False
        assert event.fallback is False
        assert event.gen_latency_ms >= 0.0
        assert store.has(expected_digest)

    def test_backend_failure_stores_placeholder_with_error_flag(self, tmp_path):
        store = ImageStore(tmp_path)
        event = generate(_request(size=SMALL), _BrokenBackend(), store, 0)
        assert event.error is True
        assert event.digest == hashlib.sha256(placeholder_png(SMALL)).hexdigest()
        assert store.has(event.digest)

    def test_event_to_dict_shape(self, tmp_path):
        event = generate(_request(), _SpyBackend(), ImageStore(tmp_path), 2)
        data = event.to_dict()
        assert set(data) == {
            "clip_index",
            "prompt",
            "image_ref",
            "digest",
            "gen_latency_ms",
            "displayed_at",
            "error",
            "fallback",
        }
        assert data["clip_index"] == 2
        assert data["displayed_at"] is None


# ---------------------------------------------------------------------------
# Cadence configuration
# ---------------------------------------------------------------------------


class TestCadenceConfig:
    @pytest.mark.parametrize(
        "cadence",
        [FixedCadence(7.5), BarAlignedCadence(2, 0.1), ManualCadence()],
    )
    def test_dict_round_trip(self, cadence):
        assert cadence_from_dict(cadence.to_dict()) == cadence

    def test_defaults(self):
        assert cadence_from_dict({"kind": "fixed"}) == FixedCadence(10.0)
        assert cadence_from_dict({"kind": "bar_aligned"}) == BarAlignedCadence(4, 0.05)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            cadence_from_dict({"kind": "lunar"})

    @pytest.mark.parametrize(
        "data",
        [
            {"kind": "fixed", "bars": 4},
            {"kind": "bar_aligned", "interval_s": 5},
            {"kind": "manual", "interval_s": 5},
        ],
    )
    def test_unknown_keys_rejected(self, data):
        with pytest.raises(ValueError):
            cadence_from_dict(data)

    def test_non_positive_interval_rejected(self):
        with pytest.raises(ValueError):
            cadence_from_dict({"kind": "fixed", "interval_s": 0})

    def test_bars_must_be_at_least_one(self):
        with pytest.raises(ValueError):
            cadence_from_dict({"kind": "bar_aligned", "bars": 0})


# ---------------------------------------------------------------------------
# Pacing
# ---------------------------------------------------------------------------


class TestPacing:
    def test_paused_always_holds(self):
        assert pacing_decide(100.0, None, FixedCadence(10.0), paused=True) is False
        assert (
            pacing_decide(
                100.0, 0.0, FixedCadence(10.0), paused=True, advance_requested=True
            )
            is False
        )

    def test_advance_overrides_cadence_but_not_pause(self):
        assert (
            pacing_decide(1.0, 0.0, FixedCadence(10.0), paused=False, advance_requested=True)
            is True
        )
        assert (
            pacing_decide(1.0, 0.0, ManualCadence(), paused=False, advance_requested=True)
            is True
        )

    def test_manual_holds_without_advance(self):
        assert pacing_decide(100.0, None, ManualCadence(), paused=False) is False
        assert pacing_decide(100.0, 0.0, ManualCadence(), paused=False) is False

    def test_first_display_is_immediate(self):
        assert pacing_decide(0.0, None, FixedCadence(10.0), paused=False) is True
        assert (
            pacing_decide(
                0.0,
                None,
                BarAlignedCadence(),
                paused=False,
                tempo_bpm=96.0,
                meter=Meter(4, 4),
            )
            is True
        )

    def test_fixed_interval_gate(self):
        cadence = FixedCadence(10.0)
        assert pacing_decide(19.99, 10.0, cadence, paused=False) is False
        assert pacing_decide(20.0, 10.0, cadence, paused=False) is True
        assert pacing_decide(25.0, 10.0, cadence, paused=False) is True

    def test_fixed_interval_tolerates_float_noise(self):
        assert pacing_decide(19.9999999995, 10.0, FixedCadence(10.0), paused=False) is True

    def test_bar_aligned_at_96_bpm_four_four(self):
        # bar = 2.5 s, so four bars elapse at 10 s.
        kwargs = dict(paused=False, tempo_bpm=96.0, meter=Meter(4, 4))
        cadence = BarAlignedCadence(bars=4, tolerance_bars=0.05)
        assert pacing_decide(8.0, 0.0, cadence, **kwargs) is False  # 3.2 bars: hold
        assert pacing_decide(10.0, 0.0, cadence, **kwargs) is True  # on the boundary
        assert pacing_decide(10.2, 0.0, cadence, **kwargs) is False  # past the boundary
        assert pacing_decide(12.5, 0.0, cadence, **kwargs) is True  # next boundary

    def test_bar_aligned_other_meter(self):
        # 3/4 at 120 BPM: bar = 1.5 s, four bars = 6 s.
        assert (
            pacing_decide(
                6.0,
                0.0,
                BarAlignedCadence(),
                paused=False,
                tempo_bpm=120.0,
                meter=Meter(3, 4),
            )
            is True
        )

    def test_bar_aligned_tolerance_window(self):
        kwargs = dict(paused=False, tempo_bpm=96.0, meter=Meter(4, 4))
        cadence = BarAlignedCadence(bars=4, tolerance_bars=0.05)
        assert pacing_decide(9.9, 0.0, cadence, **kwargs) is True  # 3.96 bars
        assert pacing_decide(9.7, 0.0, cadence, **kwargs) is False  # 3.88 bars

    def test_bar_aligned_requires_tempo_and_meter(self):
        with pytest.raises(ValueError):
            pacing_decide(10.0, 0.0, BarAlignedCadence(), paused=False)


@settings(max_examples=200, deadline=None)
@given(
    times=st.lists(
        st.floats(min_value=0.01, max_value=5.0), min_size=1, max_size=40
    ).map(lambda deltas: [sum(deltas[: i + 1]) for i in range(len(deltas))]),
    interval=st.floats(min_value=0.5, max_value=15.0),
)
def test_fixed_cadence_never_displays_early(times, interval):
    cadence = FixedCadence(interval)
    last: float | None = None
    displays: list[float] = []
    for now in times:
        if pacing_decide(now, last, cadence, paused=False):
            displays.append(now)
            last = now
    for a, b in zip(displays, displays[1:]):
        assert b - a >= interval - 1e-9
