"""Tests for prompt construction, completion backends, the deterministic
mock, output truncation, and the imagery description flow."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from tonecanvas.describe import (
    CONVERGENT_TEMPERATURE,
    DEFAULT_MODEL_ID,
    DIVERGENT_TEMPERATURE,
    MAX_OUTPUT_TOKENS,
    MAX_WORDS,
    TEMPLATES,
    CompletionRequest,
    CompletionResult,
    CompletionTimeout,
    EmptyCompletion,
    FixtureBackend,
    FixtureMismatch,
    GenerationMode,
    HttpChatBackend,
    MockBackend,
    build_prompt,
    describe_imagery,
    truncate_to_word_budget,
)
from tonecanvas.notation import encode_clip, render_abc
from tonecanvas.theory import Key, Meter

from .helpers import make_clip

GOLDEN = Path(__file__).parent / "golden"
PLACEHOLDER = "{Music in ABC Notation}"

GOLDEN_ABC = (GOLDEN / "chopin_prelude.abc").read_text()

SIMPLE_ABC = render_abc(
    encode_clip(
        make_clip([(i * 500_000, 450_000, 60 + p, 80) for i, p in enumerate([0, 2, 4, 5, 7, 9, 11, 12])]),
        120.0,
        Meter(4, 4),
        Key("C", "major"),
    )
)


def _imagery_request(abc_text: str, temperature: float = DIVERGENT_TEMPERATURE) -> CompletionRequest:
    return CompletionRequest(
        model=DEFAULT_MODEL_ID,
        prompt=build_prompt("imagery", abc_text),
        temperature=temperature,
    )


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------


class TestPromptTemplates:
    @pytest.mark.parametrize(
        "template_id,golden_name",
        [
            ("features", "prompt_features.txt"),
            ("emotion", "prompt_emotion.txt"),
            ("emotion3", "prompt_emotion3.txt"),
            ("imagery", "prompt_imagery.txt"),
        ],
    )
    def test_byte_exact_against_golden(self, template_id, golden_name):
        golden = (GOLDEN / golden_name).read_bytes().decode("utf-8")
        assert build_prompt(template_id, PLACEHOLDER) == golden

    def test_each_template_has_one_slot(self):
        for template in TEMPLATES.values():
            assert template.text.count("{abc}") == 1

    def test_substitution_places_abc_at_the_slot(self):
        prompt = build_prompt("features", "X:1\nK:C\nC |\n")
        assert prompt.endswith("X:1\nK:C\nC |\n")

    def test_unknown_template_id(self):
        with pytest.raises(KeyError):
            build_prompt("sonnet", "X:1\n")

    def test_empty_abc_rejected(self):
        with pytest.raises(ValueError):
            build_prompt("imagery", "")

    def test_imagery_token_budget(self):
        assert TEMPLATES["imagery"].token_budget == MAX_OUTPUT_TOKENS == 80


# ---------------------------------------------------------------------------
# Generation modes and wire types
# ---------------------------------------------------------------------------


class TestGenerationMode:
    def test_default_temperatures(self):
        assert GenerationMode.divergent() == GenerationMode("divergent", 0.8)
        assert GenerationMode.convergent() == GenerationMode("convergent", 0.4)
        assert DIVERGENT_TEMPERATURE == 0.8
        assert CONVERGENT_TEMPERATURE == 0.4

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            GenerationMode("chaotic", 0.5)

    @pytest.mark.parametrize("temperature", [-0.1, 1.1])
    def test_temperature_bounds(self, temperature):
        with pytest.raises(ValueError):
            GenerationMode("divergent", temperature)


class TestCompletionRequest:
    def test_payload_shape(self):
        request = CompletionRequest("gpt-4-0125-preview", "describe this", 0.8)
        assert request.to_payload() == {
            "model": "gpt-4-0125-preview",
            "messages": [{"role": "user", "content": "describe this"}],
            "temperature": 0.8,
            "max_tokens": 80,
        }


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


class TestMockBackend:
    def test_emotion3_answers_three_words(self):
        backend = MockBackend()
        request = CompletionRequest(
            DEFAULT_MODEL_ID, build_prompt("emotion3", GOLDEN_ABC), 0.4
        )
        result = backend.complete(request)
        assert result.text == "introspective, melancholic, reflective"
        assert result.backend_id == "mock"

    def test_emotion_prompt_is_not_misfiled_as_emotion3(self):
        backend = MockBackend()
        request = CompletionRequest(
            DEFAULT_MODEL_ID, build_prompt("emotion", GOLDEN_ABC), 0.4
        )
        text = backend.complete(request).text
        assert text.startswith("This piece feels introspective, melancholic, and reflective")
        assert "valence" in text and "arousal" in text

    def test_features_answer_reflects_analysis(self):
        backend = MockBackend()
        request = CompletionRequest(
            DEFAULT_MODEL_ID, build_prompt("features", GOLDEN_ABC), 0.4
        )
        text = backend.complete(request).text
        assert "Key: E minor." in text
        assert "96 BPM" in text
        assert "Melodic contour: descending." in text

    def test_unrecognized_prompt_rejected(self):
        with pytest.raises(ValueError):
            MockBackend().complete(
                CompletionRequest(DEFAULT_MODEL_ID, "Write a haiku about rain.", 0.8)
            )

    def test_fresh_backends_answer_identically(self):
        request = _imagery_request(GOLDEN_ABC)
        assert MockBackend().complete(request).text == MockBackend().complete(request).text

    def test_divergent_mode_varies_scene_families(self):
        backend = MockBackend()
        request = _imagery_request(GOLDEN_ABC, DIVERGENT_TEMPERATURE)
        families = []
        for _ in range(6):
            backend.complete(request)
            families.append(backend.composer.last_family_id)
        assert len(set(families)) >= 2

    def test_convergent_mode_reuses_the_previous_family(self):
        backend = MockBackend()
        backend.complete(_imagery_request(GOLDEN_ABC, DIVERGENT_TEMPERATURE))
        anchor = backend.composer.last_family_id
        texts = set()
        for _ in range(4):
            texts.add(backend.complete(_imagery_request(GOLDEN_ABC, CONVERGENT_TEMPERATURE)).text)
            assert backend.composer.last_family_id == anchor
        # details still vary within the family
        assert len(texts) >= 2

    def test_nearest_temperature_selects_the_mode(self):
        # 0.75 is nearest the divergent setting: families keep resampling
        # rather than sticking to the previous one.
        backend = MockBackend()
        backend.complete(_imagery_request(GOLDEN_ABC, 0.75))
        first = backend.composer.last_family_id
        seen = {first}
        for _ in range(5):
            backend.complete(_imagery_request(GOLDEN_ABC, 0.75))
            seen.add(backend.composer.last_family_id)
        assert len(seen) >= 2

    def test_imagery_sentence_shape(self):
        backend = MockBackend()
        text = backend.complete(_imagery_request(GOLDEN_ABC)).text
        assert text.endswith(".")
        assert text.count(",") >= 3  # scene, detail, setting, lighting


# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------


class TestTruncation:
    def test_short_text_passes_through_stripped(self):
        assert truncate_to_word_budget("  a quiet lake  ") == "a quiet lake"

    def test_cut_at_last_sentence_boundary_inside_budget(self):
        text = "First sentence ends here. " + "word " * 100
        out = truncate_to_word_budget(text, max_words=10)
        assert out == "First sentence ends here."

    def test_hard_cut_without_boundary(self):
        text = "word " * 120
        out = truncate_to_word_budget(text, max_words=80)
        assert out == " ".join(["word"] * 80)

    def test_boundary_detected_through_closing_quotes(self):
        text = 'He said "stop." ' + "word " * 100
        out = truncate_to_word_budget(text, max_words=10)
        assert out == 'He said "stop."'

    def test_exact_budget_is_untouched(self):
        text = " ".join(f"w{i}" for i in range(80))
        assert truncate_to_word_budget(text, max_words=80) == text

    def test_question_and_exclamation_are_boundaries(self):
        text = "Really! " + "word " * 100
        assert truncate_to_word_budget(text, max_words=5) == "Really!"


# ---------------------------------------------------------------------------
# describe_imagery
# ---------------------------------------------------------------------------


class _FailingBackend:
    def __init__(self, exc: Exception) -> None:
        self.exc = exc
        self.calls = 0

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self.calls += 1
        raise self.exc


class _CannedBackend:
    def __init__(self, text: str) -> None:
        self.text = text

    def complete(self, request: CompletionRequest) -> CompletionResult:
        return CompletionResult(self.text, 1.0, "canned")


class TestDescribeImagery:
    def test_request_carries_mode_temperature_and_token_cap(self):
        desc = describe_imagery(SIMPLE_ABC, GenerationMode.convergent(), MockBackend())
        assert desc.request.temperature == 0.4
        assert desc.request.max_tokens == 80
        assert desc.request.model == DEFAULT_MODEL_ID
        assert desc.request.prompt == build_prompt("imagery", SIMPLE_ABC)
        assert desc.fallback is False
        assert str(desc) == desc.text

    def test_timeout_uses_fallback_and_flags_it(self):
        desc = describe_imagery(
            SIMPLE_ABC,
            GenerationMode.divergent(),
            _FailingBackend(CompletionTimeout("slow")),
            fallback=MockBackend(),
        )
        assert desc.fallback is True
        assert desc.text
        assert desc.result.backend_id == "mock"

    def test_timeout_without_fallback_raises(self):
        with pytest.raises(CompletionTimeout):
            describe_imagery(
                SIMPLE_ABC, GenerationMode.divergent(), _FailingBackend(CompletionTimeout("slow"))
            )

    def test_empty_completion_degrades_to_fallback(self):
        desc = describe_imagery(
            SIMPLE_ABC,
            GenerationMode.divergent(),
            _CannedBackend("   \n"),
            fallback=MockBackend(),
        )
        assert desc.fallback is True
        assert desc.text.strip()

    def test_long_completion_is_truncated(self):
        long_text = "A scene. " + "detail " * 200
        desc = describe_imagery(SIMPLE_ABC, GenerationMode.divergent(), _CannedBackend(long_text))
        assert len(desc.text.split()) <= 80

    def test_log_receives_the_exchange(self):
        log: list = []
        desc = describe_imagery(SIMPLE_ABC, GenerationMode.divergent(), MockBackend(), log=log)
        assert log == [desc]

    def test_mock_descriptions_stay_within_budget_when_fuzzed(self):
        rng = random.Random(20240817)
        backend = MockBackend()
        for trial in range(25):
            rows = [
                (
                    rng.randrange(0, 9_000_000),
                    rng.randrange(100_000, 2_000_000),
                    rng.randrange(30, 100),
                    rng.randrange(1, 128),
                )
                for _ in range(rng.randrange(1, 30))
            ]
            clip = make_clip(rows)
            abc_text = render_abc(
                encode_clip(clip, rng.choice([60.0, 96.0, 120.0]), Meter(4, 4), Key("C", "major"))
            )
            mode = GenerationMode.divergent() if trial % 2 else GenerationMode.convergent()
            desc = describe_imagery(abc_text, mode, backend)
            assert len(desc.text.split()) <= MAX_WORDS


# ---------------------------------------------------------------------------
# Fixture backend
# ---------------------------------------------------------------------------


class TestFixtureBackend:
    def _request(self, prompt: str, temperature: float = 0.8) -> CompletionRequest:
        return CompletionRequest(DEFAULT_MODEL_ID, prompt, temperature)

    def test_matches_prompt_and_temperature_in_order(self):
        backend = FixtureBackend(
            [
                {"request": {"prompt": "p", "temperature": 0.8}, "response": {"text": "first"}},
                {"request": {"prompt": "p", "temperature": 0.8}, "response": {"text": "second"}},
            ]
        )
        assert backend.complete(self._request("p")).text == "first"
        assert backend.complete(self._request("p")).text == "second"
        with pytest.raises(FixtureMismatch):
            backend.complete(self._request("p"))

    def test_temperature_mismatch_is_skipped(self):
        backend = FixtureBackend(
            [{"request": {"prompt": "p", "temperature": 0.4}, "response": {"text": "conv"}}]
        )
        with pytest.raises(FixtureMismatch):
            backend.complete(self._request("p", 0.8))
        assert backend.complete(self._request("p", 0.4)).text == "conv"

    def test_recorded_temperature_none_matches_any(self):
        backend = FixtureBackend([{"request": {"prompt": "p"}, "response": {"text": "any"}}])
        assert backend.complete(self._request("p", 0.8)).text == "any"

    def test_loads_from_file(self, tmp_path):
        path = tmp_path / "exchanges.json"
        path.write_text(
            json.dumps([{"request": {"prompt": "p", "temperature": 0.8}, "response": {"text": "hi"}}])
        )
        backend = FixtureBackend(path)
        result = backend.complete(self._request("p"))
        assert result.text == "hi"
        assert result.backend_id == f"fixture:{path}"

    def test_non_array_fixture_rejected(self):
        with pytest.raises(ValueError):
            FixtureBackend({"request": {}})  # type: ignore[arg-type]

    def test_empty_recorded_text_raises(self):
        backend = FixtureBackend(
            [{"request": {"prompt": "p", "temperature": 0.8}, "response": {"text": " "}}]
        )
        with pytest.raises(EmptyCompletion):
            backend.complete(self._request("p"))

    def test_mismatch_is_a_key_error(self):
        assert issubclass(FixtureMismatch, KeyError)


# ---------------------------------------------------------------------------
# HTTP backend (transport faked)
# ---------------------------------------------------------------------------


class _Response:
    def __init__(self, content: str) -> None:
        self._content = content

    def raise_for_status(self) -> None:
        pass

    def json(self) -> dict:
        return {"choices": [{"message": {"content": self._content}}]}


class TestHttpChatBackend:
    def test_success_parses_message_content(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(url=url, json=json, headers=headers, timeout=timeout)
            return _Response("a quiet lake at dusk")

        monkeypatch.setattr("requests.post", fake_post)
        backend = HttpChatBackend("http://llm.local/v1/chat", api_key="k-123", timeout_s=5)
        result = backend.complete(CompletionRequest(DEFAULT_MODEL_ID, "describe", 0.8))
        assert result.text == "a quiet lake at dusk"
        assert result.backend_id == "http:http://llm.local/v1/chat"
        assert seen["url"] == "http://llm.local/v1/chat"
        assert seen["timeout"] == 5
        assert seen["headers"]["Authorization"] == "Bearer k-123"
        assert seen["json"]["messages"] == [{"role": "user", "content": "describe"}]

    def test_no_auth_header_without_api_key(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(headers=headers)
            return _Response("ok")

        monkeypatch.setattr("requests.post", fake_post)
        HttpChatBackend("http://llm.local").complete(
            CompletionRequest(DEFAULT_MODEL_ID, "p", 0.8)
        )
        assert "Authorization" not in seen["headers"]

    def test_retries_once_on_transport_error(self, monkeypatch):
        import requests

        calls = {"n": 0}

        def flaky_post(url, json=None, headers=None, timeout=None):
            calls["n"] += 1
            if calls["n"] == 1:
                raise requests.ConnectionError("reset")
            return _Response("recovered")

        monkeypatch.setattr("requests.post", flaky_post)
        result = HttpChatBackend("http://llm.local").complete(
            CompletionRequest(DEFAULT_MODEL_ID, "p", 0.8)
        )
        assert result.text == "recovered"
        assert calls["n"] == 2

    def test_second_transport_error_propagates(self, monkeypatch):
        import requests

        def broken_post(url, json=None, headers=None, timeout=None):
            raise requests.ConnectionError("reset")

        monkeypatch.setattr("requests.post", broken_post)
        with pytest.raises(requests.RequestException):
            HttpChatBackend("http://llm.local").complete(
                CompletionRequest(DEFAULT_MODEL_ID, "p", 0.8)
            )

    def test_timeout_raises_immediately_without_retry(self, monkeypatch):
        import requests

        calls = {"n": 0}

        def slow_post(url, json=None, headers=None, timeout=None):
            calls["n"] += 1
            raise requests.Timeout("deadline")

        monkeypatch.setattr("requests.post", slow_post)
        with pytest.raises(CompletionTimeout):
            HttpChatBackend("http://llm.local", timeout_s=2).complete(
                CompletionRequest(DEFAULT_MODEL_ID, "p", 0.8)
            )
        assert calls["n"] == 1

    def test_empty_content_raises(self, monkeypatch):
        monkeypatch.setattr("requests.post", lambda *a, **k: _Response("  "))
        with pytest.raises(EmptyCompletion):
            HttpChatBackend("http://llm.local").complete(
                CompletionRequest(DEFAULT_MODEL_ID, "p", 0.8)
            )
