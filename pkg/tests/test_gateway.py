"""Tests for the model gateway: wire shape, retries, scripted fixtures,
concurrency limiting, and structured-output extraction."""

import base64
import json
import threading
import time

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from test_reports import valid_reports

from increport.errors import (
    ExtractionError,
    InvalidInputError,
    ProviderError,
    ScriptedFixtureMissing,
    TransportError,
)
from increport.gateway import (
    ChatRequest,
    ChatResponse,
    EndpointConfig,
    FinishReason,
    Gateway,
    HttpBackend,
    ImagePart,
    RequestTag,
    RetryPolicy,
    ScriptedBackend,
    TextPart,
    extract_structured,
)

ENDPOINT = EndpointConfig(base_url="https://models.test/v1", model_name="test-model")


def _request(text="describe", tag=None, **kw):
    return ChatRequest(
        system_prompt="You are a careful analyst.",
        user_parts=(TextPart(text),),
        tag=tag,
        **kw,
    )


def _completion(text, finish_reason="stop"):
    return {
        "choices": [
            {"message": {"role": "assistant", "content": text}, "finish_reason": finish_reason}
        ]
    }


def _backend(handler, sleeps=None):
    recorded = sleeps if sleeps is not None else []
    return HttpBackend(
        transport=httpx.MockTransport(handler), sleeper=recorded.append
    )


class TestRequestValidation:
    def test_needs_user_parts(self):
        with pytest.raises(InvalidInputError):
            ChatRequest(system_prompt="s", user_parts=())

    def test_negative_temperature(self):
        with pytest.raises(InvalidInputError):
            _request(temperature=-0.1)

    def test_zero_max_tokens(self):
        with pytest.raises(InvalidInputError):
            _request(max_output_tokens=0)

    def test_retry_policy_bounds(self):
        with pytest.raises(InvalidInputError):
            RetryPolicy(max_attempts=0)

    def test_stop_response_must_have_text(self):
        with pytest.raises(InvalidInputError):
            ChatResponse(text="", finish_reason=FinishReason.STOP)
        ChatResponse(text="", finish_reason=FinishReason.LENGTH)


class TestHttpBackendWire:
    def test_message_shape_and_auth(self, monkeypatch):
        monkeypatch.setenv("TEST_MODEL_KEY", "sk-secret")
        captured = {}

        def handler(request: httpx.Request) -> httpx.Response:
            captured["url"] = str(request.url)
            captured["auth"] = request.headers.get("authorization")
            captured["body"] = json.loads(request.content)
            return httpx.Response(200, json=_completion("a cyclist crosses"))

        endpoint = EndpointConfig(
            base_url="https://models.test/v1",
            model_name="test-model",
            api_key_env="TEST_MODEL_KEY",
        )
        image = ImagePart(data=b"\x89PNG-fake", media_type="image/png")
        request = ChatRequest(
            system_prompt="sys",
            user_parts=(TextPart("look"), image),
            temperature=0.25,
            max_output_tokens=99,
        )
        response = _backend(handler).complete(endpoint, request)

        assert response.text == "a cyclist crosses"
        assert response.finish_reason is FinishReason.STOP
        assert captured["url"] == "https://models.test/v1/chat/completions"
        assert captured["auth"] == "Bearer sk-secret"
        body = captured["body"]
        assert body["model"] == "test-model"
        assert body["temperature"] == 0.25
        assert body["max_tokens"] == 99
        assert body["messages"][0] == {"role": "system", "content": "sys"}
        user = body["messages"][1]
        assert user["role"] == "user"
        assert user["content"][0] == {"type": "text", "text": "look"}
        image_url = user["content"][1]["image_url"]["url"]
        prefix, encoded = image_url.split(",", 1)
        assert prefix == "data:image/png;base64"
        assert base64.b64decode(encoded) == b"\x89PNG-fake"

    def test_length_finish_reason(self):
        def handler(request):
            return httpx.Response(200, json=_completion("truncat", "length"))

        response = _backend(handler).complete(ENDPOINT, _request())
        assert response.finish_reason is FinishReason.LENGTH

    def test_malformed_payload_raises_provider_error(self):
        def handler(request):
            return httpx.Response(200, json={"unexpected": True})

        with pytest.raises(ProviderError):
            _backend(handler).complete(ENDPOINT, _request())


class TestHttpBackendRetries:
    def test_two_500s_then_success(self):
        statuses = iter([500, 500, 200])

        def handler(request):
            status = next(statuses)
            if status != 200:
                return httpx.Response(status, json={"error": {"message": "overload"}})
            return httpx.Response(200, json=_completion("done"))

        sleeps = []
        endpoint = EndpointConfig(
            base_url="https://models.test/v1",
            model_name="m",
            retry=RetryPolicy(max_attempts=3, backoff_base=0.5),
        )
        response = _backend(handler, sleeps).complete(endpoint, _request())
        assert response.text == "done"
        # exponential backoff before each retry
        assert sleeps == [0.5, 1.0]

    def test_single_attempt_500_becomes_transport_error(self):
        def handler(request):
            return httpx.Response(500, json={"error": {"message": "boom"}})

        endpoint = EndpointConfig(
            base_url="https://models.test/v1",
            model_name="m",
            retry=RetryPolicy(max_attempts=1),
        )
        with pytest.raises(TransportError, match="1 attempt"):
            _backend(handler).complete(endpoint, _request())

    def test_429_is_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 2:
                return httpx.Response(429, json={"error": "slow down"})
            return httpx.Response(200, json=_completion("ok"))

        assert _backend(handler).complete(ENDPOINT, _request()).text == "ok"
        assert len(calls) == 2

    def test_transport_exception_is_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 2:
                raise httpx.ConnectError("refused")
            return httpx.Response(200, json=_completion("ok"))

        assert _backend(handler).complete(ENDPOINT, _request()).text == "ok"
        assert len(calls) == 2

    def test_exhausted_transport_failures(self):
        def handler(request):
            raise httpx.ConnectTimeout("no route")

        endpoint = EndpointConfig(
            base_url="https://models.test/v1",
            model_name="m",
            retry=RetryPolicy(max_attempts=2, backoff_base=0),
        )
        with pytest.raises(TransportError):
            _backend(handler).complete(endpoint, _request())

    def test_client_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, json={"error": {"message": "bad schema"}})

        with pytest.raises(ProviderError) as err:
            _backend(handler).complete(ENDPOINT, _request())
        assert err.value.status_code == 400
        assert "bad schema" in str(err.value)
        assert len(calls) == 1

    def test_refusal_text_is_returned_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(200, json=_completion("I cannot help with that."))

        response = _backend(handler).complete(ENDPOINT, _request())
        assert response.text == "I cannot help with that."
        assert len(calls) == 1


class TestScriptedBackend:
    def test_keyed_lookup_verbatim(self):
        backend = ScriptedBackend(
            fixtures={("stage1", "v1", 9): ['{"caption": "clear road", "hazards": []}']}
        )
        tag = RequestTag(stage="stage1", video_id="v1", frame=9)
        response = backend.complete(ENDPOINT, _request(tag=tag))
        assert response.text == '{"caption": "clear road", "hazards": []}'
        assert response.finish_reason is FinishReason.STOP

    def test_ordinals_advance_per_key(self):
        backend = ScriptedBackend(
            fixtures={("stage3", "v1", 100): ["first", "second"]}
        )
        tag = RequestTag("stage3", "v1", 100)
        assert backend.complete(ENDPOINT, _request(tag=tag)).text == "first"
        assert backend.complete(ENDPOINT, _request(tag=tag)).text == "second"
        with pytest.raises(ScriptedFixtureMissing):
            backend.complete(ENDPOINT, _request(tag=tag))

    def test_untagged_request_fails_loudly(self):
        backend = ScriptedBackend(fixtures={})
        with pytest.raises(ScriptedFixtureMissing):
            backend.complete(ENDPOINT, _request(tag=None))

    def test_missing_key_fails_loudly(self):
        backend = ScriptedBackend(fixtures={("stage1", "v1", 9): ["x"]})
        with pytest.raises(ScriptedFixtureMissing):
            backend.complete(ENDPOINT, _request(tag=RequestTag("stage1", "v1", 19)))

    def test_directory_fixtures(self, tmp_path):
        (tmp_path / "stage2__v7__0.json").write_text(
            json.dumps({"text": '{"incident_frame": 42}'})
        )
        (tmp_path / "stage3__v7__42__0.json").write_text(
            json.dumps({"text": "grid zero"})
        )
        (tmp_path / "stage3__v7__42__1.json").write_text(
            json.dumps({"text": "grid one"})
        )
        backend = ScriptedBackend(fixtures_dir=tmp_path)
        assert (
            backend.complete(ENDPOINT, _request(tag=RequestTag("stage2", "v7"))).text
            == '{"incident_frame": 42}'
        )
        tag3 = RequestTag("stage3", "v7", 42)
        assert backend.complete(ENDPOINT, _request(tag=tag3)).text == "grid zero"
        assert backend.complete(ENDPOINT, _request(tag=tag3)).text == "grid one"
        with pytest.raises(ScriptedFixtureMissing):
            backend.complete(ENDPOINT, _request(tag=tag3))

    def test_determinism_across_instances(self):
        fixtures = {("stage1", "v1", 9): ["alpha"], ("stage1", "v1", 19): ["beta"]}
        tags = [RequestTag("stage1", "v1", 9), RequestTag("stage1", "v1", 19)]
        runs = []
        for _ in range(2):
            backend = ScriptedBackend(fixtures=fixtures)
            runs.append(
                [backend.complete(ENDPOINT, _request(tag=t)).text for t in tags]
            )
        assert runs[0] == runs[1] == ["alpha", "beta"]

    def test_thread_interleaving_keeps_per_key_sequences(self):
        backend = ScriptedBackend(
            fixtures={
                ("stage1", "v1", i): [f"frame-{i}-a", f"frame-{i}-b"] for i in range(8)
            }
        )
        results: dict[int, list[str]] = {i: [] for i in range(8)}
        errors = []

        def worker(frame: int):
            try:
                tag = RequestTag("stage1", "v1", frame)
                for _ in range(2):
                    results[frame].append(
                        backend.complete(ENDPOINT, _request(tag=tag)).text
                    )
            except Exception as exc:  # noqa: BLE001 - surfaced below
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        for i in range(8):
            assert results[i] == [f"frame-{i}-a", f"frame-{i}-b"]


class TestGateway:
    def test_logs_calls_with_tags(self):
        backend = ScriptedBackend(fixtures={("stage1", "v1", 9): ["text"]})
        gateway = Gateway(backend)
        tag = RequestTag("stage1", "v1", 9)
        gateway.complete(ENDPOINT, _request(tag=tag))
        assert len(gateway.calls) == 1
        assert gateway.calls[0].tag == tag
        assert gateway.calls[0].model_name == "test-model"

    def test_concurrency_ceiling_enforced(self):
        max_parallel = 3
        active = 0
        peak = 0
        guard = threading.Lock()
        release = threading.Event()

        class SlowBackend:
            def complete(self, endpoint, request):
                nonlocal active, peak
                with guard:
                    active += 1
                    peak = max(peak, active)
                release.wait(timeout=5)
                with guard:
                    active -= 1
                return ChatResponse(text="ok", finish_reason=FinishReason.STOP)

        gateway = Gateway(SlowBackend(), max_parallel=max_parallel)
        threads = [
            threading.Thread(
                target=gateway.complete, args=(ENDPOINT, _request(tag=None))
            )
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        # give all threads a chance to hit the limiter
        deadline = time.monotonic() + 2
        while time.monotonic() < deadline and active < max_parallel:
            time.sleep(0.01)
        release.set()
        for t in threads:
            t.join()
        assert peak <= max_parallel
        assert len(gateway.calls) == 8

    def test_invalid_parallelism(self):
        with pytest.raises(InvalidInputError):
            Gateway(ScriptedBackend(fixtures={}), max_parallel=0)


class TestExtractStructured:
    def test_fenced_block(self):
        text = 'Sure! ```json {"incident_frame": 120} ```'
        assert extract_structured(text, "stage2") == {"incident_frame": 120}

    def test_bare_object(self):
        assert extract_structured('{"incident_frame": 120}', "stage2") == {
            "incident_frame": 120
        }

    def test_prose_only(self):
        with pytest.raises(ExtractionError) as err:
            extract_structured("I cannot determine this.", "stage2")
        assert err.value.raw_text == "I cannot determine this."

    def test_skips_nonconforming_objects(self):
        text = '{"note": "warmup"} then the answer {"incident_frame": 3}'
        assert extract_structured(text, "stage2") == {"incident_frame": 3}

    def test_object_but_wrong_schema(self):
        with pytest.raises(ExtractionError, match="conforms"):
            extract_structured('{"note": "hello"}', "stage2")

    def test_nested_braces_in_strings(self):
        text = 'prefix {"incident_frame": 7, "rationale": "brace } inside"} suffix'
        parsed = extract_structured(text, "stage2")
        assert parsed["rationale"] == "brace } inside"

    def test_unknown_schema(self):
        with pytest.raises(InvalidInputError):
            extract_structured("{}", "stage9")

    def test_report_schema_accepts_full_document(self):
        doc = {
            "event_type": "accident",
            "crash_severity": 3,
            "ego_involved": True,
            "entity_counts": {
                "vehicles": 2,
                "pedestrians": 0,
                "cyclists_or_scooters": 0,
                "animals": 0,
            },
            "caption_before": "two cars approach",
            "caption_after": "they collide",
            "time_to_incident_frames": 41,
        }
        assert extract_structured(json.dumps(doc), "stage3") == doc

    def test_report_schema_rejects_bad_severity(self):
        doc = {
            "event_type": "accident",
            "crash_severity": 9,
            "ego_involved": True,
            "entity_counts": {
                "vehicles": 1,
                "pedestrians": 0,
                "cyclists_or_scooters": 0,
                "animals": 0,
            },
            "caption_before": "a",
            "caption_after": "b",
        }
        with pytest.raises(ExtractionError):
            extract_structured(json.dumps(doc), "stage3")

    @given(
        frame=st.integers(-(10**6), 10**6),
        prefix=st.text(
            alphabet=st.characters(blacklist_characters="{}", blacklist_categories=("Cs",)),
            max_size=40,
        ),
        suffix=st.text(
            alphabet=st.characters(blacklist_characters="{}", blacklist_categories=("Cs",)),
            max_size=40,
        ),
    )
    def test_roundtrip_with_surrounding_prose(self, frame, prefix, suffix):
        doc = {"incident_frame": frame}
        text = prefix + json.dumps(doc) + suffix
        assert extract_structured(text, "stage2") == doc

    @given(valid_reports())
    def test_roundtrip_identity_for_valid_reports(self, report):
        from increport.reports import report_to_dict

        payload = report_to_dict(report)
        payload.pop("video_id")
        payload.pop("provenance")
        assert extract_structured(json.dumps(payload), "stage3") == payload
