import json

import httpx
import numpy as np
import pytest

from sindyagent.llm import (
    CapabilityError,
    ChatRequest,
    FixtureExhaustedError,
    LiveTransport,
    RecordingTransport,
    ScriptedTransport,
    TransportError,
    fallback_embedding,
)


def user_request(text, **kw):
    return ChatRequest(messages=[{"role": "user", "content": text}], **kw)


class TestChatRequest:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=[])
        with pytest.raises(ValueError):
            ChatRequest(messages=[{"role": "robot", "content": "x"}])
        with pytest.raises(ValueError):
            user_request("x", temperature=3.0)
        with pytest.raises(ValueError):
            user_request("x", max_tokens=0)

    def test_text_content_multimodal(self):
        request = ChatRequest(
            messages=[
                {"role": "system", "content": "sys"},
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": "look"},
                        {"type": "image_url", "image_url": {"url": "data:..."}},
                    ],
                },
            ]
        )
        assert request.text_content() == "sys\nlook"


class TestScriptedTransport:
    def test_ordered_fixture(self):
        transport = ScriptedTransport(ordered=["hello"])
        assert transport.chat(user_request("hi")).text == "hello"

    def test_exhaustion_is_distinct_error(self):
        transport = ScriptedTransport(ordered=["only"])
        transport.chat(user_request("a"))
        with pytest.raises(FixtureExhaustedError):
            transport.chat(user_request("b"))

    def test_keyed_fixture_matches_substring(self):
        transport = ScriptedTransport(
            ordered=["default"],
            keyed={"time-series data": ["summary text"]},
        )
        summary = transport.chat(user_request("You will be shown time-series data ..."))
        assert summary.text == "summary text"
        assert transport.chat(user_request("anything else")).text == "default"

    def test_repeat_cycles(self):
        transport = ScriptedTransport(ordered=["a", "b"], repeat=True)
        texts = [transport.chat(user_request("q")).text for _ in range(5)]
        assert texts == ["a", "b", "a", "b", "a"]

    def test_records_requests(self):
        transport = ScriptedTransport(ordered=["x", "y"])
        transport.chat(user_request("gen", temperature=0.7))
        transport.chat(user_request("sum", temperature=1.0))
        assert [c.temperature for c in transport.calls] == [0.7, 1.0]

    def test_chat_image_requires_payload(self):
        transport = ScriptedTransport(ordered=["desc"])
        assert transport.chat_image(user_request("look"), b"PNG...").text == "desc"
        with pytest.raises(ValueError):
            transport.chat_image(user_request("look"), b"")

    def test_multimodal_capability_error(self):
        transport = ScriptedTransport(ordered=["x"], multimodal=False)
        with pytest.raises(CapabilityError):
            transport.chat_image(user_request("look"), b"img")

    def test_usage_monotone(self):
        transport = ScriptedTransport(ordered=["a", "b", "c"])
        seen = []
        for _ in range(3):
            transport.chat(user_request("hello world"))
            seen.append(
                (transport.usage.requests, transport.usage.prompt_tokens,
                 transport.usage.completion_tokens)
            )
        assert seen == sorted(seen)
        assert transport.usage.requests == 3


class TestFallbackEmbedding:
    def test_identical_texts_identical_vectors(self):
        transport = ScriptedTransport()
        a, b = transport.embed(["a", "a"])
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        for text in ["lorenz attractor", "", "some words here"]:
            assert np.linalg.norm(fallback_embedding(text)) == pytest.approx(1.0)

    def test_similarity_ordering(self):
        # computed from the hashed bag-of-words definition: shared token
        # "lorenz" must beat zero token overlap
        a = fallback_embedding("lorenz attractor")
        near = fallback_embedding("lorenz system")
        far = fallback_embedding("beer fermentation")
        assert float(a @ near) > float(a @ far)

    def test_dimension(self):
        assert fallback_embedding("x").shape == (256,)


class TestLiveTransport:
    def make_transport(self, handler, **kw):
        client = httpx.Client(transport=httpx.MockTransport(handler), timeout=5.0)
        return LiveTransport(base_url="http://server/v1", client=client, sleep=lambda s: None, **kw)

    def test_wire_format(self):
        captured = {}

        def handler(request):
            captured["url"] = str(request.url)
            captured["body"] = json.loads(request.content)
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"content": "reply"}}],
                    "usage": {"prompt_tokens": 5, "completion_tokens": 2},
                },
            )

        transport = self.make_transport(handler)
        response = transport.chat(user_request("ask", temperature=0.7, model_id="m1"))
        assert response.text == "reply"
        assert captured["url"] == "http://server/v1/chat/completions"
        assert captured["body"]["model"] == "m1"
        assert captured["body"]["temperature"] == 0.7
        assert captured["body"]["messages"][0] == {"role": "user", "content": "ask"}
        assert transport.usage.prompt_tokens == 5

    def test_retries_then_succeeds(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 3:
                return httpx.Response(503, text="busy")
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        transport = self.make_transport(handler)
        assert transport.chat(user_request("x")).text == "ok"
        assert len(attempts) == 3

    def test_gives_up_after_retries(self):
        def handler(request):
            return httpx.Response(503, text="busy")

        transport = self.make_transport(handler)
        with pytest.raises(TransportError, match="after 3 attempts"):
            transport.chat(user_request("x"))

    def test_non_retryable_error_raises_immediately(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        transport = self.make_transport(handler)
        with pytest.raises(TransportError, match="HTTP 400"):
            transport.chat(user_request("x"))
        assert len(calls) == 1

    def test_error_carries_request_id(self):
        def handler(request):
            return httpx.Response(418, text="teapot")

        transport = self.make_transport(handler)
        with pytest.raises(TransportError) as err:
            transport.chat(user_request("x"))
        assert err.value.request_id.startswith("live-")

    def test_embeddings_endpoint(self):
        def handler(request):
            body = json.loads(request.content)
            assert str(request.url).endswith("/embeddings")
            data = [
                {"index": i, "embedding": [float(i), 1.0]}
                for i, _ in enumerate(body["input"])
            ]
            return httpx.Response(200, json={"data": data})

        transport = self.make_transport(handler, embed_model_id="embedder")
        vectors = transport.embed(["a", "b"])
        assert np.array_equal(vectors[0], [0.0, 1.0])
        assert np.array_equal(vectors[1], [1.0, 1.0])

    def test_chat_image_attaches_data_url(self):
        captured = {}

        def handler(request):
            captured["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "seen"}}]})

        transport = self.make_transport(handler)
        response = transport.chat_image(user_request("describe"), b"\x89PNG fake")
        assert response.text == "seen"
        content = captured["body"]["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "describe"}
        assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_multimodal_disabled(self):
        transport = self.make_transport(lambda r: httpx.Response(200, json={}), multimodal=False)
        with pytest.raises(CapabilityError):
            transport.chat_image(user_request("x"), b"img")


def test_live_transport_always_has_finite_timeout():
    transport = LiveTransport(base_url="http://server/v1")
    timeout = transport._client.timeout
    assert timeout.connect is not None and timeout.read is not None


class TestRecordReplay:
    def test_chat_replay_is_identical(self, tmp_path):
        inner = ScriptedTransport(ordered=["one", "two"], keyed={"summar": ["S"]})
        sink = tmp_path / "capture.jsonl"
        recorder = RecordingTransport(inner, sink_path=sink)
        first = [
            recorder.chat(user_request("please summarize this")).text,
            recorder.chat(user_request("generate")).text,
            recorder.chat(user_request("generate again")).text,
        ]
        embedded = recorder.embed(["hello", "world"])

        replay = ScriptedTransport.from_capture(sink)
        second = [
            replay.chat(user_request("please summarize this")).text,
            replay.chat(user_request("generate")).text,
            replay.chat(user_request("generate again")).text,
        ]
        assert first == second == ["S", "one", "two"]
        replayed = replay.embed(["hello", "world"])
        assert all(np.array_equal(a, b) for a, b in zip(embedded, replayed))
