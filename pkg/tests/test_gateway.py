"""Gateway: request validation, scripted/http backends, tracing, accounting."""

import json

import httpx
import pytest

from evotree.config import (
    ROLE_ENGINEER,
    ROLE_RETRIEVER,
    ROLE_SELECTOR,
)
from evotree.errors import ScriptMiss, TemplateError, TransportError, ValidationError
from evotree.gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    HttpBackend,
    ScriptRule,
    ScriptedBackend,
)
from evotree.prompts import render_prompt, template_identifiers, load_template


def request(tag="proposer/00/round1", text="hello", model="m1", temperature=0.5):
    return ChatRequest(
        model=model,
        messages=(
            {"role": "system", "content": "You are an agent."},
            {"role": "user", "content": text},
        ),
        tag=tag,
        temperature=temperature,
    )


class TestChatRequest:
    def test_temperature_range(self):
        with pytest.raises(ValidationError):
            request(temperature=1.5)
        with pytest.raises(ValidationError):
            request(temperature=-0.1)
        assert request(temperature=None).temperature is None
        assert request(temperature=1.0).temperature == 1.0

    def test_messages_shape(self):
        with pytest.raises(ValidationError):
            ChatRequest(model="m", messages=(), tag="t/x")
        with pytest.raises(ValidationError):
            ChatRequest(
                model="m",
                messages=({"role": "user", "content": "hi"},),
                tag="t/x",
            )
        with pytest.raises(ValidationError):
            ChatRequest(
                model="m",
                messages=({"role": "oracle", "content": "hi"},),
                tag="t/x",
            )

    def test_role_from_tag(self):
        assert request(tag="selector/gpt/iter3").role == "selector"
        assert request(tag="engineer").role == "engineer"


class TestScriptedBackend:
    def test_deterministic_and_matching(self):
        backend = ScriptedBackend(
            [
                ScriptRule(tag="proposer/*/round1", response="reasoning text"),
                ScriptRule(tag="critic/*", response="critique text"),
            ]
        )
        first = backend.complete(request(tag="proposer/00/round1"))
        second = backend.complete(request(tag="proposer/00/round1"))
        assert first.text == second.text == "reasoning text"
        assert backend.complete(request(tag="critic/00/round1")).text == "critique text"

    def test_contains_matching(self):
        backend = ScriptedBackend(
            [ScriptRule(tag="retriever/*", contains="spectral bias", response="SELECTED: x")]
        )
        assert backend.complete(request(tag="retriever/00", text="spectral bias issue")).text
        with pytest.raises(ScriptMiss):
            backend.complete(request(tag="retriever/00", text="something else"))

    def test_strict_requires_exactly_one(self):
        backend = ScriptedBackend(
            [
                ScriptRule(tag="engineer/*", response="a"),
                ScriptRule(tag="engineer/00/*", response="b"),
            ]
        )
        with pytest.raises(ScriptMiss):
            backend.complete(request(tag="engineer/00/attempt1"))
        with pytest.raises(ScriptMiss):
            backend.complete(request(tag="debugger/00/attempt1"))

    def test_non_strict_fallback(self):
        backend = ScriptedBackend([], strict=False)
        text = backend.complete(request(tag="proposer/00/round1")).text
        assert "proposer/00/round1" in text

    def test_from_file_inline_and_file_responses(self, tmp_path):
        body = tmp_path / "root.py"
        body.write_text("print('hi')\n")
        script = tmp_path / "script.json"
        script.write_text(
            json.dumps(
                {
                    "strict": True,
                    "rules": [
                        {"tag": "root_engineer/*", "response_file": "root.py", "name": "root"},
                        {"tag": "critic/*", "response": "fine"},
                    ],
                }
            )
        )
        backend = ScriptedBackend.from_file(script)
        assert backend.strict
        assert backend.complete(request(tag="root_engineer/0")).text == "print('hi')\n"

    def test_from_file_rejects_ambiguous_rule(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps({"rules": [{"tag": "x/*"}]}))
        with pytest.raises(ValidationError):
            ScriptedBackend.from_file(script)


class TestGateway:
    def test_trace_records(self, tmp_path):
        trace = tmp_path / "trace.jsonl"
        backend = ScriptedBackend([ScriptRule(tag="*", response="four words right here")], strict=False)
        gw = Gateway(backend, trace_path=trace)
        gw.complete(request(tag="proposer/00/round1"))
        gw.complete(request(tag="critic/00/round1", temperature=None))

        lines = [json.loads(line) for line in trace.read_text().splitlines()]
        assert len(lines) == gw.call_count == 2
        for record in lines:
            assert set(record) == {
                "tag",
                "model",
                "temperature",
                "request_chars",
                "response_chars",
                "latency_ms",
                "timestamp",
            }
            assert record["tag"]
        assert lines[1]["temperature"] is None

    def test_word_counts_partitioned_by_role(self, tmp_path):
        backend = ScriptedBackend(
            [
                ScriptRule(tag="proposer/*", response="one two three"),
                ScriptRule(tag="critic/*", response="four five"),
            ]
        )
        gw = Gateway(backend)
        gw.complete(request(tag="proposer/00/round1"))
        gw.complete(request(tag="proposer/00/round2"))
        gw.complete(request(tag="critic/00/round1"))
        counts = gw.word_counts()
        assert counts == {"proposer": 6, "critic": 2}
        assert sum(counts.values()) == 8

    def test_retries_then_success(self):
        class Flaky:
            def __init__(self):
                self.calls = 0

            def complete(self, req):
                self.calls += 1
                if self.calls < 3:
                    raise TransportError("blip")
                return ChatResponse(text="ok")

        sleeps = []
        backend = Flaky()
        gw = Gateway(backend, retries=3, backoff_s=1.0, sleep=sleeps.append)
        assert gw.complete(request()).text == "ok"
        assert backend.calls == 3
        assert sleeps == [1.0, 2.0]  # exponential backoff from 1s

    def test_hard_failure_after_retries(self):
        class Dead:
            def complete(self, req):
                raise TransportError("down")

        sleeps = []
        gw = Gateway(Dead(), retries=3, backoff_s=1.0, sleep=sleeps.append)
        with pytest.raises(TransportError):
            gw.complete(request())
        assert sleeps == [1.0, 2.0]


class TestHttpBackend:
    def test_payload_and_parse(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        seen = {}

        def handler(req: httpx.Request) -> httpx.Response:
            seen["payload"] = json.loads(req.content)
            seen["auth"] = req.headers.get("authorization")
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"content": "pong"}}],
                    "usage": {"prompt_tokens": 5, "completion_tokens": 1},
                },
            )

        backend = HttpBackend("http://llm.local/v1", transport=httpx.MockTransport(handler))
        result = backend.complete(request(temperature=0.7))
        assert result.text == "pong"
        assert result.token_counts == {"prompt": 5, "completion": 1}
        assert seen["payload"]["temperature"] == 0.7
        assert seen["payload"]["model"] == "m1"
        assert seen["auth"] == "Bearer sk-test"

    def test_temperature_omitted_when_none(self):
        seen = {}

        def handler(req: httpx.Request) -> httpx.Response:
            seen["payload"] = json.loads(req.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]})

        backend = HttpBackend("http://llm.local/v1", transport=httpx.MockTransport(handler))
        backend.complete(request(temperature=None))
        assert "temperature" not in seen["payload"]

    def test_retryable_statuses(self):
        def handler(req: httpx.Request) -> httpx.Response:
            return httpx.Response(503, text="overloaded")

        backend = HttpBackend("http://llm.local/v1", transport=httpx.MockTransport(handler))
        with pytest.raises(TransportError):
            backend.complete(request())

    def test_network_error_is_transport_error(self):
        def handler(req: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("refused")

        backend = HttpBackend("http://llm.local/v1", transport=httpx.MockTransport(handler))
        with pytest.raises(TransportError):
            backend.complete(request())


class TestPromptTemplates:
    def test_selector_k_substitution(self):
        messages = render_prompt(
            "selector",
            {"k": 3, "candidates": "id=0 score=0.9\nid=00 score=0.2"},
        )
        assert messages[0]["role"] == "system"
        assert "Exactly 3 solution IDs" in messages[0]["content"]
        assert "$k" not in messages[0]["content"]
        assert "## Candidate Solutions" in messages[1]["content"]

    def test_missing_placeholder_lists_keys(self):
        with pytest.raises(TemplateError) as err:
            render_prompt("retriever", {})
        assert err.value.missing == ["kb_index"]

    def test_engineer_template_names_modes(self):
        text = load_template("engineer")
        assert "--mode=validate (1 epoch)" in text
        assert "--mode=train (full)" in text
        assert "Save checkpoint to ./MODEL_CHECKPOINT" in text

    def test_retriever_template_cardinality_phrase(self):
        assert "Select AT MOST 1 entry" in load_template("retriever")

    def test_all_roles_have_templates(self):
        from evotree.config import ALL_ROLES

        for role in ALL_ROLES:
            assert load_template(role).strip()

    def test_section_order_fixed(self):
        context = {
            "parent_code": "code text",
            "problem": "problem text",
            "kb_entry": "entry text",
        }
        user = render_prompt(ROLE_ENGINEER, {"proposal": "p", **context})[1]["content"]
        assert user.index("## Problem") < user.index("## Proposal")
        assert user.index("## Proposal") < user.index("## Parent Solution Code")

    def test_identifier_extraction(self):
        assert template_identifiers("a $x b ${y} c $$z") == {"x", "y"}

    def test_empty_sections_dropped(self):
        user = render_prompt(ROLE_RETRIEVER, {"kb_index": "1. x", "problem": ""})[1]["content"]
        assert user == "Proceed as instructed."

    def test_selector_context_renders_for_each_model(self):
        msgs = render_prompt(ROLE_SELECTOR, {"k": 2, "candidates": "id=0"})
        assert "Exactly 2 solution IDs" in msgs[0]["content"]
