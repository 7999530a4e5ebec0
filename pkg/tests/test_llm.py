"""Prompt templating, reply schemas, scripted replay, retries."""

from __future__ import annotations

import json
import random
import threading

import pytest

from faasflow.errors import BackendError, MissingPlaceholderError, StructuredParseError
from faasflow.execution import serve_mock_faas
from faasflow.llm import (
    LlmGateway,
    PromptRequest,
    RemoteChatBackend,
    ScriptedBackend,
    extract_block,
    parse_reply,
    render_prompt,
    request_key,
    SchemaViolation,
)


class TestRenderPrompt:
    def test_plan_contains_query_and_examples(self):
        text = render_prompt("plan", {"query": "send an email"})
        assert "send an email" in text
        assert text.count("Example request:") >= 2

    def test_missing_binding_named(self):
        with pytest.raises(MissingPlaceholderError, match="query"):
            render_prompt("plan", {})

    def test_deterministic(self):
        bindings = {"query": "resize the image"}
        assert render_prompt("plan", bindings) == render_prompt("plan", bindings)

    def test_extra_bindings_allowed(self):
        text = render_prompt("plan", {"query": "x", "node_id": "n0"})
        assert "x" in text


class TestExtractBlock:
    def test_object_with_prose_around(self):
        raw = 'Sure thing! Here you go: {"function_id": "email_send"} hope that helps'
        assert json.loads(extract_block(raw)) == {"function_id": "email_send"}

    def test_array_with_nested_braces_in_strings(self):
        raw = 'Answer: ["use {curly} text", "b"] trailing'
        assert json.loads(extract_block(raw)) == ["use {curly} text", "b"]

    def test_no_block(self):
        assert extract_block("INPUT") is None


class TestSchemas:
    def test_plan_accepts_step_list(self):
        assert parse_reply("plan", {}, '["a", "b"]') == ["a", "b"]

    def test_plan_rejects_non_strings(self):
        with pytest.raises(SchemaViolation):
            parse_reply("plan", {}, "[1, 2]")

    def test_select_enforces_candidate_set(self):
        bindings = {"candidates": json.dumps([{"id": "email_send"}, {"id": "sms_send"}])}
        assert parse_reply("select", bindings, '{"function_id": "sms_send"}') == "sms_send"
        with pytest.raises(SchemaViolation, match="make_coffee"):
            parse_reply("select", bindings, '{"function_id": "make_coffee"}')

    def test_order_requires_exact_permutation(self):
        bindings = {"nodes": json.dumps([{"node_id": "n0"}, {"node_id": "n1"}])}
        assert parse_reply("order", bindings, '["n1", "n0"]') == ["n1", "n0"]
        with pytest.raises(SchemaViolation):
            parse_reply("order", bindings, '["n1"]')
        with pytest.raises(SchemaViolation):
            parse_reply("order", bindings, '["n1", "n1"]')

    def test_classify_accepts_input_token_and_catalog_pairs(self):
        bindings = {"catalog": json.dumps([{"node_id": "n0", "output_param": "url"}])}
        assert parse_reply("classify", bindings, "INPUT") == "INPUT"
        got = parse_reply("classify", bindings, '{"node_id": "n0", "output_param": "url"}')
        assert got == {"node_id": "n0", "output_param": "url"}
        with pytest.raises(SchemaViolation):
            parse_reply("classify", bindings, '{"node_id": "n5", "output_param": "url"}')

    def test_yaml_templates_strip_fences(self):
        raw = "```yaml\napiVersion: argoproj.io/v1alpha1\n```"
        assert parse_reply("yaml_from_dag", {}, raw) == "apiVersion: argoproj.io/v1alpha1"

    @pytest.mark.parametrize("seed", range(20))
    def test_fuzzed_replies_never_yield_invalid_values(self, seed):
        """Whatever junk comes back, parse_reply returns a conforming value
        or raises; it never returns something outside the schema."""
        rng = random.Random(seed)
        bindings = {
            "candidates": json.dumps([{"id": "a"}, {"id": "b"}]),
            "nodes": json.dumps([{"node_id": "n0"}, {"node_id": "n1"}]),
            "catalog": json.dumps([{"node_id": "n0", "output_param": "out"}]),
        }
        junk = [
            "",
            "null",
            "{}",
            "[]",
            '{"function_id": 7}',
            '["n0", "n0"]',
            '{"node_id": "n0"}',
            "{\"unterminated",
            "".join(rng.choice('{}[]"abc,:') for _ in range(30)),
        ]
        for template in ("plan", "select", "order", "classify"):
            for raw in junk:
                try:
                    value = parse_reply(template, bindings, raw)
                except SchemaViolation:
                    continue
                if template == "plan":
                    assert isinstance(value, list) and all(isinstance(s, str) and s for s in value)
                elif template == "select":
                    assert value in ("a", "b")
                elif template == "order":
                    assert sorted(value) == ["n0", "n1"]
                else:
                    assert value == "INPUT" or value == {"node_id": "n0", "output_param": "out"}


class TestScriptedBackend:
    def test_replays_by_key(self):
        request = PromptRequest("plan", {"query": "ship it"})
        backend = ScriptedBackend({request_key(request): '["ship the thing"]'})
        reply = LlmGateway(backend).complete(request)
        assert reply.parsed == ["ship the thing"]
        assert reply.attempts == 1

    def test_missing_key_is_backend_error(self):
        backend = ScriptedBackend({})
        with pytest.raises(BackendError, match="no scripted reply"):
            LlmGateway(backend).complete(PromptRequest("plan", {"query": "x"}))

    def test_schema_violation_with_zero_retries(self):
        request = PromptRequest("plan", {"query": "x"}, max_retries=0)
        backend = ScriptedBackend({request_key(request): "not a list at all"})
        with pytest.raises(StructuredParseError) as excinfo:
            LlmGateway(backend).complete(request)
        assert excinfo.value.attempts == 1
        assert excinfo.value.raw_text == "not a list at all"

    def test_retry_consumes_second_reply(self):
        request = PromptRequest("plan", {"query": "x"}, max_retries=1)
        backend = ScriptedBackend({request_key(request): ["garbage", '["step one"]']})
        reply = LlmGateway(backend).complete(request)
        assert reply.attempts == 2
        assert reply.parsed == ["step one"]

    def test_last_reply_is_sticky(self):
        request = PromptRequest("plan", {"query": "x"})
        backend = ScriptedBackend({request_key(request): ['["a"]']})
        gateway = LlmGateway(backend)
        assert gateway.complete(request).parsed == ["a"]
        assert gateway.complete(request).parsed == ["a"]

    def test_key_depends_on_bindings(self):
        a = request_key(PromptRequest("plan", {"query": "x"}))
        b = request_key(PromptRequest("plan", {"query": "y"}))
        c = request_key(PromptRequest("select", {"query": "x"}))
        assert len({a, b, c}) == 3
        assert a.startswith("plan:")

    def test_concurrent_completes_are_safe(self):
        request = PromptRequest("plan", {"query": "x"})
        backend = ScriptedBackend({request_key(request): ['["a"]']})
        gateway = LlmGateway(backend)
        results = []

        def worker():
            results.append(gateway.complete(request).parsed)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [["a"]] * 8


class TestRemoteBackend:
    def test_round_trip_against_stub_server(self):
        def completions(args):
            prompt = args["messages"][0]["content"]
            assert "ship it" in prompt
            return {"choices": [{"message": {"content": '["from the stub"]'}}]}

        with serve_mock_faas({"/v1/chat/completions": completions}) as stub:
            backend = RemoteChatBackend(stub.url + "/v1", model="test-model")
            reply = LlmGateway(backend).complete(PromptRequest("plan", {"query": "ship it"}))
        assert reply.parsed == ["from the stub"]

    def test_http_error_is_backend_error(self):
        from faasflow.execution import MockFailure

        def failing(args):
            raise MockFailure(503, "overloaded")

        with serve_mock_faas({"/v1/chat/completions": failing}) as stub:
            backend = RemoteChatBackend(stub.url + "/v1", model="test-model")
            with pytest.raises(BackendError, match="503"):
                LlmGateway(backend).complete(PromptRequest("plan", {"query": "x"}))

    def test_unreachable_host(self):
        backend = RemoteChatBackend("http://127.0.0.1:9", model="m", timeout=0.5)
        with pytest.raises(BackendError, match="unreachable"):
            LlmGateway(backend).complete(PromptRequest("plan", {"query": "x"}))

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("FAASFLOW_LLM_BASE_URL", "http://llm.internal/v1")
        monkeypatch.setenv("FAASFLOW_LLM_MODEL", "big-model")
        monkeypatch.setenv("FAASFLOW_LLM_API_KEY", "sekrit")
        backend = RemoteChatBackend.from_env()
        assert backend.base_url == "http://llm.internal/v1"
        assert backend.model == "big-model"
        assert backend.api_key == "sekrit"

    def test_from_env_requires_configuration(self, monkeypatch):
        monkeypatch.delenv("FAASFLOW_LLM_BASE_URL", raising=False)
        monkeypatch.delenv("FAASFLOW_LLM_MODEL", raising=False)
        with pytest.raises(BackendError):
            RemoteChatBackend.from_env()


class TestTranscriptFile:
    def test_loads_from_disk(self, tmp_path):
        request = PromptRequest("plan", {"query": "x"})
        path = tmp_path / "transcript.json"
        path.write_text(json.dumps({request_key(request): ['["loaded"]']}))
        reply = LlmGateway(ScriptedBackend(path)).complete(request)
        assert reply.parsed == ["loaded"]
