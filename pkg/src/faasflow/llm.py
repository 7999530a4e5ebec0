"""Chat-completion access with templating, structured replies, and retries.

Prompts are rendered from text templates with ``{placeholder}`` markers.
Each template declares (in code) the shape its reply must take; the gateway
extracts the first structured block from the raw reply, validates it, and
re-prompts with the violation appended until it conforms or retries run
out. A scripted backend replays canned transcripts keyed by a digest of the
bindings, which makes whole pipeline runs deterministic and testable
offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Protocol

import requests

from .errors import BackendError, FaasFlowError, MissingPlaceholderError, StructuredParseError

#: Templates of the generation pipeline plus the two ablation templates that
#: let the evaluation harness ask a model for Argo YAML directly.
TEMPLATE_IDS = ("plan", "select", "order", "classify", "yaml_from_dag", "yaml_from_nodes")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    bindings: Mapping[str, str]
    temperature: float = 0.0
    max_retries: int = 2


@dataclass(frozen=True)
class StructuredReply:
    raw_text: str
    parsed: Any
    attempts: int


class SchemaViolation(FaasFlowError):
    """A reply did not match its template schema (internal retry signal)."""


_template_cache: dict[str, str] = {}


def template_text(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise FaasFlowError(f"unknown template id {template_id!r}")
    if template_id not in _template_cache:
        path = resources.files("faasflow").joinpath("templates", f"{template_id}.txt")
        _template_cache[template_id] = path.read_text(encoding="utf-8")
    return _template_cache[template_id]


def template_placeholders(template_id: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(template_text(template_id)))


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> str:
    """Deterministic substitution of ``{placeholder}`` markers.

    Extra bindings beyond the template's placeholders are allowed (some
    carry machine-readable context for schema checks); missing ones raise.
    """
    text = template_text(template_id)
    missing = [name for name in template_placeholders(template_id) if name not in bindings]
    if missing:
        raise MissingPlaceholderError(template_id, missing)
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), text)


def canonical_bindings(bindings: Mapping[str, str]) -> str:
    return json.dumps(dict(bindings), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_key(request: PromptRequest) -> str:
    """Stable transcript key: template id plus a 64-bit bindings digest."""
    digest = hashlib.sha256(canonical_bindings(request.bindings).encode("utf-8")).hexdigest()[:16]
    return f"{request.template_id}:{digest}"


def extract_block(text: str) -> str | None:
    """The first balanced ``{...}`` or ``[...]`` block, or None.

    Quote- and escape-aware, so prose around the block (and braces inside
    string literals) do not confuse the match.
    """
    start = None
    for i, ch in enumerate(text):
        if ch in "[{":
            start = i
            break
    if start is None:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _json_block(raw: str) -> Any:
    block = extract_block(raw)
    if block is None:
        raise SchemaViolation("reply contains no JSON block")
    try:
        return json.loads(block)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"reply block is not valid JSON: {exc.msg}") from exc


def _binding_json(bindings: Mapping[str, str], name: str) -> Any:
    try:
        return json.loads(bindings[name])
    except (KeyError, json.JSONDecodeError) as exc:
        raise FaasFlowError(f"request binding {name!r} must hold JSON for schema checks") from exc


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    match = re.match(r"^```[a-zA-Z0-9_-]*\n(.*?)\n?```\s*$", text, re.DOTALL)
    return match.group(1) if match else text


def parse_reply(template_id: str, bindings: Mapping[str, str], raw: str) -> Any:
    """Extract and validate the structured part of a raw reply.

    Raises :class:`SchemaViolation` with a message suitable for re-prompting.
    """
    if template_id == "plan":
        value = _json_block(raw)
        if not isinstance(value, list) or not all(isinstance(s, str) and s.strip() for s in value):
            raise SchemaViolation("expected a JSON array of non-empty step strings")
        return [s.strip() for s in value]

    if template_id == "select":
        value = _json_block(raw)
        if not isinstance(value, dict) or not isinstance(value.get("function_id"), str):
            raise SchemaViolation('expected {"function_id": "<id>"}')
        offered = {c["id"] for c in _binding_json(bindings, "candidates")}
        fid = value["function_id"]
        if fid not in offered:
            raise SchemaViolation(
                f"function id {fid!r} is not among the offered candidates {sorted(offered)}"
            )
        return fid

    if template_id == "order":
        value = _json_block(raw)
        expected = [n["node_id"] for n in _binding_json(bindings, "nodes")]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise SchemaViolation("expected a JSON array of node ids")
        if sorted(value) != sorted(expected) or len(value) != len(expected):
            raise SchemaViolation(
                f"reply must be a permutation of {sorted(expected)}, got {value}"
            )
        return value

    if template_id == "classify":
        block = extract_block(raw)
        if block is None:
            if re.search(r"\bINPUT\b", raw):
                return "INPUT"
            raise SchemaViolation("expected INPUT or a {\"node_id\", \"output_param\"} object")
        try:
            value = json.loads(block)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"reply block is not valid JSON: {exc.msg}") from exc
        if not isinstance(value, dict) or "node_id" not in value or "output_param" not in value:
            raise SchemaViolation("object must carry node_id and output_param")
        catalog = {(c["node_id"], c["output_param"]) for c in _binding_json(bindings, "catalog")}
        pair = (value["node_id"], value["output_param"])
        if pair not in catalog:
            raise SchemaViolation(
                f"({pair[0]!r}, {pair[1]!r}) does not name an output of an earlier node"
            )
        return {"node_id": pair[0], "output_param": pair[1]}

    if template_id in ("yaml_from_dag", "yaml_from_nodes"):
        text = _strip_fences(raw)
        if not text.strip():
            raise SchemaViolation("expected a YAML document")
        return text

    raise FaasFlowError(f"unknown template id {template_id!r}")


class LlmBackend(Protocol):
    def generate(self, request: PromptRequest, prompt: str, attempt: int) -> str: ...


class ScriptedBackend:
    """Deterministic replay backend.

    The transcript maps :func:`request_key` keys to ordered reply lists;
    each call consumes the next reply for its key and the final entry is
    sticky, so repeated identical requests (e.g. evaluation repetitions)
    keep receiving the last scripted answer. Cursor updates are guarded for
    concurrent use.
    """

    def __init__(self, transcript: Mapping[str, Any] | str | Path) -> None:
        if isinstance(transcript, (str, Path)):
            transcript = json.loads(Path(transcript).read_text(encoding="utf-8"))
        self.replies: dict[str, list[str]] = {}
        for key, value in transcript.items():
            self.replies[key] = [value] if isinstance(value, str) else list(value)
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def generate(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        key = request_key(request)
        replies = self.replies.get(key)
        if not replies:
            raise BackendError(f"no scripted reply for key {key}")
        with self._lock:
            cursor = self._cursors.get(key, 0)
            self._cursors[key] = cursor + 1
        return replies[min(cursor, len(replies) - 1)]


class RemoteChatBackend:
    """Client for a chat-completions HTTP API.

    Configured explicitly or from ``FAASFLOW_LLM_BASE_URL``,
    ``FAASFLOW_LLM_MODEL``, and ``FAASFLOW_LLM_API_KEY``.
    """

    def __init__(self, base_url: str, model: str, api_key: str = "", timeout: float = 60.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> "RemoteChatBackend":
        base_url = os.environ.get("FAASFLOW_LLM_BASE_URL", "")
        model = os.environ.get("FAASFLOW_LLM_MODEL", "")
        if not base_url or not model:
            raise BackendError(
                "remote backend needs FAASFLOW_LLM_BASE_URL and FAASFLOW_LLM_MODEL"
            )
        return cls(base_url, model, os.environ.get("FAASFLOW_LLM_API_KEY", ""))

    def generate(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendError(f"chat backend unreachable: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise BackendError(f"chat backend returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendError("malformed chat backend response") from exc


class LlmGateway:
    """Renders prompts, runs a backend, and enforces reply schemas."""

    def __init__(self, backend: LlmBackend) -> None:
        self.backend = backend

    def complete(self, request: PromptRequest) -> StructuredReply:
        """Run the request until its reply conforms to the template schema.

        On a schema violation the prompt is re-sent with the violation
        appended, up to ``max_retries`` extra attempts; exhaustion raises
        :class:`StructuredParseError` carrying the last raw reply.
        """
        base_prompt = render_prompt(request.template_id, request.bindings)
        prompt = base_prompt
        raw = ""
        violation = "no attempts made"
        for attempt in range(1, request.max_retries + 2):
            raw = self.backend.generate(request, prompt, attempt)
            try:
                parsed = parse_reply(request.template_id, request.bindings, raw)
            except SchemaViolation as exc:
                violation = str(exc)
                prompt = (
                    f"{base_prompt}\n\nYour previous reply was rejected: {violation}\n"
                    "Answer again using exactly the required format."
                )
                continue
            return StructuredReply(raw_text=raw, parsed=parsed, attempts=attempt)
        raise StructuredParseError(
            f"reply still violates the {request.template_id} schema after "
            f"{request.max_retries + 1} attempt(s): {violation}",
            raw_text=raw,
            attempts=request.max_retries + 1,
        )
