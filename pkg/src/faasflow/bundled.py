"""Bundled evaluation datasets and the tooling that authors them.

Everything here is generated from code so the shipped datasets stay
reproducible: a fixture function catalog, twelve workflow cases across the
three complexity tiers, and per-case scripted transcripts. Transcripts are
authored by running the real pipeline against a backend that answers every
prompt from the ground-truth DAG, recording each (request key, reply) pair.

Two datasets are built from the same cases:

- ``bundled``: transcripts answer every template correctly, so every
  setting reproduces the ground truth.
- ``ablation-demo``: the replies for the model-written YAML templates are
  deliberately degraded (reversed dependencies, misrouted parameters, one
  syntactically broken document). This is a constructed demonstration of
  what the generator and compiler stages buy, not a measurement of any
  model.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .compilers import compile_argo, verify_compiled
from .errors import FaasFlowError
from .generator import assemble_dag
from .identifier import UserQuery
from .llm import LlmGateway, PromptRequest, request_key
from .model import (
    START_NODE_ID,
    DataFlowEdge,
    FunctionSpec,
    NodeOutput,
    ParamBinding,
    ParameterSpec,
    SubTask,
    UserInput,
    WorkflowDAG,
    WorkflowNode,
    dag_to_document,
    find_cycle,
)
from .pipeline import SETTING_FULL, SETTINGS, run_setting
from .repository import FunctionRepository, function_spec_to_json


def _p(name: str, data_type: str, description: str, required: bool = True) -> ParameterSpec:
    return ParameterSpec(name, data_type, description, required)


def _fn(fid: str, description: str, inputs, outputs) -> FunctionSpec:
    return FunctionSpec(
        id=fid,
        name=fid,
        description=description,
        endpoint=f"http://functions.internal/{fid}",
        inputs=tuple(inputs),
        outputs=tuple(outputs),
    )


FIXTURE_FUNCTIONS: tuple[FunctionSpec, ...] = (
    _fn(
        "weather_fetch",
        "Fetch the current weather forecast for a city.",
        [_p("city", "string", "name of the city to fetch the weather for")],
        [
            _p("forecast", "string", "weather forecast text"),
            _p("temperature", "number", "current temperature in celsius"),
        ],
    ),
    _fn(
        "audio_transcribe",
        "Transcribe spoken audio into text.",
        [_p("audio_url", "string", "URL of the audio recording to transcribe")],
        [_p("transcript", "string", "transcribed text of the audio")],
    ),
    _fn(
        "video_extract_audio",
        "Extract the audio track from a video.",
        [_p("video_url", "string", "URL of the video to extract audio from")],
        [_p("audio_url", "string", "URL of the extracted audio track")],
    ),
    _fn(
        "translate_text",
        "Translate text into a target language.",
        [
            _p("text", "string", "text to translate"),
            _p("language", "string", "target language name"),
        ],
        [_p("translated", "string", "translated text")],
    ),
    _fn(
        "summarize_text",
        "Summarize long text into a short summary.",
        [_p("text", "string", "text to summarize")],
        [_p("summary", "string", "short summary of the text")],
    ),
    _fn(
        "sentiment_analyze",
        "Analyze the sentiment of a piece of text.",
        [_p("text", "string", "text to analyze the sentiment of")],
        [
            _p("label", "string", "sentiment label such as positive or negative"),
            _p("score", "number", "sentiment score between -1 and 1"),
        ],
    ),
    _fn(
        "keywords_extract",
        "Extract key phrases from text.",
        [_p("text", "string", "text to extract key phrases from")],
        [_p("keywords", "array", "list of extracted key phrases")],
    ),
    _fn(
        "ocr_extract",
        "Recognize printed text in a scanned image document.",
        [_p("image_url", "string", "URL of the scanned image document")],
        [_p("text", "string", "text recognized in the image")],
    ),
    _fn(
        "img_resize",
        "Resize an image to a target width.",
        [
            _p("image_url", "string", "URL of the image to resize"),
            _p("width", "number", "target width in pixels"),
        ],
        [_p("resized_url", "string", "URL of the resized image")],
    ),
    _fn(
        "face_blur",
        "Blur the faces detected in an image.",
        [_p("image_url", "string", "URL of the image to blur faces in")],
        [_p("blurred_url", "string", "URL of the image with faces blurred")],
    ),
    _fn(
        "storage_upload",
        "Upload a file to an asset storage bucket.",
        [
            _p("file_url", "string", "URL of the file to upload"),
            _p("bucket", "string", "name of the destination bucket"),
        ],
        [_p("stored_url", "string", "public URL of the stored file")],
    ),
    _fn(
        "email_send",
        "Send an email message with an optional attachment.",
        [
            _p("recipient", "string", "email address of the recipient"),
            _p("subject", "string", "subject line of the email"),
            _p("body", "string", "message body text"),
            _p("attachment_url", "string", "URL of a file to attach", required=False),
        ],
        [_p("message_id", "string", "identifier of the sent email")],
    ),
    _fn(
        "sms_send",
        "Send a short text message to a phone number.",
        [
            _p("phone", "string", "phone number of the recipient"),
            _p("text", "string", "message text to send"),
        ],
        [_p("sms_id", "string", "identifier of the sent text message")],
    ),
    _fn(
        "chat_post",
        "Post a message to a team chat channel.",
        [
            _p("channel", "string", "name of the chat channel to post to"),
            _p("message", "string", "message text to post"),
        ],
        [_p("post_id", "string", "identifier of the posted chat message")],
    ),
    _fn(
        "db_query",
        "Query rows from a database table.",
        [
            _p("table", "string", "name of the database table to query"),
            _p("filter", "string", "filter condition for the rows"),
        ],
        [_p("rows", "array", "rows matching the query")],
    ),
    _fn(
        "chart_render",
        "Render a chart image from tabular rows.",
        [
            _p("rows", "array", "tabular rows to chart"),
            _p("kind", "string", "chart kind such as bar or line"),
        ],
        [_p("chart_url", "string", "URL of the rendered chart image")],
    ),
    _fn(
        "csv_export",
        "Export tabular rows to a CSV file.",
        [_p("rows", "array", "tabular rows to export")],
        [_p("csv_url", "string", "URL of the exported CSV file")],
    ),
    _fn(
        "report_build",
        "Build a formatted report document from tabular rows and an optional chart.",
        [
            _p("title", "string", "title of the report"),
            _p("rows", "array", "tabular rows to include in the report"),
            _p("chart_url", "string", "URL of a chart image to embed", required=False),
        ],
        [_p("report_url", "string", "URL of the built report document")],
    ),
    _fn(
        "doc_compose",
        "Compose a text document from a heading and up to three text sections.",
        [
            _p("heading", "string", "heading of the composed document"),
            _p("section_a", "string", "first text section"),
            _p("section_b", "string", "second text section", required=False),
            _p("section_c", "string", "third text section", required=False),
        ],
        [_p("doc_url", "string", "URL of the composed document")],
    ),
    _fn(
        "pdf_convert",
        "Convert a document to PDF format.",
        [_p("doc_url", "string", "URL of the document to convert")],
        [_p("pdf_url", "string", "URL of the converted PDF file")],
    ),
    _fn(
        "news_fetch",
        "Fetch recent news articles about a topic.",
        [_p("topic", "string", "topic to fetch news articles about")],
        [_p("articles", "string", "combined text of the fetched articles")],
    ),
    _fn(
        "daily_quote",
        "Produce the inspirational quote of the day.",
        [],
        [_p("quote", "string", "an inspirational quote of the day")],
    ),
    _fn(
        "inventory_check",
        "Check warehouse stock for a product.",
        [_p("sku", "string", "product SKU to check the stock of")],
        [_p("stock", "number", "units currently in stock")],
    ),
    _fn(
        "order_create",
        "Create a purchase order for a product.",
        [
            _p("sku", "string", "product SKU to order"),
            _p("quantity", "number", "number of units to order"),
            _p("address", "string", "delivery address for the order"),
        ],
        [
            _p("order_id", "string", "identifier of the created order"),
            _p("total", "number", "total price of the order"),
        ],
    ),
    _fn(
        "invoice_generate",
        "Generate an invoice document for an order.",
        [_p("order_id", "string", "identifier of the order to invoice")],
        [_p("invoice_url", "string", "URL of the generated invoice document")],
    ),
    _fn(
        "payment_charge",
        "Charge a payment for an order.",
        [
            _p("order_id", "string", "identifier of the order to charge"),
            _p("amount", "number", "amount of money to charge"),
        ],
        [_p("receipt_id", "string", "identifier of the payment receipt")],
    ),
)


def fixture_repository() -> FunctionRepository:
    repo = FunctionRepository()
    for fn in FIXTURE_FUNCTIONS:
        repo.register_function(fn)
    return repo


# --- case definitions ----------------------------------------------------------

#: Binding of one input parameter: "user" or ("node", step index, output name).
Binding = object


@dataclass(frozen=True)
class StepDef:
    text: str
    function_id: str
    bindings: Mapping[str, Binding] = field(default_factory=dict)


@dataclass(frozen=True)
class CaseDef:
    case_id: str
    complexity: str
    query: str
    steps: tuple[StepDef, ...]
    user_inputs: Mapping[str, object] = field(default_factory=dict)


def _step(text: str, function_id: str, /, **bindings: Binding) -> StepDef:
    return StepDef(text, function_id, bindings)


FIXTURE_CASES: tuple[CaseDef, ...] = (
    CaseDef(
        "easy-weather",
        "easy",
        "What is the weather in Berlin right now?",
        (_step("fetch the current weather forecast for the city", "weather_fetch", city="user"),),
    ),
    CaseDef(
        "easy-transcribe",
        "easy",
        "Transcribe the recording of Monday's team meeting.",
        (
            _step(
                "transcribe the meeting audio recording into text",
                "audio_transcribe",
                audio_url="user",
            ),
        ),
    ),
    CaseDef(
        "easy-translate-summary",
        "easy",
        "Translate the press release to German and then summarize it.",
        (
            _step(
                "translate the press release text to German",
                "translate_text",
                text="user",
                language="user",
            ),
            _step(
                "summarize the translated press release text",
                "summarize_text",
                text=("node", 0, "translated"),
            ),
        ),
    ),
    CaseDef(
        "easy-contract-phrases",
        "easy",
        "Pull the key phrases out of the scanned contract.",
        (
            _step(
                "recognize printed text in the scanned contract image",
                "ocr_extract",
                image_url="user",
            ),
            _step(
                "extract key phrases from the recognized contract text",
                "keywords_extract",
                text=("node", 0, "text"),
            ),
        ),
    ),
    CaseDef(
        "mid-product-photo",
        "intermediate",
        "Resize the product photo to 800 pixels, blur any faces, and upload it to the assets bucket.",
        (
            _step(
                "resize the product photo image to the target width",
                "img_resize",
                image_url="user",
                width="user",
            ),
            _step(
                "blur the faces detected in the resized image",
                "face_blur",
                image_url=("node", 0, "resized_url"),
            ),
            _step(
                "upload the blurred image file to the assets storage bucket",
                "storage_upload",
                file_url=("node", 1, "blurred_url"),
                bucket="user",
            ),
        ),
    ),
    CaseDef(
        "mid-sales-report",
        "intermediate",
        "Query October sales, render a bar chart, build the monthly report, and convert it to PDF.",
        (
            _step(
                "query the sales rows from the database table",
                "db_query",
                table="user",
                filter="user",
            ),
            _step(
                "render a bar chart image from the sales rows",
                "chart_render",
                rows=("node", 0, "rows"),
                kind="user",
            ),
            _step(
                "build the monthly report document from the rows and chart",
                "report_build",
                title="user",
                rows=("node", 0, "rows"),
                chart_url=("node", 1, "chart_url"),
            ),
            _step(
                "convert the report document to PDF format",
                "pdf_convert",
                doc_url=("node", 2, "report_url"),
            ),
        ),
    ),
    CaseDef(
        "mid-townhall-summary",
        "intermediate",
        "Extract the audio from the townhall video, transcribe it, summarize the transcript, and post the summary to the team channel.",
        (
            _step(
                "extract the audio track from the townhall video",
                "video_extract_audio",
                video_url="user",
            ),
            _step(
                "transcribe the extracted audio into text",
                "audio_transcribe",
                audio_url=("node", 0, "audio_url"),
            ),
            _step(
                "summarize the transcribed townhall text",
                "summarize_text",
                text=("node", 1, "transcript"),
            ),
            _step(
                "post the summary message to the team chat channel",
                "chat_post",
                channel="user",
                message=("node", 2, "summary"),
            ),
        ),
    ),
    CaseDef(
        "mid-news-digest",
        "intermediate",
        "Fetch news about our industry, summarize it, analyze the sentiment, pull the key phrases, and email me the digest.",
        (
            _step("fetch recent news articles about the industry topic", "news_fetch", topic="user"),
            _step(
                "summarize the combined text of the fetched articles",
                "summarize_text",
                text=("node", 0, "articles"),
            ),
            _step(
                "analyze the sentiment of the news summary",
                "sentiment_analyze",
                text=("node", 1, "summary"),
            ),
            _step(
                "extract key phrases from the news summary",
                "keywords_extract",
                text=("node", 1, "summary"),
            ),
            _step(
                "send the digest email with the summary as the body",
                "email_send",
                recipient="user",
                subject="user",
                body=("node", 1, "summary"),
            ),
        ),
    ),
    CaseDef(
        "hard-order-flow",
        "hard",
        "Check stock for the SKU, create an order for five units, generate the invoice, charge the payment, email billing the invoice, and text the courier.",
        (
            _step("check the warehouse stock for the product sku", "inventory_check", sku="user"),
            _step(
                "create a purchase order for the product units",
                "order_create",
                sku="user",
                quantity="user",
                address="user",
            ),
            _step(
                "generate the invoice document for the created order",
                "invoice_generate",
                order_id=("node", 1, "order_id"),
            ),
            _step(
                "charge the payment amount for the order",
                "payment_charge",
                order_id=("node", 1, "order_id"),
                amount=("node", 1, "total"),
            ),
            _step(
                "send the billing email with the invoice attached",
                "email_send",
                recipient="user",
                subject="user",
                body="user",
                attachment_url=("node", 2, "invoice_url"),
            ),
            _step(
                "send a text message to the courier phone",
                "sms_send",
                phone="user",
                text="user",
            ),
        ),
    ),
    CaseDef(
        "hard-bilingual-townhall",
        "hard",
        "For the quarterly town hall video: extract the audio, transcribe it, translate the transcript to Spanish, summarize both language versions, and post both summaries to the channel.",
        (
            _step(
                "extract the audio track from the town hall video",
                "video_extract_audio",
                video_url="user",
            ),
            _step(
                "transcribe the town hall audio into text",
                "audio_transcribe",
                audio_url=("node", 0, "audio_url"),
            ),
            _step(
                "translate the transcript text to Spanish",
                "translate_text",
                text=("node", 1, "transcript"),
                language="user",
            ),
            _step(
                "summarize the English transcript text",
                "summarize_text",
                text=("node", 1, "transcript"),
            ),
            _step(
                "summarize the Spanish translated text",
                "summarize_text",
                text=("node", 2, "translated"),
            ),
            _step(
                "post the English summary to the chat channel",
                "chat_post",
                channel="user",
                message=("node", 3, "summary"),
            ),
            _step(
                "post the Spanish summary to the chat channel",
                "chat_post",
                channel="user",
                message=("node", 4, "summary"),
            ),
        ),
    ),
    CaseDef(
        "hard-ops-digest",
        "hard",
        "Build the morning ops digest: fetch the HQ weather, fetch ops news, get the daily quote, summarize the news, compose the digest document, convert it to PDF, upload it to the digest bucket, and email the link.",
        (
            _step("fetch the current weather forecast for the HQ city", "weather_fetch", city="user"),
            _step("fetch recent news articles about the ops topic", "news_fetch", topic="user"),
            _step("produce the inspirational quote of the day", "daily_quote"),
            _step(
                "summarize the combined text of the ops articles",
                "summarize_text",
                text=("node", 1, "articles"),
            ),
            _step(
                "compose the digest document from heading and text sections",
                "doc_compose",
                heading="user",
                section_a=("node", 3, "summary"),
                section_b=("node", 0, "forecast"),
                section_c=("node", 2, "quote"),
            ),
            _step(
                "convert the digest document to PDF format",
                "pdf_convert",
                doc_url=("node", 4, "doc_url"),
            ),
            _step(
                "upload the digest PDF file to the digest storage bucket",
                "storage_upload",
                file_url=("node", 5, "pdf_url"),
                bucket="user",
            ),
            _step(
                "email the stored digest link to the distribution list",
                "email_send",
                recipient="user",
                subject="user",
                body=("node", 6, "stored_url"),
            ),
        ),
    ),
    CaseDef(
        "hard-complaint-pipeline",
        "hard",
        "Handle the customer complaint voicemail: transcribe it, translate to English, analyze sentiment, extract key phrases, summarize it, create a goodwill order, generate the invoice, charge the payment, email the customer, and alert support chat.",
        (
            _step(
                "transcribe the complaint voicemail audio into text",
                "audio_transcribe",
                audio_url="user",
            ),
            _step(
                "translate the complaint transcript to English",
                "translate_text",
                text=("node", 0, "transcript"),
                language="user",
            ),
            _step(
                "analyze the sentiment of the translated complaint",
                "sentiment_analyze",
                text=("node", 1, "translated"),
            ),
            _step(
                "extract key phrases from the translated complaint",
                "keywords_extract",
                text=("node", 1, "translated"),
            ),
            _step(
                "summarize the translated complaint text",
                "summarize_text",
                text=("node", 1, "translated"),
            ),
            _step(
                "create a goodwill purchase order for the customer",
                "order_create",
                sku="user",
                quantity="user",
                address="user",
            ),
            _step(
                "generate the invoice document for the goodwill order",
                "invoice_generate",
                order_id=("node", 5, "order_id"),
            ),
            _step(
                "charge the payment for the goodwill order",
                "payment_charge",
                order_id=("node", 5, "order_id"),
                amount=("node", 5, "total"),
            ),
            _step(
                "email the customer the summary with the invoice attached",
                "email_send",
                recipient="user",
                subject="user",
                body=("node", 4, "summary"),
                attachment_url=("node", 6, "invoice_url"),
            ),
            _step(
                "post the complaint summary alert to the support channel",
                "chat_post",
                channel="user",
                message=("node", 4, "summary"),
            ),
        ),
    ),
)


def build_truth(case: CaseDef, repo: FunctionRepository) -> WorkflowDAG:
    """Construct the ground-truth DAG for a case definition.

    Goes through the same assembler the pipeline uses, so field ordering,
    start-node derivation, and the dag id are identical to what a correct
    generation produces.
    """
    texts = [s.text for s in case.steps]
    if len(set(texts)) != len(texts):
        raise FaasFlowError(f"{case.case_id}: step texts must be unique")
    nodes = []
    for i, step in enumerate(case.steps):
        fn = repo.get(step.function_id)
        if fn is None:
            raise FaasFlowError(f"{case.case_id}: unknown function {step.function_id!r}")
        nodes.append(WorkflowNode(f"n{i}", SubTask(i, step.text), fn))
    edges: list[DataFlowEdge] = []
    for i, step in enumerate(case.steps):
        node = nodes[i]
        bound = 0
        for param, source in step.bindings.items():
            if node.function.input(param) is None:
                raise FaasFlowError(f"{case.case_id}: {step.function_id} has no input {param!r}")
            if source == "user":
                edges.append(
                    DataFlowEdge(
                        START_NODE_ID, node.node_id, ParamBinding(node.node_id, param, UserInput(param))
                    )
                )
            else:
                _, src_index, out = source
                if src_index >= i:
                    raise FaasFlowError(f"{case.case_id}: step {i} binds from later step {src_index}")
                src = nodes[src_index]
                edges.append(
                    DataFlowEdge(
                        src.node_id,
                        node.node_id,
                        ParamBinding(node.node_id, param, NodeOutput(src.node_id, out)),
                    )
                )
            bound += 1
        required = [p.name for p in node.function.inputs if p.required]
        missing = [p for p in required if p not in step.bindings]
        if missing:
            raise FaasFlowError(f"{case.case_id}: step {i} leaves required {missing} unbound")
        if bound == 0:
            source_id = nodes[i - 1].node_id if i > 0 else START_NODE_ID
            edges.append(DataFlowEdge(source_id, node.node_id, None))
    return assemble_dag(nodes, edges, UserQuery(case.query, dict(case.user_inputs)))


class TruthBackend:
    """Answers every pipeline prompt correctly by consulting the truth DAG."""

    def __init__(self, case: CaseDef, truth: WorkflowDAG) -> None:
        self.case = case
        self.truth = truth
        self._argo_document = compile_argo(truth).document
        self._node_by_text = {s.text: f"n{i}" for i, s in enumerate(case.steps)}
        self._edge_by_target: dict[tuple[str, str], ParamBinding] = {}
        for e in truth.edges:
            if e.binding is not None:
                self._edge_by_target[(e.target, e.binding.target_param)] = e.binding

    def generate(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        bindings = request.bindings
        if request.template_id == "plan":
            return json.dumps([s.text for s in self.case.steps])
        if request.template_id == "select":
            node_id = self._node_by_text.get(bindings["subtask"])
            if node_id is None:
                raise FaasFlowError(f"unknown sub-task text {bindings['subtask']!r}")
            node = self.truth.node(node_id)
            return json.dumps({"function_id": node.function.id})
        if request.template_id == "order":
            return json.dumps([f"n{i}" for i in range(len(self.case.steps))])
        if request.template_id == "classify":
            key = (bindings["node_id"], bindings["parameter_name"])
            binding = self._edge_by_target.get(key)
            if binding is None or isinstance(binding.source, UserInput):
                return "INPUT"
            return json.dumps(
                {"node_id": binding.source.node_id, "output_param": binding.source.param}
            )
        if request.template_id in ("yaml_from_dag", "yaml_from_nodes"):
            return self._argo_document
        raise FaasFlowError(f"truth backend cannot answer template {request.template_id!r}")


class RecordingBackend:
    """Wraps a backend and records every (request key, reply) pair."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.records: dict[str, str] = {}

    def generate(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        reply = self.inner.generate(request, prompt, attempt)
        self.records[request_key(request)] = reply
        return reply


def author_transcript(case: CaseDef, repo: FunctionRepository, k: int = 5) -> dict[str, str]:
    """Run all settings against the truth backend and capture the replies.

    Fails loudly if the recorded pipeline cannot reproduce the truth DAG
    exactly — e.g. when retrieval does not surface the intended function —
    so fixture problems are caught at authoring time, not in evaluation.
    """
    truth = build_truth(case, repo)
    backend = RecordingBackend(TruthBackend(case, truth))
    gateway = LlmGateway(backend)
    query = UserQuery(case.query, dict(case.user_inputs))
    for setting in SETTINGS:
        result = run_setting(setting, query, repo, gateway, k=k)
        gate = verify_compiled(result.compiled)
        if not gate.ok:
            raise FaasFlowError(
                f"{case.case_id}/{setting}: compiled document is invalid: "
                + "; ".join(v.message for v in gate.violations)
            )
        if setting == SETTING_FULL and result.dag != truth:
            raise FaasFlowError(
                f"{case.case_id}: full pipeline did not reproduce the truth DAG"
            )
    return dict(backend.records)


# --- degraded transcripts for the ablation demonstration ------------------------


def _redump(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False, width=4096)


def _dag_tasks(doc: dict) -> list[dict]:
    spec = doc.get("spec", {})
    templates = {t.get("name"): t for t in spec.get("templates", [])}
    entry = templates.get(spec.get("entrypoint"), {})
    return (entry.get("dag") or {}).get("tasks", [])


def degrade_yaml_from_nodes(document: str) -> str:
    """Heavily corrupt a model-written document: reverse every dependency
    and turn every task-output argument into a workflow parameter, i.e. the
    kind of misrouted dataflow an unguided model produces."""
    doc = yaml.safe_load(document)
    tasks = _dag_tasks(doc)
    reversed_deps: dict[str, set[str]] = {t["name"]: set() for t in tasks}
    for task in tasks:
        for dep in task.get("dependencies", []) or []:
            if dep in reversed_deps:
                reversed_deps[dep].add(task["name"])
    extra_params: set[str] = set()
    for task in tasks:
        deps = sorted(reversed_deps[task["name"]])
        if deps:
            task["dependencies"] = deps
        else:
            task.pop("dependencies", None)
        for arg in (task.get("arguments") or {}).get("parameters", []):
            if isinstance(arg.get("value"), str) and "{{tasks." in arg["value"]:
                arg["value"] = "{{workflow.parameters.%s}}" % arg["name"]
                extra_params.add(arg["name"])
    params = doc["spec"].setdefault("arguments", {}).setdefault("parameters", [])
    declared = {p.get("name") for p in params}
    for name in sorted(extra_params - declared):
        params.append({"name": name})
    params.sort(key=lambda p: str(p.get("name")))
    return _redump(doc)


def degrade_yaml_from_dag(document: str) -> str:
    """Mildly corrupt a model-written document by flipping one dependency
    edge (skipped when flipping would create a cycle)."""
    doc = yaml.safe_load(document)
    tasks = _dag_tasks(doc)
    by_name = {t["name"]: t for t in tasks}
    candidates = [t for t in sorted(tasks, key=lambda t: t["name"]) if t.get("dependencies")]
    if not candidates:
        return _redump(doc)
    target = candidates[-1]
    flipped = sorted(target["dependencies"])[-1]
    deps = [d for d in target["dependencies"] if d != flipped]
    if deps:
        target["dependencies"] = sorted(deps)
    else:
        target.pop("dependencies", None)
    source = by_name[flipped]
    source["dependencies"] = sorted(set(source.get("dependencies", []) or []) | {target["name"]})
    edges = [
        (dep, t["name"]) for t in tasks for dep in (t.get("dependencies", []) or [])
    ]
    if find_cycle(set(by_name), edges):
        return _redump(yaml.safe_load(document))
    return _redump(doc)


#: A guaranteed YAML parse failure, used to demonstrate the zero-score rule.
BROKEN_DOCUMENT = "apiVersion: argoproj.io/v1alpha1\nkind: Workflow\nspec: [unclosed\n"

#: Case whose model-written reply is replaced by the broken document.
BROKEN_CASE_ID = "mid-sales-report"


def degrade_transcript(case: CaseDef, repo: FunctionRepository, transcript: dict[str, str], k: int = 5) -> dict[str, str]:
    """Replace the model-written-YAML replies of a correct transcript with
    degraded ones (and one syntactically broken document)."""
    truth = build_truth(case, repo)
    query = UserQuery(case.query, dict(case.user_inputs))
    degraded = dict(transcript)
    for key, reply in transcript.items():
        template_id = key.split(":", 1)[0]
        if template_id == "yaml_from_nodes":
            if case.case_id == BROKEN_CASE_ID:
                degraded[key] = BROKEN_DOCUMENT
            else:
                degraded[key] = degrade_yaml_from_nodes(reply)
        elif template_id == "yaml_from_dag" and case.complexity == "hard":
            degraded[key] = degrade_yaml_from_dag(reply)
    return degraded


# --- dataset writing --------------------------------------------------------------


def write_dataset(
    destination: str | Path,
    name: str,
    note: str,
    transcripts: Mapping[str, Mapping[str, str]],
    repo: FunctionRepository,
) -> Path:
    dest = Path(destination)
    (dest / "functions").mkdir(parents=True, exist_ok=True)
    (dest / "cases").mkdir(exist_ok=True)
    (dest / "transcripts").mkdir(exist_ok=True)
    for fn in repo.functions():
        (dest / "functions" / f"{fn.id}.json").write_text(
            function_spec_to_json(fn), encoding="utf-8"
        )
    for case in FIXTURE_CASES:
        truth = build_truth(case, repo)
        case_doc = {
            "case_id": case.case_id,
            "complexity": case.complexity,
            "query": {"text": case.query, "user_inputs": dict(case.user_inputs)},
            "truth": dag_to_document(truth),
            "transcript": f"transcripts/{case.case_id}.json",
        }
        (dest / "cases" / f"{case.case_id}.json").write_text(
            json.dumps(case_doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        (dest / "transcripts" / f"{case.case_id}.json").write_text(
            json.dumps(dict(transcripts[case.case_id]), sort_keys=True, indent=2, ensure_ascii=False)
            + "\n",
            encoding="utf-8",
        )
    (dest / "metadata.json").write_text(
        json.dumps({"name": name, "note": note}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return dest


def build_bundled_dataset(destination: str | Path, k: int = 5) -> Path:
    """The 12-case dataset whose transcripts reproduce the truth exactly."""
    repo = fixture_repository()
    transcripts = {case.case_id: author_transcript(case, repo, k) for case in FIXTURE_CASES}
    return write_dataset(
        destination,
        "bundled",
        "Scripted transcripts reproduce the ground truth under every setting.",
        transcripts,
        repo,
    )


def build_ablation_demo_dataset(destination: str | Path, k: int = 5) -> Path:
    """Same cases, but the model-written-YAML replies are degraded."""
    repo = fixture_repository()
    transcripts = {}
    for case in FIXTURE_CASES:
        correct = author_transcript(case, repo, k)
        transcripts[case.case_id] = degrade_transcript(case, repo, correct, k)
    return write_dataset(
        destination,
        "ablation-demo",
        "Constructed demonstration: replies for the model-written YAML settings are "
        "deliberately degraded (reversed dependencies, misrouted parameters, one broken "
        "document); setting gaps show the pipeline mechanism, not measured model quality.",
        transcripts,
        repo,
    )


def build_all(root: str | Path) -> list[Path]:
    root = Path(root)
    return [
        build_bundled_dataset(root / "bundled"),
        build_ablation_demo_dataset(root / "ablation-demo"),
    ]


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    root = Path(args[0]) if args else Path("dataset")
    for path in build_all(root):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
