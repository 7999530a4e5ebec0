"""Execution plane: gateway, orchestrator, and a mock FaaS engine.

Compiled local-json workflows are registered with the gateway, which
exposes one invocation endpoint per workflow. The orchestrator runs nodes
level by level (nodes whose dependencies are satisfied may run in
parallel), assembles each node's arguments from user inputs and upstream
outputs, posts them to the function endpoint, and records a trace. A node
failure marks all its dependents skipped; everything else completes.

The mock FaaS server stands in for a real serverless platform in tests and
demos: plain HTTP handlers behind paths, with a queryable request log.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping
from urllib.parse import parse_qsl, urlparse

import requests

from .compilers import LOCAL_TARGET, CompiledWorkflow, verify_compiled
from .errors import (
    FaasFlowError,
    FunctionCallError,
    InvalidDagError,
    MissingInputError,
    RegistrationConflictError,
    WrongTargetError,
)


def call_function(
    endpoint: str,
    args: Mapping[str, Any],
    retries: int = 2,
    backoff: float = 0.1,
    timeout: float = 10.0,
) -> dict:
    """POST JSON arguments to a function endpoint and return its output map.

    Network errors are retried (fixed backoff); non-2xx responses and
    unparseable bodies are immediate failures.
    """
    last_exc: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = requests.post(endpoint, json=dict(args), timeout=timeout)
            break
        except requests.RequestException as exc:
            last_exc = exc
            if attempt < retries:
                time.sleep(backoff)
    else:
        raise FunctionCallError(f"endpoint {endpoint} unreachable: {last_exc}")
    if response.status_code // 100 != 2:
        raise FunctionCallError(
            f"endpoint {endpoint} returned {response.status_code}",
            status=response.status_code,
            body=response.text[:200],
        )
    try:
        payload = response.json()
    except ValueError as exc:
        raise FunctionCallError(
            f"endpoint {endpoint} returned a non-JSON body", body=response.text[:200]
        ) from exc
    if not isinstance(payload, dict):
        raise FunctionCallError(f"endpoint {endpoint} returned a non-object body")
    return payload


# --- local workflow documents -------------------------------------------------


@dataclass(frozen=True)
class StepInput:
    name: str
    required: bool
    kind: str  # "user" | "node"
    source_node: str | None = None
    source_param: str | None = None


@dataclass(frozen=True)
class WorkflowStep:
    node_id: str
    function_id: str
    endpoint: str
    depends_on: tuple[str, ...]
    inputs: tuple[StepInput, ...]
    outputs: tuple[str, ...]


@dataclass(frozen=True)
class LocalWorkflow:
    dag_id: str
    entry_params: tuple[tuple[str, bool], ...]  # (name, required)
    levels: tuple[tuple[str, ...], ...]
    steps: Mapping[str, WorkflowStep]

    def sinks(self) -> list[str]:
        referenced = {dep for step in self.steps.values() for dep in step.depends_on}
        return sorted(nid for nid in self.steps if nid not in referenced)

    def descendants(self, node_id: str) -> set[str]:
        children: dict[str, set[str]] = {nid: set() for nid in self.steps}
        for step in self.steps.values():
            for dep in step.depends_on:
                children.setdefault(dep, set()).add(step.node_id)
        seen: set[str] = set()
        frontier = [node_id]
        while frontier:
            for child in children.get(frontier.pop(), ()):
                if child not in seen:
                    seen.add(child)
                    frontier.append(child)
        return seen


def load_local_workflow(document: str) -> LocalWorkflow:
    """Parse a local-json document produced by the compiler."""
    doc = json.loads(document)
    steps: dict[str, WorkflowStep] = {}
    for step in doc["steps"]:
        inputs = []
        for binding in step.get("inputs", []):
            source = binding["source"]
            inputs.append(
                StepInput(
                    name=binding["name"],
                    required=bool(binding.get("required", True)),
                    kind=source["kind"],
                    source_node=source.get("node_id"),
                    source_param=source.get("param"),
                )
            )
        steps[step["node_id"]] = WorkflowStep(
            node_id=step["node_id"],
            function_id=step.get("function_id", ""),
            endpoint=step["endpoint"],
            depends_on=tuple(step.get("depends_on", [])),
            inputs=tuple(inputs),
            outputs=tuple(step.get("outputs", [])),
        )
    return LocalWorkflow(
        dag_id=doc["dag_id"],
        entry_params=tuple(
            (p["name"], bool(p.get("required", True))) for p in doc.get("entry_params", [])
        ),
        levels=tuple(tuple(level) for level in doc.get("levels", [])),
        steps=steps,
    )


# --- orchestrator -------------------------------------------------------------

SUCCEEDED = "succeeded"
FAILED = "failed"
SKIPPED = "skipped"


@dataclass
class NodeExecution:
    node_id: str
    status: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    error: str = ""
    started: float | None = None
    finished: float | None = None


@dataclass
class ExecutionTrace:
    invocation_id: str
    workflow_id: str
    status: str
    records: dict[str, NodeExecution] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "invocation_id": self.invocation_id,
            "workflow_id": self.workflow_id,
            "status": self.status,
            "nodes": [
                {
                    "node_id": r.node_id,
                    "status": r.status,
                    "inputs": r.inputs,
                    "outputs": r.outputs,
                    "error": r.error,
                    "started": r.started,
                    "finished": r.finished,
                }
                for _, r in sorted(self.records.items())
            ],
        }


class Orchestrator:
    """Runs local workflows level by level with per-level parallelism."""

    def __init__(self, caller: Callable[..., dict] = call_function, max_workers: int = 8) -> None:
        self.caller = caller
        self.max_workers = max_workers
        self._counter = 0
        self._lock = threading.Lock()

    def _next_invocation_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"inv-{self._counter:06d}"

    def execute(
        self, workflow: LocalWorkflow, inputs: Mapping[str, Any]
    ) -> tuple[dict, ExecutionTrace]:
        """Run every node in dependency order and collect sink outputs.

        Raises :class:`MissingInputError` before touching any node if a
        required user input is absent. Workflow outputs are the outputs of
        sink nodes, namespaced ``node_id.param``.
        """
        missing = [name for name, req in workflow.entry_params if req and name not in inputs]
        if missing:
            raise MissingInputError(missing)

        trace = ExecutionTrace(self._next_invocation_id(), workflow.dag_id, SUCCEEDED)
        node_outputs: dict[str, dict] = {}

        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            for level in workflow.levels:
                runnable = []
                for nid in level:
                    step = workflow.steps[nid]
                    blocked = [
                        dep
                        for dep in step.depends_on
                        if trace.records.get(dep, NodeExecution(dep, FAILED)).status != SUCCEEDED
                    ]
                    if blocked:
                        trace.records[nid] = NodeExecution(
                            nid, SKIPPED, error=f"upstream not satisfied: {', '.join(sorted(blocked))}"
                        )
                    else:
                        runnable.append(step)
                futures = {
                    pool.submit(self._run_step, step, inputs, node_outputs): step
                    for step in runnable
                }
                for future, step in futures.items():
                    record = future.result()
                    trace.records[step.node_id] = record
                    if record.status == SUCCEEDED:
                        node_outputs[step.node_id] = record.outputs

        if any(r.status != SUCCEEDED for r in trace.records.values()):
            trace.status = FAILED

        outputs = {}
        for nid in workflow.sinks():
            record = trace.records[nid]
            if record.status == SUCCEEDED:
                for name, value in record.outputs.items():
                    outputs[f"{nid}.{name}"] = value
        return outputs, trace

    def _run_step(
        self, step: WorkflowStep, inputs: Mapping[str, Any], node_outputs: Mapping[str, dict]
    ) -> NodeExecution:
        args: dict[str, Any] = {}
        for binding in step.inputs:
            if binding.kind == "user":
                if binding.name not in inputs and not binding.required:
                    continue
                args[binding.name] = inputs.get(binding.name)
            else:
                upstream = node_outputs.get(binding.source_node, {})
                if binding.source_param not in upstream:
                    return NodeExecution(
                        step.node_id,
                        FAILED,
                        inputs=args,
                        error=f"upstream {binding.source_node!r} produced no {binding.source_param!r}",
                    )
                args[binding.name] = upstream[binding.source_param]
        record = NodeExecution(step.node_id, SUCCEEDED, inputs=dict(args))
        record.started = time.time()
        try:
            result = self.caller(step.endpoint, args)
        except FunctionCallError as exc:
            record.status = FAILED
            record.error = str(exc)
            record.finished = time.time()
            return record
        record.finished = time.time()
        missing = [name for name in step.outputs if name not in result]
        if missing:
            record.status = FAILED
            record.error = f"response lacks declared output(s): {', '.join(missing)}"
            return record
        record.outputs = {name: result[name] for name in step.outputs}
        return record


# --- gateway -------------------------------------------------------------------


@dataclass(frozen=True)
class WorkflowRegistration:
    workflow_id: str
    endpoint_path: str
    created_at: float
    compiled: CompiledWorkflow


class WorkflowGateway:
    """Registration table plus invocation front door (in-process API).

    Registrations live for the gateway's lifetime; reads are concurrent,
    writes exclusive. :func:`serve_gateway` exposes the same object over
    HTTP.
    """

    def __init__(self, orchestrator: Orchestrator | None = None) -> None:
        self.orchestrator = orchestrator or Orchestrator()
        self._registrations: dict[str, WorkflowRegistration] = {}
        self._workflows: dict[str, LocalWorkflow] = {}
        self._traces: dict[str, ExecutionTrace] = {}
        self._lock = threading.RLock()

    def register(self, compiled: CompiledWorkflow) -> WorkflowRegistration:
        if compiled.target != LOCAL_TARGET:
            raise WrongTargetError(
                f"gateway executes {LOCAL_TARGET} documents, got {compiled.target!r}"
            )
        report = verify_compiled(compiled)
        if not report.ok:
            raise InvalidDagError("cannot register an invalid workflow document", report)
        workflow = load_local_workflow(compiled.document)
        with self._lock:
            if compiled.dag_id in self._registrations:
                raise RegistrationConflictError(f"workflow {compiled.dag_id!r} already registered")
            registration = WorkflowRegistration(
                workflow_id=compiled.dag_id,
                endpoint_path=f"/workflows/{compiled.dag_id}/invoke",
                created_at=time.time(),
                compiled=compiled,
            )
            self._registrations[compiled.dag_id] = registration
            self._workflows[compiled.dag_id] = workflow
        return registration

    def registrations(self) -> list[WorkflowRegistration]:
        with self._lock:
            return sorted(self._registrations.values(), key=lambda r: r.workflow_id)

    def invoke(self, workflow_id: str, inputs: Mapping[str, Any]) -> tuple[dict, ExecutionTrace]:
        with self._lock:
            workflow = self._workflows.get(workflow_id)
        if workflow is None:
            raise FaasFlowError(f"unknown workflow {workflow_id!r}")
        outputs, trace = self.orchestrator.execute(workflow, inputs)
        with self._lock:
            self._traces[trace.invocation_id] = trace
        return outputs, trace

    def trace(self, invocation_id: str) -> ExecutionTrace | None:
        with self._lock:
            return self._traces.get(invocation_id)


# --- HTTP plumbing --------------------------------------------------------------


class ServerHandle:
    """A running HTTP server on its own daemon thread."""

    def __init__(self, server: ThreadingHTTPServer) -> None:
        self._server = server
        host, port = server.server_address[:2]
        self.url = f"http://{host}:{port}"
        self._thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class _QuietHandler(BaseHTTPRequestHandler):
    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""


def serve_gateway(gateway: WorkflowGateway, host: str = "127.0.0.1", port: int = 0) -> ServerHandle:
    """Serve the gateway API:

    - ``POST /workflows`` with a local-json document body -> registration
    - ``POST /workflows/<id>/invoke`` with a JSON input map -> outputs
    - ``GET /invocations/<id>`` -> execution trace
    """

    class Handler(_QuietHandler):
        def do_POST(self) -> None:
            body = self._read_body().decode("utf-8")
            if self.path == "/workflows":
                try:
                    doc = json.loads(body)
                    dag_id = doc.get("dag_id", "") if isinstance(doc, dict) else ""
                    compiled = CompiledWorkflow(LOCAL_TARGET, body, str(dag_id))
                    registration = gateway.register(compiled)
                except (ValueError, KeyError, FaasFlowError) as exc:
                    status = 409 if isinstance(exc, RegistrationConflictError) else 400
                    self._send_json(status, {"error": str(exc)})
                    return
                self._send_json(
                    201,
                    {
                        "workflow_id": registration.workflow_id,
                        "endpoint": registration.endpoint_path,
                    },
                )
                return
            parts = self.path.strip("/").split("/")
            if len(parts) == 3 and parts[0] == "workflows" and parts[2] == "invoke":
                try:
                    inputs = json.loads(body) if body else {}
                except ValueError as exc:
                    self._send_json(400, {"error": f"invalid JSON body: {exc}"})
                    return
                try:
                    outputs, trace = gateway.invoke(parts[1], inputs)
                except MissingInputError as exc:
                    self._send_json(400, {"error": str(exc), "missing": exc.names})
                    return
                except FaasFlowError as exc:
                    self._send_json(404, {"error": str(exc)})
                    return
                self._send_json(
                    200,
                    {
                        "status": trace.status,
                        "outputs": outputs,
                        "invocation_id": trace.invocation_id,
                    },
                )
                return
            self._send_json(404, {"error": f"no route for {self.path}"})

        def do_GET(self) -> None:
            parts = self.path.strip("/").split("/")
            if len(parts) == 2 and parts[0] == "invocations":
                trace = gateway.trace(parts[1])
                if trace is None:
                    self._send_json(404, {"error": f"unknown invocation {parts[1]!r}"})
                else:
                    self._send_json(200, trace.to_doc())
                return
            self._send_json(404, {"error": f"no route for {self.path}"})

    return ServerHandle(ThreadingHTTPServer((host, port), Handler))


# --- mock FaaS engine ------------------------------------------------------------


class MockFailure(Exception):
    """Raise inside a fixture handler to answer with an HTTP error."""

    def __init__(self, status: int = 500, body: str = "mock failure") -> None:
        self.status = status
        self.body = body
        super().__init__(body)


class DropConnection(Exception):
    """Raise inside a fixture handler to simulate a network failure."""


@dataclass(frozen=True)
class LoggedRequest:
    path: str
    args: dict
    at: float


class MockFaasServer:
    """HTTP server mapping paths to pure handlers, with a request log."""

    def __init__(self, fixtures: Mapping[str, Callable[[dict], dict]], handle: ServerHandle) -> None:
        self.fixtures = dict(fixtures)
        self._handle = handle
        self.url = handle.url
        self._log: list[LoggedRequest] = []
        self._log_lock = threading.Lock()

    def url_for(self, path: str) -> str:
        return self.url + (path if path.startswith("/") else f"/{path}")

    def log(self) -> list[LoggedRequest]:
        with self._log_lock:
            return list(self._log)

    def calls(self, path: str) -> int:
        path = path if path.startswith("/") else f"/{path}"
        return sum(1 for r in self.log() if r.path == path)

    def _record(self, path: str, args: dict) -> None:
        with self._log_lock:
            self._log.append(LoggedRequest(path, args, time.monotonic()))

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "MockFaasServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve_mock_faas(
    fixtures: Mapping[str, Callable[[dict], dict]], host: str = "127.0.0.1", port: int = 0
) -> MockFaasServer:
    """Run an HTTP server whose paths are backed by the fixture handlers.

    Handlers receive the request arguments as a dict (JSON body for POST,
    query parameters for GET) and return the output map. Unknown paths get
    404; :class:`MockFailure` maps to its status; :class:`DropConnection`
    closes the socket without replying.
    """
    normalized = {
        (path if path.startswith("/") else f"/{path}"): handler
        for path, handler in fixtures.items()
    }
    server_box: list[MockFaasServer] = []

    class Handler(_QuietHandler):
        def _dispatch(self, args: dict) -> None:
            mock = server_box[0]
            path = urlparse(self.path).path
            handler = mock.fixtures.get(path)
            if handler is None:
                self._send_json(404, {"error": f"no function at {path}"})
                return
            mock._record(path, args)
            try:
                result = handler(args)
            except MockFailure as exc:
                self._send_json(exc.status, {"error": exc.body})
                return
            except DropConnection:
                self.close_connection = True
                self.connection.close()
                return
            except Exception as exc:  # handler bug -> server error
                self._send_json(500, {"error": f"handler crashed: {exc}"})
                return
            self._send_json(200, result)

        def do_POST(self) -> None:
            body = self._read_body().decode("utf-8")
            try:
                args = json.loads(body) if body else {}
            except ValueError:
                self._send_json(400, {"error": "invalid JSON body"})
                return
            self._dispatch(args if isinstance(args, dict) else {"value": args})

        def do_GET(self) -> None:
            args = {}
            for key, value in parse_qsl(urlparse(self.path).query):
                try:
                    args[key] = json.loads(value)
                except ValueError:
                    args[key] = value
            self._dispatch(args)

    handle = ServerHandle(ThreadingHTTPServer((host, port), Handler))
    mock = MockFaasServer(normalized, handle)
    server_box.append(mock)
    return mock
