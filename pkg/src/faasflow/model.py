"""Platform-neutral workflow IR: types, validation, canonical form, ordering.

A workflow is a dataflow DAG. Regular nodes pair a sub-task with the
function chosen for it; a synthetic start node (``START_NODE_ID``) holds the
values the user supplies directly. Every edge routes one value into one
target parameter, except ordering-only edges (``binding is None``) which
exist purely to sequence nodes that consume no data.

All types are immutable values; operations here are pure.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Union
from urllib.parse import urlparse

from .errors import CycleError, DagParseError, InvalidDagError

START_NODE_ID = "__start__"

#: The closed set of parameter types (JSON-compatible payload kinds).
DATA_TYPES = ("array", "boolean", "number", "object", "string")


def _tuple(items):
    return tuple(items) if not isinstance(items, tuple) else items


@dataclass(frozen=True)
class ParameterSpec:
    """One named input or output of a function (or of the start node)."""

    name: str
    data_type: str = "string"
    description: str = ""
    required: bool = True


@dataclass(frozen=True)
class FunctionSpec:
    """A registered FaaS function reachable at ``endpoint``."""

    id: str
    name: str
    description: str
    endpoint: str
    inputs: tuple[ParameterSpec, ...] = ()
    outputs: tuple[ParameterSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", _tuple(self.inputs))
        object.__setattr__(self, "outputs", _tuple(self.outputs))

    def input(self, name: str) -> ParameterSpec | None:
        return next((p for p in self.inputs if p.name == name), None)

    def output(self, name: str) -> ParameterSpec | None:
        return next((p for p in self.outputs if p.name == name), None)


@dataclass(frozen=True)
class SubTask:
    """One actionable unit decomposed from a user query."""

    index: int
    text: str


@dataclass(frozen=True)
class WorkflowNode:
    """A (sub-task, selected function) pair; the unit of execution."""

    node_id: str
    subtask: SubTask
    function: FunctionSpec


@dataclass(frozen=True)
class UserInput:
    """Binding source: a value the user supplies on the start node."""

    param: str


@dataclass(frozen=True)
class NodeOutput:
    """Binding source: a named output of an upstream node."""

    node_id: str
    param: str


BindingSource = Union[UserInput, NodeOutput]


@dataclass(frozen=True)
class ParamBinding:
    """Routes one value into ``target_param`` of ``target_node``."""

    target_node: str
    target_param: str
    source: BindingSource


@dataclass(frozen=True)
class DataFlowEdge:
    """A directed edge; ``binding is None`` marks an ordering-only edge."""

    source: str
    target: str
    binding: ParamBinding | None = None


@dataclass(frozen=True)
class WorkflowDAG:
    """The complete workflow IR.

    ``user_inputs`` is the parameter list of the reified start node. Nodes
    and edges are kept in canonical order (ascending ``node_id``, ascending
    ``(source, target, target_param)``) by convention; :func:`parse_dag`
    and the generator both produce that order.
    """

    dag_id: str
    query: str
    user_inputs: tuple[ParameterSpec, ...] = ()
    nodes: tuple[WorkflowNode, ...] = ()
    edges: tuple[DataFlowEdge, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "user_inputs", _tuple(self.user_inputs))
        object.__setattr__(self, "nodes", _tuple(self.nodes))
        object.__setattr__(self, "edges", _tuple(self.edges))

    def node(self, node_id: str) -> WorkflowNode | None:
        return next((n for n in self.nodes if n.node_id == node_id), None)

    def user_input(self, name: str) -> ParameterSpec | None:
        return next((p for p in self.user_inputs if p.name == name), None)


@dataclass(frozen=True)
class Violation:
    """One broken invariant; ``where`` names the offending node/edge."""

    code: str
    where: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "violations", _tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def is_absolute_url(text: str) -> bool:
    parsed = urlparse(text)
    return bool(parsed.scheme and parsed.netloc)


def _check_parameters(params, where, out):
    seen = set()
    for p in params:
        if not p.name:
            out.append(Violation("bad-parameter", where, f"{where}: parameter with empty name"))
        if p.data_type not in DATA_TYPES:
            out.append(
                Violation(
                    "bad-data-type",
                    where,
                    f"{where}: parameter {p.name!r} has unknown data_type {p.data_type!r}",
                )
            )
        if p.name in seen:
            out.append(
                Violation("duplicate-param", where, f"{where}: duplicate parameter name {p.name!r}")
            )
        seen.add(p.name)


def validate_dag(dag: WorkflowDAG) -> ValidationReport:
    """Check every workflow invariant; violations are data, not failures.

    An empty report means the DAG is valid: unique node ids, well-formed
    parameter lists, consistent bindings, exactly one binding per required
    input, no duplicate (target, param) bindings, acyclic edges, and every
    node reachable from the start node.
    """
    out: list[Violation] = []

    node_ids: set[str] = set()
    for n in dag.nodes:
        where = f"node {n.node_id}"
        if not n.node_id or n.node_id == START_NODE_ID:
            out.append(Violation("reserved-node-id", where, f"{where}: id is reserved or empty"))
        if n.node_id in node_ids:
            out.append(Violation("duplicate-node-id", where, f"{where}: duplicate node id"))
        node_ids.add(n.node_id)
        if not n.subtask.text:
            out.append(Violation("empty-subtask", where, f"{where}: sub-task text is empty"))
        fn = n.function
        if not is_absolute_url(fn.endpoint):
            out.append(
                Violation(
                    "bad-endpoint",
                    where,
                    f"{where}: function {fn.id!r} endpoint {fn.endpoint!r} is not an absolute URL",
                )
            )
        _check_parameters(fn.inputs, f"node {n.node_id} inputs", out)
        _check_parameters(fn.outputs, f"node {n.node_id} outputs", out)

    indices = sorted(n.subtask.index for n in dag.nodes)
    if indices != list(range(len(dag.nodes))):
        out.append(
            Violation(
                "bad-subtask-indices",
                "nodes",
                f"sub-task indices {indices} are not contiguous 0..{len(dag.nodes) - 1}",
            )
        )

    _check_parameters(dag.user_inputs, "start node", out)
    start_names = {p.name for p in dag.user_inputs}

    # Parameter resolution is only well-defined for unambiguous node ids;
    # duplicated ids are already violations of their own.
    id_counts: dict[str, int] = {}
    for n in dag.nodes:
        id_counts[n.node_id] = id_counts.get(n.node_id, 0) + 1
    fn_of = {n.node_id: n.function for n in dag.nodes if id_counts[n.node_id] == 1}

    bound: dict[tuple[str, str], int] = {}
    for e in dag.edges:
        where = f"edge {e.source}->{e.target}"
        if e.source == e.target:
            out.append(Violation("self-edge", where, f"{where}: source equals target"))
        if e.target == START_NODE_ID:
            out.append(Violation("start-as-target", where, f"{where}: start node cannot be a target"))
        elif e.target not in node_ids:
            out.append(Violation("unknown-node", where, f"{where}: unknown target node"))
        if e.source != START_NODE_ID and e.source not in node_ids:
            out.append(Violation("unknown-node", where, f"{where}: unknown source node"))

        b = e.binding
        if b is None:
            continue
        where = f"edge {e.source}->{e.target}[{b.target_param}]"
        if b.target_node != e.target:
            out.append(
                Violation("binding-mismatch", where, f"{where}: binding targets {b.target_node!r}")
            )
        key = (e.target, b.target_param)
        bound[key] = bound.get(key, 0) + 1
        if bound[key] == 2:
            out.append(
                Violation(
                    "duplicate-binding",
                    where,
                    f"{where}: parameter {b.target_param!r} of {e.target!r} bound more than once",
                )
            )
        target_fn = fn_of.get(e.target)
        if target_fn is not None and target_fn.input(b.target_param) is None:
            out.append(
                Violation(
                    "unknown-target-param",
                    where,
                    f"{where}: {b.target_param!r} is not an input of {target_fn.id!r}",
                )
            )
        if isinstance(b.source, UserInput):
            if e.source != START_NODE_ID:
                out.append(
                    Violation(
                        "binding-mismatch",
                        where,
                        f"{where}: user-input binding on a non-start edge",
                    )
                )
            if b.source.param != b.target_param:
                out.append(
                    Violation(
                        "binding-mismatch",
                        where,
                        f"{where}: user-input name {b.source.param!r} differs from target parameter",
                    )
                )
            if b.source.param not in start_names:
                out.append(
                    Violation(
                        "unknown-source-param",
                        where,
                        f"{where}: {b.source.param!r} is not declared as a user input",
                    )
                )
        else:
            if b.source.node_id != e.source:
                out.append(
                    Violation(
                        "binding-mismatch",
                        where,
                        f"{where}: binding names source {b.source.node_id!r}",
                    )
                )
            src_fn = fn_of.get(b.source.node_id)
            if src_fn is not None and src_fn.output(b.source.param) is None:
                out.append(
                    Violation(
                        "unknown-source-param",
                        where,
                        f"{where}: {b.source.param!r} is not an output of {src_fn.id!r}",
                    )
                )

    for n in dag.nodes:
        if id_counts[n.node_id] > 1:
            continue
        for p in n.function.inputs:
            if p.required and (n.node_id, p.name) not in bound:
                out.append(
                    Violation(
                        "unbound-parameter",
                        f"node {n.node_id}",
                        f"node {n.node_id}: required input {p.name!r} has no incoming binding",
                    )
                )

    # graph-level checks only make sense over well-formed node ids
    graph_ids = node_ids - {START_NODE_ID, ""}
    cycle = find_cycle(graph_ids, [(e.source, e.target) for e in dag.edges])
    if cycle:
        out.append(
            Violation("cycle", "edges", "edges induce a cycle: " + " -> ".join(cycle))
        )
    reachable = _reachable_from_start(graph_ids, dag.edges)
    for nid in sorted(graph_ids - reachable):
        out.append(
            Violation(
                "unreachable",
                f"node {nid}",
                f"node {nid}: not reachable from the start node",
            )
        )

    return ValidationReport(tuple(out))


def find_cycle(node_ids: set[str], edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """Return the node ids of one directed cycle, or None if acyclic.

    Edges touching unknown nodes or the start node are ignored; the start
    node cannot be on a cycle (it has no incoming edges by construction).
    """
    adj: dict[str, list[str]] = {nid: [] for nid in node_ids}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)

    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in node_ids}
    stack: list[str] = []

    def visit(nid: str) -> list[str] | None:
        color[nid] = GREY
        stack.append(nid)
        for nxt in adj[nid]:
            if color[nxt] == GREY:
                return stack[stack.index(nxt):]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[nid] = BLACK
        return None

    for nid in sorted(node_ids):
        if color[nid] == WHITE:
            found = visit(nid)
            if found:
                return found
    return None


def _reachable_from_start(node_ids: set[str], edges) -> set[str]:
    adj: dict[str, list[str]] = {}
    for e in edges:
        adj.setdefault(e.source, []).append(e.target)
    seen: set[str] = set()
    frontier = [t for t in adj.get(START_NODE_ID, []) if t in node_ids]
    while frontier:
        nid = frontier.pop()
        if nid in seen:
            continue
        seen.add(nid)
        frontier.extend(t for t in adj.get(nid, []) if t in node_ids and t not in seen)
    return seen


# --- canonical document -----------------------------------------------------

def _edge_sort_key(e: DataFlowEdge) -> tuple[str, str, str]:
    param = e.binding.target_param if e.binding else ""
    return (e.source, e.target, param)


def _param_to_doc(p: ParameterSpec, with_required: bool = True) -> dict:
    doc = {"name": p.name, "data_type": p.data_type, "description": p.description}
    if with_required:
        doc["required"] = p.required
    return doc


def dag_to_document(dag: WorkflowDAG) -> dict:
    """The canonical document as a plain dict (see :func:`canonical_serialize`)."""
    edges = []
    for e in sorted(dag.edges, key=_edge_sort_key):
        if e.binding is None:
            edges.append(
                {"source": e.source, "target": e.target, "target_param": None, "source_param": None}
            )
        else:
            src_param = None if isinstance(e.binding.source, UserInput) else e.binding.source.param
            edges.append(
                {
                    "source": e.source,
                    "target": e.target,
                    "target_param": e.binding.target_param,
                    "source_param": src_param,
                }
            )
    return {
        "dag_id": dag.dag_id,
        "query": dag.query,
        "user_inputs": [
            _param_to_doc(p) for p in sorted(dag.user_inputs, key=lambda p: p.name)
        ],
        "nodes": [
            {
                "node_id": n.node_id,
                "subtask": {"index": n.subtask.index, "text": n.subtask.text},
                "function_id": n.function.id,
            }
            for n in sorted(dag.nodes, key=lambda n: n.node_id)
        ],
        "edges": edges,
    }


def canonical_serialize(dag: WorkflowDAG) -> str:
    """Serialize a valid DAG to its canonical text form.

    Deterministic: keys sorted, nodes sorted by node_id, edges sorted by
    (source, target, target_param), two-space indent, newline-terminated.
    Invalid DAGs are rejected.
    """
    report = validate_dag(dag)
    if not report.ok:
        raise InvalidDagError("cannot serialize an invalid workflow", report)
    return json.dumps(dag_to_document(dag), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _expect(doc, key, kind, locus):
    if not isinstance(doc, dict) or key not in doc:
        raise DagParseError(f"missing field {key!r}", locus)
    value = doc[key]
    if not isinstance(value, kind):
        raise DagParseError(f"field {key!r} has wrong type", f"{locus}.{key}")
    return value


def _parse_param(doc, locus, default_required=True) -> ParameterSpec:
    name = _expect(doc, "name", str, locus)
    data_type = _expect(doc, "data_type", str, locus)
    if data_type not in DATA_TYPES:
        raise DagParseError(f"unknown data_type {data_type!r}", f"{locus}.data_type")
    description = doc.get("description", "")
    if not isinstance(description, str):
        raise DagParseError("field 'description' has wrong type", f"{locus}.description")
    required = doc.get("required", default_required)
    if not isinstance(required, bool):
        raise DagParseError("field 'required' has wrong type", f"{locus}.required")
    return ParameterSpec(name, data_type, description, required)


def parse_dag(text: str, functions: Mapping[str, FunctionSpec]) -> WorkflowDAG:
    """Parse a canonical workflow document.

    The document stores function references by id, so the caller supplies
    the function table (typically a repository index) to resolve them.
    Raises :class:`DagParseError` locating the first malformed element;
    semantic invariants beyond parseability are left to :func:`validate_dag`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DagParseError(f"malformed document: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise DagParseError("document root must be an object", "line 1")

    dag_id = _expect(doc, "dag_id", str, "document")
    query = _expect(doc, "query", str, "document")

    user_inputs = []
    for i, p in enumerate(_expect(doc, "user_inputs", list, "document")):
        user_inputs.append(_parse_param(p, f"user_inputs[{i}]"))

    nodes = []
    seen_ids: set[str] = set()
    for i, n in enumerate(_expect(doc, "nodes", list, "document")):
        locus = f"nodes[{i}]"
        node_id = _expect(n, "node_id", str, locus)
        if node_id in seen_ids:
            raise DagParseError(f"duplicate node_id {node_id!r}", locus)
        seen_ids.add(node_id)
        sub = _expect(n, "subtask", dict, locus)
        index = _expect(sub, "index", int, f"{locus}.subtask")
        stext = _expect(sub, "text", str, f"{locus}.subtask")
        fid = _expect(n, "function_id", str, locus)
        fn = functions.get(fid)
        if fn is None:
            raise DagParseError(f"unknown function_id {fid!r}", locus)
        nodes.append(WorkflowNode(node_id, SubTask(index, stext), fn))

    edges = []
    for i, e in enumerate(_expect(doc, "edges", list, "document")):
        locus = f"edges[{i}]"
        source = _expect(e, "source", str, locus)
        target = _expect(e, "target", str, locus)
        target_param = e.get("target_param") if isinstance(e, dict) else None
        source_param = e.get("source_param") if isinstance(e, dict) else None
        if target_param is None:
            if source_param is not None:
                raise DagParseError("ordering-only edge carries source_param", locus)
            edges.append(DataFlowEdge(source, target, None))
            continue
        if not isinstance(target_param, str):
            raise DagParseError("field 'target_param' has wrong type", locus)
        if source == START_NODE_ID:
            if source_param is not None:
                raise DagParseError("user-input binding carries source_param", locus)
            binding = ParamBinding(target, target_param, UserInput(target_param))
        else:
            if not isinstance(source_param, str):
                raise DagParseError("missing source_param for node-output binding", locus)
            binding = ParamBinding(target, target_param, NodeOutput(source, source_param))
        edges.append(DataFlowEdge(source, target, binding))

    return WorkflowDAG(
        dag_id=dag_id,
        query=query,
        user_inputs=tuple(sorted(user_inputs, key=lambda p: p.name)),
        nodes=tuple(sorted(nodes, key=lambda n: n.node_id)),
        edges=tuple(sorted(edges, key=_edge_sort_key)),
    )


def topological_order(dag: WorkflowDAG) -> list[str]:
    """Execution order of the regular nodes (start node excluded).

    For every edge (a, b), a precedes b; ties are broken by ascending
    node_id. Raises :class:`CycleError` listing one cycle's nodes if the
    edge set is cyclic.
    """
    node_ids = {n.node_id for n in dag.nodes}
    indegree = {nid: 0 for nid in node_ids}
    adj: dict[str, list[str]] = {nid: [] for nid in node_ids}
    for e in dag.edges:
        if e.source in node_ids and e.target in node_ids:
            indegree[e.target] += 1
            adj[e.source].append(e.target)

    ready = [nid for nid, deg in sorted(indegree.items()) if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for nxt in adj[nid]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(node_ids):
        cycle = find_cycle(node_ids, [(e.source, e.target) for e in dag.edges])
        raise CycleError(cycle or sorted(nid for nid in node_ids if nid not in order))
    return order
