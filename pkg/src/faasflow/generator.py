"""Builds the dataflow DAG around an identified node set.

The stages mirror how data dependencies are established: the nodes are
put into a semantically sensible execution order, every input parameter of
every node is classified as either a direct user input or the output of an
earlier node, and the resulting edges plus the start node's user-input
list are assembled into a validated workflow.

Classification is sequential over the ordered nodes: the catalog of
available outputs grows as nodes are passed, so a parameter can never
reference a node that comes later (no forward references).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import AssemblyError, ClassificationError, OrderingError, StructuredParseError
from .identifier import UserQuery
from .llm import LlmGateway, PromptRequest
from .model import (
    START_NODE_ID,
    DataFlowEdge,
    NodeOutput,
    ParamBinding,
    ParameterSpec,
    UserInput,
    WorkflowDAG,
    WorkflowNode,
    validate_dag,
)


@dataclass(frozen=True)
class OutputCatalog:
    """Outputs of the nodes that precede the one under classification."""

    entries: tuple[tuple[str, ParameterSpec], ...] = ()

    def extend(self, node: WorkflowNode) -> "OutputCatalog":
        extra = tuple((node.node_id, p) for p in node.function.outputs)
        return OutputCatalog(self.entries + extra)

    def contains(self, node_id: str, param: str) -> bool:
        return any(nid == node_id and p.name == param for nid, p in self.entries)

    def to_json(self) -> str:
        return json.dumps(
            [
                {"node_id": nid, "output_param": p.name, "description": p.description}
                for nid, p in self.entries
            ],
            sort_keys=True,
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class Classification:
    """Either a direct user input or Output(node_id, output_param)."""

    node_id: str | None = None
    output_param: str | None = None

    @property
    def is_input(self) -> bool:
        return self.node_id is None

    @classmethod
    def input(cls) -> "Classification":
        return cls()

    @classmethod
    def output(cls, node_id: str, output_param: str) -> "Classification":
        return cls(node_id, output_param)


def order_nodes(
    nodes: list[WorkflowNode], query: UserQuery, gateway: LlmGateway, max_retries: int = 2
) -> list[WorkflowNode]:
    """Arrange the nodes into execution order via the order prompt.

    The reply is only accepted if it is an exact permutation of the node
    ids. A single node needs no ordering call.
    """
    if len(nodes) <= 1:
        return list(nodes)
    nodes_json = json.dumps(
        [
            {"node_id": n.node_id, "step": n.subtask.text, "function": n.function.name}
            for n in nodes
        ],
        sort_keys=True,
        ensure_ascii=False,
    )
    request = PromptRequest(
        "order", {"query": query.text, "nodes": nodes_json}, max_retries=max_retries
    )
    try:
        reply = gateway.complete(request)
    except StructuredParseError as exc:
        raise OrderingError(f"node ordering failed: {exc}") from exc
    by_id = {n.node_id: n for n in nodes}
    return [by_id[nid] for nid in reply.parsed]


def classify_parameter(
    param: ParameterSpec,
    catalog: OutputCatalog,
    query: UserQuery,
    gateway: LlmGateway,
    *,
    node: WorkflowNode,
    max_retries: int = 2,
) -> Classification:
    """Decide whether one input parameter comes from the user or an earlier
    node's output. With an empty catalog there is no alternative to a user
    input, so no model call is made.
    """
    if not catalog.entries:
        return Classification.input()
    request = PromptRequest(
        "classify",
        {
            "query": query.text,
            "node_id": node.node_id,
            "step": node.subtask.text,
            "parameter": f"{param.name} ({param.data_type}): {param.description}",
            "parameter_name": param.name,
            "catalog": catalog.to_json(),
        },
        max_retries=max_retries,
    )
    try:
        reply = gateway.complete(request)
    except StructuredParseError as exc:
        raise ClassificationError(
            f"parameter classification failed: {exc}", node.node_id, param.name
        ) from exc
    if reply.parsed == "INPUT":
        return Classification.input()
    return Classification.output(reply.parsed["node_id"], reply.parsed["output_param"])


def build_dataflow(
    ordered_nodes: list[WorkflowNode],
    query: UserQuery,
    gateway: LlmGateway,
    max_retries: int = 2,
) -> list[DataFlowEdge]:
    """Construct the dataflow edge set for nodes already in execution order.

    Every required input gets exactly one edge: from the start node when
    classified as a user input, otherwise from the producing node.
    Optional inputs classified as user inputs are bound only when the query
    actually supplies a value of that name. A node left without incoming
    edges (none or only optional, unbound inputs) receives an ordering-only
    edge from its predecessor so execution order and reachability survive.
    """
    edges: list[DataFlowEdge] = []
    catalog = OutputCatalog()
    previous: WorkflowNode | None = None
    for node in ordered_nodes:
        incoming = 0
        for param in node.function.inputs:
            decision = classify_parameter(
                param, catalog, query, gateway, node=node, max_retries=max_retries
            )
            if decision.is_input:
                if not param.required and param.name not in query.user_inputs:
                    continue
                binding = ParamBinding(node.node_id, param.name, UserInput(param.name))
                edges.append(DataFlowEdge(START_NODE_ID, node.node_id, binding))
            else:
                binding = ParamBinding(
                    node.node_id,
                    param.name,
                    NodeOutput(decision.node_id, decision.output_param),
                )
                edges.append(DataFlowEdge(decision.node_id, node.node_id, binding))
            incoming += 1
        if incoming == 0:
            source = previous.node_id if previous is not None else START_NODE_ID
            edges.append(DataFlowEdge(source, node.node_id, None))
        catalog = catalog.extend(node)
        previous = node
    return edges


def assemble_dag(
    nodes: list[WorkflowNode], edges: list[DataFlowEdge], query: UserQuery
) -> WorkflowDAG:
    """Combine nodes and dataflow into a validated workflow.

    The start node's user-input list is derived from the user-input
    bindings, deduplicated by name (nodes consuming the same name share one
    start-node parameter; the first consumer's type and description win).
    The dag id is a digest of the query text so identical runs produce
    byte-identical documents.
    """
    user_inputs: dict[str, ParameterSpec] = {}
    for edge in edges:
        if edge.binding is None or not isinstance(edge.binding.source, UserInput):
            continue
        name = edge.binding.source.param
        if name in user_inputs:
            continue
        target = next(n for n in nodes if n.node_id == edge.target)
        consumed = target.function.input(edge.binding.target_param)
        user_inputs[name] = ParameterSpec(
            name=name,
            data_type=consumed.data_type if consumed else "string",
            description=consumed.description if consumed else "",
            required=consumed.required if consumed else True,
        )

    dag_id = "wf-" + hashlib.sha256(query.text.encode("utf-8")).hexdigest()[:12]
    dag = WorkflowDAG(
        dag_id=dag_id,
        query=query.text,
        user_inputs=tuple(sorted(user_inputs.values(), key=lambda p: p.name)),
        nodes=tuple(sorted(nodes, key=lambda n: n.node_id)),
        edges=tuple(
            sorted(edges, key=lambda e: (e.source, e.target, e.binding.target_param if e.binding else ""))
        ),
    )
    report = validate_dag(dag)
    if not report.ok:
        raise AssemblyError(report)
    return dag
