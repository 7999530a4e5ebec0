"""End-to-end workflow generation, in three configurations.

``SETTING_FULL`` is the complete pipeline: identify nodes, order them,
classify parameters into dataflow edges, assemble the neutral DAG, and
compile it. The two ablated settings replace the deterministic tail with a
direct model call that writes Argo YAML — ``SETTING_NO_COMPILER`` hands the
model the assembled DAG document, ``SETTING_NO_WG_COMPILER`` hands it only
the identified nodes and leaves ordering and data routing to the model.
The ablations exist so the evaluation harness can measure what the
generator and compiler stages contribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .compilers import ARGO_TARGET, CompiledWorkflow, compile_argo
from .generator import assemble_dag, build_dataflow, order_nodes
from .identifier import UserQuery, identify
from .llm import LlmGateway, PromptRequest
from .model import WorkflowDAG, WorkflowNode, canonical_serialize
from .repository import FunctionRepository

SETTING_FULL = "ae"
SETTING_NO_COMPILER = "ae-no-compiler"
SETTING_NO_WG_COMPILER = "ae-no-wg-compiler"
SETTINGS = (SETTING_FULL, SETTING_NO_COMPILER, SETTING_NO_WG_COMPILER)


@dataclass(frozen=True)
class GenerationResult:
    """What a strategy produced: always a compiled document, plus the
    neutral DAG when the pipeline built one (the full and no-compiler
    settings; the no-WG setting never constructs an IR)."""

    setting: str
    compiled: CompiledWorkflow
    dag: WorkflowDAG | None = None


def generate_workflow(
    query: UserQuery,
    repo: FunctionRepository,
    gateway: LlmGateway,
    k: int = 5,
    max_retries: int = 2,
) -> WorkflowDAG:
    """The full text-to-workflow path, ending in a validated neutral DAG."""
    nodes = identify(query, repo, gateway, k=k, max_retries=max_retries)
    ordered = order_nodes(nodes, query, gateway, max_retries=max_retries)
    edges = build_dataflow(ordered, query, gateway, max_retries=max_retries)
    return assemble_dag(ordered, edges, query)


def _functions_json(nodes: list[WorkflowNode]) -> str:
    functions = {n.function.id: n.function for n in nodes}
    entries = []
    for fid in sorted(functions):
        fn = functions[fid]
        entries.append(
            {
                "id": fn.id,
                "name": fn.name,
                "description": fn.description,
                "endpoint": fn.endpoint,
                "inputs": [f"{p.name} ({p.data_type}): {p.description}" for p in fn.inputs],
                "outputs": [f"{p.name} ({p.data_type}): {p.description}" for p in fn.outputs],
            }
        )
    return json.dumps(entries, sort_keys=True, ensure_ascii=False)


def _nodes_json(nodes: list[WorkflowNode]) -> str:
    return json.dumps(
        [
            {"node_id": n.node_id, "step": n.subtask.text, "function": n.function.id}
            for n in nodes
        ],
        sort_keys=True,
        ensure_ascii=False,
    )


def run_setting(
    setting: str,
    query: UserQuery,
    repo: FunctionRepository,
    gateway: LlmGateway,
    k: int = 5,
    max_retries: int = 2,
) -> GenerationResult:
    """Generate one workflow under the given setting, compiled for Argo."""
    if setting == SETTING_FULL:
        dag = generate_workflow(query, repo, gateway, k=k, max_retries=max_retries)
        return GenerationResult(setting, compile_argo(dag), dag)

    if setting == SETTING_NO_COMPILER:
        dag = generate_workflow(query, repo, gateway, k=k, max_retries=max_retries)
        reply = gateway.complete(
            PromptRequest(
                "yaml_from_dag",
                {
                    "query": query.text,
                    "dag_document": canonical_serialize(dag),
                    "functions": _functions_json(list(dag.nodes)),
                },
                max_retries=max_retries,
            )
        )
        compiled = CompiledWorkflow(ARGO_TARGET, reply.parsed, dag.dag_id)
        return GenerationResult(setting, compiled, dag)

    if setting == SETTING_NO_WG_COMPILER:
        nodes = identify(query, repo, gateway, k=k, max_retries=max_retries)
        reply = gateway.complete(
            PromptRequest(
                "yaml_from_nodes",
                {
                    "query": query.text,
                    "nodes": _nodes_json(nodes),
                    "functions": _functions_json(nodes),
                },
                max_retries=max_retries,
            )
        )
        compiled = CompiledWorkflow(ARGO_TARGET, reply.parsed, "wf-llm")
        return GenerationResult(setting, compiled, None)

    raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
