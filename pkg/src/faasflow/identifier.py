"""Turns a user query into workflow nodes.

Two model-driven phases: decompose the query into sub-tasks, then pair
each sub-task with the best function among the top-k retrieved candidates.
Nodes are named ``n<subtask index>`` so later stages and metrics have
stable ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import EmptyPlanError, SelectionError, StructuredParseError
from .llm import LlmGateway, PromptRequest
from .model import FunctionSpec, SubTask, WorkflowNode
from .repository import FunctionRepository, RankedFunction


@dataclass(frozen=True)
class UserQuery:
    """The developer's request plus any values supplied at generation time."""

    text: str
    user_inputs: Mapping[str, Any] = field(default_factory=dict)


def plan_tasks(query: UserQuery, gateway: LlmGateway, max_retries: int = 2) -> list[SubTask]:
    """Decompose the query into an ordered, non-empty list of sub-tasks."""
    reply = gateway.complete(
        PromptRequest("plan", {"query": query.text}, max_retries=max_retries)
    )
    steps: list[str] = reply.parsed
    if not steps:
        raise EmptyPlanError(f"planner produced no sub-tasks for query {query.text!r}")
    return [SubTask(i, text) for i, text in enumerate(steps)]


def candidates_json(candidates: list[RankedFunction]) -> str:
    """Candidate block offered to the model (and used for the schema check)."""
    entries = []
    for ranked in candidates:
        fn = ranked.function
        entries.append(
            {
                "id": fn.id,
                "name": fn.name,
                "description": fn.description,
                "inputs": [f"{p.name} ({p.data_type}): {p.description}" for p in fn.inputs],
                "outputs": [f"{p.name} ({p.data_type}): {p.description}" for p in fn.outputs],
            }
        )
    return json.dumps(entries, sort_keys=True, ensure_ascii=False)


def select_function(
    query: UserQuery,
    subtask: SubTask,
    candidates: list[RankedFunction],
    gateway: LlmGateway,
    max_retries: int = 2,
) -> FunctionSpec:
    """Choose one function among the candidates for this sub-task."""
    if not candidates:
        raise SelectionError("no candidate functions to select from", subtask.index)
    if len(candidates) == 1:
        return candidates[0].function
    request = PromptRequest(
        "select",
        {
            "query": query.text,
            "subtask": subtask.text,
            "candidates": candidates_json(candidates),
        },
        max_retries=max_retries,
    )
    try:
        reply = gateway.complete(request)
    except StructuredParseError as exc:
        raise SelectionError(f"function selection failed: {exc}", subtask.index) from exc
    chosen = reply.parsed
    return next(c.function for c in candidates if c.function.id == chosen)


def identify(
    query: UserQuery,
    repo: FunctionRepository,
    gateway: LlmGateway,
    k: int = 5,
    max_retries: int = 2,
) -> list[WorkflowNode]:
    """One workflow node per planned sub-task, in sub-task order."""
    subtasks = plan_tasks(query, gateway, max_retries=max_retries)
    nodes = []
    for subtask in subtasks:
        ranked = repo.top_k(subtask.text, k)
        function = select_function(query, subtask, ranked, gateway, max_retries=max_retries)
        nodes.append(WorkflowNode(f"n{subtask.index}", subtask, function))
    return nodes
