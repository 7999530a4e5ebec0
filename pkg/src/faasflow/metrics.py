"""Workflow correctness metrics against a ground-truth DAG.

Three scores, each the proportion of correctly predicted components
relative to the ground truth: function selection (multiset overlap of node
function ids), pairwise topological ordering (truth-ordered node pairs the
prediction also orders), and data dependency (edges identified by source
function or START, target function, and target parameter). The overall
score averages the three.

Both neutral DAGs and Argo documents can be scored: each is reduced to a
:class:`GraphView` first, so the harness can grade model-written YAML with
the same code path. Node matching between prediction and truth is greedy
by function id in topological order.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

from .compilers import parse_argo_tasks
from .model import START_NODE_ID, WorkflowDAG, topological_order

#: Marker for the start node in edge triples.
START = "__start__"


@dataclass(frozen=True)
class GraphView:
    """What the metrics need to know about a workflow.

    ``order`` holds node keys in deterministic topological order (ties
    broken by ascending key); ``functions`` maps node keys to function ids
    (None when a node calls nothing recognizable); ``reachable`` is the
    transitive closure of inter-node edges; ``data_edges`` holds
    (source key or START, target key, parameter or None) with None marking
    ordering-only edges.
    """

    order: tuple[str, ...]
    functions: Mapping[str, str | None]
    reachable: frozenset[tuple[str, str]]
    data_edges: tuple[tuple[str, str, str | None], ...]


@dataclass(frozen=True)
class CaseScores:
    selection: float
    ordering: float
    dependency: float
    overall: float

    @classmethod
    def zero(cls) -> "CaseScores":
        return cls(0.0, 0.0, 0.0, 0.0)


def _closure(nodes: set[str], edges: list[tuple[str, str]]) -> frozenset[tuple[str, str]]:
    adj: dict[str, set[str]] = {n: set() for n in nodes}
    for a, b in edges:
        if a in adj and b in nodes:
            adj[a].add(b)
    reachable: set[tuple[str, str]] = set()
    for start in nodes:
        frontier = list(adj[start])
        seen: set[str] = set()
        while frontier:
            nxt = frontier.pop()
            if nxt in seen:
                continue
            seen.add(nxt)
            reachable.add((start, nxt))
            frontier.extend(adj[nxt])
    return frozenset(reachable)


def view_from_dag(dag: WorkflowDAG) -> GraphView:
    node_ids = {n.node_id for n in dag.nodes}
    inter = [(e.source, e.target) for e in dag.edges if e.source in node_ids]
    data_edges = []
    for e in sorted(dag.edges, key=lambda e: (e.source, e.target, e.binding.target_param if e.binding else "")):
        source = START if e.source == START_NODE_ID else e.source
        data_edges.append((source, e.target, e.binding.target_param if e.binding else None))
    return GraphView(
        order=tuple(topological_order(dag)),
        functions={n.node_id: n.function.id for n in dag.nodes},
        reachable=_closure(node_ids, inter),
        data_edges=tuple(data_edges),
    )


def view_from_argo(document: str, endpoint_functions: Mapping[str, str]) -> GraphView:
    """Scoring view of an Argo document.

    Tasks are mapped back to functions through their template's HTTP URL
    (an unknown URL leaves the node unmatched, as a hallucinated call
    should be). Argument references give the data edges; dependencies that
    carry no argument become ordering-only edges.
    """
    tasks = parse_argo_tasks(document)
    names = [t.name for t in tasks]
    name_set = set(names)
    functions = {t.name: endpoint_functions.get(t.url or "") for t in tasks}

    dep_edges: list[tuple[str, str]] = []
    data_edges: list[tuple[str, str, str | None]] = []
    for task in tasks:
        referenced: set[str] = set()
        for arg in task.arguments:
            if arg.kind == "workflow":
                data_edges.append((START, task.name, arg.name))
            elif arg.kind == "task" and arg.source_task in name_set:
                data_edges.append((arg.source_task, task.name, arg.name))
                referenced.add(arg.source_task)
        for dep in task.dependencies:
            if dep in name_set:
                dep_edges.append((dep, task.name))
                if dep not in referenced:
                    data_edges.append((dep, task.name, None))

    # Kahn with ascending-name ties; leftovers (cycles in malformed docs)
    # keep document order so scoring still terminates.
    indegree = {n: 0 for n in names}
    adj: dict[str, list[str]] = {n: [] for n in names}
    for a, b in dep_edges:
        indegree[b] += 1
        adj[a].append(b)
    ready = sorted(n for n in names if indegree[n] == 0)
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for nxt in adj[n]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    placed = set(order)
    order.extend(n for n in names if n not in placed)

    return GraphView(
        order=tuple(order),
        functions=functions,
        reachable=_closure(name_set, dep_edges),
        data_edges=tuple(data_edges),
    )


def match_nodes(pred: GraphView, truth: GraphView) -> dict[str, str]:
    """Greedy truth->pred node matching by function id in topological order."""
    matched: dict[str, str] = {}
    used: set[str] = set()
    for t in truth.order:
        fid = truth.functions[t]
        if fid is None:
            continue
        for p in pred.order:
            if p not in used and pred.functions[p] == fid:
                matched[t] = p
                used.add(p)
                break
    return matched


def _selection(pred: GraphView, truth: GraphView, matched: dict[str, str]) -> tuple[float, float]:
    """(recall, precision) of the node matching."""
    recall = len(matched) / len(truth.order) if truth.order else 1.0
    precision = len(matched) / len(pred.order) if pred.order else (1.0 if not truth.order else 0.0)
    return min(1.0, recall), min(1.0, precision)


def _constrained_pairs(view: GraphView) -> list[tuple[str, str]]:
    return [(a, b) for a in view.order for b in view.order if a != b and (a, b) in view.reachable]


def _pred_orders_before(pred: GraphView, pa: str, pb: str, position: Mapping[str, int]) -> bool:
    if (pa, pb) in pred.reachable:
        return True
    if (pb, pa) in pred.reachable:
        return False
    return position[pa] < position[pb]


def _ordering(pred: GraphView, truth: GraphView, matched: dict[str, str]) -> tuple[float, float]:
    pairs = _constrained_pairs(truth)
    position = {p: i for i, p in enumerate(pred.order)}
    if len(pairs) < 2:
        recall = 1.0
    else:
        satisfied = 0
        for a, b in pairs:
            pa, pb = matched.get(a), matched.get(b)
            if pa is None or pb is None:
                continue  # pairs with unmatched nodes count as unsatisfied
            if _pred_orders_before(pred, pa, pb, position):
                satisfied += 1
        recall = satisfied / len(pairs)
    pred_pairs = _constrained_pairs(pred)
    if len(pred_pairs) < 2:
        precision = 1.0
    else:
        inverse = {p: t for t, p in matched.items()}
        tpos = {t: i for i, t in enumerate(truth.order)}
        agree = 0
        for pa, pb in pred_pairs:
            a, b = inverse.get(pa), inverse.get(pb)
            if a is None or b is None:
                continue
            if (a, b) in truth.reachable:
                agree += 1
            elif (b, a) not in truth.reachable and tpos[a] < tpos[b]:
                agree += 1
        precision = agree / len(pred_pairs)
    return recall, precision


def _edge_triples(view: GraphView, restrict_to: set[str] | None) -> Counter:
    triples: Counter = Counter()
    for src, tgt, param in view.data_edges:
        if restrict_to is not None:
            if tgt not in restrict_to or (src != START and src not in restrict_to):
                continue
        src_fid = START if src == START else view.functions.get(src)
        tgt_fid = view.functions.get(tgt)
        if tgt_fid is None or src_fid is None:
            continue
        triples[(src_fid, tgt_fid, param)] += 1
    return triples


def _dependency(pred: GraphView, truth: GraphView, matched: dict[str, str]) -> tuple[float, float]:
    truth_triples = _edge_triples(truth, None)
    pred_triples = _edge_triples(pred, set(matched.values()))
    hits = sum((truth_triples & pred_triples).values())
    recall = hits / sum(truth_triples.values()) if truth_triples else 1.0
    precision = hits / sum(pred_triples.values()) if pred_triples else (1.0 if not truth_triples else 0.0)
    return recall, precision


def _combine(recall: float, precision: float, mode: str) -> float:
    if mode == "recall":
        return recall
    if mode == "f1":
        if recall + precision == 0.0:
            return 0.0
        return 2.0 * recall * precision / (recall + precision)
    raise ValueError(f"unknown score mode {mode!r}")


DEFAULT_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def score_views(
    pred: GraphView,
    truth: GraphView,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    mode: str = "recall",
) -> CaseScores:
    matched = match_nodes(pred, truth)
    selection = _combine(*_selection(pred, truth, matched), mode)
    ordering = _combine(*_ordering(pred, truth, matched), mode)
    dependency = _combine(*_dependency(pred, truth, matched), mode)
    total = sum(weights)
    overall = (
        weights[0] * selection + weights[1] * ordering + weights[2] * dependency
    ) / total
    return CaseScores(selection, ordering, dependency, overall)


def score_function_selection(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    pred_view, truth_view = view_from_dag(pred), view_from_dag(truth)
    return _selection(pred_view, truth_view, match_nodes(pred_view, truth_view))[0]


def score_topological_order(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    pred_view, truth_view = view_from_dag(pred), view_from_dag(truth)
    return _ordering(pred_view, truth_view, match_nodes(pred_view, truth_view))[0]


def score_data_dependency(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    pred_view, truth_view = view_from_dag(pred), view_from_dag(truth)
    return _dependency(pred_view, truth_view, match_nodes(pred_view, truth_view))[0]


def score_dags(
    pred: WorkflowDAG,
    truth: WorkflowDAG,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    mode: str = "recall",
) -> CaseScores:
    return score_views(view_from_dag(pred), view_from_dag(truth), weights, mode)
