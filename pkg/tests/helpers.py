"""Shared test machinery: random workflow generators, mutation helpers, and
independent brute-force oracles.

The oracles deliberately avoid the package's own graph code: reachability
and cycles go through networkx, orderings through exhaustive enumeration
or lexicographic Kahn re-implementations, multiset arithmetic through
collections.Counter. They exist to check the production implementations,
so they must not share code paths with them.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from collections import Counter
from dataclasses import replace

import networkx as nx

from faasflow.model import (
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
)

# --- random valid workflows -----------------------------------------------------

_TYPES = ("string", "number", "boolean", "object", "array")
_WORDS = (
    "report", "image", "invoice", "ticket", "summary", "forecast", "audio",
    "chart", "message", "order", "article", "payment", "profile", "backup",
)


def random_function_pool(rng: random.Random, size: int = 12) -> list[FunctionSpec]:
    pool = []
    for i in range(size):
        inputs = []
        for j in range(rng.randint(0, 3)):
            inputs.append(
                ParameterSpec(
                    name=f"p{j}_{rng.choice(_WORDS)}",
                    data_type=rng.choice(_TYPES),
                    description=f"input {j} of function {i}",
                    required=rng.random() < 0.8,
                )
            )
        outputs = [
            ParameterSpec(
                name=f"o{j}_{rng.choice(_WORDS)}",
                data_type=rng.choice(_TYPES),
                description=f"output {j} of function {i}",
            )
            for j in range(rng.randint(0, 2))
        ]
        pool.append(
            FunctionSpec(
                id=f"fn_{i:02d}",
                name=f"fn_{i:02d}",
                description=f"does thing {i} with {rng.choice(_WORDS)}",
                endpoint=f"http://pool.internal/fn_{i:02d}",
                inputs=tuple(inputs),
                outputs=tuple(outputs),
            )
        )
    return pool


def random_dag(
    rng: random.Random,
    n_nodes: int | None = None,
    pool: list[FunctionSpec] | None = None,
) -> WorkflowDAG:
    """A random valid workflow: every required input bound exactly once,
    every node reachable from the start, no cycles (sources always earlier
    in node order)."""
    if pool is None:
        pool = random_function_pool(rng)
    if n_nodes is None:
        n_nodes = rng.randint(1, 10)
    nodes = [
        WorkflowNode(f"n{i}", SubTask(i, f"step {i} {rng.choice(_WORDS)}"), rng.choice(pool))
        for i in range(n_nodes)
    ]
    edges: list[DataFlowEdge] = []
    user_inputs: dict[str, ParameterSpec] = {}
    for i, node in enumerate(nodes):
        upstream = [
            (prev.node_id, out)
            for prev in nodes[:i]
            for out in prev.function.outputs
        ]
        bound_any = False
        for param in node.function.inputs:
            if not param.required and rng.random() < 0.5:
                continue
            if upstream and rng.random() < 0.6:
                src_id, out = rng.choice(upstream)
                edges.append(
                    DataFlowEdge(
                        src_id,
                        node.node_id,
                        ParamBinding(node.node_id, param.name, NodeOutput(src_id, out.name)),
                    )
                )
            else:
                edges.append(
                    DataFlowEdge(
                        START_NODE_ID,
                        node.node_id,
                        ParamBinding(node.node_id, param.name, UserInput(param.name)),
                    )
                )
                user_inputs.setdefault(param.name, replace(param, required=param.required))
            bound_any = True
        if not bound_any:
            source = nodes[i - 1].node_id if i > 0 else START_NODE_ID
            edges.append(DataFlowEdge(source, node.node_id, None))
    return WorkflowDAG(
        dag_id=f"wf-{rng.getrandbits(48):012x}",
        query=f"random workflow over {n_nodes} nodes",
        user_inputs=tuple(sorted(user_inputs.values(), key=lambda p: p.name)),
        nodes=tuple(nodes),
        edges=tuple(
            sorted(edges, key=lambda e: (e.source, e.target, e.binding.target_param if e.binding else ""))
        ),
    )


def mutate_dag(rng: random.Random, dag: WorkflowDAG) -> WorkflowDAG:
    """Break one invariant at random; returns a structurally parseable but
    invalid workflow."""
    mutations = []

    def with_edges(edges) -> WorkflowDAG:
        return replace(dag, edges=tuple(edges))

    node_edges = [e for e in dag.edges if e.source != START_NODE_ID]
    required_edges = [
        e
        for e in dag.edges
        if e.binding is not None
        and (n := dag.node(e.target)) is not None
        and (p := n.function.input(e.binding.target_param)) is not None
        and p.required
    ]
    binding_edges = [e for e in dag.edges if e.binding is not None]
    node_binding_edges = [e for e in binding_edges if isinstance(e.binding.source, NodeOutput)]

    if node_edges:
        mutations.append(
            lambda: with_edges(list(dag.edges) + [DataFlowEdge(node_edges[0].target, node_edges[0].source, None)])
        )
    if len(dag.nodes) >= 2 and not node_edges:
        mutations.append(
            lambda: with_edges(
                list(dag.edges)
                + [
                    DataFlowEdge(dag.nodes[0].node_id, dag.nodes[1].node_id, None),
                    DataFlowEdge(dag.nodes[1].node_id, dag.nodes[0].node_id, None),
                ]
            )
        )
    if required_edges:
        mutations.append(lambda: with_edges([e for e in dag.edges if e is not required_edges[0]]))
    if binding_edges:
        mutations.append(lambda: with_edges(list(dag.edges) + [binding_edges[0]]))
        e0 = binding_edges[0]
        mutations.append(
            lambda: with_edges(
                [e for e in dag.edges if e is not e0]
                + [
                    DataFlowEdge(
                        e0.source,
                        e0.target,
                        replace(e0.binding, target_param="ghost_param", source=(
                            UserInput("ghost_param")
                            if isinstance(e0.binding.source, UserInput)
                            else e0.binding.source
                        )),
                    )
                ]
            )
        )
    if node_binding_edges:
        e1 = node_binding_edges[0]
        mutations.append(
            lambda: with_edges(
                [e for e in dag.edges if e is not e1]
                + [
                    DataFlowEdge(
                        e1.source,
                        e1.target,
                        replace(e1.binding, source=NodeOutput(e1.binding.source.node_id, "ghost_out")),
                    )
                ]
            )
        )
    if len(dag.nodes) >= 2:
        mutations.append(
            lambda: replace(
                dag,
                nodes=tuple([replace(dag.nodes[0], node_id=dag.nodes[1].node_id)] + list(dag.nodes[1:])),
            )
        )
    mutations.append(
        lambda: replace(dag, nodes=tuple([replace(dag.nodes[0], node_id=START_NODE_ID)] + list(dag.nodes[1:])))
    )
    mutations.append(
        lambda: replace(
            dag,
            nodes=tuple(
                [replace(dag.nodes[0], subtask=SubTask(99, dag.nodes[0].subtask.text))]
                + list(dag.nodes[1:])
            ),
        )
    )
    mutations.append(
        lambda: replace(
            dag,
            nodes=tuple(
                [replace(dag.nodes[0], subtask=SubTask(dag.nodes[0].subtask.index, ""))]
                + list(dag.nodes[1:])
            ),
        )
    )
    mutations.append(
        lambda: replace(
            dag,
            nodes=tuple(
                [replace(dag.nodes[0], function=replace(dag.nodes[0].function, endpoint="not-a-url"))]
                + list(dag.nodes[1:])
            ),
        )
    )
    mutations.append(
        lambda: with_edges(list(dag.edges) + [DataFlowEdge(dag.nodes[0].node_id, "n_ghost", None)])
    )
    mutations.append(
        lambda: with_edges(list(dag.edges) + [DataFlowEdge(dag.nodes[0].node_id, START_NODE_ID, None)])
    )
    return rng.choice(mutations)()


# --- brute-force workflow validator ----------------------------------------------


def _nx_graph(dag: WorkflowDAG) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(n.node_id for n in dag.nodes)
    graph.add_node(START_NODE_ID)
    known = {n.node_id for n in dag.nodes} | {START_NODE_ID}
    for e in dag.edges:
        if e.source in known and e.target in known:
            graph.add_edge(e.source, e.target)
    return graph


def brute_force_violation_codes(dag: WorkflowDAG) -> set[str]:
    """Re-derive the violated-invariant set with independent machinery."""
    codes: set[str] = set()
    node_ids = [n.node_id for n in dag.nodes]
    id_set = set(node_ids)

    if len(node_ids) != len(set(node_ids)):
        codes.add("duplicate-node-id")
    if any(nid in ("", START_NODE_ID) for nid in node_ids):
        codes.add("reserved-node-id")
    if any(not n.subtask.text for n in dag.nodes):
        codes.add("empty-subtask")
    if sorted(n.subtask.index for n in dag.nodes) != list(range(len(dag.nodes))):
        codes.add("bad-subtask-indices")

    def check_params(params):
        names = [p.name for p in params]
        if any(not name for name in names):
            codes.add("bad-parameter")
        if any(p.data_type not in _TYPES for p in params):
            codes.add("bad-data-type")
        if len(names) != len(set(names)):
            codes.add("duplicate-param")

    for n in dag.nodes:
        from urllib.parse import urlparse

        parsed = urlparse(n.function.endpoint)
        if not (parsed.scheme and parsed.netloc):
            codes.add("bad-endpoint")
        check_params(n.function.inputs)
        check_params(n.function.outputs)
    check_params(dag.user_inputs)

    id_counts = Counter(node_ids)
    functions = {n.node_id: n.function for n in dag.nodes if id_counts[n.node_id] == 1}
    start_names = {p.name for p in dag.user_inputs}
    seen_bindings = Counter()
    for e in dag.edges:
        if e.source == e.target:
            codes.add("self-edge")
        if e.target == START_NODE_ID:
            codes.add("start-as-target")
        elif e.target not in id_set:
            codes.add("unknown-node")
        if e.source != START_NODE_ID and e.source not in id_set:
            codes.add("unknown-node")
        b = e.binding
        if b is None:
            continue
        seen_bindings[(e.target, b.target_param)] += 1
        if b.target_node != e.target:
            codes.add("binding-mismatch")
        target_fn = functions.get(e.target)
        if target_fn is not None and all(p.name != b.target_param for p in target_fn.inputs):
            codes.add("unknown-target-param")
        if isinstance(b.source, UserInput):
            if e.source != START_NODE_ID or b.source.param != b.target_param:
                codes.add("binding-mismatch")
            if b.source.param not in start_names:
                codes.add("unknown-source-param")
        else:
            if b.source.node_id != e.source:
                codes.add("binding-mismatch")
            src_fn = functions.get(b.source.node_id)
            if src_fn is not None and all(p.name != b.source.param for p in src_fn.outputs):
                codes.add("unknown-source-param")
    if any(count > 1 for count in seen_bindings.values()):
        codes.add("duplicate-binding")

    for n in dag.nodes:
        if id_counts[n.node_id] > 1:
            continue
        for p in n.function.inputs:
            if p.required and seen_bindings.get((n.node_id, p.name), 0) == 0:
                codes.add("unbound-parameter")

    # cycles are defined over regular nodes; edges touching the start node
    # are separate violations and cannot close a loop
    inter = nx.DiGraph()
    graph_ids = id_set - {START_NODE_ID, ""}
    inter.add_nodes_from(graph_ids)
    for e in dag.edges:
        if e.source in graph_ids and e.target in graph_ids:
            inter.add_edge(e.source, e.target)
    if not nx.is_directed_acyclic_graph(inter):
        codes.add("cycle")
    graph = _nx_graph(dag)
    for nid in id_set - {START_NODE_ID, ""}:
        if not nx.has_path(graph, START_NODE_ID, nid):
            codes.add("unreachable")
            break
    return codes


# --- ordering oracles --------------------------------------------------------------


def all_topological_orders(dag: WorkflowDAG) -> list[list[str]]:
    """Exhaustive enumeration; only sensible for small node counts."""
    ids = [n.node_id for n in dag.nodes]
    constraints = [
        (e.source, e.target) for e in dag.edges if e.source != START_NODE_ID and e.target in set(ids)
    ]
    orders = []
    for perm in itertools.permutations(ids):
        index = {nid: i for i, nid in enumerate(perm)}
        if all(index[a] < index[b] for a, b in constraints):
            orders.append(list(perm))
    return orders


def respects_edges(order: list[str], dag: WorkflowDAG) -> bool:
    index = {nid: i for i, nid in enumerate(order)}
    return all(
        index[e.source] < index[e.target]
        for e in dag.edges
        if e.source in index and e.target in index
    )


# --- retrieval oracle ----------------------------------------------------------------


def brute_force_top_k(repo, query_text: str, k: int) -> list[tuple[str, float]]:
    """Full-scan cosine ranking with plain-python arithmetic.

    Mirrors the published tie rule: scores within 1e-9 are ties, broken by
    ascending function id.
    """
    query = repo.provider.embed(query_text)
    scored = []
    for spec in repo.functions():
        vec = repo.embedding(spec.id)
        dot = math.fsum(x * y for x, y in zip(query.values, vec.values))
        nq = math.sqrt(math.fsum(x * x for x in query.values))
        nv = math.sqrt(math.fsum(x * x for x in vec.values))
        scored.append((spec.id, dot / (nq * nv)))
    scored.sort(key=lambda item: (-round(item[1], 9), item[0]))
    return scored[:k]


# --- metric oracles ---------------------------------------------------------------


def _inter_node_graph(dag: WorkflowDAG) -> nx.DiGraph:
    graph = nx.DiGraph()
    ids = {n.node_id for n in dag.nodes}
    graph.add_nodes_from(ids)
    for e in dag.edges:
        if e.source in ids and e.target in ids:
            graph.add_edge(e.source, e.target)
    return graph


def _lex_topo(dag: WorkflowDAG) -> list[str]:
    return list(nx.lexicographical_topological_sort(_inter_node_graph(dag)))


def oracle_match(pred: WorkflowDAG, truth: WorkflowDAG) -> dict[str, str]:
    pred_order = _lex_topo(pred)
    pred_fid = {n.node_id: n.function.id for n in pred.nodes}
    truth_fid = {n.node_id: n.function.id for n in truth.nodes}
    used: set[str] = set()
    matching: dict[str, str] = {}
    for t in _lex_topo(truth):
        for p in pred_order:
            if p not in used and pred_fid[p] == truth_fid[t]:
                matching[t] = p
                used.add(p)
                break
    return matching


def oracle_selection(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    truth_counts = Counter(n.function.id for n in truth.nodes)
    pred_counts = Counter(n.function.id for n in pred.nodes)
    if not truth.nodes:
        return 1.0
    return min(1.0, sum((truth_counts & pred_counts).values()) / len(truth.nodes))


def oracle_ordering(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    truth_graph = _inter_node_graph(truth)
    pred_graph = _inter_node_graph(pred)
    ids = [n.node_id for n in truth.nodes]
    pairs = [
        (a, b)
        for a in ids
        for b in ids
        if a != b and b in nx.descendants(truth_graph, a)
    ]
    if len(pairs) < 2:
        return 1.0
    matching = oracle_match(pred, truth)
    pred_pos = {nid: i for i, nid in enumerate(_lex_topo(pred))}
    satisfied = 0
    for a, b in pairs:
        pa, pb = matching.get(a), matching.get(b)
        if pa is None or pb is None:
            continue
        if pb in nx.descendants(pred_graph, pa):
            satisfied += 1
        elif pa not in nx.descendants(pred_graph, pb) and pred_pos[pa] < pred_pos[pb]:
            satisfied += 1
    return satisfied / len(pairs)


def _edge_triples(dag: WorkflowDAG, keep: set[str] | None) -> Counter:
    fid = {n.node_id: n.function.id for n in dag.nodes}
    triples: Counter = Counter()
    for e in dag.edges:
        if keep is not None:
            if e.target not in keep or (e.source != START_NODE_ID and e.source not in keep):
                continue
        src = START_NODE_ID if e.source == START_NODE_ID else fid[e.source]
        triples[(src, fid[e.target], e.binding.target_param if e.binding else None)] += 1
    return triples


def oracle_dependency(pred: WorkflowDAG, truth: WorkflowDAG) -> float:
    truth_triples = _edge_triples(truth, None)
    if not truth_triples:
        return 1.0
    matching = oracle_match(pred, truth)
    pred_triples = _edge_triples(pred, set(matching.values()))
    return sum((truth_triples & pred_triples).values()) / sum(truth_triples.values())


# --- level oracle -----------------------------------------------------------------


def oracle_levels(dag: WorkflowDAG) -> list[list[str]]:
    """Longest path from the start node, by memoized recursion."""
    incoming: dict[str, list[str]] = {n.node_id: [] for n in dag.nodes}
    for e in dag.edges:
        if e.source != START_NODE_ID:
            incoming[e.target].append(e.source)
    memo: dict[str, int] = {}

    def depth(nid: str) -> int:
        if nid not in memo:
            memo[nid] = 1 + max((depth(s) for s in incoming[nid]), default=-1)
        return memo[nid]

    if not dag.nodes:
        return []
    levels: list[list[str]] = [[] for _ in range(max(depth(n.node_id) for n in dag.nodes) + 1)]
    for nid in sorted(incoming):
        levels[depth(nid)].append(nid)
    return levels


# --- reference interpreter ----------------------------------------------------------


def reference_execute(dag: WorkflowDAG, inputs: dict, impls: dict) -> dict:
    """Directly evaluate the DAG with per-function python callables and
    return sink outputs namespaced node_id.param."""
    bindings: dict[str, list] = {n.node_id: [] for n in dag.nodes}
    for e in dag.edges:
        if e.binding is not None:
            bindings[e.target].append(e.binding)
    memo: dict[str, dict] = {}

    def evaluate(nid: str) -> dict:
        if nid not in memo:
            node = dag.node(nid)
            args = {}
            for b in bindings[nid]:
                if isinstance(b.source, UserInput):
                    if b.source.param in inputs:
                        args[b.target_param] = inputs[b.source.param]
                else:
                    args[b.target_param] = evaluate(b.source.node_id)[b.source.param]
            memo[nid] = impls[node.function.id](args)
        return memo[nid]

    sources = {e.source for e in dag.edges}
    outputs = {}
    for node in dag.nodes:
        if node.node_id in sources:
            continue
        for name, value in evaluate(node.node_id).items():
            outputs[f"{node.node_id}.{name}"] = value
    return outputs


# --- arithmetic workflows over the mock FaaS engine -----------------------------------

_ARITH_OPS = {
    "add": (("a", "b"), lambda args: {"value": args["a"] + args["b"]}),
    "mul": (("a", "b"), lambda args: {"value": args["a"] * args["b"]}),
    "neg": (("x",), lambda args: {"value": -args["x"]}),
    "inc": (("x",), lambda args: {"value": args["x"] + 1}),
    "seed": ((), lambda args: {"value": 7}),
}


def random_arithmetic_dag(
    rng: random.Random, n_nodes: int, base_url: str
) -> tuple[WorkflowDAG, dict, dict]:
    """A random numeric workflow with one distinct function per node.

    Returns (dag, handler-by-path for the mock server, impl-by-function-id
    for the reference interpreter).
    """
    nodes = []
    edges = []
    handlers = {}
    impls = {}
    user_inputs: dict[str, ParameterSpec] = {}
    for i in range(n_nodes):
        op = rng.choice(sorted(_ARITH_OPS)) if i > 0 else rng.choice(["add", "neg", "inc", "seed"])
        params, impl = _ARITH_OPS[op]
        fid = f"{op}_{i}"
        path = f"/fn/{fid}"
        fn = FunctionSpec(
            id=fid,
            name=fid,
            description=f"arithmetic {op} step {i}",
            endpoint=f"{base_url}{path}",
            inputs=tuple(ParameterSpec(p, "number", f"operand {p}") for p in params),
            outputs=(ParameterSpec("value", "number", "numeric result"),),
        )
        node = WorkflowNode(f"n{i}", SubTask(i, f"compute {op} at {i}"), fn)
        nodes.append(node)
        handlers[path] = impl
        impls[fid] = impl
        bound = False
        for p in params:
            if i > 0 and rng.random() < 0.7:
                src = rng.choice(nodes[:i])
                edges.append(
                    DataFlowEdge(
                        src.node_id,
                        node.node_id,
                        ParamBinding(node.node_id, p, NodeOutput(src.node_id, "value")),
                    )
                )
            else:
                # user-input names must match the target parameter name
                edges.append(
                    DataFlowEdge(
                        START_NODE_ID,
                        node.node_id,
                        ParamBinding(node.node_id, p, UserInput(p)),
                    )
                )
                user_inputs.setdefault(p, ParameterSpec(p, "number", f"workflow input {p}"))
            bound = True
        if not bound:
            source = nodes[i - 1].node_id if i > 0 else START_NODE_ID
            edges.append(DataFlowEdge(source, node.node_id, None))
    dag = WorkflowDAG(
        dag_id=f"wf-arith-{rng.getrandbits(32):08x}",
        query=f"random arithmetic workflow {n_nodes}",
        user_inputs=tuple(sorted(user_inputs.values(), key=lambda p: p.name)),
        nodes=tuple(nodes),
        edges=tuple(
            sorted(edges, key=lambda e: (e.source, e.target, e.binding.target_param if e.binding else ""))
        ),
    )
    return dag, handlers, impls


# --- schema-valid but arbitrary scripted replies ------------------------------------


class FuzzBackend:
    """Backend producing schema-valid but otherwise random replies.

    Used to fuzz the generation pipeline: whatever the replies, the
    assembled DAG must satisfy every dataflow invariant. Records the node
    order it returned so forward-reference checks can use it.
    """

    def __init__(self, rng: random.Random, plan_size: int) -> None:
        self.rng = rng
        self.plan_size = plan_size
        self.last_order: list[str] = []

    def generate(self, request, prompt: str, attempt: int) -> str:
        bindings = request.bindings
        if request.template_id == "plan":
            steps = [
                f"{self.rng.choice(_WORDS)} {self.rng.choice(_WORDS)} step {i}"
                for i in range(self.plan_size)
            ]
            return json.dumps(steps)
        if request.template_id == "select":
            candidates = json.loads(bindings["candidates"])
            return json.dumps({"function_id": self.rng.choice(candidates)["id"]})
        if request.template_id == "order":
            ids = [n["node_id"] for n in json.loads(bindings["nodes"])]
            self.rng.shuffle(ids)
            self.last_order = list(ids)
            return json.dumps(ids)
        if request.template_id == "classify":
            catalog = json.loads(bindings["catalog"])
            if catalog and self.rng.random() < 0.6:
                entry = self.rng.choice(catalog)
                return json.dumps(
                    {"node_id": entry["node_id"], "output_param": entry["output_param"]}
                )
            return "INPUT"
        raise AssertionError(f"unexpected template {request.template_id}")
