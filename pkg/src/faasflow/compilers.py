"""Compilation of the neutral workflow IR into orchestration documents.

Two targets: Argo-compatible YAML (one DAG template plus one HTTP template
per function, hitting the function endpoints directly) and a local JSON
format the built-in execution plane runs. Both compilers are pure and
byte-deterministic, and :func:`verify_compiled` gives a syntactic gate that
checks a document parses and that every intra-document reference resolves.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import yaml

from .errors import CompileError, InvalidDagError
from .model import (
    START_NODE_ID,
    DataFlowEdge,
    UserInput,
    Violation,
    ValidationReport,
    WorkflowDAG,
    find_cycle,
    topological_order,
    validate_dag,
)

ARGO_TARGET = "argo-yaml"
LOCAL_TARGET = "local-json"

ARGO_API_VERSION = "argoproj.io/v1alpha1"
LOCAL_KIND = "local-workflow"
LOCAL_VERSION = 1

_WORKFLOW_PARAM_RE = re.compile(r"\{\{workflow\.parameters\.([A-Za-z0-9_.-]+)\}\}")
_TASK_OUTPUT_RE = re.compile(
    r"\{\{tasks\.([A-Za-z0-9_-]+)\.outputs\.parameters\.([A-Za-z0-9_.-]+)\}\}"
)


@dataclass(frozen=True)
class CompiledWorkflow:
    target: str
    document: str
    dag_id: str
    entry_params: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entry_params", tuple(self.entry_params))


def _require_valid(dag: WorkflowDAG) -> None:
    report = validate_dag(dag)
    if not report.ok:
        raise InvalidDagError("cannot compile an invalid workflow", report)


def template_name_map(dag: WorkflowDAG) -> dict[str, str]:
    """Deterministic, collision-free Argo template name per function id."""
    names: dict[str, str] = {}
    used: set[str] = set()
    for fid in sorted({n.function.id for n in dag.nodes}):
        base = "fn-" + re.sub(r"[^a-z0-9-]+", "-", fid.lower()).strip("-")
        candidate, suffix = base, 2
        while candidate in used:
            candidate = f"{base}-{suffix}"
            suffix += 1
        used.add(candidate)
        names[fid] = candidate
    return names


def _incoming(dag: WorkflowDAG) -> dict[str, list[DataFlowEdge]]:
    incoming: dict[str, list[DataFlowEdge]] = {n.node_id: [] for n in dag.nodes}
    for e in dag.edges:
        incoming[e.target].append(e)
    return incoming


def _entry_params(dag: WorkflowDAG) -> list[dict]:
    """Start-node parameters with a required flag aggregated over consumers."""
    required: dict[str, bool] = {}
    for e in dag.edges:
        if e.binding is None or not isinstance(e.binding.source, UserInput):
            continue
        target = dag.node(e.target)
        consumed = target.function.input(e.binding.target_param) if target else None
        name = e.binding.source.param
        required[name] = required.get(name, False) or bool(consumed and consumed.required)
    return [{"name": name, "required": required[name]} for name in sorted(required)]


def compile_argo(dag: WorkflowDAG) -> CompiledWorkflow:
    """Compile a valid DAG to Argo Workflow YAML.

    Tasks mirror the nodes (dependencies are the non-start edge sources);
    each distinct function becomes one HTTP template posting a JSON body to
    its endpoint and exposing one output parameter per declared output,
    read from the response body path of the same name. User-input bindings
    render as ``{{workflow.parameters.<name>}}``, node bindings as
    ``{{tasks.<node>.outputs.parameters.<out>}}``. Output is deterministic.
    """
    _require_valid(dag)
    names = template_name_map(dag)
    incoming = _incoming(dag)

    tasks = []
    for node in sorted(dag.nodes, key=lambda n: n.node_id):
        edges = incoming[node.node_id]
        dependencies = sorted({e.source for e in edges if e.source != START_NODE_ID})
        arguments = []
        for e in sorted(edges, key=lambda e: e.binding.target_param if e.binding else ""):
            if e.binding is None:
                continue
            if isinstance(e.binding.source, UserInput):
                value = "{{workflow.parameters.%s}}" % e.binding.source.param
            else:
                value = "{{tasks.%s.outputs.parameters.%s}}" % (
                    e.binding.source.node_id,
                    e.binding.source.param,
                )
            arguments.append({"name": e.binding.target_param, "value": value})
        task: dict = {"name": node.node_id, "template": names[node.function.id]}
        if dependencies:
            task["dependencies"] = dependencies
        if arguments:
            task["arguments"] = {"parameters": arguments}
        tasks.append(task)

    fn_templates = []
    functions = {n.function.id: n.function for n in dag.nodes}
    for fid in sorted(functions):
        fn = functions[fid]
        inputs = []
        for p in sorted(fn.inputs, key=lambda p: p.name):
            entry = {"name": p.name}
            if not p.required:
                entry["value"] = ""
            inputs.append(entry)
        body_parts = []
        for p in sorted(fn.inputs, key=lambda p: p.name):
            placeholder = "{{inputs.parameters.%s}}" % p.name
            rendered = f'"{placeholder}"' if p.data_type == "string" else placeholder
            body_parts.append(f'"{p.name}": {rendered}')
        template: dict = {
            "name": names[fid],
            "http": {
                "url": fn.endpoint,
                "method": "POST",
                "headers": [{"name": "Content-Type", "value": "application/json"}],
                "body": "{" + ", ".join(body_parts) + "}",
            },
        }
        if inputs:
            template["inputs"] = {"parameters": inputs}
        if fn.outputs:
            template["outputs"] = {
                "parameters": [
                    {
                        "name": p.name,
                        "valueFrom": {"expression": f"jsonpath(response.body, '$.{p.name}')"},
                    }
                    for p in sorted(fn.outputs, key=lambda p: p.name)
                ]
            }
        fn_templates.append(template)

    entry_params = _entry_params(dag)
    doc: dict = {
        "apiVersion": ARGO_API_VERSION,
        "kind": "Workflow",
        "metadata": {"name": dag.dag_id},
        "spec": {
            "entrypoint": "main",
            "arguments": {"parameters": [{"name": p["name"]} for p in entry_params]},
            "templates": [{"name": "main", "dag": {"tasks": tasks}}] + fn_templates,
        },
    }
    document = yaml.safe_dump(doc, sort_keys=True, default_flow_style=False, width=4096)
    return CompiledWorkflow(
        target=ARGO_TARGET,
        document=document,
        dag_id=dag.dag_id,
        entry_params=tuple(p["name"] for p in entry_params),
    )


def compute_levels(dag: WorkflowDAG) -> list[list[str]]:
    """Scheduling levels: a node's level is its longest path from the start."""
    incoming = _incoming(dag)
    level: dict[str, int] = {}
    for nid in topological_order(dag):
        sources = [e.source for e in incoming[nid] if e.source != START_NODE_ID]
        level[nid] = max((level[s] + 1 for s in sources), default=0)
    if not level:
        return []
    levels: list[list[str]] = [[] for _ in range(max(level.values()) + 1)]
    for nid in sorted(level):
        levels[level[nid]].append(nid)
    return levels


def compile_local(dag: WorkflowDAG) -> CompiledWorkflow:
    """Compile a valid DAG to the local JSON orchestration format.

    Lists, per node, the endpoint, the bound inputs with their sources,
    the declared outputs, and dependency ids, plus the scheduling levels.
    """
    _require_valid(dag)
    incoming = _incoming(dag)
    steps = []
    for node in sorted(dag.nodes, key=lambda n: n.node_id):
        edges = incoming[node.node_id]
        inputs = []
        for e in sorted(edges, key=lambda e: e.binding.target_param if e.binding else ""):
            if e.binding is None:
                continue
            consumed = node.function.input(e.binding.target_param)
            if isinstance(e.binding.source, UserInput):
                source = {"kind": "user", "name": e.binding.source.param}
            else:
                source = {
                    "kind": "node",
                    "node_id": e.binding.source.node_id,
                    "param": e.binding.source.param,
                }
            inputs.append(
                {
                    "name": e.binding.target_param,
                    "required": bool(consumed and consumed.required),
                    "source": source,
                }
            )
        steps.append(
            {
                "node_id": node.node_id,
                "function_id": node.function.id,
                "endpoint": node.function.endpoint,
                "depends_on": sorted({e.source for e in edges if e.source != START_NODE_ID}),
                "inputs": inputs,
                "outputs": sorted(p.name for p in node.function.outputs),
            }
        )
    entry_params = _entry_params(dag)
    doc = {
        "kind": LOCAL_KIND,
        "version": LOCAL_VERSION,
        "dag_id": dag.dag_id,
        "entry_params": entry_params,
        "levels": compute_levels(dag),
        "steps": steps,
    }
    document = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    return CompiledWorkflow(
        target=LOCAL_TARGET,
        document=document,
        dag_id=dag.dag_id,
        entry_params=tuple(p["name"] for p in entry_params),
    )


def compile_dag(dag: WorkflowDAG, target: str) -> CompiledWorkflow:
    if target in (ARGO_TARGET, "argo"):
        return compile_argo(dag)
    if target in (LOCAL_TARGET, "local"):
        return compile_local(dag)
    raise CompileError(f"unknown compile target {target!r}")


# --- verification ------------------------------------------------------------


def verify_compiled(compiled: CompiledWorkflow) -> ValidationReport:
    """Syntactic gate: parses the document and resolves every internal
    reference (templates, dependencies, parameters). Violations are data."""
    if compiled.target == ARGO_TARGET:
        return _verify_argo(compiled.document)
    if compiled.target == LOCAL_TARGET:
        return _verify_local(compiled.document)
    return ValidationReport(
        (Violation("schema", "document", f"unknown target {compiled.target!r}"),)
    )


def _violation(code: str, where: str, message: str) -> Violation:
    return Violation(code, where, message)


def _verify_argo(document: str) -> ValidationReport:
    out: list[Violation] = []
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "document"
        return ValidationReport((_violation("parse", where, f"YAML parse error: {exc}"),))
    if not isinstance(doc, dict):
        return ValidationReport((_violation("schema", "document", "document is not a mapping"),))

    if doc.get("apiVersion") != ARGO_API_VERSION:
        out.append(_violation("schema", "apiVersion", f"apiVersion must be {ARGO_API_VERSION}"))
    if doc.get("kind") != "Workflow":
        out.append(_violation("schema", "kind", "kind must be Workflow"))

    spec = doc.get("spec")
    if not isinstance(spec, dict):
        out.append(_violation("schema", "spec", "missing spec mapping"))
        return ValidationReport(tuple(out))

    templates = spec.get("templates")
    if not isinstance(templates, list) or not templates:
        out.append(_violation("schema", "spec.templates", "missing templates list"))
        return ValidationReport(tuple(out))
    by_name: dict[str, dict] = {}
    for t in templates:
        if not isinstance(t, dict) or not isinstance(t.get("name"), str):
            out.append(_violation("schema", "spec.templates", "template without a name"))
            continue
        if t["name"] in by_name:
            out.append(_violation("duplicate-template", t["name"], f"duplicate template {t['name']!r}"))
        by_name[t["name"]] = t

    entrypoint = spec.get("entrypoint")
    if entrypoint not in by_name:
        out.append(_violation("dangling-entrypoint", "spec.entrypoint", f"entrypoint {entrypoint!r} not found"))
        return ValidationReport(tuple(out))

    workflow_params = set()
    args = spec.get("arguments") or {}
    for p in args.get("parameters", []) if isinstance(args, dict) else []:
        if isinstance(p, dict) and isinstance(p.get("name"), str):
            workflow_params.add(p["name"])

    dag_section = by_name[entrypoint].get("dag")
    tasks = dag_section.get("tasks") if isinstance(dag_section, dict) else None
    if not isinstance(tasks, list):
        out.append(_violation("schema", entrypoint, "entrypoint template has no dag.tasks"))
        return ValidationReport(tuple(out))

    task_names: set[str] = set()
    for task in tasks:
        name = task.get("name") if isinstance(task, dict) else None
        if not isinstance(name, str):
            out.append(_violation("schema", "dag.tasks", "task without a name"))
            continue
        if name in task_names:
            out.append(_violation("duplicate-task", name, f"duplicate task {name!r}"))
        task_names.add(name)

    task_template: dict[str, dict] = {}
    dep_edges: list[tuple[str, str]] = []
    for task in tasks:
        if not isinstance(task, dict) or not isinstance(task.get("name"), str):
            continue
        name = task["name"]
        tmpl = task.get("template")
        if tmpl not in by_name:
            out.append(_violation("dangling-template", name, f"task {name!r} uses unknown template {tmpl!r}"))
        else:
            task_template[name] = by_name[tmpl]
        for dep in task.get("dependencies", []) or []:
            if dep not in task_names:
                out.append(_violation("dangling-dependency", name, f"task {name!r} depends on unknown task {dep!r}"))
            else:
                dep_edges.append((dep, name))

    cycle = find_cycle(task_names, dep_edges)
    if cycle:
        out.append(_violation("cycle", "dag.tasks", "task dependencies form a cycle: " + " -> ".join(cycle)))

    def template_outputs(template: dict) -> set[str]:
        outputs = template.get("outputs") or {}
        names = set()
        for p in outputs.get("parameters", []) if isinstance(outputs, dict) else []:
            if isinstance(p, dict) and isinstance(p.get("name"), str):
                names.add(p["name"])
        return names

    def template_inputs(template: dict) -> dict[str, bool]:
        """input name -> has default"""
        inputs = template.get("inputs") or {}
        result = {}
        for p in inputs.get("parameters", []) if isinstance(inputs, dict) else []:
            if isinstance(p, dict) and isinstance(p.get("name"), str):
                result[p["name"]] = "value" in p
        return result

    for task in tasks:
        if not isinstance(task, dict) or task.get("name") not in task_template:
            continue
        name = task["name"]
        template = task_template[name]
        declared = template_inputs(template)
        supplied = set()
        arguments = task.get("arguments") or {}
        for p in arguments.get("parameters", []) if isinstance(arguments, dict) else []:
            if not isinstance(p, dict) or not isinstance(p.get("name"), str):
                out.append(_violation("schema", name, f"task {name!r} has a malformed argument"))
                continue
            pname = p["name"]
            supplied.add(pname)
            if pname not in declared:
                out.append(
                    _violation(
                        "unknown-argument",
                        name,
                        f"task {name!r} passes {pname!r} which its template does not declare",
                    )
                )
            value = p.get("value")
            if not isinstance(value, str):
                continue
            for m in _WORKFLOW_PARAM_RE.finditer(value):
                if m.group(1) not in workflow_params:
                    out.append(
                        _violation(
                            "dangling-parameter",
                            name,
                            f"task {name!r} references undeclared workflow parameter {m.group(1)!r}",
                        )
                    )
            for m in _TASK_OUTPUT_RE.finditer(value):
                src, param = m.group(1), m.group(2)
                if src not in task_names:
                    out.append(
                        _violation(
                            "dangling-parameter",
                            name,
                            f"task {name!r} references outputs of unknown task {src!r}",
                        )
                    )
                elif src in task_template and param not in template_outputs(task_template[src]):
                    out.append(
                        _violation(
                            "dangling-parameter",
                            name,
                            f"task {name!r} references undeclared output {param!r} of task {src!r}",
                        )
                    )
        for pname, has_default in declared.items():
            if not has_default and pname not in supplied:
                out.append(
                    _violation(
                        "missing-argument",
                        name,
                        f"task {name!r} does not supply required template input {pname!r}",
                    )
                )

    for tname, template in by_name.items():
        if tname == entrypoint:
            continue
        http = template.get("http")
        if not isinstance(http, dict) or not isinstance(http.get("url"), str):
            out.append(_violation("schema", tname, f"template {tname!r} has no http.url"))

    return ValidationReport(tuple(out))


def _verify_local(document: str) -> ValidationReport:
    out: list[Violation] = []
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        return ValidationReport(
            (_violation("parse", f"line {exc.lineno}, column {exc.colno}", f"JSON parse error: {exc.msg}"),)
        )
    if not isinstance(doc, dict):
        return ValidationReport((_violation("schema", "document", "document is not an object"),))
    if doc.get("kind") != LOCAL_KIND or doc.get("version") != LOCAL_VERSION:
        out.append(_violation("schema", "document", f"expected kind {LOCAL_KIND!r} version {LOCAL_VERSION}"))
    if not isinstance(doc.get("dag_id"), str) or not doc.get("dag_id"):
        out.append(_violation("schema", "dag_id", "missing or empty dag_id"))

    steps = doc.get("steps")
    if not isinstance(steps, list):
        out.append(_violation("schema", "steps", "missing steps list"))
        return ValidationReport(tuple(out))

    entry_names = set()
    for p in doc.get("entry_params", []):
        if isinstance(p, dict) and isinstance(p.get("name"), str):
            entry_names.add(p["name"])

    by_id: dict[str, dict] = {}
    for i, step in enumerate(steps):
        where = f"steps[{i}]"
        if not isinstance(step, dict) or not isinstance(step.get("node_id"), str):
            out.append(_violation("schema", where, f"{where}: step without node_id"))
            continue
        nid = step["node_id"]
        if nid in by_id:
            out.append(_violation("duplicate-step", nid, f"duplicate step {nid!r}"))
        by_id[nid] = step
        if not isinstance(step.get("endpoint"), str):
            out.append(_violation("schema", nid, f"step {nid!r} has no endpoint"))

    dep_edges: list[tuple[str, str]] = []
    for nid, step in by_id.items():
        deps = step.get("depends_on", [])
        for dep in deps if isinstance(deps, list) else []:
            if dep not in by_id:
                out.append(_violation("dangling-dependency", nid, f"step {nid!r} depends on unknown step {dep!r}"))
            else:
                dep_edges.append((dep, nid))
        for binding in step.get("inputs", []) if isinstance(step.get("inputs"), list) else []:
            if not isinstance(binding, dict) or not isinstance(binding.get("source"), dict):
                out.append(_violation("schema", nid, f"step {nid!r} has a malformed input binding"))
                continue
            source = binding["source"]
            if source.get("kind") == "user":
                if source.get("name") not in entry_names:
                    out.append(
                        _violation(
                            "dangling-parameter",
                            nid,
                            f"step {nid!r} reads undeclared user input {source.get('name')!r}",
                        )
                    )
            elif source.get("kind") == "node":
                src = source.get("node_id")
                if src not in by_id:
                    out.append(_violation("dangling-parameter", nid, f"step {nid!r} reads from unknown step {src!r}"))
                else:
                    if source.get("param") not in (by_id[src].get("outputs") or []):
                        out.append(
                            _violation(
                                "dangling-parameter",
                                nid,
                                f"step {nid!r} reads undeclared output {source.get('param')!r} of {src!r}",
                            )
                        )
                    if src not in (step.get("depends_on") or []):
                        out.append(
                            _violation(
                                "inconsistent-dependencies",
                                nid,
                                f"step {nid!r} binds from {src!r} which is not in depends_on",
                            )
                        )
            else:
                out.append(_violation("schema", nid, f"step {nid!r} input has unknown source kind"))

    cycle = find_cycle(set(by_id), dep_edges)
    if cycle:
        out.append(_violation("cycle", "steps", "dependencies form a cycle: " + " -> ".join(cycle)))
        return ValidationReport(tuple(out))

    levels = doc.get("levels")
    if not isinstance(levels, list):
        out.append(_violation("schema", "levels", "missing levels list"))
    else:
        position: dict[str, int] = {}
        for depth, level in enumerate(levels):
            for nid in level if isinstance(level, list) else []:
                if nid in position:
                    out.append(_violation("schema", "levels", f"step {nid!r} appears in two levels"))
                position[nid] = depth
        if set(position) != set(by_id):
            out.append(_violation("schema", "levels", "levels do not partition the steps"))
        else:
            for src, tgt in dep_edges:
                if position[src] >= position[tgt]:
                    out.append(
                        _violation(
                            "schema",
                            "levels",
                            f"step {tgt!r} is not scheduled after its dependency {src!r}",
                        )
                    )

    return ValidationReport(tuple(out))


# --- argo task extraction (used for scoring LLM-written documents) -----------


@dataclass(frozen=True)
class ArgoArgument:
    """One task argument: a user-parameter ref, a task-output ref, or a literal."""

    name: str
    kind: str  # "workflow" | "task" | "literal"
    source_task: str | None = None
    source_param: str | None = None


@dataclass(frozen=True)
class ArgoTask:
    name: str
    template: str
    url: str | None
    dependencies: tuple[str, ...] = ()
    arguments: tuple[ArgoArgument, ...] = ()


def parse_argo_tasks(document: str) -> list[ArgoTask]:
    """Read the entrypoint DAG's tasks out of an Argo workflow document.

    Callers should gate documents through :func:`verify_compiled` first;
    this raises :class:`CompileError` on documents it cannot make sense of.
    """
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise CompileError(f"unparseable Argo document: {exc}") from exc
    if not isinstance(doc, dict):
        raise CompileError("Argo document is not a mapping")
    spec = doc.get("spec") or {}
    templates = {t.get("name"): t for t in spec.get("templates", []) if isinstance(t, dict)}
    entry = templates.get(spec.get("entrypoint"))
    if not entry:
        raise CompileError("entrypoint template not found")
    tasks_doc = (entry.get("dag") or {}).get("tasks", [])

    tasks = []
    for t in tasks_doc:
        if not isinstance(t, dict) or not isinstance(t.get("name"), str):
            continue
        template = templates.get(t.get("template"), {})
        url = (template.get("http") or {}).get("url") if isinstance(template, dict) else None
        arguments = []
        params = (t.get("arguments") or {}).get("parameters", [])
        for p in params if isinstance(params, list) else []:
            if not isinstance(p, dict) or not isinstance(p.get("name"), str):
                continue
            value = p.get("value")
            arg = ArgoArgument(p["name"], "literal")
            if isinstance(value, str):
                task_ref = _TASK_OUTPUT_RE.search(value)
                wf_ref = _WORKFLOW_PARAM_RE.search(value)
                if task_ref:
                    arg = ArgoArgument(p["name"], "task", task_ref.group(1), task_ref.group(2))
                elif wf_ref:
                    arg = ArgoArgument(p["name"], "workflow", None, wf_ref.group(1))
            arguments.append(arg)
        tasks.append(
            ArgoTask(
                name=t["name"],
                template=str(t.get("template")),
                url=url if isinstance(url, str) else None,
                dependencies=tuple(t.get("dependencies", []) or []),
                arguments=tuple(arguments),
            )
        )
    return tasks
