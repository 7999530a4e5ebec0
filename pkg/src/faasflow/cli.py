"""Command-line entry point.

Subcommands cover the developer surface: manage the function repository,
generate a workflow from a query, compile it for a target, serve the
gateway, invoke a registered workflow, and run the evaluation harness.

Configuration precedence is flags > environment (``FAASFLOW_*``) > config
file (``--config``, JSON). Exit codes: 0 success, 1 user error, 2
internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import requests

from .compilers import compile_dag, verify_compiled
from .errors import FaasFlowError
from .evaluation import load_dataset, run_eval
from .execution import Orchestrator, WorkflowGateway, call_function, serve_gateway
from .identifier import UserQuery
from .llm import LlmGateway, RemoteChatBackend, ScriptedBackend
from .model import canonical_serialize, parse_dag, validate_dag
from .pipeline import SETTING_FULL, SETTINGS, generate_workflow
from .repository import FunctionRepository, load_function_specs

ENV_PREFIX = "FAASFLOW_"


class _Config:
    """flags > env > config file."""

    def __init__(self, config_path: str | None) -> None:
        self.file: dict = {}
        if config_path:
            self.file = json.loads(Path(config_path).read_text(encoding="utf-8"))

    def resolve(self, name: str, flag_value, default=None):
        if flag_value is not None:
            return flag_value
        env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
        if env is not None:
            return env
        return self.file.get(name, default)


def _open_repo(path: str) -> FunctionRepository:
    return FunctionRepository.load(path)


def _make_gateway(backend_spec: str) -> LlmGateway:
    if backend_spec.startswith("scripted:"):
        transcript = backend_spec.split(":", 1)[1]
        if not Path(transcript).exists():
            raise FaasFlowError(f"transcript file {transcript} does not exist")
        return LlmGateway(ScriptedBackend(transcript))
    if backend_spec == "remote":
        return LlmGateway(RemoteChatBackend.from_env())
    raise FaasFlowError(f"unknown backend {backend_spec!r}; use 'remote' or 'scripted:<path>'")


def cmd_repo(args: argparse.Namespace, config: _Config) -> int:
    repo_dir = Path(config.resolve("repo", args.repo, "repo"))
    if args.action == "add":
        if repo_dir.joinpath("functions").is_dir():
            repo = FunctionRepository.load(repo_dir)
        else:
            repo = FunctionRepository()
        failures = []
        added = 0
        for path in args.files:
            try:
                for spec in load_function_specs([path]):
                    repo.register_function(spec)
                    added += 1
            except FaasFlowError as exc:
                failures.append(f"{path}: {exc}")
        repo.save(repo_dir)
        print(f"registered {added} function(s) in {repo_dir}")
        for failure in failures:
            print(f"error: {failure}", file=sys.stderr)
        return 1 if failures else 0
    repo = _open_repo(repo_dir)
    if args.action == "list":
        for fn in repo.functions():
            print(f"{fn.id}\t{fn.name}\t{fn.description}")
        return 0
    if args.action == "show":
        fn = repo.get(args.function_id)
        if fn is None:
            print(f"error: no function {args.function_id!r}", file=sys.stderr)
            return 1
        from .repository import function_spec_to_json

        print(function_spec_to_json(fn), end="")
        return 0
    raise FaasFlowError(f"unknown repo action {args.action!r}")


def cmd_generate(args: argparse.Namespace, config: _Config) -> int:
    repo = _open_repo(config.resolve("repo", args.repo, "repo"))
    if len(repo) == 0:
        raise FaasFlowError(
            "the function repository is empty; register functions first with 'faasflow repo add'"
        )
    gateway = _make_gateway(config.resolve("backend", args.backend, "remote"))
    k = int(config.resolve("k", args.k, 5))
    user_inputs = {}
    for item in args.input or []:
        name, _, value = item.partition("=")
        user_inputs[name] = value
    query = UserQuery(args.query, user_inputs)
    dag = generate_workflow(query, repo, gateway, k=k)
    text = canonical_serialize(dag)
    out = Path(args.out or f"{dag.dag_id}.json")
    out.write_text(text, encoding="utf-8")
    report = validate_dag(dag)
    print(f"workflow {dag.dag_id}: {len(dag.nodes)} node(s), {len(dag.edges)} edge(s)")
    print(f"wrote {out}")
    return 0 if report.ok else 1


def cmd_compile(args: argparse.Namespace, config: _Config) -> int:
    repo = _open_repo(config.resolve("repo", args.repo, "repo"))
    text = Path(args.dag_file).read_text(encoding="utf-8")
    dag = parse_dag(text, repo.index())
    target = config.resolve("target", args.target, "argo")
    compiled = compile_dag(dag, target)
    suffix = "yaml" if compiled.target == "argo-yaml" else "json"
    out = Path(args.out or f"{dag.dag_id}.{suffix}")
    out.write_text(compiled.document, encoding="utf-8")
    gate = verify_compiled(compiled)
    print(f"compiled {dag.dag_id} for {compiled.target} -> {out}")
    return 0 if gate.ok else 1


def cmd_serve(args: argparse.Namespace, config: _Config) -> int:
    listen = config.resolve("listen", args.listen, "127.0.0.1:8080")
    host, _, port = listen.partition(":")
    retries = int(config.resolve("retries", args.retries, 2))

    def caller(endpoint, call_args):
        return call_function(endpoint, call_args, retries=retries)

    gateway = WorkflowGateway(Orchestrator(caller=caller))
    handle = serve_gateway(gateway, host, int(port or 0))
    print(f"gateway listening on {handle.url}")
    from .compilers import LOCAL_TARGET, CompiledWorkflow

    for path in args.register or []:
        document = Path(path).read_text(encoding="utf-8")
        dag_id = json.loads(document).get("dag_id", "")
        registration = gateway.register(CompiledWorkflow(LOCAL_TARGET, document, dag_id))
        print(f"registered {registration.workflow_id} at {handle.url}{registration.endpoint_path}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        handle.close()
    return 0


def cmd_invoke(args: argparse.Namespace, config: _Config) -> int:
    gateway_url = config.resolve("gateway", args.gateway, "http://127.0.0.1:8080")
    inputs = json.loads(args.inputs_json) if args.inputs_json else {}
    for item in args.input or []:
        name, _, value = item.partition("=")
        try:
            inputs[name] = json.loads(value)
        except ValueError:
            inputs[name] = value
    response = requests.post(
        f"{gateway_url.rstrip('/')}/workflows/{args.workflow_id}/invoke", json=inputs, timeout=60
    )
    payload = response.json()
    if response.status_code != 200:
        print(f"error: {payload.get('error', response.text)}", file=sys.stderr)
        return 1
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0 if payload.get("status") == "succeeded" else 1


def cmd_eval(args: argparse.Namespace, config: _Config) -> int:
    dataset = load_dataset(args.dataset_dir)
    settings = tuple((config.resolve("settings", args.settings, SETTING_FULL)).split(","))
    from .metrics import DEFAULT_WEIGHTS

    weights = DEFAULT_WEIGHTS
    weights_text = config.resolve("weights", args.weights, None)
    if weights_text:
        parts = [float(w) for w in str(weights_text).split(",")]
        if len(parts) != 3:
            raise FaasFlowError("--weights needs three comma-separated numbers")
        weights = (parts[0], parts[1], parts[2])

    report = run_eval(
        dataset,
        settings=settings,
        repetitions=int(config.resolve("repetitions", args.repetitions, 5)),
        k=int(config.resolve("k", args.k, 5)),
        out_dir=args.out,
        weights=weights,
        score_mode="f1" if args.f1 else "recall",
    )
    print(report.render_table(), end="")
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_doc(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faasflow",
        description="Generate, compile, execute, and evaluate FaaS workflow DAGs.",
    )
    parser.add_argument("--config", help="JSON config file (lowest precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_repo = sub.add_parser("repo", help="manage the function repository")
    repo_sub = p_repo.add_subparsers(dest="action", required=True)
    p_add = repo_sub.add_parser("add", help="ingest function spec files")
    p_add.add_argument("files", nargs="+", help="function spec files")
    p_add.add_argument("--repo", help="repository directory")
    p_list = repo_sub.add_parser("list", help="list registered functions")
    p_list.add_argument("--repo", help="repository directory")
    p_show = repo_sub.add_parser("show", help="print one function spec")
    p_show.add_argument("function_id")
    p_show.add_argument("--repo", help="repository directory")
    p_repo.set_defaults(func=cmd_repo)
    for sub_parser in (p_add, p_list, p_show):
        sub_parser.set_defaults(func=cmd_repo)

    p_gen = sub.add_parser("generate", help="generate a workflow DAG from a query")
    p_gen.add_argument("query")
    p_gen.add_argument("--repo", help="repository directory")
    p_gen.add_argument("--backend", help="'remote' or 'scripted:<transcript path>'")
    p_gen.add_argument("--k", type=int, help="top-k candidates per sub-task")
    p_gen.add_argument("--input", action="append", help="name=value user input")
    p_gen.add_argument("--out", help="output DAG file")
    p_gen.set_defaults(func=cmd_generate)

    p_compile = sub.add_parser("compile", help="compile a DAG file for a target")
    p_compile.add_argument("dag_file")
    p_compile.add_argument("--repo", help="repository directory")
    p_compile.add_argument("--target", choices=["argo", "local"], help="compile target")
    p_compile.add_argument("--out", help="output file")
    p_compile.set_defaults(func=cmd_compile)

    p_serve = sub.add_parser("serve", help="serve the workflow gateway")
    p_serve.add_argument("--listen", help="host:port (default 127.0.0.1:8080)")
    p_serve.add_argument("--register", action="append", help="local-json workflow to register")
    p_serve.add_argument("--retries", type=int, help="network retries per function call (default 2)")
    p_serve.set_defaults(func=cmd_serve)

    p_invoke = sub.add_parser("invoke", help="invoke a registered workflow")
    p_invoke.add_argument("workflow_id")
    p_invoke.add_argument("--gateway", help="gateway base URL")
    p_invoke.add_argument("--input", action="append", help="name=value workflow input")
    p_invoke.add_argument("--inputs-json", help="JSON object of workflow inputs")
    p_invoke.set_defaults(func=cmd_invoke)

    p_eval = sub.add_parser("eval", help="run the evaluation harness on a dataset")
    p_eval.add_argument("dataset_dir")
    p_eval.add_argument("--settings", help=f"comma-separated subset of {','.join(SETTINGS)}")
    p_eval.add_argument("--repetitions", type=int, help="generations per case (default 5)")
    p_eval.add_argument("--k", type=int, help="top-k candidates per sub-task")
    p_eval.add_argument("--out", help="directory for compiled documents")
    p_eval.add_argument("--report", help="write the JSON report here")
    p_eval.add_argument("--weights", help="three comma-separated metric weights")
    p_eval.add_argument("--f1", action="store_true", help="score with F1 instead of recall")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _Config(args.config)
        return args.func(args, config)
    except FaasFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, requests.RequestException) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # pragma: no cover - internal failure surface
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
