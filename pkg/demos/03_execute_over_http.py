"""Running a compiled workflow end to end over HTTP.

Spins up a mock FaaS engine (plain HTTP handlers), registers a compiled
workflow with the gateway, invokes it through the gateway's REST API, and
fetches the execution trace — the same surface a deployed gateway exposes.
"""

import json

import requests

from faasflow import compile_local, serve_gateway, serve_mock_faas, WorkflowGateway
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

faas = serve_mock_faas(
    {
        "/fn/double": lambda args: {"value": args["x"] * 2},
        "/fn/add": lambda args: {"sum": args["a"] + args["b"]},
    }
)

double = FunctionSpec(
    id="double", name="double", description="Double a number.",
    endpoint=faas.url_for("/fn/double"),
    inputs=(ParameterSpec("x", "number", "number to double"),),
    outputs=(ParameterSpec("value", "number", "doubled number"),),
)
add = FunctionSpec(
    id="add", name="add", description="Add two numbers.",
    endpoint=faas.url_for("/fn/add"),
    inputs=(ParameterSpec("a", "number", "first addend"), ParameterSpec("b", "number", "second addend")),
    outputs=(ParameterSpec("sum", "number", "the sum"),),
)

dag = WorkflowDAG(
    dag_id="wf-arith-demo",
    query="double x, then add b",
    user_inputs=(ParameterSpec("b", "number", "second addend"), ParameterSpec("x", "number", "number to double")),
    nodes=(
        WorkflowNode("n0", SubTask(0, "double the number"), double),
        WorkflowNode("n1", SubTask(1, "add the offset"), add),
    ),
    edges=(
        DataFlowEdge(START_NODE_ID, "n0", ParamBinding("n0", "x", UserInput("x"))),
        DataFlowEdge("n0", "n1", ParamBinding("n1", "a", NodeOutput("n0", "value"))),
        DataFlowEdge(START_NODE_ID, "n1", ParamBinding("n1", "b", UserInput("b"))),
    ),
)

gateway = WorkflowGateway()
api = serve_gateway(gateway)

created = requests.post(api.url + "/workflows", data=compile_local(dag).document).json()
print(f"registered: {created}")

result = requests.post(api.url + created["endpoint"], json={"x": 2, "b": 5}).json()
print(f"invoke x=2, b=5 -> {result}")

trace = requests.get(api.url + f"/invocations/{result['invocation_id']}").json()
print("trace:")
print(json.dumps(trace, indent=2))

api.close()
faas.close()
