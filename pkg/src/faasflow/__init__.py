"""faasflow: natural-language queries to executable FaaS workflow DAGs.

The pipeline plans sub-tasks, retrieves and selects functions, builds the
dataflow DAG, compiles it for an orchestrator, and can execute and score
the result. See the README for the full tour.
"""

from .compilers import (
    ARGO_TARGET,
    LOCAL_TARGET,
    CompiledWorkflow,
    compile_argo,
    compile_dag,
    compile_local,
    verify_compiled,
)
from .errors import FaasFlowError
from .evaluation import Dataset, EvalReport, load_dataset, run_eval
from .execution import (
    Orchestrator,
    WorkflowGateway,
    call_function,
    serve_gateway,
    serve_mock_faas,
)
from .generator import assemble_dag, build_dataflow, classify_parameter, order_nodes
from .identifier import UserQuery, identify, plan_tasks, select_function
from .llm import LlmGateway, PromptRequest, RemoteChatBackend, ScriptedBackend, StructuredReply
from .metrics import (
    score_dags,
    score_data_dependency,
    score_function_selection,
    score_topological_order,
)
from .model import (
    START_NODE_ID,
    DataFlowEdge,
    FunctionSpec,
    NodeOutput,
    ParamBinding,
    ParameterSpec,
    SubTask,
    UserInput,
    ValidationReport,
    WorkflowDAG,
    WorkflowNode,
    canonical_serialize,
    parse_dag,
    topological_order,
    validate_dag,
)
from .pipeline import (
    SETTING_FULL,
    SETTING_NO_COMPILER,
    SETTING_NO_WG_COMPILER,
    SETTINGS,
    generate_workflow,
    run_setting,
)
from .repository import (
    EmbeddingVector,
    FunctionRepository,
    RankedFunction,
    RemoteEmbedder,
    TokenHashEmbedder,
    cosine_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "ARGO_TARGET",
    "LOCAL_TARGET",
    "START_NODE_ID",
    "SETTINGS",
    "SETTING_FULL",
    "SETTING_NO_COMPILER",
    "SETTING_NO_WG_COMPILER",
    "CompiledWorkflow",
    "DataFlowEdge",
    "Dataset",
    "EmbeddingVector",
    "EvalReport",
    "FaasFlowError",
    "FunctionRepository",
    "FunctionSpec",
    "LlmGateway",
    "NodeOutput",
    "Orchestrator",
    "ParamBinding",
    "ParameterSpec",
    "PromptRequest",
    "RankedFunction",
    "RemoteChatBackend",
    "RemoteEmbedder",
    "ScriptedBackend",
    "StructuredReply",
    "SubTask",
    "TokenHashEmbedder",
    "UserInput",
    "UserQuery",
    "ValidationReport",
    "WorkflowDAG",
    "WorkflowGateway",
    "WorkflowNode",
    "assemble_dag",
    "build_dataflow",
    "call_function",
    "canonical_serialize",
    "classify_parameter",
    "compile_argo",
    "compile_dag",
    "compile_local",
    "cosine_similarity",
    "generate_workflow",
    "identify",
    "load_dataset",
    "order_nodes",
    "parse_dag",
    "plan_tasks",
    "run_eval",
    "run_setting",
    "score_dags",
    "score_data_dependency",
    "score_function_selection",
    "score_topological_order",
    "select_function",
    "serve_gateway",
    "serve_mock_faas",
    "topological_order",
    "validate_dag",
    "verify_compiled",
]
