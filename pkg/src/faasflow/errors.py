"""Exception hierarchy shared across the package.

Everything user-facing derives from :class:`FaasFlowError` so callers (and
the CLI) can distinguish expected failures from bugs.
"""

from __future__ import annotations


class FaasFlowError(Exception):
    """Base class for all errors raised by this package."""


class DagParseError(FaasFlowError):
    """A workflow document could not be parsed.

    ``locus`` points at the first malformed element (a line/column for
    syntax errors, a field path otherwise).
    """

    def __init__(self, message: str, locus: str = "") -> None:
        self.locus = locus
        super().__init__(f"{message} (at {locus})" if locus else message)


class InvalidDagError(FaasFlowError):
    """An operation that requires a valid DAG received an invalid one."""

    def __init__(self, message: str, report=None) -> None:
        self.report = report
        if report is not None and report.violations:
            detail = "; ".join(v.message for v in report.violations)
            message = f"{message}: {detail}"
        super().__init__(message)


class CycleError(FaasFlowError):
    """A directed cycle was found; ``cycle`` lists the node ids on it."""

    def __init__(self, cycle: list[str]) -> None:
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle + self.cycle[:1]))


class DuplicateFunctionError(FaasFlowError):
    pass


class EmptyRepositoryError(FaasFlowError):
    pass


class EmbeddingError(FaasFlowError):
    """Embedding provider failure; callers may retry."""


class MissingPlaceholderError(FaasFlowError):
    def __init__(self, template_id: str, names: list[str]) -> None:
        self.template_id = template_id
        self.names = list(names)
        super().__init__(
            f"template '{template_id}' is missing bindings for: {', '.join(sorted(names))}"
        )


class BackendError(FaasFlowError):
    """The chat-completion backend could not produce a reply."""


class StructuredParseError(FaasFlowError):
    """All reply attempts violated the template schema.

    Carries the last raw reply so callers can log or inspect it.
    """

    def __init__(self, message: str, raw_text: str, attempts: int) -> None:
        self.raw_text = raw_text
        self.attempts = attempts
        super().__init__(message)


class EmptyPlanError(FaasFlowError):
    pass


class SelectionError(FaasFlowError):
    def __init__(self, message: str, subtask_index: int) -> None:
        self.subtask_index = subtask_index
        super().__init__(f"{message} (sub-task {subtask_index})")


class OrderingError(FaasFlowError):
    pass


class ClassificationError(FaasFlowError):
    def __init__(self, message: str, node_id: str, param: str) -> None:
        self.node_id = node_id
        self.param = param
        super().__init__(f"{message} (node {node_id}, parameter {param!r})")


class AssemblyError(FaasFlowError):
    """The assembled DAG failed validation; ``report`` holds the violations."""

    def __init__(self, report) -> None:
        self.report = report
        detail = "; ".join(v.message for v in report.violations)
        super().__init__(f"assembled workflow is invalid: {detail}")


class CompileError(FaasFlowError):
    pass


class WrongTargetError(FaasFlowError):
    pass


class RegistrationConflictError(FaasFlowError):
    pass


class MissingInputError(FaasFlowError):
    def __init__(self, names: list[str]) -> None:
        self.names = sorted(names)
        super().__init__("missing required workflow input(s): " + ", ".join(self.names))


class FunctionCallError(FaasFlowError):
    """A function endpoint call failed (network, non-2xx, or bad body)."""

    def __init__(self, message: str, status: int | None = None, body: str = "") -> None:
        self.status = status
        self.body = body
        super().__init__(message)


class DatasetError(FaasFlowError):
    pass
