"""Evaluation harness: datasets, repetition protocol, and reporting.

A dataset directory holds function specs, cases (query, complexity label,
ground-truth DAG in canonical form, scripted transcript), and optional
metadata. ``run_eval`` generates every case several times under one or
more pipeline settings, gates each compiled document through the syntactic
verifier (failures score zero on all three metrics), scores survivors
against the truth, and aggregates per-setting, per-complexity means with
Student-t confidence intervals over the repetition means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, stdev
from typing import Iterable

from scipy import stats

from .compilers import verify_compiled
from .errors import DatasetError, FaasFlowError
from .identifier import UserQuery
from .llm import LlmGateway, ScriptedBackend
from .metrics import DEFAULT_WEIGHTS, CaseScores, score_views, view_from_argo, view_from_dag
from .model import WorkflowDAG, parse_dag
from .pipeline import SETTING_FULL, SETTINGS, run_setting
from .repository import FunctionRepository

#: Node-count bounds per complexity label.
COMPLEXITY_BOUNDS = {"easy": (1, 2), "intermediate": (3, 5), "hard": (6, 10)}
COMPLEXITIES = tuple(COMPLEXITY_BOUNDS)

METRICS = ("selection", "ordering", "dependency", "overall")


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    complexity: str
    query: UserQuery
    truth: WorkflowDAG
    transcript_path: Path


@dataclass(frozen=True)
class Dataset:
    name: str
    root: Path
    repo: FunctionRepository
    cases: tuple[EvalCase, ...]
    notes: tuple[str, ...] = ()
    case_errors: tuple[str, ...] = ()


def load_dataset(directory: str | Path, repo: FunctionRepository | None = None) -> Dataset:
    """Load a dataset directory; malformed cases are reported, not fatal."""
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    if repo is None:
        if not (root / "functions").is_dir():
            raise DatasetError(f"{root} has no functions/ directory")
        repo = FunctionRepository.load(root)

    name = root.name
    notes: list[str] = []
    meta_path = root / "metadata.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = meta.get("name", name)
        note = meta.get("note")
        if note:
            notes.append(str(note))

    functions = repo.index()
    cases: list[EvalCase] = []
    errors: list[str] = []
    for path in sorted((root / "cases").glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            case_id = doc["case_id"]
            complexity = doc["complexity"]
            if complexity not in COMPLEXITY_BOUNDS:
                raise DatasetError(f"unknown complexity {complexity!r}")
            truth_text = json.dumps(doc["truth"], sort_keys=True, indent=2, ensure_ascii=False)
            truth = parse_dag(truth_text, functions)
            low, high = COMPLEXITY_BOUNDS[complexity]
            if not (low <= len(truth.nodes) <= high):
                raise DatasetError(
                    f"{complexity} case must have {low}-{high} nodes, found {len(truth.nodes)}"
                )
            query_doc = doc["query"]
            query = UserQuery(query_doc["text"], dict(query_doc.get("user_inputs", {})))
            transcript = root / doc["transcript"]
            if not transcript.exists():
                raise DatasetError(f"transcript {transcript} does not exist")
            cases.append(EvalCase(case_id, complexity, query, truth, transcript))
        except (KeyError, ValueError, FaasFlowError) as exc:
            errors.append(f"{path.name}: {exc}")
    if not cases:
        raise DatasetError(f"no loadable cases under {root}: {errors}")
    return Dataset(name, root, repo, tuple(cases), tuple(notes), tuple(errors))


@dataclass(frozen=True)
class GenerationRecord:
    setting: str
    case_id: str
    complexity: str
    repetition: int
    scores: CaseScores
    syntactic_ok: bool
    error: str = ""
    document_path: str = ""

    def metric(self, name: str) -> float:
        return getattr(self.scores, name)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci_low: float
    ci_high: float
    repetitions: int


def _t_interval(values: list[float]) -> MetricSummary:
    """95% Student-t interval over repetition means."""
    m = mean(values)
    if len(values) < 2:
        return MetricSummary(m, m, m, len(values))
    s = stdev(values)
    half = float(stats.t.ppf(0.975, len(values) - 1)) * s / (len(values) ** 0.5)
    return MetricSummary(m, m - half, m + half, len(values))


@dataclass
class EvalReport:
    dataset: str
    settings: tuple[str, ...]
    repetitions: int
    weights: tuple[float, float, float]
    records: list[GenerationRecord] = field(default_factory=list)
    notes: tuple[str, ...] = ()
    case_errors: tuple[str, ...] = ()

    @property
    def syntactic_failures(self) -> int:
        return sum(1 for r in self.records if not r.syntactic_ok)

    def select(
        self, setting: str | None = None, complexity: str | None = None, case_id: str | None = None
    ) -> list[GenerationRecord]:
        return [
            r
            for r in self.records
            if (setting is None or r.setting == setting)
            and (complexity is None or r.complexity == complexity)
            and (case_id is None or r.case_id == case_id)
        ]

    def aggregate(
        self, setting: str, metric: str = "overall", complexity: str | None = None
    ) -> MetricSummary:
        """Mean and 95% interval over per-repetition means of ``metric``."""
        records = self.select(setting, complexity)
        if not records:
            return MetricSummary(0.0, 0.0, 0.0, 0)
        by_rep: dict[int, list[float]] = {}
        for r in records:
            by_rep.setdefault(r.repetition, []).append(r.metric(metric))
        rep_means = [mean(v) for _, v in sorted(by_rep.items())]
        return _t_interval(rep_means)

    def to_doc(self) -> dict:
        doc = {
            "dataset": self.dataset,
            "settings": list(self.settings),
            "repetitions": self.repetitions,
            "weights": list(self.weights),
            "syntactic_failures": self.syntactic_failures,
            "notes": list(self.notes),
            "case_errors": list(self.case_errors),
            "records": [
                {
                    "setting": r.setting,
                    "case_id": r.case_id,
                    "complexity": r.complexity,
                    "repetition": r.repetition,
                    "selection": r.scores.selection,
                    "ordering": r.scores.ordering,
                    "dependency": r.scores.dependency,
                    "overall": r.scores.overall,
                    "syntactic_ok": r.syntactic_ok,
                    "error": r.error,
                    "document_path": r.document_path,
                }
                for r in self.records
            ],
            "aggregates": {},
        }
        for setting in self.settings:
            rows = {}
            for complexity in (*COMPLEXITIES, None):
                label = complexity or "all"
                rows[label] = {
                    metric: vars(self.aggregate(setting, metric, complexity))
                    for metric in METRICS
                }
            doc["aggregates"][setting] = rows
        return doc

    def render_table(self) -> str:
        """Human-readable per-setting, per-complexity summary table."""
        lines = []
        lines.append(f"dataset: {self.dataset}   repetitions: {self.repetitions}")
        for note in self.notes:
            lines.append(f"note: {note}")
        if self.case_errors:
            lines.append(f"case errors: {len(self.case_errors)} (skipped)")
        lines.append(f"syntactic failures: {self.syntactic_failures}")
        header = (
            f"{'setting':<18}{'complexity':<14}{'cases':>6}"
            + "".join(f"{m:>20}" for m in METRICS)
        )
        lines.append(header)
        lines.append("-" * len(header))
        for setting in self.settings:
            for complexity in (*COMPLEXITIES, None):
                records = self.select(setting, complexity)
                if not records:
                    continue
                label = complexity or "all"
                cases = len({r.case_id for r in records})
                cells = []
                for metric in METRICS:
                    summary = self.aggregate(setting, metric, complexity)
                    half = (summary.ci_high - summary.ci_low) / 2.0
                    cells.append(f"{summary.mean:.3f} +/-{half:.3f}")
                lines.append(
                    f"{setting:<18}{label:<14}{cases:>6}" + "".join(f"{c:>20}" for c in cells)
                )
        return "\n".join(lines) + "\n"


def run_eval(
    dataset: Dataset,
    settings: Iterable[str] = (SETTING_FULL,),
    repetitions: int = 5,
    k: int = 5,
    out_dir: str | Path | None = None,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    score_mode: str = "recall",
    max_retries: int = 2,
) -> EvalReport:
    """Generate, verify, and score every case under every setting.

    Each generation gets a fresh scripted backend (replay cursors reset),
    so repetitions are independent and the whole run is deterministic.
    Generations that raise, or whose compiled document fails the syntactic
    verifier, score zero on all three metrics.
    """
    settings = tuple(settings)
    unknown = [s for s in settings if s not in SETTINGS]
    if unknown:
        raise FaasFlowError(f"unknown settings {unknown}; expected a subset of {SETTINGS}")
    report = EvalReport(
        dataset=dataset.name,
        settings=settings,
        repetitions=repetitions,
        weights=weights,
        notes=dataset.notes,
        case_errors=dataset.case_errors,
    )
    endpoint_functions = {fn.endpoint: fn.id for fn in dataset.repo.functions()}
    out_root = Path(out_dir) if out_dir is not None else None

    for setting in settings:
        for case in dataset.cases:
            truth_view = view_from_dag(case.truth)
            for repetition in range(1, repetitions + 1):
                gateway = LlmGateway(ScriptedBackend(case.transcript_path))
                document_path = ""
                try:
                    result = run_setting(
                        setting, case.query, dataset.repo, gateway, k=k, max_retries=max_retries
                    )
                except FaasFlowError as exc:
                    report.records.append(
                        GenerationRecord(
                            setting, case.case_id, case.complexity, repetition,
                            CaseScores.zero(), syntactic_ok=False, error=str(exc),
                        )
                    )
                    continue
                if out_root is not None:
                    target_dir = out_root / setting / case.case_id
                    target_dir.mkdir(parents=True, exist_ok=True)
                    path = target_dir / f"rep{repetition}.yaml"
                    path.write_text(result.compiled.document, encoding="utf-8")
                    document_path = str(path)
                gate = verify_compiled(result.compiled)
                if not gate.ok:
                    report.records.append(
                        GenerationRecord(
                            setting, case.case_id, case.complexity, repetition,
                            CaseScores.zero(), syntactic_ok=False,
                            error="; ".join(v.message for v in gate.violations),
                            document_path=document_path,
                        )
                    )
                    continue
                pred_view = view_from_argo(result.compiled.document, endpoint_functions)
                scores = score_views(pred_view, truth_view, weights, score_mode)
                report.records.append(
                    GenerationRecord(
                        setting, case.case_id, case.complexity, repetition,
                        scores, syntactic_ok=True, document_path=document_path,
                    )
                )
    return report
