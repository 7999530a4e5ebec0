"""Function repository: spec storage plus embedding-based retrieval.

Function specs are embedded once at registration from their name,
description, and parameter descriptions; queries are ranked against the
whole repository by cosine similarity (plain linear scan — repositories of
a few thousand functions need nothing cleverer).

Two providers ship here: a deterministic token-hash embedder used by tests
and offline runs, and a client for a remote HTTP embedding service.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
import requests

from .errors import DuplicateFunctionError, EmbeddingError, EmptyRepositoryError, FaasFlowError
from .model import DATA_TYPES, FunctionSpec, ParameterSpec, is_absolute_url


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class RankedFunction:
    function: FunctionSpec
    score: float


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


_STOP_TOKENS = frozenset(
    "a an and are as at be by for from has in into is it its of on or that the their then this to with".split()
)


class TokenHashEmbedder:
    """Deterministic offline embedder.

    Each whitespace token (lowercased, edge punctuation stripped, stop
    words dropped) is hashed to one of ``dimension`` buckets; the
    bucket-count vector is L2-normalized. Crude, but stable across runs and
    machines, which is what scripted pipelines need.
    """

    def __init__(self, dimension: int = 256) -> None:
        self.dimension = dimension
        self.provider_id = f"token-hash-{dimension}"

    def embed(self, text: str) -> EmbeddingVector:
        if not text.split():
            raise EmbeddingError("cannot embed empty text")
        tokens = [t.strip(".,;:()[]{}'\"?!") for t in text.lower().split()]
        content = [t for t in tokens if t and t not in _STOP_TOKENS]
        counts = np.zeros(self.dimension, dtype=np.float64)
        for token in content or [t for t in tokens if t] or [""]:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            counts[int.from_bytes(digest[:8], "big") % self.dimension] += 1.0
        counts /= np.linalg.norm(counts)
        return EmbeddingVector(tuple(counts.tolist()))


class RemoteEmbedder:
    """Client for an embeddings HTTP API (OpenAI-style request shape)."""

    def __init__(self, base_url: str, model: str, dimension: int, api_key: str = "", timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key = api_key
        self.timeout = timeout
        self.provider_id = f"remote-{model}"

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmbeddingError("cannot embed empty text")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise EmbeddingError(f"embedding service returned {resp.status_code}")
        try:
            values = resp.json()["data"][0]["embedding"]
        except (ValueError, KeyError, IndexError) as exc:
            raise EmbeddingError("malformed embedding service response") from exc
        if len(values) != self.dimension:
            raise EmbeddingError(
                f"provider returned dimension {len(values)}, expected {self.dimension}"
            )
        return EmbeddingVector(tuple(float(v) for v in values))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b) / (|a| * |b|); requires equal dimensions and non-zero vectors."""
    if a.dimension != b.dimension:
        raise FaasFlowError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    va, vb = a.as_array(), b.as_array()
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise FaasFlowError("cosine similarity is undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def embedding_text(spec: FunctionSpec) -> str:
    """Text a function is embedded from: name, description, and parameter
    name/description pairs (parameter semantics matter for routing data)."""
    parts = [spec.name.replace("_", " ")]
    if spec.description:
        parts.append(spec.description)
    for p in spec.inputs:
        parts.append(f"{p.name}: {p.description}" if p.description else p.name)
    for p in spec.outputs:
        parts.append(f"{p.name}: {p.description}" if p.description else p.name)
    return "\n".join(parts)


def check_function_spec(spec: FunctionSpec) -> list[str]:
    """Spec-level problems as human-readable strings (empty list = fine)."""
    problems = []
    if not spec.id:
        problems.append("function id is empty")
    if not spec.name:
        problems.append("function name is empty")
    if not is_absolute_url(spec.endpoint):
        problems.append(f"endpoint {spec.endpoint!r} is not an absolute URL")
    for kind, params in (("input", spec.inputs), ("output", spec.outputs)):
        seen = set()
        for p in params:
            if not p.name:
                problems.append(f"{kind} parameter with empty name")
            if p.data_type not in DATA_TYPES:
                problems.append(f"{kind} {p.name!r} has unknown data_type {p.data_type!r}")
            if p.name in seen:
                problems.append(f"duplicate {kind} parameter {p.name!r}")
            seen.add(p.name)
    return problems


class FunctionRepository:
    """In-memory function store with embedding retrieval and persistence.

    Reads may run concurrently; registration takes the writer lock and
    retrieval works on a snapshot, so in-flight generations always see a
    consistent repository.
    """

    def __init__(self, provider: EmbeddingProvider | None = None) -> None:
        self.provider = provider or TokenHashEmbedder()
        self._functions: dict[str, FunctionSpec] = {}
        self._vectors: dict[str, EmbeddingVector] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._functions)

    def __contains__(self, function_id: str) -> bool:
        return function_id in self._functions

    def get(self, function_id: str) -> FunctionSpec | None:
        return self._functions.get(function_id)

    def functions(self) -> list[FunctionSpec]:
        with self._lock:
            return sorted(self._functions.values(), key=lambda f: f.id)

    def index(self) -> dict[str, FunctionSpec]:
        with self._lock:
            return dict(self._functions)

    def embedding(self, function_id: str) -> EmbeddingVector | None:
        return self._vectors.get(function_id)

    def register_function(self, spec: FunctionSpec) -> str:
        problems = check_function_spec(spec)
        if problems:
            raise FaasFlowError(f"invalid function spec {spec.id!r}: " + "; ".join(problems))
        vector = self.provider.embed(embedding_text(spec))
        with self._lock:
            if spec.id in self._functions:
                raise DuplicateFunctionError(f"function id {spec.id!r} already registered")
            self._functions[spec.id] = spec
            self._vectors[spec.id] = vector
        return spec.id

    def embed(self, text: str) -> EmbeddingVector:
        return self.provider.embed(text)

    def top_k(self, query_text: str, k: int = 5) -> list[RankedFunction]:
        """The k most similar functions, best first.

        Scores within 1e-9 rank as ties, broken by ascending function id,
        which keeps the ordering stable across BLAS implementations.
        """
        if k < 1:
            raise FaasFlowError("k must be >= 1")
        with self._lock:
            if not self._functions:
                raise EmptyRepositoryError("repository is empty")
            items = [(fid, self._vectors[fid]) for fid in self._functions]
        query = self.provider.embed(query_text)
        scored = [(fid, cosine_similarity(query, vec)) for fid, vec in items]
        scored.sort(key=lambda item: (-round(item[1], 9), item[0]))
        return [RankedFunction(self._functions[fid], score) for fid, score in scored[:k]]

    # --- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        """Write one spec file per function plus an embeddings sidecar."""
        directory = Path(directory)
        (directory / "functions").mkdir(parents=True, exist_ok=True)
        with self._lock:
            functions = dict(self._functions)
            vectors = dict(self._vectors)
        for fid, spec in functions.items():
            path = directory / "functions" / f"{fid}.json"
            path.write_text(function_spec_to_json(spec), encoding="utf-8")
        sidecar = directory / "embeddings.json"
        existing = {}
        if sidecar.exists():
            existing = json.loads(sidecar.read_text(encoding="utf-8"))
        existing[self.provider.provider_id] = {
            fid: list(vec.values) for fid, vec in sorted(vectors.items())
        }
        sidecar.write_text(json.dumps(existing, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path, provider: EmbeddingProvider | None = None) -> "FunctionRepository":
        """Load specs and, when present, the sidecar vectors for the provider."""
        directory = Path(directory)
        repo = cls(provider)
        stored: dict[str, list[float]] = {}
        sidecar = directory / "embeddings.json"
        if sidecar.exists():
            stored = json.loads(sidecar.read_text(encoding="utf-8")).get(repo.provider.provider_id, {})
        spec_dir = directory / "functions"
        if not spec_dir.is_dir():
            raise FaasFlowError(f"no functions directory under {directory}")
        for path in sorted(spec_dir.glob("*.json")):
            spec = parse_function_spec(path.read_text(encoding="utf-8"), source=str(path))
            if spec.id in stored:
                with repo._lock:
                    if spec.id in repo._functions:
                        raise DuplicateFunctionError(f"function id {spec.id!r} already registered")
                    repo._functions[spec.id] = spec
                    repo._vectors[spec.id] = EmbeddingVector(tuple(stored[spec.id]))
            else:
                repo.register_function(spec)
        return repo


def function_spec_to_json(spec: FunctionSpec) -> str:
    doc = {
        "id": spec.id,
        "name": spec.name,
        "description": spec.description,
        "endpoint": spec.endpoint,
        "inputs": [
            {"name": p.name, "data_type": p.data_type, "description": p.description, "required": p.required}
            for p in spec.inputs
        ],
        "outputs": [
            {"name": p.name, "data_type": p.data_type, "description": p.description}
            for p in spec.outputs
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def parse_function_spec(text: str, source: str = "<string>") -> FunctionSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FaasFlowError(f"{source}: malformed function spec: {exc.msg}") from exc

    def params(key: str, default_required: bool) -> tuple[ParameterSpec, ...]:
        out = []
        for p in doc.get(key, []):
            out.append(
                ParameterSpec(
                    name=p.get("name", ""),
                    data_type=p.get("data_type", "string"),
                    description=p.get("description", ""),
                    required=bool(p.get("required", default_required)),
                )
            )
        return tuple(out)

    try:
        return FunctionSpec(
            id=doc["id"],
            name=doc.get("name", doc["id"]),
            description=doc.get("description", ""),
            endpoint=doc["endpoint"],
            inputs=params("inputs", True),
            outputs=params("outputs", True),
        )
    except (KeyError, TypeError) as exc:
        raise FaasFlowError(f"{source}: function spec missing field {exc}") from exc


def load_function_specs(paths: Iterable[str | Path]) -> list[FunctionSpec]:
    return [parse_function_spec(Path(p).read_text(encoding="utf-8"), source=str(p)) for p in paths]
