from __future__ import annotations

from pathlib import Path

import pytest

from faasflow.bundled import FIXTURE_CASES, build_truth, fixture_repository

REPO_ROOT = Path(__file__).resolve().parent.parent
BUNDLED_DATASET = REPO_ROOT / "dataset" / "bundled"
ABLATION_DATASET = REPO_ROOT / "dataset" / "ablation-demo"


@pytest.fixture(scope="session")
def repo():
    return fixture_repository()


@pytest.fixture(scope="session")
def truth_dags(repo):
    return {case.case_id: build_truth(case, repo) for case in FIXTURE_CASES}


@pytest.fixture(scope="session")
def bundled_dataset_dir() -> Path:
    assert BUNDLED_DATASET.is_dir(), "bundled dataset missing; run python -m faasflow.bundled dataset"
    return BUNDLED_DATASET


@pytest.fixture(scope="session")
def ablation_dataset_dir() -> Path:
    assert ABLATION_DATASET.is_dir(), "ablation dataset missing; run python -m faasflow.bundled dataset"
    return ABLATION_DATASET
