from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from designsearch.budget import load_shot_bank_file
from designsearch.gdr import parse_gdr
from designsearch.index import load_corpus

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def corpus_index():
    return load_corpus(FIXTURES / "corpus.jsonl")


@pytest.fixture(scope="session")
def shot_bank():
    return load_shot_bank_file(FIXTURES / "shot_bank.jsonl")


@pytest.fixture(scope="session")
def gdr_docs():
    return {
        path.name: parse_gdr(path.read_text("utf-8"))
        for path in sorted((FIXTURES / "gdr").glob("*.json"))
    }


@pytest.fixture(scope="session")
def planner_prompt() -> str:
    return (
        "The user is working on a coffee roasting poster. Keep any suggestion"
        " consistent with the canvas palette, the existing layout, and licensing"
        " rules. Request from the user: find beans."
    )
