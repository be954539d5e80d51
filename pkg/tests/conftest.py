from pathlib import Path

import pytest

from src.corpus import read_transcripts
from src.embed import TestEmbedder
from src.models.transcript import Transcript
from src.settings import Settings

FIXTURES = Path("tests/fixtures")
EMBED_KEY = "embed-key"
LLM_KEY = "llm-key"


def patch_setting(monkeypatch, attr_name: str, value: any):
    if not hasattr(Settings, attr_name):
        raise AttributeError(f"Settings object is missing '{attr_name}' attribute")
    monkeypatch.setattr(Settings, attr_name, value)


@pytest.fixture(autouse=True)
def mock_settings(monkeypatch):
    patch_setting(monkeypatch, "embed_api_key", EMBED_KEY)
    patch_setting(monkeypatch, "llm_api_key", LLM_KEY)
    # retries happen immediately in tests
    patch_setting(monkeypatch, "http_backoff_factor", 0)


@pytest.fixture
def appendix_transcript() -> Transcript:
    return read_transcripts(FIXTURES / "appendix_transcript.jsonl")[0]


@pytest.fixture
def appendix_chunks() -> list[str]:
    return (FIXTURES / "appendix_chunks.txt").read_text(encoding="utf-8").splitlines()


@pytest.fixture
def appendix_soap_note() -> str:
    return (FIXTURES / "appendix_soap_note.txt").read_text(encoding="utf-8")


@pytest.fixture
def clinical_summary() -> str:
    return (FIXTURES / "clinical_summary.txt").read_text(encoding="utf-8")


@pytest.fixture
def embedder() -> TestEmbedder:
    return TestEmbedder(dim=64)
