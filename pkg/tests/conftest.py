from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from revmatch.pipeline import Paths, PipelineConfig, run_all
from revmatch.providers import ProviderConfig, TextServiceClient
from revmatch.synth import default_taxonomy_text
from revmatch.taxonomy import Taxonomy


@pytest.fixture(scope="session")
def stub_config() -> ProviderConfig:
    return ProviderConfig()


@pytest.fixture(scope="session")
def client(stub_config: ProviderConfig) -> TextServiceClient:
    return TextServiceClient(stub_config)


@pytest.fixture()
def taxonomy(tmp_path: Path, client: TextServiceClient) -> Taxonomy:
    """Bundled taxonomy, freshly loaded and embedded."""
    path = tmp_path / "taxonomy.jsonl"
    path.write_text(default_taxonomy_text(), encoding="utf-8")
    tax = Taxonomy.load(path)
    tax.embed_nodes(client)
    return tax


@dataclass
class PipelineRun:
    cfg: PipelineConfig
    paths: Paths
    duration: float


@pytest.fixture(scope="session")
def seed42_run(tmp_path_factory: pytest.TempPathFactory) -> PipelineRun:
    """One full default-config pipeline run (seed 42, 200 records), shared by
    every test that inspects real artifacts."""
    base = tmp_path_factory.mktemp("pipeline-seed42")
    cfg = PipelineConfig()
    paths = Paths(base / "stage")
    started = time.perf_counter()
    outcomes = run_all(cfg, paths)
    duration = time.perf_counter() - started
    assert all(ran for _, ran in outcomes)
    return PipelineRun(cfg=cfg, paths=paths, duration=duration)
