from __future__ import annotations

import shutil
import time
from pathlib import Path

import pytest

from cpathtest.config import load_config
from cpathtest.llm import load_script
from cpathtest.pipeline import run_pipeline

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
PROJECTS = FIXTURES / "projects"
SCRIPTS = FIXTURES / "scripts"
FIXTURE_CONFIG = FIXTURES / "configs" / "fixture.json"
FIXTURE_PROJECTS = ("bst", "dynamic_stack", "doubly_linked_list")

needs_gcc = pytest.mark.skipif(shutil.which("gcc") is None or shutil.which("gcov") is None,
                               reason="gcc and gcov are required")


def fixture_config(project: str, artifacts: Path, **overrides):
    base = {"project_root": str(PROJECTS / project), "artifacts_dir": str(artifacts)}
    base.update(overrides)
    return load_config(FIXTURE_CONFIG, base)


class FixtureRun:
    """One scripted end-to-end run, shared across tests in a session."""

    def __init__(self, project: str, script: str, artifacts: Path):
        self.project = project
        self.config = fixture_config(project, artifacts)
        self.llm = load_script(SCRIPTS / script)
        start = time.monotonic()
        self.report = run_pipeline(self.config, llm=self.llm)
        self.elapsed = time.monotonic() - start
        self.out = self.config.out_dir


@pytest.fixture(scope="session")
def fixture_runs(tmp_path_factory) -> dict[str, FixtureRun]:
    if shutil.which("gcc") is None or shutil.which("gcov") is None:
        pytest.skip("gcc and gcov are required")
    root = tmp_path_factory.mktemp("fixture_runs")
    return {p: FixtureRun(p, p, root / p) for p in FIXTURE_PROJECTS}


@pytest.fixture(scope="session")
def gate_run(tmp_path_factory) -> FixtureRun:
    if shutil.which("gcc") is None or shutil.which("gcov") is None:
        pytest.skip("gcc and gcov are required")
    return FixtureRun("bst", "bst_gate", tmp_path_factory.mktemp("gate_run"))
