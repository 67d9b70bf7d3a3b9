from __future__ import annotations

import json

import pytest
from conftest import FIXTURE_CONFIG, FIXTURE_PROJECTS, PROJECTS, SCRIPTS, fixture_config, needs_gcc

from cpathtest.cli import main
from cpathtest.errors import ConfigError, NoSourcesFound
from cpathtest.llm import GENERATION_STAGES
from cpathtest.pipeline import RunReport, report_summary, run_pipeline
from cpathtest.validate import Row

EXPECTED = {
    # project: (generated, pass0, fixed, dropped, final)
    "bst": (25, 23, [2, 0, 0], 0, 25),
    "dynamic_stack": (18, 17, [1, 0, 0], 0, 18),
    "doubly_linked_list": (27, 26, [1, 0, 0], 0, 27),
}


@pytest.mark.parametrize("project", FIXTURE_PROJECTS)
def test_fixture_run_counts(fixture_runs, project):
    t = fixture_runs[project].report.totals
    assert (t.generated, t.pass0, t.fixed, t.dropped, t.final) == EXPECTED[project]
    t.check()


@pytest.mark.parametrize("project", FIXTURE_PROJECTS)
def test_fixture_run_full_coverage(fixture_runs, project):
    cov = fixture_runs[project].report.coverage
    for name, fc in cov["per_function"].items():
        assert fc["line_pct"] == 100.0, name
        assert fc["branch_pct"] in (100.0, None), name
    assert cov["project"]["line_pct"] == 100.0 and cov["project"]["branch_pct"] == 100.0


@pytest.mark.parametrize("project", FIXTURE_PROJECTS)
def test_temperature_discipline_over_fixture_run(fixture_runs, project):
    log = fixture_runs[project].llm.log
    assert {r.stage for r in log} == {"describe", "opmap", "synth", "repair"}
    assert all(r.temperature == 0.0 for r in log if r.stage in GENERATION_STAGES)
    assert all(r.temperature == 0.1 for r in log if r.stage == "repair")


@pytest.mark.parametrize("project", FIXTURE_PROJECTS)
def test_artifacts_written(fixture_runs, project):
    out = fixture_runs[project].out
    for rel in ("header.h", "functions.json", "validation_report.json", "coverage_report.json",
                "usage_ledger.json", "run_report.json", "run_report.txt", "suite/test_suite.c"):
        assert (out / rel).exists(), rel
    assert any((out / "paths").glob("*.json"))


@pytest.mark.parametrize("project", FIXTURE_PROJECTS)
def test_usage_ledger_matches_request_log(fixture_runs, project):
    run = fixture_runs[project]
    usage = run.report.usage
    assert usage["total"]["requests"] == len(run.llm.log)
    for stage in ("describe", "opmap", "synth", "repair"):
        assert usage["per_stage"][stage]["requests"] == sum(1 for r in run.llm.log if r.stage == stage)


def test_run_report_json_round_trip(fixture_runs):
    report = fixture_runs["bst"].report
    again = RunReport.from_json(json.loads(json.dumps(report.to_json())))
    assert again.to_json() == report.to_json()
    assert report_summary(again) == report_summary(report)


def test_retention_formatting():
    r = RunReport("demo", totals=Row("TOTAL", generated=282, pass0=235, failed=47, fixed=[22, 7, 2], dropped=16,
                                     final=266))
    assert r.retention_pct == 94.33
    assert "Retention: 94.33%" in report_summary(r)
    assert json.loads(report_summary(r, "json"))["retention_pct"] == 94.33
    assert "Retention: N/A%" in report_summary(RunReport("empty"))


def test_gate_run_terminal_statuses(gate_run):
    t = gate_run.report.totals
    assert (t.generated, t.pass0, t.fixed, t.dropped, t.final) == (25, 19, [3, 1, 0], 2, 23)


def test_bad_theta_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        fixture_config("bst", tmp_path, theta=1.5)


# ---------------------------------------------------------------------------
# command line


def cli(tmp_path, *args: str) -> int:
    return main([*args, "--config", str(FIXTURE_CONFIG), "--artifacts", str(tmp_path / "artifacts")])


@needs_gcc
def test_cli_run_resume_and_report(tmp_path, capsys):
    project = str(PROJECTS / "bst")
    script = str(SCRIPTS / "bst")
    assert cli(tmp_path, "run", "--project", project, "--mock-script", script) == 0
    assert "Retention: 100.00%" in capsys.readouterr().out
    suite = tmp_path / "artifacts" / "bst" / "suite" / "test_suite.c"
    first = suite.read_bytes()
    suite.unlink()
    for stage in ("merge", "synth", "describe"):
        assert cli(tmp_path, "merge", "--project", project, "--mock-script", script, "--from", stage) == 0
        assert suite.read_bytes() == first, stage
    capsys.readouterr()
    assert cli(tmp_path, "report", "--project", project, "--format", "json") == 0
    data = json.loads(capsys.readouterr().out)
    assert data["totals"]["final"] == 25 and data["coverage"]["project"]["line_pct"] == 100.0


@needs_gcc
def test_cli_stops_after_requested_stage(tmp_path):
    assert cli(tmp_path, "paths", "--project", str(PROJECTS / "bst")) == 0
    out = tmp_path / "artifacts" / "bst"
    assert (out / "paths" / "insert.json").exists()
    assert not (out / "suite").exists()
    data = json.loads((out / "paths" / "insert.json").read_text())
    assert len(data["paths"]) == 4  # null root, less, greater, duplicate


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli(tmp_path, "run", "--project", str(tmp_path / "missing")) == 2
    assert "config error" in capsys.readouterr().err
    assert cli(tmp_path, "run", "--project", str(PROJECTS / "bst"), "--theta", "2") == 2


def test_cli_fatal_error_exit_code(tmp_path, capsys):
    empty = tmp_path / "empty_project"
    empty.mkdir()
    assert cli(tmp_path, "run", "--project", str(empty)) == 1
    assert "NoSourcesFound" in capsys.readouterr().err


def test_cli_missing_mock_script_is_config_error(tmp_path):
    assert cli(tmp_path, "run", "--project", str(PROJECTS / "bst"), "--mock-script", str(tmp_path / "nope.json")) == 2


def test_cli_report_without_run(tmp_path):
    assert cli(tmp_path, "report", "--project", str(PROJECTS / "bst")) == 1


def test_unscripted_requests_fail_per_function(tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"entries": []}))
    assert cli(tmp_path, "run", "--project", str(PROJECTS / "bst"), "--mock-script", str(script)) == 0
    report = json.loads((tmp_path / "artifacts" / "bst" / "run_report.json").read_text())
    assert sorted(report["function_errors"]) == sorted(
        ["create_node", "insert", "search", "height", "count_nodes", "find_min", "delete_node", "free_tree"])
    assert all("ScriptMiss" in v for v in report["function_errors"].values())
    assert report["totals"]["generated"] == 0


def test_run_pipeline_without_sources(tmp_path):
    cfg = fixture_config("bst", tmp_path)
    cfg.project_root = str(tmp_path)
    with pytest.raises(NoSourcesFound):
        run_pipeline(cfg)
