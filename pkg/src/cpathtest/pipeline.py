"""End-to-end orchestration: ingest → paths → describe → retrieve → opmap → synth → validate → merge → coverage.

Every stage persists its artifacts under ``<artifacts>/<project>/``. LLM and
validation stages are cached by a hash of their inputs, so a rerun (or a run
started with ``from_stage``) reuses earlier work; stages before ``from_stage``
must be satisfiable from the cache alone.
"""

from __future__ import annotations

import json
import logging
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import cfg as cfgmod
from . import cparse
from .config import STAGES, PipelineConfig
from .csource import (FunctionUnit, describe_function, extract_functions, generate_project_header, ingest_project,
                      support_functions, write_function_artifacts)
from .errors import ConfigError, EnvironmentFault, LlmUnavailable, PipelineError
from .llm import LlmClient, UsageLedger, client_from_config
from .opmap import (HelpersFile, OperationMap, assemble_helpers, build_operation_map, merge_path_info,
                    replicate_helpers)
from .retrieval import INDEX_NAME, HelperCatalog, HelperStore, load_pool, make_embedder, retrieve
from .suite import CoverageReport, measure_coverage, merge_suite
from .synth import PENDING, AtomicTestUnit, generate_test
from .util import atomic_write, content_hash, read_json, write_json
from .validate import GccToolchain, Row, Toolchain, UnitContext, ValidationReport, validate_loop

log = logging.getLogger(__name__)


class CacheMiss(PipelineError):
    """A stage before ``from_stage`` has no reusable artifact."""


@dataclass
class RunReport:
    project: str
    rows: list[Row] = field(default_factory=list)
    totals: Row = field(default_factory=lambda: Row("TOTAL"))
    coverage: dict | None = None
    usage: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    function_errors: dict[str, str] = field(default_factory=dict)
    failure_categories: dict[str, int] = field(default_factory=dict)
    stages_run: list[str] = field(default_factory=list)
    fatal: str | None = None

    @property
    def retention_pct(self) -> float | None:
        return round(100.0 * self.totals.final / self.totals.generated, 2) if self.totals.generated else None

    def check(self) -> None:
        for r in self.rows:
            r.check()
        self.totals.check()

    def to_json(self) -> dict:
        return {
            "project": self.project,
            "rows": [r.to_json() for r in self.rows],
            "totals": self.totals.to_json(),
            "retention_pct": self.retention_pct,
            "coverage": self.coverage,
            "usage": self.usage,
            "failure_categories": self.failure_categories,
            "function_errors": self.function_errors,
            "warnings": self.warnings,
            "stages_run": self.stages_run,
            "fatal": self.fatal,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunReport":
        return cls(d["project"], [Row.from_json(r) for r in d["rows"]], Row.from_json(d["totals"]),
                   d.get("coverage"), d.get("usage", {}), list(d.get("warnings", [])),
                   dict(d.get("function_errors", {})), dict(d.get("failure_categories", {})),
                   list(d.get("stages_run", [])), d.get("fatal"))


def _fmt_pct(v) -> str:
    return "N/A" if v is None else f"{v:.2f}"


def report_summary(report: RunReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2, sort_keys=True)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    n = len(report.totals.fixed)
    head = ["Function", "Paths", "Gen", "Pass0", "Failed", *[f"Fix{i + 1}" for i in range(n)], "Dropped", "Final"]

    def cells(r: Row) -> list[str]:
        return [r.function, str(r.paths), str(r.generated), str(r.pass0), str(r.failed),
                *map(str, r.fixed), str(r.dropped), str(r.final)]

    table = [head] + [cells(r) for r in report.rows] + [cells(report.totals)]
    widths = [max(len(row[i]) for row in table) for i in range(len(head))]
    out = [f"Project: {report.project}", ""]
    for k, row in enumerate(table):
        out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if k == 0 or k == len(table) - 2:
            out.append("  ".join("-" * w for w in widths))
    out.append(f"Retention: {_fmt_pct(report.retention_pct)}%")
    if report.coverage:
        p = report.coverage["project"]
        out += ["", f"{'File':30} {'Func%':>8} {'Line%':>8} {'Branch%':>8} {'Lines':>6} {'Branches':>8}"]
        for f in report.coverage.get("per_file", []) + [p]:
            out.append(f"{f['file'][:30]:30} {_fmt_pct(f['function_pct']):>8} {_fmt_pct(f['line_pct']):>8} "
                       f"{_fmt_pct(f['branch_pct']):>8} {f['lines_total']:>6} {f['branches_total']:>8}")
    total = report.usage.get("total")
    if total:
        out += ["", f"LLM requests: {total['requests']}  prompt tokens: {total['prompt_tokens']}  "
                    f"completion tokens: {total['completion_tokens']}"]
    if report.function_errors:
        out += ["", "Function errors:"] + [f"  {k}: {v}" for k, v in sorted(report.function_errors.items())]
    if report.warnings:
        out += ["", f"Warnings ({len(report.warnings)}):"] + [f"  {w}" for w in report.warnings]
    if report.fatal:
        out += ["", f"FATAL: {report.fatal}"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------


@dataclass
class _FnState:
    unit: FunctionUnit
    cfg: cfgmod.Cfg | None = None
    paths: list = field(default_factory=list)
    catalog: HelperCatalog | None = None
    omap: OperationMap | None = None
    helpers: HelpersFile | None = None
    units: list[AtomicTestUnit] = field(default_factory=list)
    failed: str | None = None


class Pipeline:
    def __init__(self, config: PipelineConfig, llm: LlmClient | None = None, toolchain: Toolchain | None = None,
                 mock_script: str | Path | None = None):
        if mock_script is not None and not Path(mock_script).exists():
            raise ConfigError(f"mock script {mock_script} does not exist")
        self.config = config
        self.out = config.out_dir
        self.ledger = UsageLedger()
        self._llm = llm
        self._mock_script = mock_script
        self._toolchain = toolchain
        self.warnings: list[str] = []
        self.errors: dict[str, str] = {}
        self._lock = threading.Lock()
        self.start = STAGES.index(config.from_stage) if config.from_stage else 0
        self.stop = STAGES.index(config.to_stage) if config.to_stage else len(STAGES) - 1
        self.stages_run: list[str] = []

    # -- lazily built resources ------------------------------------------------
    @property
    def llm(self) -> LlmClient:
        if self._llm is None:
            self._llm = client_from_config(self.config, self._mock_script, self.ledger)
        return self._llm

    @property
    def toolchain(self) -> Toolchain:
        if self._toolchain is None:
            self._toolchain = GccToolchain(self.config.toolchain)
        return self._toolchain

    def warn(self, msg: str) -> None:
        log.warning(msg)
        with self._lock:
            self.warnings.append(msg)

    def fail(self, st: _FnState, stage: str, exc: Exception) -> None:
        st.failed = f"{stage}: {type(exc).__name__}: {exc}"
        with self._lock:
            self.errors[st.unit.name] = st.failed
        log.warning("%s failed at %s: %s", st.unit.name, stage, exc)

    def cached_only(self, stage: str) -> bool:
        return STAGES.index(stage) < self.start

    def enabled(self, stage: str) -> bool:
        return STAGES.index(stage) <= self.stop

    def _cached(self, path: Path, key: str, stage: str) -> dict | None:
        if (self.config.use_cache or self.cached_only(stage)) and path.exists():
            data = read_json(path)
            if data.get("input_hash") == key:
                return data
        if self.cached_only(stage):
            raise CacheMiss(f"{stage}: no cached artifact at {path}")
        return None

    def _map(self, fn, items, workers: int):
        items = list(items)
        if workers <= 1 or len(items) <= 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    # -- stages ------------------------------------------------------------------
    def run(self) -> RunReport:
        cfg = self.config
        report = RunReport(Path(cfg.project_root).resolve().name)
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(self.out / "config.json", cfg.to_json())

        project = ingest_project(cfg.project_root, cfg)
        for name, why in sorted(project.excluded.items()):
            self.warn(f"excluded {name}: {why}")
        self.warnings.extend(project.warnings)
        header = generate_project_header(project)
        fns = extract_functions(project)
        write_function_artifacts(self.out, header, fns, support_functions(project), project)
        self.stages_run.append("ingest")
        self.header = header
        self.project_functions = list(project.functions())
        self.targets = {f.name: f.source_span[0] for f in fns}
        states = [_FnState(f) for f in fns]
        vreport = ValidationReport(cfg.repair.max_iterations)

        stages = [("paths", self.stage_paths), ("describe", self.stage_describe),
                  ("retrieve", self.stage_retrieve), ("opmap", self.stage_opmap), ("synth", self.stage_synth),
                  ("validate", lambda s: self.stage_validate(s, vreport))]
        for name, fn in stages:
            if not self.enabled(name):
                break
            fn(states)
            self.stages_run.append(name)

        if self.enabled("validate"):
            for st in states:
                vreport.set_paths(st.unit.name, len(st.paths))
            for st in states:
                vreport.row(st.unit.name)
            vreport.check()
            write_json(self.out / "validation_report.json", vreport.to_json())
            report.rows = [vreport.rows[k] for k in sorted(vreport.rows)]
            report.totals = vreport.totals()
            report.failure_categories = dict(vreport.categories)
            self.warnings.extend(vreport.warnings)

        if self.enabled("merge"):
            suite = merge_suite([u for st in states for u in st.units])
            atomic_write(self.out / "suite" / "test_suite.c", suite.source_text)
            write_json(self.out / "suite" / "merge.json", suite.to_json())
            self.warnings.extend(suite.warnings)
            self.stages_run.append("merge")
            if len(suite.included_tests) != report.totals.final:
                raise PipelineError(f"suite holds {len(suite.included_tests)} tests, report says {report.totals.final}")
            if self.enabled("coverage"):
                cov = self.stage_coverage(suite)
                report.coverage = cov.to_json()
                self.stages_run.append("coverage")
                self._mutation_hook()

        report.usage = (self._llm.ledger if self._llm is not None else self.ledger).to_json()
        write_json(self.out / "usage_ledger.json", report.usage)
        report.warnings = list(self.warnings)
        report.function_errors = dict(self.errors)
        report.stages_run = list(self.stages_run)
        report.check()
        write_json(self.out / "run_report.json", report.to_json())
        atomic_write(self.out / "run_report.txt", report_summary(report, "text"))
        return report

    def stage_paths(self, states: list[_FnState]) -> None:
        for st in states:
            try:
                st.cfg = cfgmod.build_cfg(st.unit)
                st.paths = cfgmod.enumerate_paths(st.cfg, self.config.loop_bound, self.config.max_paths)
                if st.paths.truncated:
                    self.warn(f"{st.unit.name}: path enumeration truncated at {self.config.max_paths}")
                write_json(self.out / "paths" / f"{st.unit.name}.json",
                           cfgmod.paths_to_json(st.cfg, st.paths, self.config.loop_bound, self.config.max_paths))
            except PipelineError as exc:
                self.fail(st, "paths", exc)

    def stage_describe(self, states: list[_FnState]) -> None:
        def one(st: _FnState) -> None:
            if st.failed:
                return
            key = content_hash("describe", st.unit.body, *(p.linearized for p in st.paths))
            path = self.out / "describe" / f"{st.unit.name}.json"
            try:
                hit = self._cached(path, key, "describe")
                if hit is not None:
                    st.unit.desc = hit["desc"]
                    return
                describe_function(st.unit, st.paths, self.llm)
                write_json(path, {"input_hash": key, "desc": st.unit.desc})
            except EnvironmentFault:
                raise
            except PipelineError as exc:
                self.warn(f"{st.unit.name}: no description ({exc})")

        self._map(one, states, self.config.llm_parallelism)

    def stage_retrieve(self, states: list[_FnState]) -> None:
        store = HelperStore(load_pool(self.config.helper_pool), make_embedder(self.config.embedder),
                            self.out / INDEX_NAME)
        self.store = store
        for st in states:
            if st.failed:
                continue
            st.catalog = retrieve(st.unit, store, self.config.theta)
            write_json(self.out / "retrieval" / f"{st.unit.name}.json", st.catalog.to_json())

    def stage_opmap(self, states: list[_FnState]) -> None:
        pool = self.store.helpers

        def one(st: _FnState) -> None:
            if st.failed:
                return
            key = content_hash("opmap", self.header, st.unit.body, st.unit.desc,
                               json.dumps(st.catalog.to_json(), sort_keys=True))
            path = self.out / "opmap" / f"{st.unit.name}.json"
            try:
                hit = self._cached(path, key, "opmap")
                if hit is not None:
                    omap = OperationMap.from_json(hit["map"])
                else:
                    omap = build_operation_map(st.unit, self.header, st.catalog, self.llm,
                                               project_functions=self.project_functions)
                omap = merge_path_info(omap, st.paths, self.config.std_allow_list)
                for w in omap.warnings:
                    self.warn(w)
                tc = self.config.toolchain if isinstance(self._toolchain_or_none(), GccToolchain) else None
                st.helpers = assemble_helpers(omap, pool, header=self.header, toolchain=tc)
                for w in st.helpers.warnings:
                    self.warn(f"{st.unit.name}: {w}")
                st.omap = omap
                write_json(path, {"input_hash": key, "map": omap.to_json()})
                st.helpers.write(self.out / "helpers" / st.unit.name)
            except EnvironmentFault:
                raise
            except PipelineError as exc:
                self.fail(st, "opmap", exc)

        self._map(one, states, self.config.llm_parallelism)

    def _toolchain_or_none(self):
        try:
            return self.toolchain
        except EnvironmentFault:
            return None

    def prototypes(self, st: _FnState) -> dict[str, str]:
        protos = {}
        for line in self.header.splitlines():
            line = line.strip()
            if line.endswith(");") and "(" in line and not line.startswith(("#", "typedef", "extern")):
                name = line.split("(", 1)[0].split()[-1].lstrip("*")
                protos[name] = line.rstrip(";")
        for line in st.helpers.header_text.splitlines():
            if line.endswith(");"):
                name = line.split("(", 1)[0].split()[-1].lstrip("*")
                protos[name] = line.rstrip(";")
        return protos

    def unit_dir(self, fn: str, path_id: int) -> Path:
        return self.out / "tests" / fn / f"path{path_id}"

    def stage_synth(self, states: list[_FnState]) -> None:
        jobs = []
        for st in states:
            if st.failed or st.omap is None:
                continue
            copies = replicate_helpers(st.helpers, st.paths)
            protos = self.prototypes(st)
            for p in st.paths:
                jobs.append((st, p, copies[p.path_id], protos))

        def one(job) -> AtomicTestUnit | None:
            st, p, helpers, protos = job
            slice_ = st.omap.per_path[p.path_id]
            key = content_hash("synth", self.header, st.unit.body, st.unit.desc, slice_.linearized,
                               *slice_.allowed_calls, helpers.source_text)
            d = self.unit_dir(st.unit.name, p.path_id)
            try:
                hit = self._cached(d / "synth.json", key, "synth")
                if hit is not None:
                    unit = AtomicTestUnit(p.path_id, st.unit.name, hit["test_source"], helpers,
                                          test_name=hit["test_name"], violations=hit["violations"])
                else:
                    unit = generate_test(st.unit, p, slice_, self.llm, header=self.header, helpers=helpers,
                                         prototypes=protos)
                    write_json(d / "synth.json", {"input_hash": key, "test_source": unit.test_source,
                                                  "test_name": unit.test_name, "violations": unit.violations})
                atomic_write(d / "test.c", unit.test_source)
                helpers.write(d)
                for v in unit.violations:
                    self.warn(f"{st.unit.name} path {p.path_id}: {v}")
                return unit
            except EnvironmentFault:
                raise
            except PipelineError as exc:
                self.warn(f"{st.unit.name} path {p.path_id}: synthesis failed ({exc})")
                return None

        results = self._map(one, jobs, self.config.llm_parallelism)
        for (st, p, _, _), unit in zip(jobs, results):
            if unit is not None:
                st.units.append(unit)

    def stage_validate(self, states: list[_FnState], vreport: ValidationReport) -> None:
        policy = self.config.repair
        fingerprint = content_hash(self.header, *(st.unit.unit_source() for st in states),
                                   json.dumps(self.config.toolchain.__dict__, sort_keys=True, default=str),
                                   str(policy.max_iterations))
        jobs = [(st, u) for st in states for u in st.units]

        def one(job) -> None:
            st, unit = job
            d = self.unit_dir(unit.function_name, unit.path_id)
            key = content_hash("validate", fingerprint, unit.test_source, unit.helpers.source_text)
            hit = self._cached(d / "unit.json", key, "validate")
            if hit is not None and hit["unit"]["status"] != PENDING:
                loaded = self._load_unit(d, hit)
                unit.__dict__.update(loaded.__dict__)
            else:
                ctx = UnitContext(self.out, d, self.out / "validate" / unit.function_name / f"path{unit.path_id}",
                                  self.header, st.unit.body, st.omap.per_path[unit.path_id].linearized,
                                  st.omap.per_path[unit.path_id].allowed_calls)
                try:
                    validate_loop(unit, self.toolchain, self.llm, policy, ctx)
                except LlmUnavailable as exc:  # unit stays pending for a later rerun
                    self.warn(f"{unit.function_name} path {unit.path_id}: {exc}")
                write_json(d / "unit.json", {"input_hash": key, "unit": unit.to_json(),
                                             "test_source": unit.test_source,
                                             "helpers": {"source_text": unit.helpers.source_text,
                                                         "header_text": unit.helpers.header_text}})
            if unit.status != PENDING:
                unit.check(policy.max_iterations)
            vreport.add(unit)

        self._map(one, jobs, self.config.process_parallelism)
        for st in states:
            st.units.sort(key=lambda u: u.path_id)

    def _load_unit(self, d: Path, hit: dict) -> AtomicTestUnit:
        """Rebuild a validated unit from its cache record and restore its final files on disk."""
        unit = unit_from_record(hit)
        atomic_write(d / "test.c", unit.test_source)
        unit.helpers.write(d)
        return unit

    def stage_coverage(self, suite) -> CoverageReport:
        cov = measure_coverage(suite, self.out, self.out / "suite" / "build", self.config.toolchain, self.targets,
                               timeout=max(30.0, self.config.repair.per_test_timeout * max(1, len(suite.included_tests))))
        write_json(self.out / "coverage_report.json", cov.to_json())
        return cov

    def _mutation_hook(self) -> None:
        """Shell out to an external mutation engine and archive its raw output, uninterpreted."""
        cmd = self.config.mutation_command
        if not cmd:
            return
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, cwd=self.out)
        atomic_write(self.out / "mutation" / "raw_output.txt",
                     f"$ {cmd}\nexit status {proc.returncode}\n--- stdout\n{proc.stdout}\n--- stderr\n{proc.stderr}")


def unit_from_record(rec: dict) -> AtomicTestUnit:
    h = rec["helpers"]
    helpers = HelpersFile(h["source_text"], tuple(cparse.defined_functions(h["source_text"])), h["header_text"])
    return AtomicTestUnit.from_json(rec["unit"], rec["test_source"], helpers)


def load_units(out_dir: str | Path) -> list[AtomicTestUnit]:
    """Every unit recorded under ``<out>/tests``, ordered by function then path id."""
    units = [unit_from_record(read_json(p)) for p in Path(out_dir).glob("tests/*/path*/unit.json")]
    return sorted(units, key=lambda u: (u.function_name, u.path_id))


def run_pipeline(config: PipelineConfig, *, llm: LlmClient | None = None, toolchain: Toolchain | None = None,
                 mock_script: str | Path | None = None) -> RunReport:
    """Run the configured stage range for one project and return its report."""
    return Pipeline(config, llm, toolchain, mock_script).run()
