"""Compile and run atomic test units under AddressSanitizer, classify failures, repair.

The validation loop alternates compile+run with LLM repair until a unit is
clean or its iteration budget is spent. Table-2 style counts are accumulated
in :class:`ValidationReport`, whose accounting identities are checked on every
update.
"""

from __future__ import annotations

import logging
import os
import re
import signal as signal_mod
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from . import cparse
from .config import RepairPolicy, ToolchainConfig
from .errors import AccountingError, EnvironmentFault, LlmUnavailable, ToolchainMissing
from .opmap import HELPERS_SOURCE, HelpersFile, helpers_header, wrapped_symbols
from .synth import (DROPPED, PASS0, PENDING, REPAIRED, AtomicTestUnit, check_constraints, code_blocks,
                    header_macros, normalize_test_source)
from .util import atomic_write

log = logging.getLogger(__name__)

COMPILE, RUN = "compile", "run"
COMPILATION, MEMORY, CRASH, ASSERTION, MISC = "compilation", "memory", "crash", "assertion", "misc"
CATEGORIES = (COMPILATION, MEMORY, CRASH, ASSERTION, MISC)
ROOT_CAUSES = (
    "helper API hallucination", "malloc counter miscounting", "memory ownership confusion",
    "unreachable path conditions", "source API name hallucination", "stdout capture type mismatch",
    "Unity macro misuse",
)
UNREACHABLE_HINT = "unreachable path"

MEMORY_MARKERS = (
    "LeakSanitizer", "heap-buffer-overflow", "stack-buffer-overflow", "global-buffer-overflow",
    "heap-use-after-free", "stack-use-after-return", "stack-use-after-scope", "use-after-poison",
    "double-free", "attempting free", "bad-free", "alloc-dealloc-mismatch", "memcpy-param-overlap",
    "negative-size-param", "container-overflow", "dynamic-stack-buffer-overflow", "calloc-overflow",
    "allocation-size-too-big", "out of memory: allocator",
)
FATAL_SIGNALS = {signal_mod.SIGSEGV, signal_mod.SIGBUS, signal_mod.SIGFPE, signal_mod.SIGILL, signal_mod.SIGABRT}
_ASAN_SIGNAL = re.compile(r"AddressSanitizer: (SEGV|BUS|FPE|ILL|ABRT|stack-overflow)")
_ASAN_SIGNALS = {"SEGV": signal_mod.SIGSEGV, "BUS": signal_mod.SIGBUS, "FPE": signal_mod.SIGFPE,
                 "ILL": signal_mod.SIGILL, "ABRT": signal_mod.SIGABRT, "stack-overflow": signal_mod.SIGSEGV}
_UNITY_FAIL = re.compile(r"^[^\n:]+:\d+:\w+:FAIL", re.M)


@dataclass
class ErrorReport:
    phase: str
    category: str
    diagnostic_text: str
    exit_code: int = 1
    signal: int | None = None
    root_cause_label: str | None = None

    def __post_init__(self):
        if self.phase not in (COMPILE, RUN) or self.category not in CATEGORIES:
            raise ValueError(f"bad report {self.phase}/{self.category}")
        if (self.phase == COMPILE) != (self.category == COMPILATION):
            raise ValueError("compile phase pairs with the compilation category and only with it")
        if self.root_cause_label is not None and self.root_cause_label not in ROOT_CAUSES:
            raise ValueError(f"unknown root cause {self.root_cause_label!r}")

    def to_json(self) -> dict:
        return {"phase": self.phase, "category": self.category, "exit_code": self.exit_code,
                "signal": self.signal, "root_cause_label": self.root_cause_label,
                "diagnostic_text": self.diagnostic_text[-8000:]}

    @classmethod
    def from_json(cls, d: dict) -> "ErrorReport":
        return cls(d["phase"], d["category"], d["diagnostic_text"], d["exit_code"], d.get("signal"),
                   d.get("root_cause_label"))


def classify_error(diagnostic_text: str, exit_code: int, signal: int | None = None) -> str:
    """Deterministic run-failure category from sanitizer, signal and test-framework evidence."""
    if any(m in diagnostic_text for m in MEMORY_MARKERS):
        return MEMORY
    if _ASAN_SIGNAL.search(diagnostic_text) or (signal is not None and signal in FATAL_SIGNALS):
        return CRASH
    if _UNITY_FAIL.search(diagnostic_text):
        return ASSERTION
    return MISC


def signal_from_text(text: str) -> int | None:
    m = _ASAN_SIGNAL.search(text)
    return int(_ASAN_SIGNALS[m.group(1)]) if m else None


# ---------------------------------------------------------------------------
# toolchains


@dataclass
class UnitFiles:
    """Everything needed to build one unit, laid out on disk."""

    unit_dir: Path
    project_dir: Path  # holds header.h and functions/
    test_name: str

    @property
    def test_c(self) -> Path:
        return self.unit_dir / "test.c"

    @property
    def helpers_c(self) -> Path:
        return self.unit_dir / HELPERS_SOURCE


@dataclass
class RunResult:
    exit_code: int
    output: str
    signal: int | None = None
    timed_out: bool = False


class Toolchain(Protocol):
    def compile(self, files: UnitFiles, exe: Path) -> tuple[bool, str]: ...
    def run(self, exe: Path, timeout: float) -> RunResult: ...


def resolve_compiler(tc: ToolchainConfig) -> str:
    cc = tc.resolve_cc()
    if cc is None:
        raise ToolchainMissing(f"C compiler {tc.cc!r} not found on PATH")
    return cc


def project_sources(project_dir: Path) -> list[Path]:
    """Function units, link-only support units and globals of an ingested project."""
    fdir = project_dir / "functions"
    srcs = sorted(fdir.glob("*.c"))
    support = fdir / "_support"
    if support.is_dir():
        srcs += sorted(support.glob("*.c"))
    return srcs


def runner_source(test_names: list[str]) -> str:
    """A Unity ``main`` that runs the given tests."""
    lines = ['#include "unity.h"', "", "void setUp(void);", "void tearDown(void);"]
    lines += [f"void {t}(void);" for t in test_names]
    lines += ["", "int main(void)", "{", "    UNITY_BEGIN();"]
    lines += [f"    RUN_TEST({t});" for t in test_names]
    lines += ["    return UNITY_END();", "}", ""]
    return "\n".join(lines)


class GccToolchain:
    """Real compiler + sanitizer runs; each run in a scratch directory with a timeout."""

    def __init__(self, config: ToolchainConfig | None = None, coverage: bool = False):
        self.config = config or ToolchainConfig()
        self.cc = resolve_compiler(self.config)
        self.coverage = coverage
        self._obj_lock = threading.Lock()

    def flags(self) -> list[str]:
        f = list(self.config.cflags) + list(self.config.sanitize_flags)
        if self.coverage:
            f += self.config.coverage_flags
        return f

    def _project_objects(self, project_dir: Path) -> tuple[list[Path], str]:
        """Compile project function units and the Unity runtime once per project and flag set."""
        tag = "cov" if self.coverage else "asan"
        obj_dir = project_dir / "obj" / tag
        srcs = project_sources(project_dir) + [Path(self.config.unity_dir) / "unity.c"]
        objs = []
        with self._obj_lock:
            for src in srcs:
                stem = src.stem if src.parent.name != "_support" else f"support_{src.stem}"
                obj = obj_dir / f"{stem}.o"
                if not obj.exists() or obj.stat().st_mtime < src.stat().st_mtime:
                    obj.parent.mkdir(parents=True, exist_ok=True)
                    cmd = [self.cc, *self.flags(), "-c", str(src), "-o", str(obj),
                           f"-I{project_dir}", f"-I{self.config.unity_dir}"]
                    proc = subprocess.run(cmd, capture_output=True, text=True)
                    if proc.returncode != 0:
                        return [], f"project source {src.name} failed to compile:\n{proc.stderr}"
                objs.append(obj)
        return objs, ""

    def compile(self, files: UnitFiles, exe: Path) -> tuple[bool, str]:
        objs, err = self._project_objects(files.project_dir)
        if err:
            raise EnvironmentFault(err)
        runner = files.unit_dir / "runner.c"
        atomic_write(runner, runner_source([files.test_name]))
        helpers_src = files.helpers_c.read_text() if files.helpers_c.exists() else ""
        wraps = [f"-Wl,--wrap={s}" for s in wrapped_symbols(helpers_src)]
        cmd = [self.cc, *self.flags(), f"-I{files.unit_dir}", f"-I{files.project_dir}", f"-I{self.config.unity_dir}",
               str(files.test_c), str(files.helpers_c), str(runner), *map(str, objs),
               "-o", str(exe), *wraps, *self.config.ldflags]
        proc = subprocess.run(cmd, capture_output=True, text=True, cwd=files.unit_dir)
        return proc.returncode == 0, proc.stdout + proc.stderr

    def run(self, exe: Path, timeout: float) -> RunResult:
        return run_sandboxed([str(exe)], timeout)


def sanitizer_env() -> dict[str, str]:
    env = {k: v for k, v in os.environ.items() if not k.endswith("_proxy") and not k.endswith("_PROXY")}
    env["ASAN_OPTIONS"] = "detect_leaks=1:abort_on_error=0:allocator_may_return_null=1:symbolize=1"
    env["LSAN_OPTIONS"] = "exitcode=23"
    return env


def run_sandboxed(cmd: list[str], timeout: float, cwd: Path | None = None) -> RunResult:
    """Run in a throwaway directory, killing the process group on timeout."""
    with tempfile.TemporaryDirectory(prefix="unit-run-") as scratch:
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, errors="replace", timeout=timeout,
                                  cwd=cwd or scratch, env=sanitizer_env(), start_new_session=True,
                                  stdin=subprocess.DEVNULL)
        except subprocess.TimeoutExpired as exc:
            out = (exc.stdout or b"") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            if isinstance(out, bytes):
                out = out.decode(errors="replace")
            return RunResult(-1, f"{out}\n[timed out after {timeout:g}s]", None, True)
    sig = -proc.returncode if proc.returncode < 0 else None
    return RunResult(proc.returncode, proc.stdout + proc.stderr, sig)


class ScriptedToolchain:
    """Offline stand-in driven by marker comments in the test source.

    ``/* @compile-error: <text> */`` fails compilation with ``<text>``;
    ``/* @run: memory|crash|assertion|misc|timeout */`` fails at run time with
    output shaped like the real tools' (so :func:`classify_error` is exercised);
    no marker means a clean compile and run.
    """

    _COMPILE = re.compile(r"/\*\s*@compile-error:\s*(.*?)\s*\*/", re.S)
    _RUN = re.compile(r"/\*\s*@run:\s*(\w+)\s*\*/")

    OUTPUTS = {
        MEMORY: (23, None, "==1==ERROR: LeakSanitizer: detected memory leaks\n"
                           "Direct leak of 16 byte(s) in 1 object(s) allocated from:\n"),
        CRASH: (1, None, "==1==ERROR: AddressSanitizer: SEGV on unknown address 0x000000000000\n"
                         "AddressSanitizer:DEADLYSIGNAL\n"),
        ASSERTION: (1, None, "test.c:12:test_case:FAIL: Expected 1 Was 2\n\n-----------------------\n"
                             "1 Tests 1 Failures 0 Ignored\nFAIL\n"),
        MISC: (3, None, "unexpected exit status 3\n"),
    }

    def __init__(self):
        self.compiles = 0
        self.runs = 0

    def compile(self, files: UnitFiles, exe: Path) -> tuple[bool, str]:
        self.compiles += 1
        src = files.test_c.read_text()
        m = self._COMPILE.search(src)
        if m:
            return False, f"test.c:1:1: error: {m.group(1)}\n"
        exe.write_text(src)
        return True, ""

    def run(self, exe: Path, timeout: float) -> RunResult:
        self.runs += 1
        m = self._RUN.search(exe.read_text())
        if not m:
            return RunResult(0, "test.c:1:test_case:PASS\n\n-----------------------\n1 Tests 0 Failures 0 Ignored\nOK\n")
        kind = m.group(1)
        if kind == "timeout":
            return RunResult(-1, f"[timed out after {timeout:g}s]", None, True)
        code, sig, text = self.OUTPUTS[kind]
        return RunResult(code, text, sig)


# ---------------------------------------------------------------------------
# compile / run


@dataclass
class UnitContext:
    """Per-function state the loop needs: where files live and what the test may call."""

    project_dir: Path
    unit_dir: Path
    log_dir: Path
    header: str
    function_body: str = ""
    linearized: str = ""
    allowed_calls: tuple[str, ...] = ()

    def files(self, unit: AtomicTestUnit) -> UnitFiles:
        return UnitFiles(self.unit_dir, self.project_dir, unit.test_name)


def write_unit(unit: AtomicTestUnit, ctx: UnitContext) -> None:
    atomic_write(ctx.unit_dir / "test.c", unit.test_source)
    unit.helpers.write(ctx.unit_dir)


def _log(ctx: UnitContext, unit: AtomicTestUnit, phase: str, text: str) -> None:
    atomic_write(ctx.log_dir / f"iter{unit.iterations_used}.{phase}.log", text)


def compile_unit(unit: AtomicTestUnit, toolchain: Toolchain, ctx: UnitContext) -> ErrorReport | None:
    write_unit(unit, ctx)
    if not unit.test_name:
        report = ErrorReport(COMPILE, COMPILATION, "test.c: error: no test function (void test_*(void)) defined")
        _log(ctx, unit, COMPILE, report.diagnostic_text)
        return report
    ok, diag = toolchain.compile(ctx.files(unit), ctx.unit_dir / "unit.bin")
    _log(ctx, unit, COMPILE, diag)
    if ok:
        return None
    return ErrorReport(COMPILE, COMPILATION, diag or "compilation failed", 1)


def run_unit(unit: AtomicTestUnit, toolchain: Toolchain, ctx: UnitContext, policy: RepairPolicy) -> ErrorReport | None:
    res = toolchain.run(ctx.unit_dir / "unit.bin", policy.per_test_timeout)
    _log(ctx, unit, RUN, res.output)
    if res.timed_out:
        return ErrorReport(RUN, MISC, res.output, res.exit_code, None)
    failed_line = _UNITY_FAIL.search(res.output) is not None
    if res.exit_code == 0 and not failed_line and not any(m in res.output for m in MEMORY_MARKERS):
        return None
    sig = res.signal if res.signal is not None else signal_from_text(res.output)
    return ErrorReport(RUN, classify_error(res.output, res.exit_code, sig), res.output, res.exit_code, sig)


# ---------------------------------------------------------------------------
# repair

REPAIR_SYSTEM = """You fix a failing Unity unit test in C. You receive the test file,
its helpers.c, and the compiler or runtime errors. Return the corrected files as
fenced blocks labelled with the file name, for example ```c test.c and
```c helpers.c; omit a file you did not change. Do not change the function under
test. If the execution path cannot be reached by any input, reply with a line
starting "UNREACHABLE:" followed by the reason instead of code."""


def repair_prompt(unit: AtomicTestUnit, report: ErrorReport, ctx: UnitContext) -> list[tuple[str, str]]:
    diag = report.diagnostic_text
    if len(diag) > 6000:
        diag = diag[:2000] + "\n...\n" + diag[-4000:]
    user = (
        f"Function under test:\n```c\n{ctx.function_body.rstrip()}\n```\n\n"
        f"Target path {unit.path_id}: {ctx.linearized}\n"
        f"Allowed calls: {', '.join(ctx.allowed_calls)}\n\n"
        f"test.c:\n```c\n{unit.test_source.rstrip()}\n```\n\n"
        f"helpers.c:\n```c\n{unit.helpers.source_text.rstrip()}\n```\n\n"
        f"{report.phase} failure ({report.category}):\n```\n{diag.rstrip()}\n```"
    )
    if unit.violations:
        user += "\n\nStatic check findings:\n" + "\n".join(f"- {v}" for v in unit.violations)
    return [("system", REPAIR_SYSTEM), ("user", user)]


class Unreachable(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def parse_repair(text: str) -> tuple[str | None, str | None]:
    """``(test_source, helpers_source)`` from a repair reply; ``None`` means unchanged."""
    stripped = text.strip()
    if stripped.upper().startswith("UNREACHABLE"):
        raise Unreachable(stripped.split(":", 1)[-1].strip())
    blocks = code_blocks(text)
    if not blocks:
        return (stripped + "\n" if stripped else None), None
    test_src = helpers_src = None
    for info, body in blocks:
        first = body.lstrip().split("\n", 1)[0]
        label = f"{info} {first}".lower()
        if "helpers.c" in label:
            helpers_src = body
        elif test_src is None:
            test_src = body
    return test_src, helpers_src


def repair(unit: AtomicTestUnit, report: ErrorReport, llm, policy: RepairPolicy, ctx: UnitContext) -> AtomicTestUnit:
    """One Fix step: both the test and its helpers copy may be rewritten."""
    if unit.iterations_used >= policy.max_iterations:
        raise ValueError("repair budget exhausted")
    tag = f"repair:{unit.function_name}:path{unit.path_id}:iter{unit.iterations_used + 1}"
    resp = llm.complete("repair", repair_prompt(unit, report, ctx), function=unit.function_name, tag=tag)
    unit.requests += 1
    unit.iterations_used += 1
    test_src, helpers_src = parse_repair(resp.text or "")
    if test_src is not None and test_src.strip():
        source, name = normalize_test_source(test_src, unit.function_name, unit.path_id)
        unit.test_source, unit.test_name = source, name or unit.test_name
    if helpers_src is not None and helpers_src.strip():
        unit.helpers = HelpersFile(helpers_src, tuple(cparse.defined_functions(helpers_src)),
                                   helpers_header(helpers_src))
    unit.violations = [str(v) for v in check_constraints(unit.test_source, unit.function_name, ctx.allowed_calls,
                                                         header_macros(ctx.header))] if ctx.allowed_calls else []
    return unit


def validate_loop(unit: AtomicTestUnit, toolchain: Toolchain, llm, policy: RepairPolicy,
                  ctx: UnitContext) -> AtomicTestUnit:
    """Run compile+run, repairing up to ``policy.max_iterations`` times."""
    while True:
        report = compile_unit(unit, toolchain, ctx)
        if report is None:
            report = run_unit(unit, toolchain, ctx, policy)
        if report is None:
            unit.status = PASS0 if unit.iterations_used == 0 else REPAIRED
            return unit
        unit.error_history.append(report)
        if unit.iterations_used >= policy.max_iterations:
            unit.status = DROPPED
            return unit
        try:
            repair(unit, report, llm, policy, ctx)
        except Unreachable as exc:
            unit.status = DROPPED
            unit.hint = UNREACHABLE_HINT
            log.info("%s path %d dropped: %s", unit.function_name, unit.path_id, exc.reason)
            return unit


def revalidate(unit: AtomicTestUnit, toolchain: Toolchain, ctx: UnitContext, policy: RepairPolicy) -> ErrorReport | None:
    """Compile and run a unit once without touching its status."""
    return compile_unit(unit, toolchain, ctx) or run_unit(unit, toolchain, ctx, policy)


# ---------------------------------------------------------------------------
# accounting


@dataclass
class Row:
    function: str
    paths: int = 0
    generated: int = 0
    pass0: int = 0
    failed: int = 0
    fixed: list[int] = field(default_factory=lambda: [0, 0, 0])
    dropped: int = 0
    final: int = 0

    def add(self, unit: AtomicTestUnit) -> None:
        n = len(self.fixed)
        self.generated += 1
        if unit.status == PASS0:
            self.pass0 += 1
            self.final += 1
            return
        self.failed += 1
        if unit.status == REPAIRED:
            if not 1 <= unit.iterations_used <= n:
                raise AccountingError(f"{unit.key}: repaired at iteration {unit.iterations_used}")
            self.fixed[unit.iterations_used - 1] += 1
            self.final += 1
        else:  # dropped, or left pending by an environment fault
            self.dropped += 1

    def check(self) -> None:
        if self.generated != self.pass0 + self.failed:
            raise AccountingError(f"{self.function}: generated {self.generated} != pass0 + failed")
        if self.final != self.pass0 + sum(self.fixed):
            raise AccountingError(f"{self.function}: final {self.final} != pass0 + fixed")
        if self.dropped != self.failed - sum(self.fixed):
            raise AccountingError(f"{self.function}: dropped {self.dropped} != failed - fixed")

    @property
    def retention(self) -> float | None:
        return 100.0 * self.final / self.generated if self.generated else None

    def to_json(self) -> dict:
        return {"function": self.function, "paths": self.paths, "generated": self.generated, "pass0": self.pass0,
                "failed": self.failed, "fixed": list(self.fixed), "dropped": self.dropped, "final": self.final}

    @classmethod
    def from_json(cls, d: dict) -> "Row":
        return cls(d["function"], d["paths"], d["generated"], d["pass0"], d["failed"], list(d["fixed"]),
                   d["dropped"], d["final"])


class ValidationReport:
    """Table-2 counts per function plus totals; identities checked after every update."""

    def __init__(self, max_iterations: int = 3):
        self.max_iterations = max_iterations
        self.rows: dict[str, Row] = {}
        self.categories: dict[str, int] = {c: 0 for c in CATEGORIES}
        self.warnings: list[str] = []
        self._lock = threading.Lock()

    def row(self, function: str) -> Row:
        with self._lock:
            return self.rows.setdefault(function, Row(function, fixed=[0] * self.max_iterations))

    def set_paths(self, function: str, n: int) -> None:
        self.row(function).paths = n

    def add(self, unit: AtomicTestUnit) -> None:
        row = self.row(unit.function_name)
        with self._lock:
            if unit.iterations_used > self.max_iterations:
                raise AccountingError(f"{unit.key}: {unit.iterations_used} iterations exceed the budget")
            row.add(unit)
            if unit.error_history:
                self.categories[unit.error_history[0].category] += 1
            if unit.status == PENDING:
                self.warnings.append(f"{unit.function_name} path {unit.path_id}: left pending, counted as dropped")
            row.check()
            self.totals().check()

    def totals(self) -> Row:
        t = Row("TOTAL", fixed=[0] * self.max_iterations)
        for r in self.rows.values():
            t.paths += r.paths
            t.generated += r.generated
            t.pass0 += r.pass0
            t.failed += r.failed
            t.fixed = [a + b for a, b in zip(t.fixed, r.fixed)]
            t.dropped += r.dropped
            t.final += r.final
        return t

    def check(self) -> None:
        for r in self.rows.values():
            r.check()
        self.totals().check()

    def to_json(self) -> dict:
        t = self.totals()
        return {
            "rows": [self.rows[k].to_json() for k in sorted(self.rows)],
            "totals": t.to_json(),
            "retention_pct": round(t.retention, 2) if t.retention is not None else None,
            "failure_categories": dict(self.categories),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, d: dict, max_iterations: int = 3) -> "ValidationReport":
        r = cls(max_iterations)
        for row in d["rows"]:
            r.rows[row["function"]] = Row.from_json(row)
        r.categories.update(d.get("failure_categories", {}))
        r.warnings = list(d.get("warnings", []))
        r.check()
        return r


def validate_units(units: list[tuple[AtomicTestUnit, UnitContext]], toolchain: Toolchain, llm,
                   policy: RepairPolicy, report: ValidationReport, parallelism: int = 1) -> list[AtomicTestUnit]:
    """Validate many units; environment faults propagate, LLM outages leave the unit pending."""
    from concurrent.futures import ThreadPoolExecutor

    def one(item):
        unit, ctx = item
        try:
            validate_loop(unit, toolchain, llm, policy, ctx)
        except LlmUnavailable as exc:
            log.warning("%s path %d: %s", unit.function_name, unit.path_id, exc)
        if unit.status != PENDING:
            unit.check(policy.max_iterations)
        report.add(unit)
        return unit

    if parallelism <= 1:
        return [one(i) for i in units]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, units))
