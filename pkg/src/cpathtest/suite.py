"""Merge validated units into one Unity suite and measure its coverage with gcov."""

from __future__ import annotations

import logging
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import cparse
from .config import ToolchainConfig
from .csource import HEADER_NAME
from .errors import CoverageToolMissing, MergeCompileFailure, SuiteRunFailure, UnrecognizedFormat
from .opmap import HELPERS_HEADER, wrapped_symbols
from .synth import FIXTURE_NAMES, AtomicTestUnit
from .util import atomic_write
from .validate import resolve_compiler, run_sandboxed

log = logging.getLogger(__name__)

SUITE_NAME = "test_suite.c"
_LOCAL_INCLUDES = {f'#include "{n}"' for n in ("unity.h", HEADER_NAME, HELPERS_HEADER)}


@dataclass
class MergedSuite:
    source_text: str
    included_tests: list[tuple[str, int, str]] = field(default_factory=list)
    helper_definitions: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    wrapped: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"tests": [list(t) for t in self.included_tests], "helpers": sorted(self.helper_definitions),
                "warnings": list(self.warnings), "wrapped": list(self.wrapped)}


class _Section:
    """Ordered, name-keyed top-level items with first-wins deduplication."""

    def __init__(self):
        self.order: list[tuple[str, str]] = []
        self.items: dict[tuple[str, str], tuple[str, str, str]] = {}  # key -> (text, norm, origin)

    def offer(self, kind: str, name: str, text_: str, norm: str, origin: str) -> str:
        """Returns 'new', 'same' or 'conflict'."""
        key = (kind, name)
        if key not in self.items:
            self.items[key] = (text_, norm, origin)
            self.order.append(key)
            return "new"
        return "same" if self.items[key][1] == norm else "conflict"

    def texts(self) -> list[str]:
        return [self.items[k][0].rstrip() for k in self.order]


def _isolate_locals(src: str, test_name: str, suffix: str, helper_names: set[str], seen: "_Section",
                    origin: str, warnings: list[str]) -> str:
    """Give a unit's file-scope state private names, and rename local functions that clash.

    Globals always get the unit suffix so no two tests share mutable state.
    Local functions keep their name unless a helper or an earlier unit defines
    the same name with a different body.
    """
    renamed = []
    for item in cparse.split_toplevel(src):
        if item.kind == "global":
            for n in item.name.split(","):
                src = _rename(src, n, n + suffix)
                renamed.append(n + suffix)
    for item in cparse.split_toplevel(src):
        if item.kind != "function" or item.name == test_name or item.name.endswith(suffix):
            continue
        prior = seen.items.get(("function", item.name))
        uses_state = any(re.search(rf"\b{re.escape(n)}\b", item.text) for n in renamed)
        if uses_state or item.name in helper_names or (prior is not None and prior[1] != item.key):
            src = _rename(src, item.name, item.name + suffix)
            if not uses_state:
                warnings.append(f"{origin}: local function {item.name!r} renamed to avoid a clash")
    return src


def merge_suite(units: Iterable[AtomicTestUnit]) -> MergedSuite:
    """Deterministically merge validated units (dropped/pending ones are ignored)."""
    chosen = sorted((u for u in units if u.validated), key=lambda u: (u.function_name, u.path_id))
    includes: list[str] = []
    helpers = _Section()
    helper_protos: dict[str, str] = {}
    locals_ = _Section()
    warnings: list[str] = []
    tests: list[tuple[str, int, str]] = []
    bodies: list[str] = []
    wrapped: set[str] = set()

    def hoist(text_: str) -> None:
        t = cparse.squash(text_)
        if t not in _LOCAL_INCLUDES and t not in includes:
            includes.append(t)

    for u in chosen:
        origin = f"{u.function_name} path {u.path_id}"
        wrapped.update(wrapped_symbols(u.helpers.source_text))
        for item in cparse.split_toplevel(u.helpers.source_text):
            if item.kind == "include":
                hoist(item.text)
                continue
            if item.kind == "prototype":
                helper_protos.setdefault(item.name, item.text.rstrip())
                continue
            verdict = helpers.offer(item.kind, item.name or cparse.squash(item.text), item.text, item.key, origin)
            if verdict == "conflict":
                kept = helpers.items[(item.kind, item.name)][2]
                warnings.append(f"helper {item.name!r} differs in {origin}; keeping the version from {kept}")

        src = u.test_source
        suffix = f"_{u.function_name}_path{u.path_id}"
        for fixture in FIXTURE_NAMES:
            src = _rename(src, fixture, fixture + suffix)
        src = _isolate_locals(src, u.test_name, suffix, {n for _, n in helpers.order}, locals_, origin, warnings)
        unit_body: list[str] = []
        unit_state: list[str] = []
        for item in cparse.split_toplevel(src):
            if item.kind == "include":
                hoist(item.text)
            elif item.kind == "function" and (item.name == u.test_name or item.name.endswith(suffix)):
                unit_body.append(item.text.rstrip())
            elif item.kind == "global":
                unit_state.append(item.text.rstrip())
            else:
                name = item.name or cparse.squash(item.text)
                if item.kind == "prototype" and (name in helper_protos or ("function", name) in helpers.items):
                    continue
                if locals_.offer(item.kind, name, item.text, item.key, origin) == "conflict":
                    warnings.append(f"{origin}: {item.kind} {name!r} differs from an earlier unit; keeping the first")
        tests.append((u.function_name, u.path_id, u.test_name))
        bodies.append(f"/* {u.function_name}, path {u.path_id} */\n" + "\n\n".join(unit_state + unit_body))

    # prototypes for every helper function so definition order never matters
    defined_helpers = [n for k, n in helpers.order if k == "function"]
    protos = []
    for n in defined_helpers:
        node = _node_of(helpers.items[("function", n)][0])
        if node is not None and not n.startswith("__"):
            protos.append(cparse.prototype_of(node))
    protos += [t for n, t in sorted(helper_protos.items()) if n not in defined_helpers]

    out = ['#include "unity.h"', f'#include "{HEADER_NAME}"', *includes, ""]
    if protos:
        out += ["/* helper prototypes */", *protos, ""]
    if helpers.order:
        out += ["/* helpers */", "\n\n".join(helpers.texts()), ""]
    if locals_.order:
        out += ["/* shared test-file definitions */", "\n\n".join(locals_.texts()), ""]
    out += ["/* tests */", "\n\n".join(bodies), ""] if bodies else []
    out.append(_runner(tests))
    return MergedSuite("\n".join(out), tests,
                       {n: helpers.items[(k, n)][0] for k, n in helpers.order if k == "function"},
                       warnings, sorted(wrapped))


def _node_of(function_text: str):
    items = cparse.split_toplevel(function_text)
    return items[0].node if items and items[0].kind == "function" else None


def _rename(source: str, old: str, new: str) -> str:
    from .synth import rename_identifier

    return rename_identifier(source, old, new)


def _runner(tests: list[tuple[str, int, str]]) -> str:
    lines = [
        "/* runner */",
        "static void (*unit_setup)(void);",
        "static void (*unit_teardown)(void);",
        "",
        "void setUp(void)",
        "{",
        "    if (unit_setup)",
        "        unit_setup();",
        "}",
        "",
        "void tearDown(void)",
        "{",
        "    if (unit_teardown)",
        "        unit_teardown();",
        "}",
        "",
        "int main(void)",
        "{",
        "    UNITY_BEGIN();",
    ]
    for fn, pid, name in tests:
        s = f"_{fn}_path{pid}"
        lines += [f"    unit_setup = setUp{s};", f"    unit_teardown = tearDown{s};", f"    RUN_TEST({name});"]
    lines += ["    return UNITY_END();", "}", ""]
    return "\n".join(lines)


def defined_names(source: str) -> list[str]:
    """Every function and global name defined at top level (prototypes excluded)."""
    names = []
    for item in cparse.split_toplevel(source):
        if item.kind in ("function", "global"):
            names.extend(item.name.split(","))
    return names


# ---------------------------------------------------------------------------
# building and coverage

_CLASH = re.compile(r"(?:redefinition of|multiple definition of|conflicting types for)\s+[`'‘\"]?(\w+)")


def _compile(cmd: list[str], cwd: Path) -> subprocess.CompletedProcess:
    return subprocess.run(cmd, capture_output=True, text=True, cwd=cwd)


def build_suite(suite: MergedSuite, project_dir: Path, build_dir: Path, toolchain: ToolchainConfig,
                sources: list[Path], coverage: bool = True) -> Path:
    """Compile the suite, the project's function units and the runtime into one executable."""
    cc = resolve_compiler(toolchain)
    if build_dir.exists():
        shutil.rmtree(build_dir)
    build_dir.mkdir(parents=True)
    suite_c = build_dir / SUITE_NAME
    atomic_write(suite_c, suite.source_text)
    base = [cc, *toolchain.cflags, *toolchain.sanitize_flags, f"-I{project_dir}", f"-I{toolchain.unity_dir}"]
    cov = list(toolchain.coverage_flags) if coverage else []
    objs = []
    for src in sources:
        obj = build_dir / f"{src.stem}.o"
        proc = _compile([*base, *cov, "-c", str(src.resolve()), "-o", str(obj)], build_dir)
        if proc.returncode != 0:
            raise MergeCompileFailure(proc.stderr, [src.stem])
        objs.append(obj)
    unity_o = build_dir / "unity_runtime.o"
    proc = _compile([*base, "-c", str(Path(toolchain.unity_dir) / "unity.c"), "-o", str(unity_o)], build_dir)
    if proc.returncode != 0:
        raise MergeCompileFailure(proc.stderr, ["unity"])
    exe = build_dir / "test_suite"
    wraps = [f"-Wl,--wrap={s}" for s in suite.wrapped]
    proc = _compile([*base, *cov, str(suite_c), *map(str, objs), str(unity_o), "-o", str(exe), *wraps,
                     *toolchain.ldflags], build_dir)
    if proc.returncode != 0 or proc.stderr.strip():
        diag = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise MergeCompileFailure(diag, sorted(set(_CLASH.findall(diag))))
        log.warning("suite compiled with diagnostics:\n%s", diag)
    return exe


@dataclass
class FileCoverage:
    file: str
    line_pct: float | None = None
    lines_total: int = 0
    branch_pct: float | None = None  # "taken at least once"
    branches_total: int = 0
    function_pct: float | None = None
    functions_total: int = 0
    branches_executed_pct: float | None = None
    calls_pct: float | None = None
    calls_total: int = 0

    @property
    def lines_covered(self) -> int:
        return _count(self.line_pct, self.lines_total)

    @property
    def branches_covered(self) -> int:
        return _count(self.branch_pct, self.branches_total)

    @property
    def functions_covered(self) -> int:
        return _count(self.function_pct, self.functions_total)

    def to_json(self) -> dict:
        return {"file": self.file, "function_pct": self.function_pct, "line_pct": self.line_pct,
                "branch_pct": self.branch_pct, "lines_total": self.lines_total,
                "branches_total": self.branches_total, "functions_total": self.functions_total,
                "lines_covered": self.lines_covered, "branches_covered": self.branches_covered}


def _count(pct: float | None, total: int) -> int:
    return 0 if pct is None or total == 0 else int(round(pct * total / 100.0))


def _pct(covered: int, total: int) -> float | None:
    return round(100.0 * covered / total, 2) if total else None


_STAT = re.compile(r"^(Lines executed|Branches executed|Taken at least once|Calls executed):"
                   r"(\d+(?:\.\d+)?)% of (\d+)$")
_IGNORABLE = re.compile(r"^(No branches|No calls|No executable lines|Creating '.*'|Removing '.*'|"
                        r"Cannot open source file .*|.*:cannot open (notes|data) file.*|"
                        r".*:stamp mismatch with notes file|.*:source file is newer than notes file.*|"
                        r"\(the message is displayed only once per source file\)|"
                        r".*: ?not executed.*)$")


def parse_gcov(raw: str) -> list[FileCoverage]:
    """Parse gcov's summary stdout (``-b -f`` style) into one entry per ``File`` block.

    Statistics outside a ``File`` block (a lone summary line, or the trailing
    grand total) are returned under the empty file name. A zero denominator
    yields ``None`` (not applicable), never 100.
    """
    results: list[FileCoverage] = []
    current: FileCoverage | None = None
    in_function = False
    pending_fn: list[bool] = []
    recognized = False
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            if current is not None and not in_function:
                current = None
            in_function = False
            continue
        if line.startswith("Function '"):
            in_function = True
            recognized = True
            continue
        if line.startswith("File '") and line.endswith("'"):
            current = FileCoverage(line[6:-1])
            if pending_fn:
                current.functions_total = len(pending_fn)
                current.function_pct = _pct(sum(pending_fn), len(pending_fn))
                pending_fn = []
            results.append(current)
            in_function = False
            recognized = True
            continue
        m = _STAT.match(line)
        if m:
            recognized = True
            what, pct, total = m.group(1), float(m.group(2)), int(m.group(3))
            value = pct if total else None
            if in_function:
                if what == "Lines executed":
                    pending_fn.append(pct > 0 and total > 0)
                continue
            if current is None:
                current = FileCoverage("")
                results.append(current)
            if what == "Lines executed":
                current.line_pct, current.lines_total = value, total
            elif what == "Taken at least once":
                current.branch_pct, current.branches_total = value, total
            elif what == "Branches executed":
                current.branches_executed_pct = value
                if current.branch_pct is None:
                    current.branches_total = total
            else:
                current.calls_pct, current.calls_total = value, total
            continue
        if _IGNORABLE.match(line):
            recognized = True
            continue
        raise UnrecognizedFormat(line)
    if not recognized:
        raise UnrecognizedFormat(raw[:80])
    return results


@dataclass
class GcovFunction:
    name: str
    lines_total: int = 0
    lines_covered: int = 0
    branches_total: int = 0
    branches_taken: int = 0
    calls: int = 0


_GCOV_LINE = re.compile(r"^\s*([^:]+):\s*(\d+):")
_GCOV_FUNC = re.compile(r"^function (\S+) called (\d+)")
_GCOV_BRANCH = re.compile(r"^branch\s+\d+\s+(taken (\d+)|never executed)")


def parse_gcov_file(text: str) -> list[GcovFunction]:
    """Per-function line and branch counts from an annotated ``.gcov`` file (``-b -c``)."""
    funcs: list[GcovFunction] = []
    cur: GcovFunction | None = None
    for line in text.splitlines():
        m = _GCOV_FUNC.match(line)
        if m:
            cur = GcovFunction(m.group(1), calls=int(m.group(2)))
            funcs.append(cur)
            continue
        m = _GCOV_BRANCH.match(line)
        if m and cur is not None:
            cur.branches_total += 1
            if m.group(2) is not None and int(m.group(2)) > 0:
                cur.branches_taken += 1
            continue
        m = _GCOV_LINE.match(line)
        if m and cur is not None and int(m.group(2)) > 0:
            count = m.group(1).strip()
            if count == "-":
                continue
            cur.lines_total += 1
            if not count.startswith(("#####", "=====")):
                cur.lines_covered += 1
    return funcs


@dataclass
class CoverageReport:
    per_file: list[FileCoverage] = field(default_factory=list)
    per_function: dict[str, FileCoverage] = field(default_factory=dict)
    project: FileCoverage = field(default_factory=lambda: FileCoverage("<project>"))
    tests_run: int = 0

    def to_json(self) -> dict:
        return {"project": self.project.to_json(), "per_file": [f.to_json() for f in self.per_file],
                "per_function": {k: v.to_json() for k, v in sorted(self.per_function.items())},
                "tests_run": self.tests_run}


def aggregate(name: str, parts: list[FileCoverage]) -> FileCoverage:
    """Count-weighted combination of several coverage entries."""
    lt = sum(p.lines_total for p in parts)
    bt = sum(p.branches_total for p in parts)
    ft = sum(p.functions_total for p in parts)
    return FileCoverage(name, _pct(sum(p.lines_covered for p in parts), lt), lt,
                        _pct(sum(p.branches_covered for p in parts), bt), bt,
                        _pct(sum(p.functions_covered for p in parts), ft), ft)


def run_gcov(gcov: str, objdir: Path, sources: list[Path], cwd: Path) -> str:
    cwd.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run([gcov, "-b", "-c", "-f", "-o", str(objdir), *map(str, sources)],
                          capture_output=True, text=True, cwd=cwd)
    if proc.returncode != 0:
        raise CoverageToolMissing(f"gcov failed: {proc.stderr}")
    return proc.stdout


def measure_coverage(suite: MergedSuite, project_dir: Path, build_dir: Path, toolchain: ToolchainConfig,
                     targets: dict[str, str], timeout: float = 60.0) -> CoverageReport:
    """Build with gcov instrumentation, run once, and report coverage of the function units.

    ``targets`` maps each function under test to the original source file it
    came from; per-file figures aggregate those functions. Test, helper and
    link-only support code is outside the aggregate.
    """
    gcov = toolchain.resolve_gcov()
    if gcov is None:
        raise CoverageToolMissing(f"coverage tool {toolchain.gcov!r} not found on PATH")
    from .validate import project_sources

    sources = project_sources(project_dir)
    exe = build_suite(suite, project_dir, build_dir, toolchain, sources, coverage=True)
    res = run_sandboxed([str(exe)], timeout)
    if res.exit_code != 0 or res.timed_out:
        raise SuiteRunFailure(res.output)
    atomic_write(build_dir / "run.log", res.output)
    fdir = project_dir / "functions"
    unit_srcs = [(fdir / f"{name}.c").resolve() for name in sorted(targets)]
    report = CoverageReport(tests_run=len(suite.included_tests))
    if not unit_srcs:
        return report
    stdout = run_gcov(gcov, build_dir, unit_srcs, build_dir / "gcov")
    atomic_write(build_dir / "gcov.stdout", stdout)
    by_file = {Path(f.file).name: f for f in parse_gcov(stdout) if f.file}
    for name in sorted(targets):
        fc = by_file.get(f"{name}.c")
        if fc is None:  # never linked or no executable lines
            fc = FileCoverage(f"{name}.c")
        fc.functions_total = 1
        gfile = build_dir / "gcov" / f"{name}.c.gcov"
        called = any(g.calls > 0 for g in parse_gcov_file(gfile.read_text())) if gfile.exists() else False
        fc.function_pct = 100.0 if called else 0.0
        report.per_function[name] = fc
    files: dict[str, list[FileCoverage]] = {}
    for name, src_file in targets.items():
        files.setdefault(src_file, []).append(report.per_function[name])
    report.per_file = [aggregate(f, files[f]) for f in sorted(files)]
    report.project = aggregate("<project>", report.per_file)
    return report
