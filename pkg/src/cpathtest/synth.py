"""Per-path test synthesis and the static constraint checks applied to every test file."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable

from . import cparse
from .cfg import ExecutionPath
from .csource import HEADER_NAME, FunctionUnit
from .errors import ConstraintViolation, EmptyResponse
from .opmap import HELPERS_HEADER, HelpersFile, PathSlice

log = logging.getLogger(__name__)

PENDING, PASS0, REPAIRED, DROPPED = "pending", "pass0", "repaired", "dropped"
STATUSES = (PENDING, PASS0, REPAIRED, DROPPED)

FRAMEWORK_CALL = re.compile(r"^(TEST_|UNITY_|RUN_TEST$)")
FIXTURE_NAMES = ("setUp", "tearDown")
TEST_NAME = re.compile(r"^test_(?P<fn>[A-Za-z_][A-Za-z0-9_]*?)_path(?P<id>\d+)(?:_(?P<desc>[A-Za-z0-9_]*))?$")


@dataclass
class AtomicTestUnit:
    path_id: int
    function_name: str
    test_source: str
    helpers: HelpersFile
    status: str = PENDING
    iterations_used: int = 0
    error_history: list = field(default_factory=list)  # list[validate.ErrorReport]
    test_name: str = ""
    violations: list[str] = field(default_factory=list)
    hint: str | None = None  # root-cause hint for early drops
    requests: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"bad status {self.status!r}")

    @property
    def key(self) -> tuple[str, int]:
        return self.function_name, self.path_id

    @property
    def status_label(self) -> str:
        return f"repaired({self.iterations_used})" if self.status == REPAIRED else self.status

    @property
    def validated(self) -> bool:
        return self.status in (PASS0, REPAIRED)

    def check(self, max_iterations: int) -> None:
        """Status/budget invariants of a unit."""
        if self.iterations_used > max_iterations or self.iterations_used < 0:
            raise AssertionError(f"{self.key}: iterations_used={self.iterations_used} out of budget")
        if self.status == REPAIRED and self.iterations_used < 1:
            raise AssertionError(f"{self.key}: repaired with zero iterations")
        if self.status == PASS0 and self.iterations_used != 0:
            raise AssertionError(f"{self.key}: pass0 after repairs")
        if self.status == DROPPED and self.iterations_used != max_iterations and self.hint is None:
            raise AssertionError(f"{self.key}: dropped early without a structural reason")

    def to_json(self) -> dict:
        return {
            "function": self.function_name,
            "path_id": self.path_id,
            "test_name": self.test_name,
            "status": self.status,
            "status_label": self.status_label,
            "iterations_used": self.iterations_used,
            "violations": list(self.violations),
            "hint": self.hint,
            "requests": self.requests,
            "errors": [e.to_json() for e in self.error_history],
        }

    @classmethod
    def from_json(cls, d: dict, test_source: str, helpers: HelpersFile) -> "AtomicTestUnit":
        from .validate import ErrorReport

        return cls(d["path_id"], d["function"], test_source, helpers, d["status"], d["iterations_used"],
                   [ErrorReport.from_json(e) for e in d.get("errors", [])], d.get("test_name", ""),
                   list(d.get("violations", [])), d.get("hint"), d.get("requests", 0))


# ---------------------------------------------------------------------------
# naming


def canonical_test_name(function: str, path_id: int, shortdesc: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "_", shortdesc).strip("_").lower() or "case"
    return f"test_{function}_path{path_id}_{slug[:40].rstrip('_')}"


def parse_test_name(name: str) -> tuple[str, int] | None:
    m = TEST_NAME.match(name)
    return (m.group("fn"), int(m.group("id"))) if m else None


def _shortdesc(function: str, given: str) -> str:
    rest = given[len("test_"):] if given.startswith("test_") else given
    m = TEST_NAME.match(given)
    if m and m.group("desc"):
        return m.group("desc")
    if rest.startswith(function):
        rest = rest[len(function):]
    rest = re.sub(r"^_?path\d+", "", rest)
    return rest.strip("_") or "case"


def rename_identifier(source: str, old: str, new: str) -> str:
    """Rename every identifier token ``old`` (not inside strings or comments)."""
    if old == new:
        return source
    tree = cparse.parse(source)
    data = source.encode("utf-8")
    spans = [(n.start_byte, n.end_byte) for n in cparse.walk(tree.root_node)
             if n.type == "identifier" and n.text == old.encode()]
    for start, end in sorted(spans, reverse=True):
        data = data[:start] + new.encode() + data[end:]
    return data.decode("utf-8")


# ---------------------------------------------------------------------------
# code extraction and normalization

_BLOCK = re.compile(r"```([^\n`]*)\n(.*?)```", re.S)


def code_blocks(text: str) -> list[tuple[str, str]]:
    """Fenced code blocks as ``(info_string, body)``."""
    return [(m.group(1).strip(), m.group(2)) for m in _BLOCK.finditer(text)]


def extract_code(text: str) -> str:
    blocks = code_blocks(text)
    if not blocks:
        return text.strip() + "\n" if text.strip() else ""
    with_test = [b for _, b in blocks if re.search(r"\bvoid\s+test_\w*\s*\(", b)]
    return (with_test[0] if with_test else blocks[0][1]).strip() + "\n"


def test_functions(source: str) -> list[str]:
    return [n for n in cparse.defined_functions(source) if n.startswith("test") and n not in FIXTURE_NAMES]


def normalize_test_source(source: str, function: str, path_id: int) -> tuple[str, str]:
    """Canonical test name, setUp/tearDown stubs present, no ``main``. Returns (source, test_name)."""
    items = cparse.split_toplevel(source)
    mains = [i for i in items if i.kind == "function" and i.name == "main"]
    for m in mains:
        source = source.replace(m.text, "")
    tests = test_functions(source)
    name = ""
    if tests:
        given = tests[0]
        m = TEST_NAME.match(given)
        if m and m.group("fn") == function and int(m.group("id")) == path_id and m.group("desc"):
            name = given
        else:
            name = canonical_test_name(function, path_id, _shortdesc(function, given))
            source = rename_identifier(source, given, name)
    defined = set(cparse.defined_functions(source))
    stubs = [f"void {f}(void) {{}}" for f in FIXTURE_NAMES if f not in defined]
    if stubs:
        source = source.rstrip("\n") + "\n\n" + "\n".join(stubs) + "\n"
    for inc in (f'#include "{HELPERS_HEADER}"', f'#include "{HEADER_NAME}"', '#include "unity.h"'):
        if inc not in source:
            source = inc + "\n" + source
    return source, name


# ---------------------------------------------------------------------------
# static checks


def _local_names(root) -> set[str]:
    """Names the file itself defines or declares (functions, variables, parameters)."""
    names = set()
    for n in cparse.walk(root):
        if n.type in ("function_definition",):
            fn = cparse.function_name(n)
            if fn:
                names.add(fn)
        elif n.type in ("declaration", "parameter_declaration"):
            for d in n.children_by_field_name("declarator"):
                inner = d.child_by_field_name("declarator") if d.type == "init_declarator" else d
                name = cparse.declarator_name(inner)
                if name:
                    names.add(name)
        elif n.type in ("preproc_def", "preproc_function_def"):
            names.add(cparse.text(n.child_by_field_name("name")))
    return names


def called_identifiers(source: str) -> list[str]:
    """Distinct directly-called identifiers, in first-use order (syntax tree, so comments/strings are ignored)."""
    seen: list[str] = []
    for name in cparse.called_names(cparse.parse(source).root_node):
        if name not in seen:
            seen.append(name)
    return seen


def _has_assertion(root) -> bool:
    for name in cparse.called_names(root):
        if name.startswith("TEST_ASSERT") or name in ("TEST_FAIL", "TEST_FAIL_MESSAGE"):
            return True
    return False


def check_constraints(source: str, fn_name: str, allowed: Iterable[str],
                      macro_names: Iterable[str] = ()) -> list[ConstraintViolation]:
    """Static post-generation checks: allowed calls only, calls the function, asserts something."""
    root = cparse.parse(source).root_node
    allowed = set(allowed) | set(macro_names) | _local_names(root)
    violations = []
    for name in called_identifiers(source):
        if FRAMEWORK_CALL.match(name) or name in allowed:
            continue
        violations.append(ConstraintViolation(name))
    if fn_name not in cparse.called_names(root):
        violations.append(ConstraintViolation(fn_name, "function under test is never called"))
    if not _has_assertion(root):
        violations.append(ConstraintViolation("TEST_ASSERT", "no assertion macro used"))
    if not test_functions(source):
        violations.append(ConstraintViolation("test_*", "no test function defined"))
    return violations


def header_macros(header: str) -> list[str]:
    return [i.name for i in cparse.split_toplevel(header) if i.kind == "macro"]


# ---------------------------------------------------------------------------
# prompting

SYNTH_SYSTEM = """You write one Unity unit test in C for one execution path of a function.
The test must drive the function down exactly the given path and assert the
observable outcome. Call only the functions listed as allowed (plus Unity
assertion macros and code you define in the file). Free everything you allocate.

Output one ```c block containing a complete test file that:
- includes "unity.h", "header.h" and "helpers.h";
- defines setUp(void) and tearDown(void) (empty if unused);
- defines exactly one test function named test_<function>_path<id>_<short_description>;
- has no main() (the runner is generated)."""


def allowed_signatures(slice_: PathSlice, prototypes: dict[str, str]) -> list[str]:
    return [prototypes.get(n, f"{n}(...)") for n in slice_.allowed_calls]


def synth_prompt(fn: FunctionUnit, path: ExecutionPath, slice_: PathSlice, header: str,
                 helpers: HelpersFile, prototypes: dict[str, str]) -> list[tuple[str, str]]:
    sigs = "\n".join(f"- {s}" for s in allowed_signatures(slice_, prototypes))
    user = (
        f"Project header ({HEADER_NAME}):\n```c\n{header.rstrip()}\n```\n\n"
        f"Helpers ({HELPERS_HEADER}):\n```c\n{helpers.header_text.rstrip()}\n```\n\n"
        f"Function under test: {fn.name}\n"
        + (f"Description: {fn.desc}\n" if fn.desc else "")
        + f"```c\n{fn.body.rstrip()}\n```\n\n"
        f"Execution path {path.path_id} ([T] = condition true, [F] = false):\n{slice_.linearized}\n\n"
        f"Allowed calls:\n{sigs}\n\n"
        f"Name the test test_{fn.name}_path{path.path_id}_<short_description>."
    )
    return [("system", SYNTH_SYSTEM), ("user", user)]


def _violation_note(violations: list[ConstraintViolation]) -> str:
    lines = ["The test breaks these rules; fix them and resend the whole file:"]
    lines.extend(f"- {v}" for v in violations)
    return "\n".join(lines)


def generate_test(fn: FunctionUnit, path: ExecutionPath, slice_: PathSlice, llm, *, header: str,
                  helpers: HelpersFile, prototypes: dict[str, str] | None = None) -> AtomicTestUnit:
    """One request per path, plus one reprompt if the static checks fail.

    A unit that still violates the constraints after the reprompt is returned
    with its violations recorded; the validation loop gets a chance to fix it.
    """
    if slice_.path_id != path.path_id:
        raise ValueError("slice does not belong to path")
    prototypes = prototypes or {}
    macros = header_macros(header)
    messages = synth_prompt(fn, path, slice_, header, helpers, prototypes)
    tag = f"synth:{fn.name}:path{path.path_id}"
    raw = llm.complete("synth", messages, function=fn.name, tag=tag).text
    requests = 1
    code = extract_code(raw or "")
    if not code.strip():
        raise EmptyResponse(f"{fn.name} path {path.path_id}: empty synthesis response")
    source, name = normalize_test_source(code, fn.name, path.path_id)
    violations = check_constraints(source, fn.name, slice_.allowed_calls, macros)
    if violations:
        log.info("%s path %d: reprompting for %s", fn.name, path.path_id, ", ".join(v.identifier for v in violations))
        retry = messages + [("assistant", raw), ("user", _violation_note(violations))]
        raw2 = llm.complete("synth", retry, function=fn.name, tag=tag + ":retry").text
        requests += 1
        code2 = extract_code(raw2 or "")
        if code2.strip():
            source, name = normalize_test_source(code2, fn.name, path.path_id)
            violations = check_constraints(source, fn.name, slice_.allowed_calls, macros)
    return AtomicTestUnit(path.path_id, fn.name, source, helpers, test_name=name,
                          violations=[str(v) for v in violations], requests=requests)
