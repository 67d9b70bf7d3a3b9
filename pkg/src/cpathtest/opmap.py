"""Operation map: which helpers a function's tests may reuse, create and call.

One LLM call per function decides ``reuse`` (from the retrieved catalog),
``created`` (new helper implementations) and ``deps`` (project or runtime
functions the tests will need). Path information is merged afterwards, and the
resulting helpers file is replicated into every per-path unit.
"""

from __future__ import annotations

import json
import logging
import re
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import jsonschema

from . import cparse
from .cfg import ExecutionPath
from .csource import HEADER_NAME, FunctionUnit, signature_of
from .errors import HallucinatedReuse, HelperCompileFailure, MissingPoolImpl, SchemaViolation
from .retrieval import Helper, HelperCatalog

log = logging.getLogger(__name__)

HELPERS_HEADER = "helpers.h"
HELPERS_SOURCE = "helpers.c"

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["reuse", "created", "deps"],
    "properties": {
        "reuse": {"type": "array", "items": {"type": "string"}},
        "created": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "signature", "impl", "desc"],
                "properties": {
                    "name": {"type": "string", "pattern": r"^[A-Za-z_][A-Za-z0-9_]*$"},
                    "signature": {"type": "string"},
                    "impl": {"type": "string", "minLength": 1},
                    "desc": {"type": "string", "minLength": 1},
                },
            },
        },
        "deps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["callee"],
                "properties": {"callee": {"type": "string"}, "note": {"type": "string"}},
            },
        },
    },
}


@dataclass(frozen=True)
class PathSlice:
    path_id: int
    linearized: str
    allowed_calls: tuple[str, ...]

    def to_json(self) -> dict:
        return {"path_id": self.path_id, "linearized": self.linearized, "allowed_calls": list(self.allowed_calls)}

    @classmethod
    def from_json(cls, d: dict) -> "PathSlice":
        return cls(d["path_id"], d["linearized"], tuple(d["allowed_calls"]))


@dataclass
class OperationMap:
    function_name: str
    reuse: list[str] = field(default_factory=list)
    created: list[Helper] = field(default_factory=list)
    deps: list[tuple[str, str]] = field(default_factory=list)
    per_path: dict[int, PathSlice] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    requests: int = 0

    @property
    def dep_names(self) -> list[str]:
        return [c for c, _ in self.deps]

    def to_json(self) -> dict:
        return {
            "function": self.function_name,
            "reuse": list(self.reuse),
            "created": [h.to_json() for h in self.created],
            "deps": [{"callee": c, "note": n} for c, n in self.deps],
            "per_path": {str(k): v.to_json() for k, v in sorted(self.per_path.items())},
            "warnings": list(self.warnings),
            "requests": self.requests,
        }

    @classmethod
    def from_json(cls, d: dict) -> "OperationMap":
        return cls(
            d["function"], list(d["reuse"]), [Helper.from_json(h) for h in d["created"]],
            [(x["callee"], x.get("note", "")) for x in d["deps"]],
            {int(k): PathSlice.from_json(v) for k, v in d.get("per_path", {}).items()},
            list(d.get("warnings", [])), d.get("requests", 0),
        )


# ---------------------------------------------------------------------------
# building the map

OPMAP_SYSTEM = """You plan unit tests for C functions that use the Unity framework.
Given the project header, one function, and a catalog of existing test helpers,
decide which catalog helpers the tests should reuse, which new helpers must be
written, and which other functions the tests will call.

Reply with one JSON object and nothing else:
{"reuse": ["<catalog helper name>", ...],
 "created": [{"name": "...", "signature": "<C prototype>", "impl": "<complete C definition>", "desc": "..."}],
 "deps": [{"callee": "<function name>", "note": "<why the test needs it>"}]}

Rules: reuse only names from the catalog. New helpers must not reuse catalog or
project function names. Helper code may use Unity assertions and the project
header. deps lists project functions (including the function under test's
callees) and C library functions the tests may call."""


def opmap_prompt(fn: FunctionUnit, header: str, catalog: HelperCatalog) -> list[tuple[str, str]]:
    if catalog.entries:
        cat = "\n".join(f"- {h.prototype};  // {h.desc}" for h, _ in catalog.entries)
    else:
        cat = "(empty)"
    user = (
        f"Project header ({HEADER_NAME}):\n```c\n{header.rstrip()}\n```\n\n"
        f"Function under test: {fn.name}\n"
        + (f"Description: {fn.desc}\n" if fn.desc else "")
        + f"```c\n{fn.body.rstrip()}\n```\n\n"
        f"Helper catalog:\n{cat}\n"
    )
    return [("system", OPMAP_SYSTEM), ("user", user)]


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.S)


def _json_payload(raw: str) -> str:
    m = _FENCE.search(raw)
    if m:
        return m.group(1)
    start, end = raw.find("{"), raw.rfind("}")
    return raw[start:end + 1] if 0 <= start < end else raw


def parse_opmap_response(raw: str, fn: FunctionUnit, catalog: HelperCatalog,
                         project_functions: Iterable[str], known_callees: Iterable[str]) -> OperationMap:
    """Validate one operation-map reply. Raises SchemaViolation or HallucinatedReuse."""
    try:
        data = json.loads(_json_payload(raw))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(raw, f"not JSON: {exc}") from exc
    try:
        jsonschema.validate(data, RESPONSE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(raw, exc.message) from exc

    catalog_names = set(catalog.names)
    reuse: list[str] = []
    for name in data["reuse"]:
        if name not in catalog_names:
            raise HallucinatedReuse(name)
        if name not in reuse:
            reuse.append(name)

    project_functions = set(project_functions)
    created: list[Helper] = []
    for c in data["created"]:
        name = c["name"]
        if name in reuse or name in project_functions:
            raise SchemaViolation(raw, f"created helper {name!r} collides with a reused or project name")
        if name in {h.name for h in created}:
            raise SchemaViolation(raw, f"created helper {name!r} defined twice")
        defn = _find_definition(c["impl"], name)
        if defn is None:
            raise SchemaViolation(raw, f"impl of created helper {name!r} does not define it")
        created.append(Helper(name, signature_of(defn), c["desc"], c["impl"], "created"))

    warnings = []
    known = set(known_callees) | project_functions
    deps: list[tuple[str, str]] = []
    for d in data["deps"]:
        callee = d["callee"]
        if callee not in known:
            warnings.append(f"{fn.name}: dropped unresolvable dependency {callee!r}")
            continue
        if callee not in {c for c, _ in deps}:
            deps.append((callee, d.get("note", "")))
    return OperationMap(fn.name, reuse, created, deps, warnings=warnings)


def _find_definition(source: str, name: str):
    for item in cparse.split_toplevel(source):
        if item.kind == "function" and item.name == name:
            return item.node
    return None


def build_operation_map(fn: FunctionUnit, header: str, catalog: HelperCatalog, llm, *,
                        project_functions: Iterable[str] = (),
                        known_callees: Iterable[str] = cparse.STDLIB_FUNCTIONS) -> OperationMap:
    """Single operation-map request, with at most one corrective reprompt."""
    project_functions = list(project_functions)
    messages = opmap_prompt(fn, header, catalog)
    raw = llm.complete("opmap", messages, function=fn.name, tag=f"opmap:{fn.name}").text
    try:
        omap = parse_opmap_response(raw, fn, catalog, project_functions, known_callees)
        omap.requests = 1
        return omap
    except (SchemaViolation, HallucinatedReuse) as exc:
        problem = exc
    if isinstance(problem, HallucinatedReuse):
        note = (f"`{problem.name}` is not in the helper catalog. Reuse only these names: "
                f"{', '.join(catalog.names) or '(none)'}; create anything else.")
    else:
        note = f"Your reply was rejected: {problem.reason}. Reply with the JSON object only."
    retry = messages + [("assistant", raw), ("user", note)]
    raw2 = llm.complete("opmap", retry, function=fn.name, tag=f"opmap:{fn.name}:retry").text
    omap = parse_opmap_response(raw2, fn, catalog, project_functions, known_callees)
    omap.requests = 2
    omap.warnings.insert(0, f"{fn.name}: operation map needed a reprompt ({problem})")
    return omap


def merge_path_info(omap: OperationMap, paths: Iterable[ExecutionPath],
                    std_allow: Iterable[str] = ()) -> OperationMap:
    """Attach one :class:`PathSlice` per path; returns a new map."""
    allowed = set(omap.reuse) | {h.name for h in omap.created} | set(omap.dep_names) | set(std_allow)
    allowed.add(omap.function_name)
    calls = tuple(sorted(allowed))
    per_path = {p.path_id: PathSlice(p.path_id, p.linearized, calls) for p in paths}
    return replace(omap, per_path=per_path, warnings=list(omap.warnings))


# ---------------------------------------------------------------------------
# helpers file


@dataclass(frozen=True)
class HelpersFile:
    source_text: str
    provided_names: tuple[str, ...]
    header_text: str = ""
    warnings: tuple[str, ...] = ()

    def write(self, directory: Path) -> None:
        from .util import atomic_write

        atomic_write(directory / HELPERS_SOURCE, self.source_text)
        atomic_write(directory / HELPERS_HEADER, self.header_text)

    @classmethod
    def read(cls, directory: Path) -> "HelpersFile":
        src = (directory / HELPERS_SOURCE).read_text(encoding="utf-8")
        hdr_path = directory / HELPERS_HEADER
        hdr = hdr_path.read_text(encoding="utf-8") if hdr_path.exists() else helpers_header(src)
        return cls(src, tuple(cparse.defined_functions(src)), hdr)


HELPERS_PREAMBLE = f'#include "unity.h"\n#include "{HEADER_NAME}"\n#include "{HELPERS_HEADER}"\n'


def helpers_header(source: str) -> str:
    """Prototypes for every non-static, non-wrapper function defined in ``source``."""
    protos = []
    for item in cparse.split_toplevel(source):
        if item.kind == "function" and not cparse.is_static(item.node) and not item.name.startswith("__"):
            protos.append(cparse.prototype_of(item.node))
    return "\n".join([
        "#ifndef TEST_HELPERS_H", "#define TEST_HELPERS_H", "", f'#include "{HEADER_NAME}"', "",
        *protos, "", "#endif", "",
    ])


def wrapped_symbols(source: str) -> list[str]:
    """Symbols the helpers interpose with ``__wrap_<sym>`` (need ``-Wl,--wrap=<sym>``)."""
    return sorted(n[len("__wrap_"):] for n in cparse.defined_functions(source) if n.startswith("__wrap_"))


def combine_sources(chunks: list[tuple[str, str]]) -> tuple[str, list[str], list[str]]:
    """Concatenate helper sources, deduplicating top-level items by name.

    ``chunks`` is ``[(origin_label, source)]`` in precedence order *lowest first*;
    a later chunk's same-name definition replaces an earlier one. Returns
    ``(text, provided_function_names, warnings)``.
    """
    includes: list[str] = []
    order: list[tuple[str, str]] = []  # (kind, name) in first-seen order
    chosen: dict[tuple[str, str], tuple[str, str]] = {}  # -> (text, origin)
    warnings: list[str] = []
    for origin, src in chunks:
        for item in cparse.split_toplevel(src):
            if item.kind == "include":
                if item.text not in includes and item.text not in HELPERS_PREAMBLE:
                    includes.append(item.text)
                continue
            key = (item.kind, item.name or cparse.squash(item.text))
            if key in chosen:
                old_text, old_origin = chosen[key]
                if cparse.normalized(old_text) != item.key:
                    warnings.append(f"helper {key[1]!r} from {origin} replaces the version from {old_origin}")
                chosen[key] = (item.text, origin)
                continue
            chosen[key] = (item.text, origin)
            order.append(key)
    body = "\n\n".join(chosen[k][0].rstrip() for k in order)
    text_ = HELPERS_PREAMBLE + ("\n".join(includes) + "\n" if includes else "") + "\n" + body + "\n"
    provided = [name for kind, name in order if kind == "function"]
    return text_, provided, warnings


def assemble_helpers(omap: OperationMap, pool: Iterable[Helper], *, header: str | None = None,
                     toolchain=None) -> HelpersFile:
    """Resolve reused helpers from the pool, append created ones, deduplicate by name.

    Created helpers take precedence over pool helpers of the same name. When
    ``header`` and ``toolchain`` are given the result is syntax-checked.
    """
    by_name = {h.name: h for h in pool}
    chunks = []
    for name in omap.reuse:
        h = by_name.get(name)
        if h is None or not h.impl:
            raise MissingPoolImpl(name)
        chunks.append((f"pool:{name}", h.impl))
    for h in omap.created:
        chunks.append((f"created:{h.name}", h.impl or ""))
    source, provided, warnings = combine_sources(chunks)
    hf = HelpersFile(source, tuple(provided), helpers_header(source), tuple(warnings))
    for w in warnings:
        log.warning("%s: %s", omap.function_name, w)
    if header is not None and toolchain is not None:
        check_helpers_compile(hf, header, toolchain)
    return hf


def check_helpers_compile(hf: HelpersFile, header: str, toolchain) -> None:
    from .validate import resolve_compiler

    cc = resolve_compiler(toolchain)
    with tempfile.TemporaryDirectory(prefix="helpers-") as tmp:
        d = Path(tmp)
        (d / HEADER_NAME).write_text(header)
        hf.write(d)
        cmd = [cc, *toolchain.cflags, "-fsyntax-only", f"-I{d}", f"-I{toolchain.unity_dir}", str(d / HELPERS_SOURCE)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise HelperCompileFailure(proc.stderr)


def replicate_helpers(hf: HelpersFile, paths: Iterable[ExecutionPath]) -> dict[int, HelpersFile]:
    """One independent copy per path; repairs replace a path's copy, never share it."""
    return {p.path_id: replace(hf) for p in paths}
