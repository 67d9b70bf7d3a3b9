"""Project ingestion, header consolidation, and per-function extraction.

A project is parsed with tree-sitter, which tolerates code that does not yet
compile. Every top-level definition lands in a symbol table; each
non-excluded function becomes a :class:`FunctionUnit` that compiles on its own
when prepended with the generated project header.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from tree_sitter import Node

from . import cparse
from .cparse import text
from .errors import (
    ExtractionFailure,
    MalformedResponse,
    NoSourcesFound,
    ParseFailure,
    UnresolvedType,
)

if TYPE_CHECKING:
    from .cfg import ExecutionPath
    from .config import PipelineConfig
    from .llm import LlmClient

log = logging.getLogger(__name__)

DEFAULT_EXCLUDE_PATTERNS = (r"^main$", r"^test_")
HEADER_NAME = "header.h"
SKIP_DIRS = {"artifacts", ".git", "__pycache__"}


@dataclass(frozen=True)
class SourceFile:
    path: Path
    text: str


@dataclass(frozen=True)
class Symbol:
    file: str
    kind: str  # function | type | macro | global
    line: int


@dataclass(frozen=True)
class Signature:
    param_types: tuple[str, ...]
    return_type: str
    param_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.param_types) != len(self.param_names):
            raise ValueError("param_types and param_names differ in length")

    def prototype(self, name: str) -> str:
        params = ", ".join(self.param_types) if self.param_types else "void"
        sep = "" if self.return_type.endswith("*") else " "
        return f"{self.return_type}{sep}{name}({params})"

    def to_json(self) -> dict:
        return {
            "return_type": self.return_type,
            "param_types": list(self.param_types),
            "param_names": list(self.param_names),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Signature":
        return cls(tuple(d.get("param_types", ())), d.get("return_type", "void"),
                   tuple(d.get("param_names", ())))


@dataclass
class FunctionUnit:
    name: str
    signature: Signature
    body: str
    source_span: tuple[str, int, int]
    deps: frozenset[str] = frozenset()
    desc: str = ""
    was_static: bool = False
    preamble: str = ""  # function-like macros the body needs

    def unit_source(self) -> str:
        parts = [f'#include "{HEADER_NAME}"\n']
        if self.preamble:
            parts.append(self.preamble.rstrip("\n") + "\n")
        parts.append("\n" + self.body.rstrip("\n") + "\n")
        return "".join(parts)

    @property
    def body_first_line(self) -> int:
        """1-based line of the unit file where the definition begins."""
        return 3 + (self.preamble.rstrip("\n").count("\n") + 1 if self.preamble else 0)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "signature": self.signature.to_json(),
            "span": list(self.source_span),
            "deps": sorted(self.deps),
            "desc": self.desc,
            "was_static": self.was_static,
            "body": self.body,
            "preamble": self.preamble,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FunctionUnit":
        return cls(
            name=d["name"],
            signature=Signature.from_json(d["signature"]),
            body=d["body"],
            source_span=tuple(d["span"]),
            deps=frozenset(d.get("deps", ())),
            desc=d.get("desc", ""),
            was_static=d.get("was_static", False),
            preamble=d.get("preamble", ""),
        )


@dataclass
class _Item:
    """One top-level construct of a source file."""

    kind: str  # function | type | macro | fmacro | global | include
    name: str
    text: str
    file: str
    line: int
    order: int
    node: Node | None = None
    refs: frozenset[str] = frozenset()


@dataclass
class SourceProject:
    root_path: Path
    source_files: list[SourceFile]
    include_dirs: list[Path]
    symbol_table: dict[str, Symbol]
    excluded: dict[str, str] = field(default_factory=dict)  # name -> reason
    warnings: list[str] = field(default_factory=list)
    items: list[_Item] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.source_files:
            raise NoSourcesFound(str(self.root_path))

    @property
    def name(self) -> str:
        return self.root_path.name

    def functions(self) -> dict[str, _Item]:
        return {i.name: i for i in self.items if i.kind == "function"}

    def target_names(self) -> list[str]:
        return [i.name for i in self.items if i.kind == "function" and i.name not in self.excluded]


# ---------------------------------------------------------------------------
# ingestion


def ingest_project(root: str | Path, config: "PipelineConfig | None" = None) -> SourceProject:
    root = Path(root)
    if not root.is_dir():
        raise NoSourcesFound(str(root))
    files = sorted(
        p for p in root.rglob("*")
        if p.suffix in (".c", ".h") and p.is_file()
        and not any(part in SKIP_DIRS or part.startswith(".") for part in p.relative_to(root).parts[:-1])
    )
    if not any(p.suffix == ".c" for p in files):
        raise NoSourcesFound(str(root))

    patterns = list(config.exclude_patterns) if config is not None else list(DEFAULT_EXCLUDE_PATTERNS)
    io_only = config.exclude_io_only if config is not None else True
    include_dirs = [root] + [Path(d) for d in (config.include_dirs if config is not None else [])]

    sources: list[SourceFile] = []
    items: list[_Item] = []
    order = 0
    # headers first so types precede the files that use them
    for path in sorted(files, key=lambda p: (p.suffix != ".h", str(p))):
        raw = path.read_text(encoding="utf-8", errors="replace")
        rel = str(path.relative_to(root))
        tree = cparse.parse(raw)
        err = cparse.first_error(tree.root_node)
        if err is not None:
            raise ParseFailure(rel, f"syntax error near line {err.start_point[0] + 1}: {text(err)[:60]!r}")
        sources.append(SourceFile(path, raw))
        for item in _top_level_items(tree.root_node, rel):
            item.order = order
            order += 1
            items.append(item)

    project = SourceProject(root, sources, include_dirs, {}, items=[])
    seen_norm: dict[tuple[str, str], str] = {}
    for item in items:
        key = (item.kind, item.name)
        if item.kind == "include":
            if key in seen_norm:
                continue
            seen_norm[key] = item.text
            project.items.append(item)
            continue
        norm = cparse.normalized(item.text)
        if key in seen_norm:
            if seen_norm[key] != norm:
                project.warnings.append(
                    f"{item.kind} {item.name!r} redefined differently in {item.file}:{item.line}; first definition kept")
            continue
        seen_norm[key] = norm
        project.items.append(item)
        sym_kind = {"fmacro": "macro"}.get(item.kind, item.kind)
        project.symbol_table.setdefault(item.name, Symbol(item.file, sym_kind, item.line))

    compiled = [re.compile(p) for p in patterns]
    for item in project.items:
        if item.kind != "function":
            continue
        if any(p.search(item.name) for p in compiled):
            project.excluded[item.name] = "pattern"
        elif io_only and _is_io_only(item.node):
            project.excluded[item.name] = "io-only"
    for w in project.warnings:
        log.warning(w)
    return project


def _top_level_items(root: Node, rel: str) -> Iterable[_Item]:
    for node in root.named_children:
        yield from _items_for(node, rel)


def _items_for(node: Node, rel: str) -> Iterable[_Item]:
    line = node.start_point[0] + 1
    t = node.type
    if t in ("preproc_ifdef", "preproc_if"):
        # first branch only; include guards are the common case
        guard = cparse.text(node.child_by_field_name("name")) if t == "preproc_ifdef" else ""
        for child in node.named_children:
            if child.type in ("preproc_else", "preproc_elif", "preproc_elifdef"):
                break
            if child.type == "preproc_def" and text(child.child_by_field_name("name")) == guard \
                    and child.child_by_field_name("value") is None:
                continue
            if child is node.child_by_field_name("name") or child is node.child_by_field_name("condition"):
                continue
            yield from _items_for(child, rel)
        return
    if t == "preproc_include":
        path = node.child_by_field_name("path")
        if path is not None and path.type == "system_lib_string":
            yield _Item("include", text(path), f"#include {text(path)}", rel, line, 0)
        return
    if t == "preproc_def":
        yield _Item("macro", text(node.child_by_field_name("name")), text(node).rstrip("\n"), rel, line, 0,
                    node, _identifiers(node.child_by_field_name("value")))
        return
    if t == "preproc_function_def":
        yield _Item("fmacro", text(node.child_by_field_name("name")), text(node).rstrip("\n"), rel, line, 0,
                    node, _identifiers(node.child_by_field_name("value")))
        return
    if t == "function_definition":
        name = cparse.function_name(node)
        if name:
            yield _Item("function", name, text(node), rel, line, 0, node, frozenset(cparse.called_names(node)))
        return
    if t == "type_definition":
        names = [cparse.declarator_name(d) for d in node.children_by_field_name("declarator")]
        yield _Item("type", names[0] or "?", text(node), rel, line, 0, node, _type_refs(node))
        return
    if t in ("struct_specifier", "union_specifier", "enum_specifier"):
        if node.child_by_field_name("body") is not None:
            yield _Item("type", _tagged_name(node), text(node) + ";", rel, line, 0, node, _type_refs(node))
        return
    if t == "declaration":
        yield from _declaration_items(node, rel)


def _declaration_items(node: Node, rel: str) -> Iterable[_Item]:
    line = node.start_point[0] + 1
    storage = [text(c) for c in node.children if c.type == "storage_class_specifier"]
    type_node = node.child_by_field_name("type")
    if type_node is not None and type_node.type in ("struct_specifier", "union_specifier", "enum_specifier") \
            and type_node.child_by_field_name("body") is not None:
        yield _Item("type", _tagged_name(type_node), text(type_node) + ";", rel, line, 0, type_node,
                    _type_refs(type_node))
    if "extern" in storage or "typedef" in storage:
        return
    for decl in node.children_by_field_name("declarator"):
        inner = decl.child_by_field_name("declarator") if decl.type == "init_declarator" else decl
        if _is_function_declarator(inner):
            continue  # prototype; the header regenerates these
        name = cparse.declarator_name(inner)
        if not name:
            continue
        yield _Item("global", name, text(node), rel, line, 0, node, _type_refs(node))


def _is_function_declarator(decl: Node | None) -> bool:
    while decl is not None:
        if decl.type == "function_declarator":
            return True
        if decl.type in ("parenthesized_declarator",):
            return False  # function pointer variable
        decl = decl.child_by_field_name("declarator")
    return False


def _tagged_name(node: Node) -> str:
    kw = node.type.split("_")[0]
    name = node.child_by_field_name("name")
    return f"{kw} {text(name)}" if name is not None else f"{kw} <anon@{node.start_point[0] + 1}>"


def _identifiers(node: Node | None) -> frozenset[str]:
    if node is None:
        return frozenset()
    if node.type == "preproc_arg":
        return frozenset(re.findall(r"[A-Za-z_]\w*", text(node)))
    return frozenset(text(n) for n in cparse.walk(node) if n.type in ("identifier", "type_identifier"))


def _type_refs(node: Node) -> frozenset[str]:
    refs = set()
    for n in cparse.walk(node):
        if n.type == "type_identifier" and (n.parent is None or n.parent.type not in (
                "struct_specifier", "union_specifier", "enum_specifier")):
            refs.add(text(n))
        elif n.type in ("struct_specifier", "union_specifier", "enum_specifier") and n is not node:
            if n.child_by_field_name("name") is not None:
                refs.add(_tagged_name(n))
        elif n.type == "identifier":
            refs.add(text(n))  # array sizes and initializers may name macros
    return frozenset(refs)


def _is_io_only(defn: Node | None) -> bool:
    if defn is None:
        return False
    calls = cparse.called_names(defn.child_by_field_name("body"))
    return bool(calls) and all(c in cparse.IO_FUNCTIONS for c in calls)


# ---------------------------------------------------------------------------
# signatures


def _abstract(node: Node, drop: Node | None) -> str:
    """Source text of ``node`` with the ``drop`` identifier removed."""
    raw = node.text
    if drop is not None:
        s, e = drop.start_byte - node.start_byte, drop.end_byte - node.start_byte
        raw = raw[:s] + raw[e:]
    spelled = cparse.squash(raw.decode("utf-8", errors="replace"))
    spelled = re.sub(r"\s+([\[\)\],])", r"\1", spelled)
    spelled = re.sub(r"([\(\[])\s+", r"\1", spelled)
    return spelled


def _innermost_identifier(decl: Node | None) -> Node | None:
    while decl is not None:
        if decl.type == "identifier":
            return decl
        nxt = decl.child_by_field_name("declarator")
        if nxt is None:
            nxt = next((c for c in decl.named_children if c.type in (
                "identifier", "pointer_declarator", "parenthesized_declarator", "array_declarator",
                "function_declarator")), None)
        decl = nxt
    return None


def signature_of(defn: Node) -> Signature:
    fdecl = cparse.function_declarator(defn)
    if fdecl is None:
        raise ExtractionFailure(cparse.function_name(defn) or "?", "no function declarator")
    specifiers = [text(c) for c in defn.children
                  if c.type in ("type_qualifier", "primitive_type", "sized_type_specifier", "type_identifier",
                                "struct_specifier", "union_specifier", "enum_specifier", "macro_type_specifier")]
    stars = 0
    node = defn.child_by_field_name("declarator")
    while node is not None and node is not fdecl:
        if node.type == "pointer_declarator":
            stars += 1
        node = node.child_by_field_name("declarator")
    ret = " ".join(specifiers)
    if stars:
        ret += " " + "*" * stars
    types, names = [], []
    params = fdecl.child_by_field_name("parameters")
    for p in params.named_children if params is not None else []:
        if p.type == "variadic_parameter":
            types.append("...")
            names.append("")
            continue
        if p.type != "parameter_declaration":
            continue
        decl = p.child_by_field_name("declarator")
        ident = _innermost_identifier(decl)
        spelled = _abstract(p, ident)
        if spelled == "void" and decl is None:
            continue
        types.append(spelled)
        names.append(text(ident) if ident is not None else "")
    return Signature(tuple(types), ret, tuple(names))


# ---------------------------------------------------------------------------
# header


def _guard_name(project: SourceProject) -> str:
    return re.sub(r"\W", "_", project.name).upper() + "_PROJECT_HEADER_H"


def _prototype_text(item: _Item) -> str:
    sig = signature_of(item.node)
    return sig.prototype(item.name) + ";"


def _support_closure(project: SourceProject) -> list[str]:
    """Excluded (non-main) functions reachable from targets; they are linked, not tested."""
    funcs = project.functions()
    needed: list[str] = []
    frontier = list(project.target_names())
    seen = set(frontier)
    while frontier:
        name = frontier.pop()
        for callee in funcs[name].refs:
            if callee in funcs and callee not in seen:
                seen.add(callee)
                frontier.append(callee)
                if callee in project.excluded:
                    needed.append(callee)
    return sorted(n for n in needed if n != "main")


def generate_project_header(project: SourceProject) -> str:
    funcs = project.functions()
    declared = project.target_names() + _support_closure(project)
    declared_set = set(declared)
    types = [i for i in project.items if i.kind == "type"]
    type_names = {i.name for i in types}
    macros = {i.name: i for i in project.items if i.kind == "macro"}

    protos = []
    for name in sorted(declared, key=lambda n: funcs[n].order):
        item = funcs[name]
        refs = _type_refs(_decl_part(item.node))
        ret = item.node.child_by_field_name("type")
        if ret is not None:
            refs |= _type_refs(ret) | ({text(ret)} if ret.type == "type_identifier" else set())
        for ref in sorted(refs):
            if ref.startswith(("struct ", "union ", "enum ")) or ref in type_names or ref in macros:
                continue
            if ref in cparse.STANDARD_TYPE_NAMES or ref.endswith("_t"):
                continue
            if _is_type_identifier(item.node, ref):
                raise UnresolvedType(ref)
        protos.append(_prototype_text(item))

    globals_ = [i for i in project.items if i.kind == "global"]
    out = [f"#ifndef {_guard_name(project)}", f"#define {_guard_name(project)}", ""]
    includes = [i.text for i in project.items if i.kind == "include"]
    for inc in ("#include <stddef.h>", "#include <stdlib.h>"):
        if inc not in includes:
            includes.append(inc)
    out.extend(includes)
    out.append("")
    if macros:
        out.extend(m.text for m in sorted(macros.values(), key=lambda m: m.order))
        out.append("")
    tags = sorted({i.name for i in types if i.name.startswith(("struct ", "union ")) and "<anon" not in i.name})
    if tags:
        out.extend(f"{t};" for t in tags)
        out.append("")
    for item in _topo_types(types):
        out.append(item.text.rstrip())
        out.append("")
    for g in globals_:
        out.extend(_extern_decls(g))
    if globals_:
        out.append("")
    out.extend(protos)
    if not declared_set:
        out.append("/* no functions under test */")
    out.extend(["", f"#endif /* {_guard_name(project)} */", ""])
    return "\n".join(out)


def _decl_part(defn: Node) -> Node:
    return defn.child_by_field_name("declarator") or defn


def _is_type_identifier(defn: Node, name: str) -> bool:
    for n in cparse.walk(defn):
        if n.type == "type_identifier" and text(n) == name:
            return True
    return False


def _topo_types(types: list[_Item]) -> list[_Item]:
    by_name = {t.name: t for t in types}
    pending = sorted(types, key=lambda t: t.order)
    done: set[str] = set()
    out: list[_Item] = []
    while pending:
        for t in pending:
            deps = {r for r in t.refs if r in by_name and r != t.name}
            if deps <= done:
                break
        else:
            t = pending[0]  # cycle; forward declarations cover pointer links
        pending.remove(t)
        done.add(t.name)
        out.append(t)
    return out


def _extern_decls(item: _Item) -> list[str]:
    node = item.node
    specs = []
    for idx, c in enumerate(node.children):
        if node.field_name_for_child(idx) == "declarator" or c.type in ("storage_class_specifier", ",", ";"):
            continue
        if c.type in ("struct_specifier", "union_specifier", "enum_specifier") \
                and c.child_by_field_name("body") is not None:
            specs.append(_tagged_name(c))
        else:
            specs.append(text(c))
    out = []
    for decl in node.children_by_field_name("declarator"):
        inner = decl.child_by_field_name("declarator") if decl.type == "init_declarator" else decl
        if cparse.declarator_name(inner) == item.name:
            out.append(f"extern {' '.join(specs)} {text(inner)};")
    return out


def globals_source(project: SourceProject) -> str:
    """Definitions of every project global with external linkage."""
    lines = [f'#include "{HEADER_NAME}"', ""]
    seen = set()
    for g in (i for i in project.items if i.kind == "global"):
        if id(g.node) in seen:
            continue
        seen.add(id(g.node))
        lines.append(_strip_storage(g.node, g.text, ("static",)).strip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# extraction


def _strip_storage(defn: Node, src: str, words: tuple[str, ...]) -> str:
    raw = src.encode("utf-8")
    cuts = []
    for c in defn.children:
        if c.type == "storage_class_specifier" and text(c) in words:
            s, e = c.start_byte - defn.start_byte, c.end_byte - defn.start_byte
            while e < len(raw) and raw[e:e + 1] in (b" ", b"\t"):
                e += 1
            cuts.append((s, e))
    for s, e in reversed(cuts):
        raw = raw[:s] + raw[e:]
    return raw.decode("utf-8")


def _macro_closure(project: SourceProject, names: Iterable[str], kinds: tuple[str, ...]) -> list[_Item]:
    macros = {i.name: i for i in project.items if i.kind in kinds}
    out: dict[str, _Item] = {}
    frontier = [n for n in names if n in macros]
    while frontier:
        n = frontier.pop()
        if n in out:
            continue
        out[n] = macros[n]
        frontier.extend(r for r in macros[n].refs if r in macros and r not in out)
    return sorted(out.values(), key=lambda m: m.order)


def _make_unit(project: SourceProject, item: _Item) -> FunctionUnit:
    node = item.node
    storage = [text(c) for c in node.children if c.type == "storage_class_specifier"]
    was_static = "static" in storage
    words = ("static", "inline") if was_static and "inline" in storage else ("static",)
    body = _strip_storage(node, item.text, words) if was_static else item.text
    funcs = project.functions()
    deps = frozenset(c for c in item.refs if c in funcs or c in cparse.STDLIB_FUNCTIONS)
    used = _identifiers(node.child_by_field_name("body"))
    fmacros = _macro_closure(project, used, ("fmacro",))
    preamble = "\n".join(m.text for m in fmacros)
    try:
        sig = signature_of(node)
    except ExtractionFailure:
        raise
    except Exception as exc:  # grammar shapes we do not model
        raise ExtractionFailure(item.name, str(exc)) from exc
    end_line = node.end_point[0] + 1
    return FunctionUnit(item.name, sig, body, (item.file, item.line, end_line), deps, "", was_static, preamble)


def extract_functions(project: SourceProject) -> list[FunctionUnit]:
    return [_make_unit(project, project.functions()[n]) for n in project.target_names()]


def support_functions(project: SourceProject) -> list[FunctionUnit]:
    """Link-only units for excluded functions that targets call."""
    funcs = project.functions()
    return [_make_unit(project, funcs[n]) for n in _support_closure(project)]


# ---------------------------------------------------------------------------
# description

DESCRIBE_SYSTEM = (
    "You summarize C functions for test engineers. Reply with one to three plain sentences "
    "describing what the function does and the invariants it maintains. No code, no lists."
)


def describe_prompt(fn: FunctionUnit, paths: "list[ExecutionPath]") -> list[tuple[str, str]]:
    lines = [
        f"Function: {fn.name}",
        f"Signature: {fn.signature.prototype(fn.name)}",
        f"Calls: {', '.join(sorted(fn.deps)) or '(none)'}",
        f"Execution paths ({len(paths)}):",
    ]
    lines.extend(f"  {p.path_id}: {p.linearized}" for p in paths)
    return [("system", DESCRIBE_SYSTEM), ("user", "\n".join(lines))]


_SENTENCE = re.compile(r"(?<=[.!?])\s+")


def describe_function(fn: FunctionUnit, paths: "list[ExecutionPath]", llm: "LlmClient") -> str:
    resp = llm.complete("describe", describe_prompt(fn, paths), function=fn.name, tag=f"describe:{fn.name}")
    if not isinstance(resp.text, str) or not resp.text.strip():
        raise MalformedResponse(f"empty description for {fn.name}")
    desc = cparse.squash(resp.text.strip().strip("`"))
    sentences = _SENTENCE.split(desc)
    fn.desc = " ".join(sentences[:3])
    return fn.desc


def write_function_artifacts(out_dir: Path, header: str, units: list[FunctionUnit],
                             support: list[FunctionUnit], project: SourceProject) -> None:
    from .util import atomic_write, write_json

    atomic_write(out_dir / HEADER_NAME, header)
    for u in units:
        atomic_write(out_dir / "functions" / f"{u.name}.c", u.unit_source())
    for u in support:
        atomic_write(out_dir / "functions" / "_support" / f"{u.name}.c", u.unit_source())
    atomic_write(out_dir / "functions" / "_support" / "globals.c", globals_source(project))
    write_json(out_dir / "functions.json", [u.to_json() for u in units])
