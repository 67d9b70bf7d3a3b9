"""Statement-level control-flow graphs and bounded path enumeration.

Each function body is lowered to a graph whose nodes are individual source
statements and atomic conditions. ``&&``/``||`` guards are split into nested
conditions, ``switch`` becomes a cascade of ``expr == label`` tests, and
jumps (``break``, ``continue``, ``goto``) are edges rather than nodes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from tree_sitter import Node

from . import cparse
from .cparse import squash, text
from .errors import InvalidCfg, UnsupportedConstruct

ENTRY, EXIT, STATEMENT, CONDITION, RETURN = "entry", "exit", "statement", "condition", "return"
TRUE, FALSE, UNCOND = "true", "false", "unconditional"
_LABEL_ORDER = {TRUE: 0, FALSE: 1, UNCOND: 2}
ARROW = " → "

DEFAULT_LOOP_BOUND = 1
DEFAULT_MAX_PATHS = 256
DFS_STEP_BUDGET = 2_000_000


@dataclass(frozen=True)
class CfgNode:
    id: int
    kind: str
    source_text: str
    line: int

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind, "text": self.source_text, "line": self.line}


@dataclass
class Cfg:
    function_name: str
    nodes: list[CfgNode]
    edges: list[tuple[int, int, str]]
    entry_id: int
    exit_id: int
    _succ: dict[int, list[tuple[int, str]]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index()

    def _index(self) -> None:
        succ: dict[int, list[tuple[int, str]]] = {n.id: [] for n in self.nodes}
        for s, d, label in self.edges:
            succ.setdefault(s, []).append((d, label))
        for lst in succ.values():
            lst.sort(key=lambda e: _LABEL_ORDER[e[1]])
        self._succ = succ

    def node(self, node_id: int) -> CfgNode:
        return self.nodes_by_id[node_id]

    @property
    def nodes_by_id(self) -> dict[int, CfgNode]:
        return {n.id: n for n in self.nodes}

    def successors(self, node_id: int) -> list[tuple[int, str]]:
        """Outgoing (dst, label) pairs, true edge before false edge."""
        return self._succ.get(node_id, [])

    def validate(self) -> None:
        ids = {n.id for n in self.nodes}
        if self.entry_id not in ids or self.exit_id not in ids:
            raise InvalidCfg("entry or exit node missing")
        incoming = {n.id: 0 for n in self.nodes}
        for s, d, label in self.edges:
            if s not in ids or d not in ids:
                raise InvalidCfg(f"edge ({s}, {d}) references an unknown node")
            incoming[d] += 1
        if incoming[self.entry_id]:
            raise InvalidCfg("entry node has incoming edges")
        if self.successors(self.exit_id):
            raise InvalidCfg("exit node has outgoing edges")
        entries = [n.id for n in self.nodes if n.kind == ENTRY]
        exits = [n.id for n in self.nodes if n.kind == EXIT]
        if entries != [self.entry_id] or exits != [self.exit_id]:
            raise InvalidCfg("expected exactly one entry and one exit node")
        for n in self.nodes:
            out = self.successors(n.id)
            if (n.source_text == "") != (n.kind in (ENTRY, EXIT)):
                raise InvalidCfg(f"node {n.id}: source_text must be empty iff entry/exit")
            if n.kind == CONDITION:
                if sorted(lbl for _, lbl in out) != [FALSE, TRUE]:
                    raise InvalidCfg(f"condition node {n.id} needs one true and one false edge")
            else:
                if len(out) > 1 or any(lbl != UNCOND for _, lbl in out):
                    raise InvalidCfg(f"node {n.id} has {len(out)} outgoing edges")
        seen = _reachable(self, self.entry_id)
        unreached = ids - seen - {self.exit_id}
        if unreached:
            raise InvalidCfg(f"nodes unreachable from entry: {sorted(unreached)}")

    def to_json(self) -> dict:
        return {
            "function": self.function_name,
            "entry_id": self.entry_id,
            "exit_id": self.exit_id,
            "nodes": [n.to_json() for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Cfg":
        nodes = [CfgNode(n["id"], n["kind"], n["text"], n["line"]) for n in d["nodes"]]
        return cls(d["function"], nodes, [tuple(e) for e in d["edges"]], d["entry_id"], d["exit_id"])


@dataclass(frozen=True)
class ExecutionPath:
    path_id: int
    node_ids: tuple[int, ...]
    branch_decisions: tuple[tuple[int, str], ...]
    linearized: str = ""

    def to_json(self) -> dict:
        return {
            "path_id": self.path_id,
            "node_ids": list(self.node_ids),
            "branch_decisions": [list(b) for b in self.branch_decisions],
            "linearized": self.linearized,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExecutionPath":
        return cls(d["path_id"], tuple(d["node_ids"]),
                   tuple((int(a), b) for a, b in d.get("branch_decisions", ())), d.get("linearized", ""))


class PathList(list):
    """Enumerated paths plus whether ``max_paths`` cut the enumeration short."""

    truncated: bool = False


def _reachable(cfg: Cfg, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        for d, _ in cfg.successors(stack.pop()):
            if d not in seen:
                seen.add(d)
                stack.append(d)
    return seen


# ---------------------------------------------------------------------------
# construction


@dataclass
class _Ctx:
    break_to: int | None = None
    continue_to: int | None = None


class _Builder:
    def __init__(self, name: str, line_offset: int):
        self.name = name
        self.line_offset = line_offset
        self.kinds: dict[int, tuple[str, str, int]] = {}
        self.out: dict[int, list[tuple[int, str]]] = {}
        self.proxies: dict[int, int | None] = {}
        self.labels: dict[str, int] = {}
        self.label_proxies: dict[str, int] = {}
        self._ids = itertools.count(0)
        self._proxy_ids = itertools.count(-1, -1)
        self.entry = self.new(ENTRY, None)
        self.exit = self.new(EXIT, None)

    def new(self, kind: str, node: Node | None, text_override: str | None = None) -> int:
        nid = next(self._ids)
        src = "" if node is None and text_override is None else squash(
            text_override if text_override is not None else text(node))
        line = self.line_offset + (node.start_point[0] if node is not None else 0)
        self.kinds[nid] = (kind, src, line)
        self.out[nid] = []
        return nid

    def edge(self, src: int, dst: int, label: str = UNCOND) -> None:
        self.out[src].append((dst, label))

    def proxy(self) -> int:
        pid = next(self._proxy_ids)
        self.proxies[pid] = None
        return pid

    def bind(self, proxy: int, target: int) -> None:
        self.proxies[proxy] = target

    def resolve(self, nid: int) -> int:
        seen = set()
        while nid < 0:
            if nid in seen:
                raise InvalidCfg("jump cycle without statements")
            seen.add(nid)
            target = self.proxies.get(nid)
            if target is None:
                raise InvalidCfg(f"unresolved jump target in {self.name}")
            nid = target
        return nid

    # statements -----------------------------------------------------------

    def stmt(self, node: Node, succ: int, ctx: _Ctx) -> int:
        t = node.type
        if t == "compound_statement":
            return self.seq(node.named_children, succ, ctx)
        if t == "expression_statement":
            if node.named_child_count == 0:
                return succ
            return self.simple(node, succ)
        if t in ("declaration", "type_definition"):
            return self.simple(node, succ)
        if t == "return_statement":
            nid = self.new(RETURN, node)
            self.edge(nid, self.exit)
            return nid
        if t == "if_statement":
            then_entry = self.stmt(node.child_by_field_name("consequence"), succ, ctx)
            alt = node.child_by_field_name("alternative")
            else_entry = succ
            if alt is not None:
                inner = alt.named_children[-1] if alt.type == "else_clause" else alt
                else_entry = self.stmt(inner, succ, ctx)
            return self.cond(node.child_by_field_name("condition"), then_entry, else_entry)
        if t == "while_statement":
            head = self.proxy()
            body = self.stmt(node.child_by_field_name("body"), head, _Ctx(succ, head))
            entry = self.cond(node.child_by_field_name("condition"), body, succ)
            self.bind(head, entry)
            return entry
        if t == "do_statement":
            head = self.proxy()
            body = self.stmt(node.child_by_field_name("body"), head, _Ctx(succ, head))
            cond_entry = self.cond(node.child_by_field_name("condition"), body, succ)
            self.bind(head, cond_entry)
            return body
        if t == "for_statement":
            return self.for_stmt(node, succ)
        if t == "switch_statement":
            return self.switch(node, succ, ctx)
        if t == "break_statement":
            if ctx.break_to is None:
                raise UnsupportedConstruct("break outside loop or switch", self._line(node))
            return ctx.break_to
        if t == "continue_statement":
            if ctx.continue_to is None:
                raise UnsupportedConstruct("continue outside loop", self._line(node))
            return ctx.continue_to
        if t == "goto_statement":
            label = node.child_by_field_name("label")
            if (label is None or label.type != "statement_identifier"
                    or any(c.type == "ERROR" or c.type == "*" for c in node.children)):
                raise UnsupportedConstruct("computed goto", self._line(node))
            name = text(label)
            if name not in self.label_proxies:
                self.label_proxies[name] = self.proxy()
            return self.label_proxies[name]
        if t == "labeled_statement":
            name = text(node.child_by_field_name("label"))
            inner = [c for c in node.named_children if c.type != "statement_identifier"]
            entry = self.seq(inner, succ, ctx)
            if name not in self.label_proxies:
                self.label_proxies[name] = self.proxy()
            self.bind(self.label_proxies[name], entry)
            return entry
        if t in ("preproc_ifdef", "preproc_if"):
            body = []
            for c in node.named_children:
                if c.type in ("preproc_else", "preproc_elif", "preproc_elifdef"):
                    break
                if c in (node.child_by_field_name("name"), node.child_by_field_name("condition")):
                    continue
                body.append(c)
            return self.seq(body, succ, ctx)
        if t in ("comment", "preproc_call", "preproc_def", "preproc_function_def", "preproc_include"):
            return succ
        if t == "ERROR":
            raise UnsupportedConstruct("unparseable statement", self._line(node))
        # anything else (case labels outside switch, attributes...) is one statement
        return self.simple(node, succ)

    def _line(self, node: Node) -> int:
        return self.line_offset + node.start_point[0]

    def simple(self, node: Node, succ: int) -> int:
        nid = self.new(STATEMENT, node)
        self.edge(nid, succ)
        return nid

    def seq(self, nodes: Iterable[Node], succ: int, ctx: _Ctx) -> int:
        entry = succ
        for child in reversed([n for n in nodes if n.type != "comment"]):
            entry = self.stmt(child, entry, ctx)
        return entry

    def for_stmt(self, node: Node, succ: int) -> int:
        head = self.proxy()
        update = node.child_by_field_name("update")
        cont = head
        if update is not None:
            cont = self.simple(update, head)
        body = self.stmt(node.child_by_field_name("body"), cont, _Ctx(succ, cont))
        condition = node.child_by_field_name("condition")
        entry = self.cond(condition, body, succ) if condition is not None else body
        self.bind(head, entry)
        init = node.child_by_field_name("initializer")
        if init is not None:
            return self.simple(init, entry)
        return entry

    def switch(self, node: Node, succ: int, ctx: _Ctx) -> int:
        value = node.child_by_field_name("condition")
        subject = text(value.named_children[0]) if value.type == "parenthesized_expression" else text(value)
        body = node.child_by_field_name("body")
        cases = [c for c in body.named_children if c.type == "case_statement"]
        inner_ctx = _Ctx(succ, ctx.continue_to)
        entries: list[int] = [0] * len(cases)
        fall = succ
        for i in range(len(cases) - 1, -1, -1):
            stmts = [c for c in cases[i].named_children if cases[i].field_name_for_child(
                list(cases[i].children).index(c)) != "value"]
            fall = self.seq(stmts, fall, inner_ctx)
            entries[i] = fall
        default_entry = succ
        for case, entry in zip(cases, entries):
            if case.child_by_field_name("value") is None:
                default_entry = entry
        dispatch = default_entry
        for case, entry in reversed(list(zip(cases, entries))):
            val = case.child_by_field_name("value")
            if val is None:
                continue
            nid = self.new(CONDITION, val, f"{subject} == {text(val)}")
            self.edge(nid, entry, TRUE)
            self.edge(nid, dispatch, FALSE)
            dispatch = nid
        return dispatch

    def cond(self, node: Node, t: int, f: int) -> int:
        while node.type == "parenthesized_expression" and node.named_child_count == 1:
            node = node.named_children[0]
        if node.type == "binary_expression":
            op = text(node.child_by_field_name("operator"))
            left, right = node.child_by_field_name("left"), node.child_by_field_name("right")
            if op == "&&":
                return self.cond(left, self.cond(right, t, f), f)
            if op == "||":
                return self.cond(left, t, self.cond(right, t, f))
        nid = self.new(CONDITION, node)
        self.edge(nid, t, TRUE)
        self.edge(nid, f, FALSE)
        return nid

    # assembly -------------------------------------------------------------

    def finish(self, entry_target: int) -> Cfg:
        first = self.resolve(entry_target)
        entry = self.entry
        self.edge(entry, first)
        for src in list(self.out):
            self.out[src] = [(self.resolve(d), lbl) for d, lbl in self.out[src]]
        # deterministic renumbering: DFS preorder from entry, true edge first, exit last
        order: list[int] = []
        seen = {entry}
        stack = [entry]
        while stack:
            nid = stack.pop()
            if nid != self.exit:
                order.append(nid)
            succ = sorted(self.out[nid], key=lambda e: _LABEL_ORDER[e[1]])
            for d, _ in reversed(succ):
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        order.append(self.exit)
        new_id = {old: i for i, old in enumerate(order)}
        nodes = [CfgNode(new_id[o], *self.kinds[o]) for o in order]
        edges = [(new_id[s], new_id[d], lbl) for s in order for d, lbl in
                 sorted(self.out[s], key=lambda e: _LABEL_ORDER[e[1]])]
        return Cfg(self.name, nodes, edges, new_id[entry], new_id[self.exit])


def build_cfg_from_source(name: str, body: str, first_line: int = 1) -> Cfg:
    """Build the graph of the single function definition contained in ``body``."""
    tree = cparse.parse(body)
    defn = next((n for n in tree.root_node.named_children if n.type == "function_definition"), None)
    if defn is None:
        raise InvalidCfg(f"{name}: no function definition found")
    for n in cparse.walk(defn):
        if n.type in ("gnu_asm_expression", "asm_statement"):
            raise UnsupportedConstruct("inline assembly", first_line + n.start_point[0])
    b = _Builder(name, first_line)
    start = b.stmt(defn.child_by_field_name("body"), b.exit, _Ctx())
    cfg = b.finish(start)
    cfg.validate()
    return cfg


def build_cfg(fn) -> Cfg:
    return build_cfg_from_source(fn.name, fn.body, fn.source_span[1])


# ---------------------------------------------------------------------------
# enumeration


def back_edges(cfg: Cfg) -> set[tuple[int, int, str]]:
    """Edges closing a cycle, found by DFS from entry in true-first order."""
    result: set[tuple[int, int, str]] = set()
    on_stack: set[int] = set()
    visited: set[int] = set()
    stack: list[tuple[int, Iterator[tuple[int, str]]]] = [(cfg.entry_id, iter(cfg.successors(cfg.entry_id)))]
    on_stack.add(cfg.entry_id)
    visited.add(cfg.entry_id)
    while stack:
        nid, it = stack[-1]
        step = next(it, None)
        if step is None:
            stack.pop()
            on_stack.discard(nid)
            continue
        dst, label = step
        if dst in on_stack:
            result.add((nid, dst, label))
        elif dst not in visited:
            visited.add(dst)
            on_stack.add(dst)
            stack.append((dst, iter(cfg.successors(dst))))
    return result


def _can_reach_exit(cfg: Cfg) -> set[int]:
    preds: dict[int, list[int]] = {}
    for s, d, _ in cfg.edges:
        preds.setdefault(d, []).append(s)
    seen = {cfg.exit_id}
    stack = [cfg.exit_id]
    while stack:
        for p in preds.get(stack.pop(), ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def enumerate_paths(cfg: Cfg, loop_bound: int = DEFAULT_LOOP_BOUND,
                    max_paths: int = DEFAULT_MAX_PATHS) -> PathList:
    """All entry-to-exit paths with each back edge taken at most ``loop_bound`` times.

    Paths come out in DFS order, true edge before false edge, and are cut at
    ``max_paths``; ``result.truncated`` records the cut.
    """
    if loop_bound < 0 or max_paths < 1:
        raise ValueError("loop_bound must be >= 0 and max_paths >= 1")
    cfg.validate()
    backs = back_edges(cfg)
    live = _can_reach_exit(cfg)
    result = PathList()
    counts: dict[tuple[int, int, str], int] = {}
    nodes = [cfg.entry_id]
    labels: list[str] = []
    stack = [iter(cfg.successors(cfg.entry_id))]
    steps = 0
    while stack:
        steps += 1
        if steps > DFS_STEP_BUDGET:
            result.truncated = True
            break
        step = next(stack[-1], None)
        if step is None:
            stack.pop()
            node = nodes.pop()
            if labels:
                label = labels.pop()
                edge = (nodes[-1], node, label)
                if edge in backs:
                    counts[edge] -= 1
            continue
        dst, label = step
        if dst not in live:
            continue
        edge = (nodes[-1], dst, label)
        if edge in backs:
            if counts.get(edge, 0) >= loop_bound:
                continue
            counts[edge] = counts.get(edge, 0) + 1
        nodes.append(dst)
        labels.append(label)
        if dst == cfg.exit_id:
            result.append(_make_path(cfg, len(result), nodes, labels))
            nodes.pop()
            labels.pop()
            if edge in backs:
                counts[edge] -= 1
            if len(result) >= max_paths:
                result.truncated = _has_more(cfg, stack, nodes) or len(result) > max_paths
                break
            continue
        stack.append(iter(cfg.successors(dst)))
    return result


def _has_more(cfg: Cfg, stack, nodes) -> bool:
    # conservative: any unexplored successor left means enumeration was cut
    for it in stack:
        if next(it, None) is not None:
            return True
    return False


def _make_path(cfg: Cfg, path_id: int, nodes: list[int], labels: list[str]) -> ExecutionPath:
    kinds = cfg.nodes_by_id
    decisions = tuple((nodes[i], labels[i]) for i in range(len(labels)) if kinds[nodes[i]].kind == CONDITION)
    bare = ExecutionPath(path_id, tuple(nodes), decisions)
    return ExecutionPath(path_id, bare.node_ids, decisions, linearize(bare, cfg))


def linearize(path: ExecutionPath, cfg: Cfg) -> str:
    nodes = cfg.nodes_by_id
    decisions = iter(path.branch_decisions)
    parts = ["START"]
    last_kind = ENTRY
    for nid in path.node_ids[1:-1]:
        node = nodes[nid]
        if node.kind == CONDITION:
            cond_id, label = next(decisions)
            if cond_id != nid:
                raise InvalidCfg("branch decisions out of step with node sequence")
            parts.append(f"({node.source_text})[{'T' if label == TRUE else 'F'}]")
        else:
            parts.append(node.source_text)
        last_kind = node.kind
    parts.append("RETURN" if last_kind == RETURN else "EXIT")
    return ARROW.join(parts)


def linearize_json(path: ExecutionPath, cfg: Cfg) -> list[dict]:
    nodes = cfg.nodes_by_id
    taken = dict(path.branch_decisions)
    out = []
    for nid in path.node_ids:
        rec = nodes[nid].to_json()
        if nid in taken:
            rec["taken"] = taken[nid]
        out.append(rec)
    return out


def paths_to_json(cfg: Cfg, paths: PathList, loop_bound: int, max_paths: int) -> dict:
    d = cfg.to_json()
    d.update({
        "loop_bound": loop_bound,
        "max_paths": max_paths,
        "truncated": bool(getattr(paths, "truncated", False)),
        "paths": [p.to_json() for p in paths],
    })
    return d


def paths_from_json(d: dict) -> tuple[Cfg, PathList]:
    cfg = Cfg.from_json(d)
    paths = PathList(ExecutionPath.from_json(p) for p in d["paths"])
    paths.truncated = d.get("truncated", False)
    return cfg, paths
