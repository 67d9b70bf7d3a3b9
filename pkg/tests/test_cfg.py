from __future__ import annotations

import random

import pytest
from conftest import FIXTURES, PROJECTS
from hypothesis import given, settings
from hypothesis import strategies as st
from support import oracle_paths, path_key, random_dag_cfg

from cpathtest.cfg import (CONDITION, ENTRY, EXIT, RETURN, STATEMENT, Cfg, CfgNode, build_cfg, build_cfg_from_source,
                           enumerate_paths, linearize, linearize_json, paths_from_json, paths_to_json)
from cpathtest.config import PipelineConfig
from cpathtest.csource import extract_functions, ingest_project
from cpathtest.errors import InvalidCfg, UnsupportedConstruct


def cfg_of(src: str) -> Cfg:
    return build_cfg_from_source("f", src)


def kinds(cfg: Cfg) -> list[str]:
    return sorted(n.kind for n in cfg.nodes)


def fixture_units(project: str):
    return extract_functions(ingest_project(PROJECTS / project, PipelineConfig()))


def test_single_branch_shape():
    cfg = cfg_of("int f(int x){ if(x>0) return 1; return 0; }")
    assert kinds(cfg) == sorted([ENTRY, EXIT, CONDITION, RETURN, RETURN])
    assert len(enumerate_paths(cfg)) == 2


def test_straight_line_is_a_chain():
    cfg = cfg_of("void f(void){ int a = 1; int b = a; a = b; }")
    assert [n.kind for n in cfg.nodes].count(STATEMENT) == 3
    paths = enumerate_paths(cfg)
    assert len(paths) == 1 and len(paths[0].node_ids) == 5


def test_and_guard_desugars_to_nested_conditions():
    cfg = cfg_of("int f(int a, int b){ if (a && b) return 1; return 0; }")
    conds = [n for n in cfg.nodes if n.kind == CONDITION]
    assert [c.source_text for c in conds] == ["a", "b"]
    a, b = conds[0].id, conds[1].id
    succ_a = dict((lbl, d) for d, lbl in cfg.successors(a))
    succ_b = dict((lbl, d) for d, lbl in cfg.successors(b))
    assert succ_a["true"] == b
    assert succ_a["false"] == succ_b["false"]  # false edges converge
    # truth-table walk: only a=T,b=T reaches "return 1"
    outcomes = {}
    for va in (True, False):
        for vb in (True, False):
            node = succ_a["true" if va else "false"]
            if node == b:
                node = succ_b["true" if vb else "false"]
            outcomes[(va, vb)] = cfg.node(node).source_text
    assert outcomes == {(True, True): "return 1;", (True, False): "return 0;",
                        (False, True): "return 0;", (False, False): "return 0;"}


def test_or_guard_short_circuits():
    cfg = cfg_of("int f(int a, int b){ if (a || b) return 1; return 0; }")
    paths = enumerate_paths(cfg)
    assert sorted(tuple(lbl for _, lbl in p.branch_decisions) for p in paths) == sorted(
        [("true",), ("false", "true"), ("false", "false")])


def test_sequential_branches_double_path_count():
    for n in range(1, 7):
        body = "".join(f"if (x > {i}) y += {i}; else y -= {i};\n" for i in range(n))
        cfg = cfg_of(f"int f(int x){{ int y = 0;\n{body} return y; }}")
        assert len(enumerate_paths(cfg)) == 2 ** n


def test_while_loop_bound_one_gives_two_paths():
    cfg = cfg_of("int f(int n){ int s = 0; while (n > 0) { s += n; n--; } return s; }")
    paths = enumerate_paths(cfg, loop_bound=1)
    assert len(paths) == 2
    assert [len(p.branch_decisions) for p in paths] == [2, 1]  # one iteration, zero iterations


def test_loop_bound_grows_path_count():
    cfg = cfg_of("int f(int n){ int s = 0; while (n > 0) { s += n; n--; } return s; }")
    assert [len(enumerate_paths(cfg, loop_bound=k)) for k in range(4)] == [1, 2, 3, 4]


def test_do_and_for_loops():
    cfg = cfg_of("int f(int n){ int s = 0; do { s++; } while (s < n); for (int i = 0; i < n; i++) s += i; return s; }")
    assert len(enumerate_paths(cfg, loop_bound=1)) == 4


def test_switch_cases_become_condition_cascade():
    cfg = cfg_of("int f(int c){ int r = 0; switch (c) { case 1: r = 10; break; case 2: r = 20; "
                 "case 3: r += 1; break; default: r = -1; } return r; }")
    conds = [n.source_text for n in cfg.nodes if n.kind == CONDITION]
    assert len(conds) == 3
    assert len(enumerate_paths(cfg)) == 4


def test_goto_becomes_direct_edge():
    cfg = cfg_of("int f(int x){ if (x) goto out; x = 5; out: return x; }")
    assert len(enumerate_paths(cfg)) == 2


def test_inline_assembly_is_unsupported():
    with pytest.raises(UnsupportedConstruct):
        cfg_of('void f(void){ __asm__("nop"); }')


def test_computed_goto_is_unsupported():
    with pytest.raises(UnsupportedConstruct):
        cfg_of("void f(void *p){ goto *p; }")


def test_invalid_cfg_rejected():
    bad = Cfg("g", [CfgNode(0, ENTRY, "", 0), CfgNode(1, CONDITION, "x", 1), CfgNode(2, EXIT, "", 2)],
              [(0, 1, "unconditional"), (1, 2, "true")], 0, 2)
    with pytest.raises(InvalidCfg):
        enumerate_paths(bad)


def test_path_invariants_on_fixtures():
    for project in ("bst", "dynamic_stack", "doubly_linked_list"):
        for unit in fixture_units(project):
            cfg = build_cfg(unit)
            edges = {(s, d) for s, d, _ in cfg.edges}
            kinds_ = cfg.nodes_by_id
            for p in enumerate_paths(cfg):
                assert p.node_ids[0] == cfg.entry_id and p.node_ids[-1] == cfg.exit_id
                assert all((a, b) in edges for a, b in zip(p.node_ids, p.node_ids[1:]))
                assert [c for c, _ in p.branch_decisions] == [n for n in p.node_ids if kinds_[n].kind == CONDITION]


def test_every_statement_in_exactly_one_node():
    unit = {u.name: u for u in fixture_units("bst")}["delete_node"]
    cfg = build_cfg(unit)
    texts = [n.source_text for n in cfg.nodes if n.kind in (STATEMENT, RETURN)]
    assert texts.count("free(root);") == 2
    assert len(texts) == len(set(texts)) + 1


def test_max_paths_truncates_in_dfs_order():
    body = "".join(f"if (x > {i}) y++;\n" for i in range(5))
    cfg = cfg_of(f"int f(int x){{ int y = 0;\n{body} return y; }}")
    full = enumerate_paths(cfg)
    cut = enumerate_paths(cfg, max_paths=7)
    assert len(full) == 32 and not full.truncated
    assert cut.truncated and [p.node_ids for p in cut] == [p.node_ids for p in full[:7]]
    # true edge explored first
    assert all(lbl == "true" for _, lbl in full[0].branch_decisions)


def test_enumeration_is_deterministic():
    unit = {u.name: u for u in fixture_units("doubly_linked_list")}["dlist_remove"]
    a = enumerate_paths(build_cfg(unit))
    b = enumerate_paths(build_cfg(unit))
    assert [p.to_json() for p in a] == [p.to_json() for p in b]


def test_branch_edges_all_covered_by_fixture_paths():
    for project in ("bst", "dynamic_stack", "doubly_linked_list"):
        for unit in fixture_units(project):
            cfg = build_cfg(unit)
            paths = enumerate_paths(cfg)
            assert not paths.truncated
            walked = {(a, b) for p in paths for a, b in zip(p.node_ids, p.node_ids[1:])}
            taken = {(c, lbl) for p in paths for c, lbl in p.branch_decisions}
            assert {(s, d) for s, d, _ in cfg.edges} <= walked, unit.name
            for n in cfg.nodes:
                if n.kind == CONDITION:
                    assert {(n.id, "true"), (n.id, "false")} <= taken, (unit.name, n.source_text)


def test_golden_linearization_of_bst_null_root():
    unit = {u.name: u for u in fixture_units("bst")}["insert"]
    cfg = build_cfg(unit)
    path = enumerate_paths(cfg)[0]
    golden = (FIXTURES / "golden" / "bst_insert_path0.txt").read_text(encoding="utf-8")
    assert path.linearized + "\n" == golden
    assert path.linearized.startswith("START → (root==NULL)")
    assert linearize(path, cfg) == path.linearized


def test_linearize_straight_line_and_empty_body():
    cfg = cfg_of("void f(void){ x = 1; }")
    assert enumerate_paths(cfg)[0].linearized == "START → x = 1; → EXIT"
    cfg = cfg_of("void f(void){ }")
    assert enumerate_paths(cfg)[0].linearized == "START → EXIT"


def test_linearize_json_marks_decisions():
    cfg = cfg_of("int f(int x){ if(x>0) return 1; return 0; }")
    path = enumerate_paths(cfg)[1]
    recs = linearize_json(path, cfg)
    assert [r.get("taken") for r in recs if r["kind"] == CONDITION] == ["false"]


def test_paths_json_round_trip():
    unit = {u.name: u for u in fixture_units("bst")}["search"]
    cfg = build_cfg(unit)
    paths = enumerate_paths(cfg)
    cfg2, paths2 = paths_from_json(paths_to_json(cfg, paths, 1, 256))
    assert cfg2.to_json() == cfg.to_json()
    assert [p.to_json() for p in paths2] == [p.to_json() for p in paths]


def test_oracle_equivalence_on_seeded_corpus():
    rng = random.Random(20240601)
    for _ in range(200):
        cfg = random_dag_cfg(rng)
        got = {path_key(cfg, p) for p in enumerate_paths(cfg, max_paths=10 ** 6)}
        assert got == oracle_paths(cfg)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_oracle_equivalence_property(seed):
    cfg = random_dag_cfg(random.Random(seed))
    paths = enumerate_paths(cfg, max_paths=10 ** 6)
    assert {path_key(cfg, p) for p in paths} == oracle_paths(cfg)
    assert len(paths) == len(oracle_paths(cfg))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=8))
def test_path_count_formula_property(n):
    body = "".join(f"if (v & {1 << i}) r++;\n" for i in range(n))
    assert len(enumerate_paths(cfg_of(f"int f(int v){{ int r = 0;\n{body} return r; }}"))) == 2 ** n
