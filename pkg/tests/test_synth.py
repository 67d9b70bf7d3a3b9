from __future__ import annotations

import pytest
from conftest import PROJECTS

from cpathtest.cfg import build_cfg, enumerate_paths
from cpathtest.config import PipelineConfig
from cpathtest.csource import extract_functions, generate_project_header, ingest_project
from cpathtest.errors import EmptyResponse
from cpathtest.llm import ScriptedLlm
from cpathtest.opmap import HelpersFile, OperationMap, merge_path_info
from cpathtest.synth import (PASS0, PENDING, REPAIRED, AtomicTestUnit, called_identifiers, canonical_test_name,
                             check_constraints, extract_code, generate_test, normalize_test_source,
                             parse_test_name, rename_identifier)

PROJECT = ingest_project(PROJECTS / "bst", PipelineConfig())
UNITS = {u.name: u for u in extract_functions(PROJECT)}
HEADER = generate_project_header(PROJECT)
NO_HELPERS = HelpersFile("", ())

NULL_ROOT_TEST = """#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_insert_path0_null_root(void)
{
    struct node *root = insert(NULL, 5);
    TEST_ASSERT_NOT_NULL(root);
    TEST_ASSERT_EQUAL_INT(5, root->data);
    free_tree(root);
}
"""


def insert_slice():
    unit = UNITS["insert"]
    paths = enumerate_paths(build_cfg(unit))
    omap = merge_path_info(OperationMap("insert", deps=[("free_tree", "")]), paths)
    return unit, paths[0], omap.per_path[paths[0].path_id]


@pytest.mark.parametrize("fn,pid,desc", [("insert", 0, "null root"), ("delete_node", 12, "Two Children!"),
                                         ("f", 3, ""), ("a_b", 1, "x" * 80)])
def test_canonical_names_parse_back(fn, pid, desc):
    name = canonical_test_name(fn, pid, desc)
    assert name.startswith(f"test_{fn}_path{pid}_")
    assert parse_test_name(name) == (fn, pid)
    assert name.isidentifier()


def test_parse_test_name_rejects_other_names():
    assert parse_test_name("test_insert") is None
    assert parse_test_name("check_insert_path0") is None


def test_null_root_insert_unit_is_pending():
    unit, path, slice_ = insert_slice()
    llm = ScriptedLlm()
    llm.add("synth", f"```c\n{NULL_ROOT_TEST}```", tag="synth:insert:path0")
    got = generate_test(unit, path, slice_, llm, header=HEADER, helpers=NO_HELPERS)
    assert got.status == PENDING and got.iterations_used == 0
    assert got.test_name == "test_insert_path0_null_root"
    assert got.violations == [] and got.requests == 1
    assert [r.temperature for r in llm.log] == [0.0]
    assert "(root==NULL)" in llm.log[0].messages[1][1]


def test_disallowed_call_triggers_one_reprompt():
    unit, path, slice_ = insert_slice()
    bad = NULL_ROOT_TEST.replace("TEST_ASSERT_NOT_NULL(root);", "TEST_ASSERT_EQUAL_INT(1, get_size(root));")
    llm = ScriptedLlm()
    llm.add("synth", bad, tag="synth:insert:path0")
    llm.add("synth", NULL_ROOT_TEST, tag="synth:insert:path0:retry")
    got = generate_test(unit, path, slice_, llm, header=HEADER, helpers=NO_HELPERS)
    assert got.violations == [] and got.requests == 2
    assert "get_size" in llm.log[1].messages[-1][1]


def test_violation_kept_when_reprompt_fails():
    unit, path, slice_ = insert_slice()
    bad = NULL_ROOT_TEST.replace("TEST_ASSERT_NOT_NULL(root);", "TEST_ASSERT_EQUAL_INT(1, get_size(root));")
    llm = ScriptedLlm()
    llm.add("synth", bad, tag="synth:insert:path0")
    llm.add("synth", bad, tag="synth:insert:path0:retry")
    got = generate_test(unit, path, slice_, llm, header=HEADER, helpers=NO_HELPERS)
    assert len(got.violations) == 1 and "get_size" in got.violations[0]
    assert got.status == PENDING


def test_missing_assertion_is_reprompted():
    unit, path, slice_ = insert_slice()
    no_assert = "\n".join(l for l in NULL_ROOT_TEST.splitlines() if "TEST_ASSERT" not in l)
    llm = ScriptedLlm()
    llm.add("synth", no_assert, tag="synth:insert:path0")
    llm.add("synth", NULL_ROOT_TEST, tag="synth:insert:path0:retry")
    got = generate_test(unit, path, slice_, llm, header=HEADER, helpers=NO_HELPERS)
    assert got.requests == 2 and got.violations == []
    assert "assertion" in llm.log[1].messages[-1][1]


def test_empty_response_raises():
    unit, path, slice_ = insert_slice()
    llm = ScriptedLlm()
    llm.add("synth", "   ", tag="synth:insert:path0")
    with pytest.raises(EmptyResponse):
        generate_test(unit, path, slice_, llm, header=HEADER, helpers=NO_HELPERS)


def test_check_constraints_ignores_comments_and_strings():
    src = NULL_ROOT_TEST.replace("free_tree(root);", 'free_tree(root); /* get_size(root) */ puts_("x"); '
                                                     'const char *s = "get_size(root)";')
    violations = check_constraints(src, "insert", ["insert", "free_tree", "puts_"])
    assert violations == []
    assert "get_size" not in called_identifiers(src)


def test_check_constraints_requires_calling_the_function():
    src = NULL_ROOT_TEST.replace("insert(NULL, 5)", "NULL")
    assert any(v.identifier == "insert" for v in check_constraints(src, "insert", ["insert", "free_tree"]))


def test_local_definitions_and_header_macros_are_allowed():
    src = NULL_ROOT_TEST.replace("free_tree(root);", "free_tree(root); local_check(LIMIT);") + \
        "static void local_check(int n) { (void)n; }\n"
    assert check_constraints(src, "insert", ["insert", "free_tree"], ["LIMIT"]) == []


def test_normalize_renames_test_and_adds_stubs():
    raw = "void test_it(void)\n{\n    TEST_ASSERT_NOT_NULL(insert(NULL, 1));\n}\n" \
          "int main(void) { UNITY_BEGIN(); RUN_TEST(test_it); return UNITY_END(); }\n"
    src, name = normalize_test_source(raw, "insert", 4)
    assert name == "test_insert_path4_it"
    assert "main" not in src
    assert "void setUp(void) {}" in src and "void tearDown(void) {}" in src
    assert src.startswith('#include "unity.h"')


def test_rename_identifier_leaves_strings_alone():
    src = 'void a(void) { b(); const char *s = "b"; /* b */ }\n'
    out = rename_identifier(src, "b", "c")
    assert "c();" in out and '"b"' in out and "/* b */" in out


def test_extract_code_prefers_block_with_test():
    text = "```c\nint helper(void);\n```\nthen\n```c\nvoid test_x(void) {}\n```\n"
    assert extract_code(text) == "void test_x(void) {}\n"
    assert extract_code("void test_y(void) {}") == "void test_y(void) {}\n"


def test_unit_invariants():
    u = AtomicTestUnit(0, "f", "", NO_HELPERS, status=PASS0)
    u.check(3)
    with pytest.raises(AssertionError):
        AtomicTestUnit(0, "f", "", NO_HELPERS, status=REPAIRED, iterations_used=0).check(3)
    with pytest.raises(AssertionError):
        AtomicTestUnit(0, "f", "", NO_HELPERS, status=PASS0, iterations_used=4).check(3)
    with pytest.raises(ValueError):
        AtomicTestUnit(0, "f", "", NO_HELPERS, status="weird")
    assert AtomicTestUnit(0, "f", "", NO_HELPERS, status=REPAIRED, iterations_used=2).status_label == "repaired(2)"
