"""Independent oracles and scripted-run builders shared by the test modules."""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from cpathtest.cfg import CONDITION, ENTRY, EXIT, STATEMENT, Cfg, CfgNode
from cpathtest.config import RepairPolicy
from cpathtest.llm import ScriptedLlm
from cpathtest.opmap import HelpersFile
from cpathtest.synth import AtomicTestUnit
from cpathtest.validate import ScriptedToolchain, UnitContext, ValidationReport, validate_units

# ---------------------------------------------------------------------------
# random loop-free CFGs and the brute-force path oracle


def random_dag_cfg(rng: random.Random, max_nodes: int = 12) -> Cfg:
    """A valid loop-free CFG: node k's first edge goes to k+1, a condition's second edge jumps forward."""
    n = rng.randint(2, max_nodes)
    nodes = [CfgNode(0, ENTRY, "", 0)]
    edges = []
    exit_id = n - 1
    for k in range(1, n - 1):
        kind = CONDITION if rng.random() < 0.5 else STATEMENT
        nodes.append(CfgNode(k, kind, f"c{k}" if kind == CONDITION else f"s{k};", k))
    nodes.append(CfgNode(exit_id, EXIT, "", n))
    if n > 1:
        edges.append((0, 1, "unconditional"))
    for node in nodes[1:-1]:
        k = node.id
        if node.kind == CONDITION:
            other = rng.randint(k + 1, exit_id)
            first, second = ("true", "false") if rng.random() < 0.5 else ("false", "true")
            edges.append((k, k + 1, first))
            edges.append((k, other, second))
        else:
            edges.append((k, k + 1, "unconditional"))
    return Cfg("f", nodes, edges, 0, exit_id)


def oracle_paths(cfg: Cfg) -> set[tuple[tuple[int, ...], tuple[str, ...]]]:
    """Every entry-to-exit walk of a DAG, as (node ids, edge labels), by plain recursion."""
    out = {}
    for s, d, label in cfg.edges:
        out.setdefault(s, []).append((d, label))
    found = set()

    def walk(node: int, nodes: tuple[int, ...], labels: tuple[str, ...]) -> None:
        if node == cfg.exit_id:
            found.add((nodes, labels))
            return
        for dst, label in out.get(node, ()):
            walk(dst, nodes + (dst,), labels + (label,))

    walk(cfg.entry_id, (cfg.entry_id,), ())
    return found


def path_key(cfg: Cfg, path) -> tuple[tuple[int, ...], tuple[str, ...]]:
    labels = []
    succ = {}
    for s, d, label in cfg.edges:
        succ.setdefault((s, d), []).append(label)
    decisions = dict(path.branch_decisions)
    for a, b in zip(path.node_ids, path.node_ids[1:]):
        options = succ[(a, b)]
        labels.append(decisions[a] if a in decisions else options[0])
    return tuple(path.node_ids), tuple(labels)


# ---------------------------------------------------------------------------
# scripted validation schedules

PASS = "pass0"
DROP = "drop"
DEAD = "unreachable"


@dataclass
class Planned:
    function: str
    path_id: int
    outcome: str | int  # PASS, DROP, DEAD, or the iteration that fixes it
    category: str = "misc"  # first failure kind


def failing_source(function: str, path_id: int, category: str) -> str:
    marker = ("/* @compile-error: 'undeclared_thing' undeclared */" if category == "compilation"
              else f"/* @run: {category} */")
    return (f"void test_{function}_path{path_id}_case(void)\n{{\n    {marker}\n"
            f"    TEST_ASSERT_EQUAL_INT(0, {function}());\n}}\n")


def clean_source(function: str, path_id: int) -> str:
    return f"void test_{function}_path{path_id}_case(void)\n{{\n    TEST_ASSERT_EQUAL_INT(0, {function}());\n}}\n"


def build_schedule(plan: list[Planned], workdir: Path, max_iterations: int = 3):
    """Units, contexts and a scripted LLM that realize ``plan`` under :class:`ScriptedToolchain`."""
    llm = ScriptedLlm()
    items = []
    for p in plan:
        d = workdir / p.function / f"path{p.path_id}"
        ctx = UnitContext(workdir, d, d / "logs", header="")
        bad = failing_source(p.function, p.path_id, p.category)
        good = clean_source(p.function, p.path_id)
        first = good if p.outcome == PASS else bad
        unit = AtomicTestUnit(p.path_id, p.function, first, HelpersFile("", ()),
                              test_name=f"test_{p.function}_path{p.path_id}_case")
        for it in range(1, max_iterations + 1):
            tag = f"repair:{p.function}:path{p.path_id}:iter{it}"
            if p.outcome == DEAD:
                reply = "UNREACHABLE: scripted dead branch"
            elif isinstance(p.outcome, int) and it >= p.outcome:
                reply = good
            else:
                reply = bad
            llm.add("repair", reply, tag=tag)
        items.append((unit, ctx))
    return items, llm


def run_schedule(plan: list[Planned], workdir: Path, max_iterations: int = 3, parallelism: int = 1):
    items, llm = build_schedule(plan, workdir, max_iterations)
    policy = RepairPolicy(max_iterations=max_iterations)
    report = ValidationReport(max_iterations)
    toolchain = ScriptedToolchain()
    units = validate_units(items, toolchain, llm, policy, report, parallelism=parallelism)
    return units, report, llm


# Table 2 of the validation study: (subject, generated, pass0, fixed@1, fixed@2, fixed@3, dropped).
TABLE2 = (
    ("alaw", 17, 15, 1, 1, 0, 0),
    ("affine", 25, 20, 4, 1, 0, 0),
    ("decimal_to_any_base", 21, 20, 1, 0, 0, 0),
    ("infix_to_postfix", 35, 32, 3, 0, 0, 0),
    ("lcs", 20, 20, 0, 0, 0, 0),
    ("ascending_priority_queue", 36, 32, 3, 0, 0, 1),
    ("bst", 26, 20, 3, 3, 0, 0),
    ("doubly_linked_list", 12, 4, 3, 1, 1, 3),
    ("dynamic_stack", 61, 46, 4, 0, 1, 10),
    ("prime_factorization", 29, 26, 0, 1, 0, 2),
)
# first-failure categories of the 47 failing tests, in the order they are assigned
TABLE2_CATEGORIES = ["compilation"] * 10 + ["memory"] * 13 + ["crash"] * 7 + ["assertion"] * 1 + ["misc"] * 16


def table2_plan() -> list[Planned]:
    plan = []
    cats = iter(TABLE2_CATEGORIES)
    for subject, generated, pass0, f1, f2, f3, dropped in TABLE2:
        outcomes = [PASS] * pass0 + [1] * f1 + [2] * f2 + [3] * f3 + [DROP] * dropped
        assert len(outcomes) == generated, subject
        for pid, outcome in enumerate(outcomes):
            plan.append(Planned(subject, pid, outcome, "misc" if outcome == PASS else next(cats)))
    return plan


def random_plan(rng: random.Random, max_iterations: int = 3) -> list[Planned]:
    plan = []
    for f in range(rng.randint(1, 4)):
        for pid in range(rng.randint(0, 8)):
            outcome = rng.choice([PASS, PASS, DROP, DEAD] + list(range(1, max_iterations + 1)))
            category = rng.choice(["compilation", "memory", "crash", "assertion", "misc", "timeout"])
            plan.append(Planned(f"fn{f}", pid, outcome, category))
    return plan


def expected_counts(plan: list[Planned], max_iterations: int = 3) -> dict[str, dict]:
    rows: dict[str, dict] = {}
    for p in plan:
        r = rows.setdefault(p.function, {"generated": 0, "pass0": 0, "failed": 0,
                                         "fixed": [0] * max_iterations, "dropped": 0, "final": 0})
        r["generated"] += 1
        if p.outcome == PASS:
            r["pass0"] += 1
            r["final"] += 1
            continue
        r["failed"] += 1
        if isinstance(p.outcome, int):
            r["fixed"][p.outcome - 1] += 1
            r["final"] += 1
        else:
            r["dropped"] += 1
    return rows
