"""Shared helpers for the test suite."""

from __future__ import annotations

import math
import random
from pathlib import Path

from evotree.model import Score, SolutionNode, SolutionTree

REPO_ROOT = Path(__file__).resolve().parent.parent
TOY_PACK = REPO_ROOT / "fixtures" / "toy_pack"
KB_MINI = REPO_ROOT / "fixtures" / "kb_mini"


def node(solution_id: str, value: float | None, iteration: int = 0, analysis_ref: str | None = None) -> SolutionNode:
    """Build a node; value None means a failed execution."""
    score = Score.failed("synthetic failure") if value is None else Score.evaluated(value)
    return SolutionNode(
        id=solution_id,
        parent=None if solution_id == "0" else solution_id[:-1],
        score=score,
        solution_path=f"solutions/solution_{solution_id}",
        analysis_ref=analysis_ref,
        created_iteration=iteration,
    )


def make_tree(entries: dict[str, float | None], max_children: int = 10) -> SolutionTree:
    """Build a tree from {id: score_value_or_None}, inserting parents first."""
    tree = SolutionTree(max_children=max_children)
    for solution_id in sorted(entries, key=lambda s: (len(s), s)):
        tree.insert(node(solution_id, entries[solution_id]))
    return tree


def random_tree(
    rng: random.Random,
    max_nodes: int = 30,
    failed_rate: float = 0.15,
    max_children: int = 10,
    with_reports: bool = False,
) -> SolutionTree:
    """Grow a random well-formed tree through the public insert API."""
    tree = SolutionTree(max_children=max_children)
    root_failed = False  # keep the root evaluated so champions exist
    tree.insert(node("0", round(rng.uniform(0.01, 1.0), 6)))
    target = rng.randint(1, max_nodes)
    while len(tree) < target:
        open_parents = [n.id for n in tree.nodes() if not tree.is_saturated(n.id)]
        if not open_parents:
            break
        parent = rng.choice(open_parents)
        index = tree.next_child_index(parent)
        child = parent + str(index)
        value = None if rng.random() < failed_rate else round(rng.uniform(1e-6, 1.0), 8)
        child_node = node(child, value, iteration=rng.randint(0, 6))
        if with_reports and rng.random() < 0.8:
            child_node = SolutionNode(
                id=child_node.id,
                parent=child_node.parent,
                score=child_node.score,
                solution_path=child_node.solution_path,
                analysis_ref=f"analysis_{child}",
                created_iteration=child_node.created_iteration,
            )
        tree.insert(child_node)
    return tree


def sentinel_or_value(score: Score) -> float:
    return score.value if score.is_evaluated else math.inf
