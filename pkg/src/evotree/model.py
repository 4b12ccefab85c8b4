"""Domain model: solution identifiers, scores, and the solution tree.

A solution's identity is a string of digits. The root is "0" and a child
appends its index digit to the parent's id, so lineage is recoverable from
the id alone (e.g. "0100" is child 0 of "010", grandchild of "01"). Scores
are lower-is-better losses; failed executions keep their node in the tree
under a +inf ranking sentinel so the child index stays consumed.

The tree serializes to a single tree.json document with fixed keys:
an array of node records {id, parent, score_value, score_status,
solution_path, analysis_ref, created_iteration} plus the committed
iteration counter. score_value is null for failed nodes (JSON has no
Infinity) and normalized back to the sentinel on load.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import (
    NoEvaluatedSolutionError,
    SchemaError,
    UndefinedRatioError,
    ValidationError,
)

SolutionId = str

ROOT_ID: SolutionId = "0"
DEFAULT_MAX_CHILDREN = 10

STATUS_EVALUATED = "evaluated"
STATUS_FAILED = "failed"


def is_valid_id(solution_id: str) -> bool:
    """True when the string is a digit sequence starting at the root digit."""
    return (
        isinstance(solution_id, str)
        and len(solution_id) >= 1
        and solution_id[0] == ROOT_ID
        and solution_id.isdigit()
    )


def child_id(parent: SolutionId, index: int, max_children: int = DEFAULT_MAX_CHILDREN) -> SolutionId:
    """Form a child id by appending the index digit to the parent id.

    Args:
        parent: id of the parent node.
        index: child slot, 0 <= index < max_children.
        max_children: saturation bound; must stay <= 10 because ids are
            single decimal digits per generation.
    """
    if not is_valid_id(parent):
        raise ValidationError(f"malformed parent id: {parent!r}")
    if not 1 <= max_children <= 10:
        raise ValidationError(f"max_children must be in [1, 10], got {max_children}")
    if not 0 <= index < max_children:
        raise ValidationError(f"child index {index} out of range [0, {max_children})")
    return parent + str(index)


def parent_of(solution_id: SolutionId) -> SolutionId | None:
    """Parent id, or None for the root."""
    if not is_valid_id(solution_id):
        raise ValidationError(f"malformed solution id: {solution_id!r}")
    if solution_id == ROOT_ID:
        return None
    return solution_id[:-1]


def is_parent_of(parent: SolutionId, child: SolutionId) -> bool:
    return is_valid_id(parent) and is_valid_id(child) and len(child) == len(parent) + 1 and child.startswith(parent)


@dataclass(frozen=True)
class Score:
    """Lower-is-better loss with an execution status.

    A failed score always carries the +inf sentinel so ranking code never
    needs to special-case it; `reason` preserves the failure diagnostic.
    """

    value: float
    status: str
    reason: str | None = None

    def __post_init__(self):
        if self.status not in (STATUS_EVALUATED, STATUS_FAILED):
            raise ValidationError(f"unknown score status: {self.status!r}")
        if self.status == STATUS_EVALUATED:
            if not math.isfinite(self.value) or self.value < 0:
                raise ValidationError(f"evaluated score must be finite and >= 0, got {self.value!r}")
        elif self.value != math.inf:
            raise ValidationError("failed score must carry the +inf sentinel")

    @classmethod
    def evaluated(cls, value: float) -> "Score":
        return cls(value=float(value), status=STATUS_EVALUATED)

    @classmethod
    def failed(cls, reason: str | None = None) -> "Score":
        return cls(value=math.inf, status=STATUS_FAILED, reason=reason)

    @property
    def is_evaluated(self) -> bool:
        return self.status == STATUS_EVALUATED


@dataclass(frozen=True)
class SolutionNode:
    """One committed solution in the tree."""

    id: SolutionId
    parent: SolutionId | None
    score: Score
    solution_path: str
    analysis_ref: str | None = None
    created_iteration: int = 0

    def __post_init__(self):
        if not is_valid_id(self.id):
            raise ValidationError(f"malformed solution id: {self.id!r}")
        if self.parent is not None and self.parent != self.id[:-1]:
            raise ValidationError(f"parent {self.parent!r} inconsistent with id {self.id!r}")
        if self.parent is None and self.id != ROOT_ID:
            raise ValidationError(f"only the root may have no parent, got {self.id!r}")
        if self.created_iteration < 0:
            raise ValidationError("created_iteration must be >= 0")


class SolutionTree:
    """Mutable container of solution nodes with structural invariants.

    Inserts reject orphans, duplicate ids, and children of saturated
    parents, so a tree built through the public API is always well formed.
    """

    def __init__(self, max_children: int = DEFAULT_MAX_CHILDREN):
        if not 1 <= max_children <= 10:
            raise ValidationError(f"max_children must be in [1, 10], got {max_children}")
        self.max_children = max_children
        self.iteration = 0
        self._nodes: dict[SolutionId, SolutionNode] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, solution_id: SolutionId) -> bool:
        return solution_id in self._nodes

    def __iter__(self) -> Iterator[SolutionNode]:
        return iter(self.nodes())

    def get(self, solution_id: SolutionId) -> SolutionNode:
        try:
            return self._nodes[solution_id]
        except KeyError:
            raise ValidationError(f"unknown solution id: {solution_id!r}") from None

    def nodes(self) -> list[SolutionNode]:
        return [self._nodes[k] for k in sorted(self._nodes)]

    def ids(self) -> list[SolutionId]:
        return sorted(self._nodes)

    def insert(self, node: SolutionNode) -> None:
        if node.id in self._nodes:
            raise ValidationError(f"duplicate solution id: {node.id}")
        if node.parent is None:
            if self._nodes:
                raise ValidationError("tree already has a root")
        else:
            if node.parent not in self._nodes:
                raise ValidationError(f"parent {node.parent} not in tree for child {node.id}")
            if self.child_count(node.parent) >= self.max_children:
                raise ValidationError(f"parent {node.parent} is saturated")
            expected_index = int(node.id[-1])
            if expected_index >= self.max_children:
                raise ValidationError(f"child digit {expected_index} exceeds max_children {self.max_children}")
        self._nodes[node.id] = node

    def replace(self, node: SolutionNode) -> None:
        """Swap an existing node record, e.g. to attach an analysis_ref."""
        if node.id not in self._nodes:
            raise ValidationError(f"unknown solution id: {node.id!r}")
        self._nodes[node.id] = node

    def children(self, solution_id: SolutionId) -> list[SolutionNode]:
        self.get(solution_id)
        return [n for n in self.nodes() if n.parent == solution_id]

    def child_count(self, solution_id: SolutionId) -> int:
        return len(self.children(solution_id))

    def is_saturated(self, solution_id: SolutionId) -> bool:
        return self.child_count(solution_id) >= self.max_children

    def next_child_index(self, parent: SolutionId) -> int:
        """Smallest unused child slot under the parent."""
        if self.is_saturated(parent):
            raise ValidationError(f"parent {parent} is saturated")
        used = {int(n.id[-1]) for n in self.children(parent)}
        for i in range(self.max_children):
            if i not in used:
                return i
        raise ValidationError(f"parent {parent} is saturated")

    def evaluated_nodes(self) -> list[SolutionNode]:
        return [n for n in self.nodes() if n.score.is_evaluated]

    def root(self) -> SolutionNode:
        return self.get(ROOT_ID)

    def champion(self) -> SolutionNode:
        """Best evaluated node; ties go to the lexicographically smallest id."""
        candidates = self.evaluated_nodes()
        if not candidates:
            raise NoEvaluatedSolutionError("tree has no evaluated solution")
        return min(candidates, key=lambda n: (n.score.value, n.id))

    def validate(self) -> None:
        """Re-check every structural invariant; raises SchemaError on violation."""
        if not self._nodes:
            raise SchemaError("tree is empty")
        roots = [n for n in self._nodes.values() if n.parent is None]
        if len(roots) != 1 or roots[0].id != ROOT_ID:
            raise SchemaError("tree must contain exactly one root with id '0'")
        for node in self._nodes.values():
            if not is_valid_id(node.id):
                raise SchemaError(f"malformed id {node.id!r}")
            if node.parent is not None:
                if node.parent not in self._nodes:
                    raise SchemaError(f"orphan node {node.id}: parent {node.parent} missing")
                if node.parent != node.id[:-1]:
                    raise SchemaError(f"node {node.id} parent field {node.parent!r} breaks the digit scheme")
                if int(node.id[-1]) >= self.max_children:
                    raise SchemaError(f"node {node.id} child digit exceeds max_children")
        for node in self._nodes.values():
            if self.child_count(node.id) > self.max_children:
                raise SchemaError(f"node {node.id} exceeds max_children")
        paths = [n.solution_path for n in self._nodes.values()]
        if len(set(paths)) != len(paths):
            raise SchemaError("solution_path values must be unique per node")

    # -- persistence ----------------------------------------------------

    def to_doc(self) -> dict:
        records = []
        for node in self.nodes():
            records.append(
                {
                    "id": node.id,
                    "parent": node.parent,
                    "score_value": node.score.value if node.score.is_evaluated else None,
                    "score_status": node.score.status,
                    "solution_path": node.solution_path,
                    "analysis_ref": node.analysis_ref,
                    "created_iteration": node.created_iteration,
                }
            )
        return {"nodes": records, "iteration": self.iteration}

    @classmethod
    def from_doc(cls, doc: dict, max_children: int = DEFAULT_MAX_CHILDREN) -> "SolutionTree":
        if not isinstance(doc, dict) or "nodes" not in doc or "iteration" not in doc:
            raise SchemaError("tree document must carry 'nodes' and 'iteration'")
        tree = cls(max_children=max_children)
        tree.iteration = int(doc["iteration"])
        records = sorted(doc["nodes"], key=lambda r: (len(r["id"]), r["id"]))
        for rec in records:
            try:
                if rec["score_status"] == STATUS_EVALUATED:
                    score = Score.evaluated(rec["score_value"])
                else:
                    score = Score.failed()
                node = SolutionNode(
                    id=rec["id"],
                    parent=rec["parent"],
                    score=score,
                    solution_path=rec["solution_path"],
                    analysis_ref=rec.get("analysis_ref"),
                    created_iteration=int(rec["created_iteration"]),
                )
                tree.insert(node)
            except (KeyError, TypeError, ValidationError) as exc:
                raise SchemaError(f"bad tree record {rec!r}: {exc}") from exc
        tree.validate()
        return tree

    def save(self, path: Path) -> None:
        write_json_atomic(path, self.to_doc())

    @classmethod
    def load(cls, path: Path, max_children: int = DEFAULT_MAX_CHILDREN) -> "SolutionTree":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read tree document {path}: {exc}") from exc
        return cls.from_doc(doc, max_children=max_children)


def improvement_factor(root_score: Score, champion_score: Score) -> float:
    """Ratio of the root loss to the champion loss (>1 means progress)."""
    if not (root_score.is_evaluated and champion_score.is_evaluated):
        raise UndefinedRatioError("improvement factor needs two evaluated scores")
    if champion_score.value <= 0:
        raise UndefinedRatioError("improvement factor undefined for champion score <= 0")
    return root_score.value / champion_score.value


def write_json_atomic(path: Path, doc: object) -> None:
    """Serialize to a temp file in the target directory, then rename over."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    os.replace(tmp, path)
