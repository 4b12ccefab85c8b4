"""The growth loop: pick parents, mutate them in parallel, commit children.

Selection runs in two regimes. While the tree is no larger than the
mutation batch every unsaturated evaluated node becomes a parent. Once
the tree outgrows the batch, the best scorer is always kept
(exploitation) and the remaining slots go to the top vote-getters of a
selector ensemble (exploration). Mutation turns one parent into one
child through retrieval, debate, engineering, a validate/repair loop,
training, evaluation, and a written analysis; any hard failure still
commits a child, carrying a failed score, so lineage history stays
truthful.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .assessment import (
    AnalysisBase,
    AnalysisReport,
    EvaluationContract,
    analyze_result,
    relative_reports,
)
from .bundle import ProblemBundle, stage_files
from .config import (
    ROLE_CRITIC,
    ROLE_ENGINEER,
    ROLE_PROPOSER,
    ROLE_RESULT_ANALYST,
    ROLE_RETRIEVER,
    ROLE_SELECTOR,
    RunManifest,
)
from .debate import DebateContext, run_debate
from .errors import EngineError, SelectionExhaustedError, ValidationError
from .gateway import ChatRequest, Gateway
from .knowledge import KnowledgeIndex, retrieve
from .model import (
    Score,
    SolutionId,
    SolutionNode,
    SolutionTree,
    child_id,
    write_json_atomic,
)
from .parsing import code_or_whole_text
from .prompts import render_prompt
from .sandbox import SOLUTION_FILE, Sandbox

logger = logging.getLogger(__name__)

STAGE_EARLY = "early"
STAGE_MATURE = "mature"

_SELECT_RE = re.compile(r"^\s*SELECT:\s*(\S+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class SelectorBallot:
    """One ensemble member's nominations, already sanity-filtered."""

    selector_model: str
    nominations: tuple[SolutionId, ...]
    reasoning: str = ""

    def __post_init__(self):
        if len(set(self.nominations)) != len(self.nominations):
            raise ValidationError("ballot nominations must be distinct")


@dataclass(frozen=True)
class ParentSelection:
    """The parents one iteration will mutate, and how they were chosen."""

    stage: str
    exploitation_pick: SolutionId | None
    exploration_picks: tuple[SolutionId, ...]
    ballots: tuple[SelectorBallot, ...] = ()

    def __post_init__(self):
        if self.stage not in (STAGE_EARLY, STAGE_MATURE):
            raise ValidationError(f"unknown selection stage: {self.stage!r}")
        picks = self.picks
        if len(set(picks)) != len(picks):
            raise ValidationError("selected parents must be distinct")

    @property
    def picks(self) -> tuple[SolutionId, ...]:
        head = (self.exploitation_pick,) if self.exploitation_pick is not None else ()
        return head + self.exploration_picks

    def reasoning_for(self, solution_id: SolutionId) -> str:
        """First ballot rationale that nominated this parent, if any."""
        for ballot in self.ballots:
            if solution_id in ballot.nominations:
                return ballot.reasoning
        return ""


def _score_key(tree: SolutionTree, solution_id: SolutionId) -> tuple[float, SolutionId]:
    node = tree.get(solution_id)
    value = node.score.value if node.score.is_evaluated else float("inf")
    return (value, solution_id)


def tally_votes(
    ballots: Sequence[SelectorBallot], tree: SolutionTree
) -> list[tuple[SolutionId, int]]:
    """Rank vote targets: most votes first, ties by lower score then id.

    Ballot order never matters; the ranking is a pure function of the
    multiset of nominations and the tree's scores.
    """
    counts: Counter = Counter()
    for ballot in ballots:
        counts.update(ballot.nominations)
    return sorted(
        counts.items(), key=lambda item: (-item[1],) + _score_key(tree, item[0])
    )


def parse_ballot(
    text: str, model: str, tree: SolutionTree, k: int
) -> SelectorBallot:
    """Extract up to k usable nominations from a selector reply.

    Unknown ids, saturated nodes, and repeats are dropped rather than
    failing the iteration; a sloppy selector just wastes its votes.
    """
    picks: list[SolutionId] = []
    for raw in _SELECT_RE.findall(text):
        candidate = raw.strip("`'\".,")
        if candidate in picks:
            continue
        if candidate not in tree or tree.is_saturated(candidate):
            logger.warning("selector %s nominated unusable id %r; dropped", model, candidate)
            continue
        picks.append(candidate)
        if len(picks) == k:
            break
    return SelectorBallot(selector_model=model, nominations=tuple(picks), reasoning=text)


def _candidates_text(tree: SolutionTree) -> str:
    lines = []
    for node in tree.nodes():
        if tree.is_saturated(node.id):
            continue
        if node.score.is_evaluated:
            score = f"score {node.score.value:.6g}"
        else:
            score = f"FAILED ({node.score.reason or 'execution failed'})"
        lines.append(
            f"- id {node.id}: {score}, children {tree.child_count(node.id)}, "
            f"created at iteration {node.created_iteration}"
        )
    return "\n".join(lines)


def collect_ballots(
    tree: SolutionTree, manifest: RunManifest, gateway: Gateway, iteration: int
) -> list[SelectorBallot]:
    """One concurrent nomination call per ensemble member, in roster order."""
    agent = manifest.agent(ROLE_SELECTOR)
    k = manifest.selector_nominations
    context = {
        "request": (
            f"Nominate parents for iteration {iteration}. Every listed candidate "
            "is eligible; saturated solutions are already excluded."
        ),
        "candidates": _candidates_text(tree),
        "k": k,
    }
    messages = tuple(render_prompt(ROLE_SELECTOR, context))

    def ask(model: str) -> SelectorBallot:
        try:
            response = gateway.complete(
                ChatRequest(
                    model=model,
                    messages=messages,
                    tag=f"selector/{model}/iter{iteration}",
                    temperature=agent.temperature,
                    max_tokens=agent.max_tokens,
                )
            )
        except EngineError as exc:
            # Ballots are advisory; exploitation does not depend on them.
            logger.warning("selector %s failed on iteration %d: %s", model, iteration, exc)
            return SelectorBallot(selector_model=model, nominations=())
        return parse_ballot(response.text, model, tree, k)

    models = agent.models()
    with ThreadPoolExecutor(max_workers=len(models)) as pool:
        return list(pool.map(ask, models))


def compute_selection(
    tree: SolutionTree,
    manifest: RunManifest,
    ballots: Sequence[SelectorBallot] = (),
) -> ParentSelection:
    """Pure selection decision over a tree snapshot and ballots.

    Raises SelectionExhaustedError when nothing is left to mutate, which
    run_evolution treats as a graceful stop rather than a failure.
    """
    open_evaluated = [
        n.id for n in tree.evaluated_nodes() if not tree.is_saturated(n.id)
    ]
    if not open_evaluated:
        raise SelectionExhaustedError("every evaluated solution is saturated")

    if len(tree) <= manifest.mutation_batch:
        return ParentSelection(
            stage=STAGE_EARLY,
            exploitation_pick=None,
            exploration_picks=tuple(sorted(open_evaluated)),
            ballots=tuple(ballots),
        )

    exploitation = min(open_evaluated, key=lambda i: _score_key(tree, i))
    exploration: list[SolutionId] = []
    for candidate, _count in tally_votes(ballots, tree):
        if len(exploration) >= manifest.mutation_batch - 1:
            break
        if candidate == exploitation:
            continue  # already mutating; a vote for it is redundant
        if candidate not in tree or tree.is_saturated(candidate):
            continue
        exploration.append(candidate)
    return ParentSelection(
        stage=STAGE_MATURE,
        exploitation_pick=exploitation,
        exploration_picks=tuple(exploration),
        ballots=tuple(ballots),
    )


def select_parents(
    tree: SolutionTree, manifest: RunManifest, gateway: Gateway, iteration: int
) -> ParentSelection:
    """Selection entry point; only the mature stage consults selectors."""
    if len(tree) <= manifest.mutation_batch:
        return compute_selection(tree, manifest)
    ballots = collect_ballots(tree, manifest, gateway, iteration)
    return compute_selection(tree, manifest, ballots)


# -- mutation -----------------------------------------------------------------


@dataclass
class EngineServices:
    """Everything one mutation needs, bundled to keep signatures sane."""

    manifest: RunManifest
    gateway: Gateway
    sandbox: Sandbox
    base: AnalysisBase
    bundle: ProblemBundle
    contract: EvaluationContract
    kb: KnowledgeIndex | None = None

    @property
    def run_dir(self) -> Path:
        return self.sandbox.run_dir

    @property
    def data_dir(self) -> Path:
        return self.run_dir / "data"

    @property
    def solutions_dir(self) -> Path:
        return self.run_dir / "solutions"

    def workdir_for(self, solution_id: SolutionId) -> Path:
        return self.solutions_dir / f"solution_{solution_id}"

    def agent_text(self, role: str, context: dict, tag: str) -> str:
        agent = self.manifest.agent(role)
        response = self.gateway.complete(
            ChatRequest(
                model=agent.models()[0],
                messages=tuple(render_prompt(role, context)),
                tag=tag,
                temperature=agent.temperature,
                max_tokens=agent.max_tokens,
            )
        )
        return response.text


_FAILURE_REPORT = """## Summary of Approach
The mutation of solution {parent} into {child} did not produce a runnable candidate.

## Training Dynamics
No training run completed.

## Performance Breakdown
Failure at the {stage} stage: {reason}

## Comparison with Parent
Not executed; the parent's solution remains the reference.
"""


def _synthetic_failure_report(child: SolutionId, parent: SolutionId, stage: str, reason: str) -> AnalysisReport:
    body = _FAILURE_REPORT.format(parent=parent, child=child, stage=stage, reason=reason)
    return AnalysisReport(child, body)


def _joined_reports(reports: list[AnalysisReport]) -> str:
    blocks = [f"### Report for solution {r.node_id}\n{r.body.strip()}" for r in reports]
    return "\n\n".join(blocks)


def mutate(
    parent_id: SolutionId,
    tree: SolutionTree,
    services: EngineServices,
    iteration: int,
    new_child_id: SolutionId | None = None,
    selector_reasoning: str = "",
) -> tuple[SolutionNode, AnalysisReport]:
    """Grow one child under parent_id; always returns a committable pair.

    Preconditions (unsaturated parent, approved contract) raise before
    any agent call. Past that point every hard failure is converted
    into a failed-score child plus a failure report, so one bad branch
    never takes down its siblings. The caller commits the returned
    node and report at the iteration barrier.
    """
    manifest = services.manifest
    if parent_id not in tree:
        raise ValidationError(f"unknown parent: {parent_id!r}")
    if tree.is_saturated(parent_id):
        raise ValidationError(f"parent {parent_id} is saturated; cannot mutate")
    if not services.contract.approved:
        raise ValidationError("evaluation contract is not approved; refusing to mutate")

    cid = new_child_id or child_id(parent_id, tree.next_child_index(parent_id), manifest.max_children)
    workdir = services.workdir_for(cid)
    parent_node = tree.get(parent_id)

    def failed_pair(stage: str, reason: str) -> tuple[SolutionNode, AnalysisReport]:
        logger.warning("mutation %s failed at %s: %s", cid, stage, reason)
        node = SolutionNode(
            id=cid,
            parent=parent_id,
            score=Score.failed(reason),
            solution_path=f"solutions/solution_{cid}",
            analysis_ref=f"analysis_{cid}",
            created_iteration=iteration,
        )
        return node, _synthetic_failure_report(cid, parent_id, stage, reason)

    stage = "setup"
    try:
        workdir.mkdir(parents=True, exist_ok=True)
        parent_solution = services.run_dir / parent_node.solution_path / SOLUTION_FILE
        parent_code = parent_solution.read_text() if parent_solution.is_file() else ""
        if not parent_code:
            return failed_pair(stage, f"parent solution file missing: {parent_solution}")
        shutil.copy2(parent_solution, workdir / SOLUTION_FILE)
        stage_files(services.bundle.training_datasets(), services.data_dir, workdir)

        parent_report = services.base.get(parent_id)
        parent_analysis = parent_report.body if parent_report else "(no analysis available)"

        stage = "retrieval"
        kb_entry = ""
        if services.kb is not None and services.kb.records:
            decision = retrieve(
                services.kb,
                {
                    "problem": services.bundle.problem,
                    "parent_code_summary": parent_code,
                    "parent_analysis": parent_analysis,
                },
                services.gateway,
                manifest.agent(ROLE_RETRIEVER),
                tag=f"retriever/{cid}",
                max_index_chars=manifest.max_index_chars,
            )
            if decision.chosen is not None:
                kb_entry = decision.chosen.to_markdown()

        stage = "debate"
        kin = relative_reports(tree, parent_id, services.base, manifest.relatives_cap)
        ctx = DebateContext(
            child_id=cid,
            problem=services.bundle.problem,
            parent_code=parent_code,
            parent_analysis=parent_analysis,
            data_analysis=services.base.data_analysis() or "",
            relative_reports=_joined_reports(kin),
            kb_entry=kb_entry,
            selector_reasoning=selector_reasoning,
        )
        transcript = run_debate(
            ctx,
            services.gateway,
            manifest.agent(ROLE_PROPOSER),
            manifest.agent(ROLE_CRITIC),
            manifest.debate_rounds,
        )
        transcript.save(workdir / "debate.json")
        proposal = transcript.proposal
        (workdir / "proposal.md").write_text(proposal)

        stage = "engineering"
        engineer_ctx = {
            "problem": services.bundle.problem,
            "guidelines": services.contract.guidelines,
            "proposal": proposal,
            "parent_code": parent_code,
        }
        first_ctx = dict(engineer_ctx)
        first_ctx["request"] = (
            f"Implement the proposal exactly, modifying the parent solution into "
            f"the complete solution file for child {cid}."
        )
        code = code_or_whole_text(
            services.agent_text(ROLE_ENGINEER, first_ctx, tag=f"engineer/{cid}")
        )
        (workdir / SOLUTION_FILE).write_text(code)

        stage = "validation"
        loop = services.sandbox.debug_cycle(workdir, engineer_ctx)
        if not loop.success:
            node, _ = failed_pair(stage, f"validation still failing after {loop.attempts} attempts")
            return node, _analyzed_or_synthetic(node, services, workdir, proposal, parent_analysis, stage)

        stage = "training"
        train_outcome = services.sandbox.run_process(
            services.sandbox.solution_spec(workdir, "train"), workdir / "logs" / "train"
        )
        if not train_outcome.ok:
            detail = "timed out" if train_outcome.timed_out else f"exited {train_outcome.exit_code}"
            node, _ = failed_pair(stage, f"training run {detail}")
            return node, _analyzed_or_synthetic(node, services, workdir, proposal, parent_analysis, stage)

        stage = "evaluation"
        score = services.sandbox.evaluate_solution(
            workdir, services.run_dir / "contract" / "evaluate.py", data_dir=services.data_dir
        )
        node = SolutionNode(
            id=cid,
            parent=parent_id,
            score=score,
            solution_path=f"solutions/solution_{cid}",
            analysis_ref=f"analysis_{cid}",
            created_iteration=iteration,
        )
        report = _analyzed_or_synthetic(node, services, workdir, proposal, parent_analysis, stage)
        return node, report
    except EngineError as exc:
        return failed_pair(stage, str(exc) or type(exc).__name__)


def _analyzed_or_synthetic(
    node: SolutionNode,
    services: EngineServices,
    workdir: Path,
    proposal: str,
    parent_analysis: str,
    stage: str,
) -> AnalysisReport:
    """Ask the result analyst for the report; degrade to a local stub."""
    try:
        return analyze_result(
            node,
            gateway=services.gateway,
            agent=services.manifest.agent(ROLE_RESULT_ANALYST),
            solution_code=_read_if_exists(workdir / SOLUTION_FILE),
            training_log=_read_if_exists(workdir / "logs" / "train" / "stdout.log"),
            evaluation_log=_read_if_exists(workdir / "logs" / "evaluate" / "stdout.log"),
            proposal=proposal,
            parent_report=parent_analysis,
        )
    except EngineError as exc:
        logger.warning("result analysis for %s failed (%s); storing stub report", node.id, exc)
        reason = node.score.reason or "analysis backend unavailable"
        return _synthetic_failure_report(node.id, node.parent or "", stage, reason)


def _read_if_exists(path: Path, max_chars: int = 200_000) -> str:
    if not path.is_file():
        return ""
    return path.read_text(errors="replace")[-max_chars:]


# -- the loop -----------------------------------------------------------------


def run_evolution(
    tree: SolutionTree,
    services: EngineServices,
    metrics_path: Path | None = None,
    start_iteration: int | None = None,
    stop_after: int | None = None,
    word_baseline: dict[str, int] | None = None,
    extra_words: dict[str, int] | None = None,
) -> SolutionNode:
    """Iterate select → mutate → commit until the budget runs out.

    Each iteration commits its children, reports, tree.json and
    metrics.json at a single barrier, so a crash between iterations
    loses nothing and a resume continues from tree.iteration + 1
    (start_iteration defaults to that). stop_after ends the loop right
    after that iteration's commit, which is how the resume tests
    simulate a crash. Returns the champion node.
    """
    manifest = services.manifest
    metrics_path = metrics_path or services.run_dir / "metrics.json"
    history = _load_metrics_history(metrics_path)
    first = start_iteration if start_iteration is not None else tree.iteration + 1

    for iteration in range(first, manifest.max_iterations + 1):
        try:
            selection = select_parents(tree, manifest, services.gateway, iteration)
        except SelectionExhaustedError as exc:
            logger.info("stopping at iteration %d: %s", iteration, exc)
            break

        jobs: list[tuple[SolutionId, SolutionId, str]] = []
        for parent in selection.picks:
            cid = child_id(parent, tree.next_child_index(parent), manifest.max_children)
            jobs.append((parent, cid, selection.reasoning_for(parent)))
            # Reserve the index against later picks in this same batch.
            # Parents are distinct, so one child per parent per iteration
            # and next_child_index cannot collide.

        with ThreadPoolExecutor(max_workers=manifest.mutation_batch) as pool:
            futures = [
                pool.submit(
                    mutate,
                    parent,
                    tree,
                    services,
                    iteration,
                    new_child_id=cid,
                    selector_reasoning=reasoning,
                )
                for parent, cid, reasoning in jobs
            ]
            results = [f.result() for f in futures]

        for node, report in results:
            services.base.save(report)
            tree.insert(node)
        tree.iteration = iteration
        tree.save(services.run_dir / "tree.json")

        champion = tree.champion()
        history.append(
            {
                "iteration": iteration,
                "best_score": champion.score.value,
                "champion": champion.id,
                "nodes_added": [node.id for node, _ in results],
            }
        )
        _write_metrics(metrics_path, history, services, word_baseline, extra_words)
        logger.info(
            "iteration %d: %d children, best %s at %.6g",
            iteration,
            len(results),
            champion.id,
            champion.score.value,
        )
        if stop_after is not None and iteration >= stop_after:
            break

    return tree.champion()


def _load_metrics_history(metrics_path: Path) -> list[dict]:
    if not Path(metrics_path).is_file():
        return []
    try:
        return list(json.loads(Path(metrics_path).read_text()).get("iterations", []))
    except (ValueError, OSError):
        return []


def merged_word_counts(
    gateway: Gateway,
    baseline: dict[str, int] | None = None,
    extra: dict[str, int] | None = None,
) -> dict[str, int]:
    """Combined per-role word counts: prior runs + this gateway + extras."""
    counts: Counter = Counter(baseline or {})
    counts.update(gateway.word_counts())
    counts.update(extra or {})
    return dict(sorted(counts.items()))


def _write_metrics(
    metrics_path: Path,
    history: list[dict],
    services: EngineServices,
    word_baseline: dict[str, int] | None,
    extra_words: dict[str, int] | None,
) -> None:
    doc = {
        "iterations": history,
        "word_counts": merged_word_counts(services.gateway, word_baseline, extra_words),
    }
    write_json_atomic(metrics_path, doc)
