"""Run-directory lifecycle: input staging, phases 1-2, the approval
gate, baseline generation, and resume.

A run directory is self-contained. Everything a resumed process needs
is persisted inside it:

    run.json            manifest echo, status, approval record
    input/              copies of the four user input files
    data/               staged dataset files
    eda/                data-analysis script, logs, plots
    contract/           evaluate.py + guidelines.md
    analysis_base/      per-node reports + data_analysis.md
    solutions/          one workdir per tree node
    tree.json           the solution tree (iteration barrier commits)
    metrics.json        best-score series + word counts
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, NamedTuple

from .assessment import (
    AnalysisBase,
    AnalysisReport,
    APPROVED_BY_AUTO,
    APPROVED_BY_HUMAN,
    EvaluationContract,
    analyze_result,
    generate_contract,
    run_eda,
)
from .bundle import (
    DATA_CONFIG_FILE,
    EVALUATION_FILE,
    PROBLEM_FILE,
    REQUIREMENTS_FILE,
    ProblemBundle,
    describe_datasets,
    load_bundle,
    stage_files,
)
from .config import ROLE_RESULT_ANALYST, ROLE_ROOT_ENGINEER, RunManifest
from .errors import GateDeclined, InputError, RootGenerationError
from .evolution import EngineServices, run_evolution
from .gateway import Gateway
from .knowledge import KnowledgeIndex, load_index
from .model import (
    ROOT_ID,
    SolutionNode,
    SolutionTree,
    write_json_atomic,
)
from .parsing import code_or_whole_text
from .sandbox import SOLUTION_FILE, Sandbox

logger = logging.getLogger(__name__)

RUN_DOC_FILE = "run.json"
TREE_FILE = "tree.json"
METRICS_FILE = "metrics.json"
INPUT_SUBDIR = "input"
DATA_SUBDIR = "data"
CONTRACT_SUBDIR = "contract"

STATUS_AWAITING_APPROVAL = "awaiting_approval"
STATUS_DECLINED = "declined"
STATUS_EVOLVING = "evolving"
STATUS_COMPLETE = "complete"

Approver = Callable[[EvaluationContract], bool]


class PipelineOutcome(NamedTuple):
    champion: SolutionNode
    tree: SolutionTree
    run_dir: Path


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_run_doc(
    run_dir: Path,
    manifest: RunManifest,
    status: str,
    approval: dict | None = None,
    kb_dir: Path | None = None,
) -> None:
    write_json_atomic(
        Path(run_dir) / RUN_DOC_FILE,
        {
            "status": status,
            "approval": approval,
            "kb_dir": str(kb_dir) if kb_dir is not None else None,
            "manifest": manifest.to_doc(),
            "updated_at": _utc_now(),
        },
    )


def read_run_doc(run_dir: Path) -> dict:
    path = Path(run_dir) / RUN_DOC_FILE
    if not path.is_file():
        raise InputError(f"{path} not found; is this a run directory?")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"unreadable {path}: {exc}") from exc
    if not isinstance(doc, dict) or "manifest" not in doc:
        raise InputError(f"{path} is missing the manifest echo")
    return doc


def stage_run_dir(input_dir: Path, run_dir: Path, bundle: ProblemBundle) -> None:
    """Copy the user inputs and datasets into the run directory.

    Everything the run reads afterwards comes from these copies, so a
    later edit of the original input directory cannot desync a resume.
    """
    input_dir = Path(input_dir)
    run_dir = Path(run_dir)
    input_copy = run_dir / INPUT_SUBDIR
    input_copy.mkdir(parents=True, exist_ok=True)
    names = [PROBLEM_FILE, REQUIREMENTS_FILE, EVALUATION_FILE]
    if (input_dir / DATA_CONFIG_FILE).is_file():
        names.append(DATA_CONFIG_FILE)
    for name in names:
        (input_copy / name).write_text((input_dir / name).read_text())
    stage_files(bundle.datasets, input_dir, run_dir / DATA_SUBDIR)


def generate_root(services: EngineServices) -> tuple[SolutionNode, AnalysisReport]:
    """Produce and evaluate the baseline solution, node "0".

    A single root-engineer call writes the initial solution file; there
    is no retrieval and no debate for the baseline. Unlike mutation,
    failure here is fatal: the evolution loop cannot start without an
    evaluated root.
    """
    bundle = services.bundle
    workdir = services.workdir_for(ROOT_ID)
    workdir.mkdir(parents=True, exist_ok=True)
    stage_files(bundle.training_datasets(), services.data_dir, workdir)

    context = {
        "request": "Write the complete baseline solution file for this task.",
        "problem": bundle.problem,
        "requirements": bundle.requirements,
        "evaluation": bundle.evaluation,
        "datasets": describe_datasets(bundle.training_datasets()),
        "guidelines": services.contract.guidelines,
        "data_analysis": services.base.data_analysis() or "",
    }
    text = services.agent_text(ROLE_ROOT_ENGINEER, context, tag=f"root_engineer/{ROOT_ID}")
    (workdir / SOLUTION_FILE).write_text(code_or_whole_text(text))

    repair_context = {
        "problem": bundle.problem,
        "requirements": bundle.requirements,
        "guidelines": services.contract.guidelines,
    }
    loop = services.sandbox.debug_cycle(workdir, repair_context)
    if not loop.success:
        raise RootGenerationError(
            f"baseline solution failed validation after {loop.attempts} attempts"
        )

    train_outcome = services.sandbox.run_process(
        services.sandbox.solution_spec(workdir, "train"), workdir / "logs" / "train"
    )
    if not train_outcome.ok:
        detail = "timed out" if train_outcome.timed_out else f"exited {train_outcome.exit_code}"
        raise RootGenerationError(f"baseline training run {detail}")

    score = services.sandbox.evaluate_solution(
        workdir, services.run_dir / CONTRACT_SUBDIR / "evaluate.py", data_dir=services.data_dir
    )
    if not score.is_evaluated:
        raise RootGenerationError(f"baseline evaluation failed: {score.reason}")

    node = SolutionNode(
        id=ROOT_ID,
        parent=None,
        score=score,
        solution_path=f"solutions/solution_{ROOT_ID}",
        analysis_ref=f"analysis_{ROOT_ID}",
        created_iteration=0,
    )
    report = analyze_result(
        node,
        gateway=services.gateway,
        agent=services.manifest.agent(ROLE_RESULT_ANALYST),
        solution_code=(workdir / SOLUTION_FILE).read_text(),
        training_log=_tail(workdir / "logs" / "train" / "stdout.log"),
        evaluation_log=_tail(workdir / "logs" / "evaluate" / "stdout.log"),
    )
    return node, report


def _tail(path: Path, max_chars: int = 200_000) -> str:
    if not path.is_file():
        return ""
    return path.read_text(errors="replace")[-max_chars:]


def run_pipeline(
    input_dir: Path,
    run_dir: Path,
    manifest: RunManifest,
    gateway: Gateway,
    *,
    kb_dir: Path | None = None,
    auto_approve: bool = False,
    approver: Approver | None = None,
    stop_after: int | None = None,
) -> PipelineOutcome:
    """Execute the full pipeline into a fresh run directory.

    Phase order: input staging, conditional EDA, contract generation,
    approval gate, baseline generation, evolution loop. The gate blocks
    phase 3: with neither auto_approve nor an accepting approver the
    run stops with GateDeclined and no tree exists afterwards.
    """
    input_dir = Path(input_dir)
    run_dir = Path(run_dir)
    if (run_dir / TREE_FILE).exists():
        raise InputError(f"{run_dir} already holds a run; resume it instead")

    bundle = load_bundle(input_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stage_run_dir(input_dir, run_dir, bundle)
    # From here on the run reads only its own copies.
    bundle = load_bundle(run_dir / INPUT_SUBDIR, data_dir=run_dir / DATA_SUBDIR)

    kb = _load_kb(kb_dir)
    sandbox = Sandbox(run_dir, manifest, gateway=gateway)
    base = AnalysisBase(run_dir / "analysis_base")

    run_eda(bundle, sandbox, base, data_dir=run_dir / DATA_SUBDIR)
    contract = generate_contract(bundle, sandbox)
    write_run_doc(run_dir, manifest, STATUS_AWAITING_APPROVAL, kb_dir=kb_dir)

    if auto_approve:
        contract = contract.approve(APPROVED_BY_AUTO)
    elif approver is not None and approver(contract):
        contract = contract.approve(APPROVED_BY_HUMAN)
    else:
        write_run_doc(run_dir, manifest, STATUS_DECLINED, kb_dir=kb_dir)
        raise GateDeclined("evaluation contract was not approved")
    approval = {"approved_by": contract.approved_by, "timestamp": _utc_now()}

    services = EngineServices(
        manifest=manifest,
        gateway=gateway,
        sandbox=sandbox,
        base=base,
        bundle=bundle,
        contract=contract,
        kb=kb,
    )
    root_node, root_report = generate_root(services)
    base.save(root_report)
    tree = SolutionTree(max_children=manifest.max_children)
    tree.insert(root_node)
    tree.save(run_dir / TREE_FILE)
    write_run_doc(run_dir, manifest, STATUS_EVOLVING, approval, kb_dir)

    champion = run_evolution(
        tree,
        services,
        stop_after=stop_after,
        extra_words={"user": bundle.user_word_count()},
    )
    if stop_after is None or tree.iteration >= manifest.max_iterations:
        write_run_doc(run_dir, manifest, STATUS_COMPLETE, approval, kb_dir)
    return PipelineOutcome(champion, tree, run_dir)


def resume_pipeline(
    run_dir: Path,
    gateway: Gateway,
    *,
    manifest: RunManifest | None = None,
    kb_dir: Path | None = None,
    stop_after: int | None = None,
) -> PipelineOutcome:
    """Continue an interrupted run from its last committed iteration.

    The manifest is rebuilt from run.json unless an override is given
    (the override is persisted, so a later resume sees the same run
    configuration). An unapproved run cannot be resumed; the gate is
    not replayable.
    """
    run_dir = Path(run_dir)
    doc = read_run_doc(run_dir)
    if manifest is None:
        manifest = RunManifest.from_doc(doc["manifest"])
    approval = doc.get("approval")
    if not approval or not approval.get("approved_by"):
        raise InputError("run has no approved evaluation contract; start it with `run`")
    if kb_dir is None and doc.get("kb_dir"):
        kb_dir = Path(doc["kb_dir"])

    tree_path = run_dir / TREE_FILE
    if not tree_path.is_file():
        raise InputError(f"{tree_path} not found; the run never reached the evolution phase")
    tree = SolutionTree.load(tree_path, max_children=manifest.max_children)

    bundle = load_bundle(run_dir / INPUT_SUBDIR, data_dir=run_dir / DATA_SUBDIR)
    contract = EvaluationContract.load(
        run_dir / CONTRACT_SUBDIR, approved=True, approved_by=approval["approved_by"]
    )
    services = EngineServices(
        manifest=manifest,
        gateway=gateway,
        sandbox=Sandbox(run_dir, manifest, gateway=gateway),
        base=AnalysisBase(run_dir / "analysis_base"),
        bundle=bundle,
        contract=contract,
        kb=_load_kb(kb_dir),
    )
    write_run_doc(run_dir, manifest, STATUS_EVOLVING, approval, kb_dir)

    word_baseline: dict[str, int] = {}
    metrics_path = run_dir / METRICS_FILE
    if metrics_path.is_file():
        try:
            word_baseline = dict(json.loads(metrics_path.read_text()).get("word_counts", {}))
        except (json.JSONDecodeError, AttributeError):
            logger.warning("ignoring unreadable %s word counts", metrics_path)

    champion = run_evolution(
        tree,
        services,
        stop_after=stop_after,
        word_baseline=word_baseline,
    )
    if stop_after is None or tree.iteration >= manifest.max_iterations:
        write_run_doc(run_dir, manifest, STATUS_COMPLETE, approval, kb_dir)
    return PipelineOutcome(champion, tree, run_dir)


def _load_kb(kb_dir: Path | None) -> KnowledgeIndex | None:
    if kb_dir is None:
        return None
    return load_index(Path(kb_dir))
