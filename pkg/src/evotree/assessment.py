"""Analysis-side agents and their stores.

Covers the run's second phase and the per-node bookkeeping around
execution: exploratory data analysis over training files, generation
and smoke-validation of the evaluation contract, result reports, and
the on-disk Analysis Base those reports live in.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .bundle import ProblemBundle, describe_datasets, stage_files
from .config import (
    ROLE_DATA_ANALYST,
    ROLE_DEBUGGER,
    ROLE_EVALUATOR,
    ROLE_RESULT_ANALYST,
    AgentConfig,
)
from .errors import ContractGenerationError, InputError, ValidationError
from .gateway import ChatRequest, Gateway
from .model import SolutionId, SolutionNode, SolutionTree, write_json_atomic
from .parsing import (
    code_or_whole_text,
    extract_code_block,
    final_score_from_stdout,
    split_level2_sections,
)
from .prompts import render_prompt
from .sandbox import CHECKPOINT_FILE, ExecSpec, Sandbox

logger = logging.getLogger(__name__)

EVALUATE_FILE = "evaluate.py"
GUIDELINES_FILE = "guidelines.md"
EDA_SCRIPT = "eda.py"
INPUT_MANIFEST = "input_manifest.json"
DATA_ANALYSIS_FILE = "data_analysis.md"

APPROVED_BY_HUMAN = "human"
APPROVED_BY_AUTO = "auto_flag"

SECTION_SUMMARY = "Summary of Approach"
SECTION_DYNAMICS = "Training Dynamics"
SECTION_BREAKDOWN = "Performance Breakdown"
SECTION_PARENT_COMPARISON = "Comparison with Parent"

FLAG_MARKER = "<!-- section-validation-warning -->"


def _ask(gateway: Gateway, agent: AgentConfig, role: str, context: dict, tag: str) -> str:
    messages = render_prompt(role, context)
    response = gateway.complete(
        ChatRequest(
            model=agent.models()[0],
            messages=tuple(messages),
            tag=tag,
            temperature=agent.temperature,
            max_tokens=agent.max_tokens,
        )
    )
    return response.text


def _log_tail(path: Path, max_chars: int = 4000) -> str:
    if not Path(path).is_file():
        return ""
    return Path(path).read_text(errors="replace")[-max_chars:]


# -- evaluation contract ----------------------------------------------------


@dataclass(frozen=True)
class EvaluationContract:
    """The run-level scoring protocol: a test script plus its rules.

    The engine refuses to grow solutions until the contract is
    approved, either by a human at the terminal or by an explicit
    automation flag.
    """

    evaluate_script: str
    guidelines: str
    approved: bool = False
    approved_by: str | None = None

    def __post_init__(self):
        if self.approved and self.approved_by not in (APPROVED_BY_HUMAN, APPROVED_BY_AUTO):
            raise ValidationError("an approved contract must record who approved it")
        if not self.approved and self.approved_by is not None:
            raise ValidationError("approved_by is only meaningful once approved")
        if not self.evaluate_script.strip() or not self.guidelines.strip():
            raise ValidationError("contract assets must be non-empty")

    def approve(self, approved_by: str) -> "EvaluationContract":
        if approved_by not in (APPROVED_BY_HUMAN, APPROVED_BY_AUTO):
            raise ValidationError(f"unknown approver kind: {approved_by!r}")
        return replace(self, approved=True, approved_by=approved_by)

    def save(self, contract_dir: Path) -> None:
        contract_dir = Path(contract_dir)
        contract_dir.mkdir(parents=True, exist_ok=True)
        (contract_dir / EVALUATE_FILE).write_text(self.evaluate_script)
        (contract_dir / GUIDELINES_FILE).write_text(self.guidelines)

    @classmethod
    def load(
        cls,
        contract_dir: Path,
        approved: bool = False,
        approved_by: str | None = None,
    ) -> "EvaluationContract":
        contract_dir = Path(contract_dir)
        script = contract_dir / EVALUATE_FILE
        guide = contract_dir / GUIDELINES_FILE
        if not script.is_file() or not guide.is_file():
            raise InputError(f"no stored contract under {contract_dir}")
        return cls(script.read_text(), guide.read_text(), approved, approved_by)


def _parse_contract_response(text: str) -> tuple[str, str] | None:
    sections = split_level2_sections(text)
    if EVALUATE_FILE not in sections or GUIDELINES_FILE not in sections:
        return None
    code = extract_code_block(sections[EVALUATE_FILE], "python")
    guidelines = sections[GUIDELINES_FILE].strip()
    if code is None or not code.strip() or not guidelines:
        return None
    return code, guidelines


def _smoke_run(sandbox: Sandbox, evaluate_code: str) -> tuple[bool, str]:
    """Run the candidate evaluate script against a stub checkpoint.

    The script must survive an unusable checkpoint: exit 0 and still
    print a FINAL_SCORE marker (nan is fine). Returns (ok, detail).
    """
    smoke_dir = sandbox.run_dir / "contract" / "smoke"
    smoke_dir.mkdir(parents=True, exist_ok=True)
    (smoke_dir / EVALUATE_FILE).write_text(evaluate_code)
    (smoke_dir / CHECKPOINT_FILE).write_text("{}")
    data_dir = sandbox.run_dir / "data"
    env_extra = {"DATA_DIR": str(data_dir)} if data_dir.is_dir() else {}
    spec = ExecSpec(
        workdir=smoke_dir,
        command=(sandbox.interpreter, EVALUATE_FILE),
        mode="evaluate",
        timeout_s=sandbox.manifest.exec_timeouts["evaluate"],
        env_extra=env_extra,
    )
    outcome = sandbox.run_process(spec, smoke_dir / "logs")
    if outcome.timed_out:
        return False, "smoke run timed out"
    if outcome.exit_code != 0:
        return False, (
            f"smoke run exited {outcome.exit_code}\n"
            f"--- stderr tail ---\n{_log_tail(outcome.stderr_path)}"
        )
    if final_score_from_stdout(outcome.stdout_path.read_text(errors="replace")) is None:
        return False, "smoke run printed no FINAL_SCORE marker"
    return True, "ok"


def generate_contract(bundle: ProblemBundle, sandbox: Sandbox) -> EvaluationContract:
    """Have the evaluator agent write evaluate.py and guidelines.md.

    The pair is smoke-validated before being persisted under
    run_dir/contract. A smoke failure earns one debugger-assisted
    repair pass; a second failure raises ContractGenerationError.
    The returned contract is never pre-approved.
    """
    if sandbox.gateway is None:
        raise ValidationError("contract generation needs a gateway")
    gateway = sandbox.gateway
    agent = sandbox.manifest.agent(ROLE_EVALUATOR)
    context = {
        "request": "Produce the evaluation contract for this problem.",
        "problem": bundle.problem,
        "requirements": bundle.requirements,
        "evaluation": bundle.evaluation,
        "datasets": describe_datasets(bundle.datasets) or "(no datasets declared)",
    }
    text = _ask(gateway, agent, ROLE_EVALUATOR, context, tag="evaluator/contract")
    parsed = _parse_contract_response(text)
    if parsed is None:
        retry_ctx = dict(context)
        retry_ctx["request"] = (
            "Your previous reply did not follow the output format. Reply again with "
            "exactly two level-2 sections, '## evaluate.py' (one fenced python block) "
            "and '## guidelines.md'."
        )
        text = _ask(gateway, agent, ROLE_EVALUATOR, retry_ctx, tag="evaluator/contract/retry")
        parsed = _parse_contract_response(text)
        if parsed is None:
            raise ContractGenerationError("evaluator reply missing evaluate.py/guidelines.md structure")

    code, guidelines = parsed
    ok, detail = _smoke_run(sandbox, code)
    if not ok:
        advice = _ask(
            gateway,
            sandbox.manifest.agent(ROLE_DEBUGGER),
            ROLE_DEBUGGER,
            {
                "request": "Diagnose why this evaluation script failed its smoke run and suggest a minimal fix.",
                "solution_code": code,
                "error_output": detail,
            },
            tag="debugger/contract/attempt1",
        )
        repair_ctx = dict(context)
        repair_ctx.update(
            {
                "request": (
                    "The evaluate script failed its smoke validation. Rewrite the contract, "
                    "keeping the same two-section output format."
                ),
                "current_code": code,
                "error_output": detail,
                "debugger_advice": advice,
            }
        )
        text = _ask(gateway, agent, ROLE_EVALUATOR, repair_ctx, tag="evaluator/contract/repair1")
        parsed = _parse_contract_response(text)
        if parsed is None:
            raise ContractGenerationError("evaluator repair reply missing evaluate.py/guidelines.md structure")
        code, guidelines = parsed
        ok, detail = _smoke_run(sandbox, code)
        if not ok:
            raise ContractGenerationError(f"evaluate script failed smoke validation twice: {detail}")

    contract = EvaluationContract(code, guidelines)
    contract.save(sandbox.run_dir / "contract")
    return contract


# -- analysis reports ---------------------------------------------------------


@dataclass(frozen=True)
class AnalysisReport:
    """One node's post-mortem, written by the result analyst."""

    node_id: SolutionId
    body: str
    flagged: bool = False

    @property
    def report_id(self) -> str:
        return f"analysis_{self.node_id}"


def required_report_sections(is_child: bool) -> tuple[str, ...]:
    base = (SECTION_SUMMARY, SECTION_DYNAMICS, SECTION_BREAKDOWN)
    if is_child:
        return base + (SECTION_PARENT_COMPARISON,)
    return base


def missing_report_sections(body: str, is_child: bool) -> list[str]:
    """Required section titles absent from the report body.

    A header counts when it equals the title or extends it
    parenthetically, e.g. "## Comparison with Parent (for child
    solutions)" satisfies "Comparison with Parent".
    """
    present = list(split_level2_sections(body))
    missing = []
    for title in required_report_sections(is_child):
        if not any(h == title or h.startswith(title + " (") for h in present):
            missing.append(title)
    return missing


class AnalysisBase:
    """File-backed store of analysis reports, one Markdown file per node.

    Reads are lock-free; writes serialize on an internal lock because
    mutation workers finish concurrently. A report that failed section
    validation twice is persisted with a leading warning marker so the
    flag survives a reload.
    """

    def __init__(self, storage_dir: Path):
        self.storage_dir = Path(storage_dir)
        self._lock = threading.Lock()

    def path_for(self, node_id: SolutionId) -> Path:
        return self.storage_dir / f"analysis_{node_id}.md"

    def save(self, report: AnalysisReport) -> Path:
        path = self.path_for(report.node_id)
        body = report.body
        if report.flagged:
            body = f"{FLAG_MARKER}\n{body}"
        with self._lock:
            self.storage_dir.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(body)
            os.replace(tmp, path)
        return path

    def get(self, node_id: SolutionId) -> AnalysisReport | None:
        path = self.path_for(node_id)
        if not path.is_file():
            return None
        raw = path.read_text()
        if raw.startswith(FLAG_MARKER):
            return AnalysisReport(node_id, raw[len(FLAG_MARKER) :].lstrip("\n"), flagged=True)
        return AnalysisReport(node_id, raw)

    def has(self, node_id: SolutionId) -> bool:
        return self.path_for(node_id).is_file()

    def node_ids(self) -> list[SolutionId]:
        if not self.storage_dir.is_dir():
            return []
        ids = []
        for path in self.storage_dir.glob("analysis_*.md"):
            suffix = path.name[len("analysis_") : -len(".md")]
            if suffix.isdigit():
                ids.append(suffix)
        return sorted(ids)

    def save_data_analysis(self, body: str) -> Path:
        with self._lock:
            self.storage_dir.mkdir(parents=True, exist_ok=True)
            path = self.storage_dir / DATA_ANALYSIS_FILE
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(body)
            os.replace(tmp, path)
        return path

    def data_analysis(self) -> str | None:
        path = self.storage_dir / DATA_ANALYSIS_FILE
        return path.read_text() if path.is_file() else None


def analyze_result(
    node: SolutionNode,
    *,
    gateway: Gateway,
    agent: AgentConfig,
    solution_code: str,
    training_log: str = "",
    evaluation_log: str = "",
    plots: Sequence[str] = (),
    proposal: str | None = None,
    parent_report: str | None = None,
) -> AnalysisReport:
    """Write the analysis report for an executed node.

    Root nodes skip the parent-comparison section. A report missing
    required sections gets exactly one re-ask; if that also fails
    validation the latest body is kept but flagged.
    """
    is_child = node.parent is not None
    if node.score.is_evaluated:
        score_text = f"{node.score.value}"
    else:
        score_text = f"FAILED ({node.score.reason or 'no reason recorded'})"
    kind = "child" if is_child else "root"
    context: dict[str, object] = {
        "request": (
            f"Write the analysis report for {kind} solution {node.id}. "
            + (
                "Include every listed section."
                if is_child
                else "This is the root solution, so omit the child-only sections."
            )
        ),
        "evaluation_score": score_text,
        "solution_code": solution_code,
        "training_log": training_log or "(no training log)",
        "testing_log": evaluation_log or "(no evaluation log)",
        "plots": "\n".join(plots) or "(none)",
    }
    if proposal is not None:
        context["proposal"] = proposal
    if parent_report is not None:
        context["parent_analysis"] = parent_report

    body = _ask(gateway, agent, ROLE_RESULT_ANALYST, context, tag=f"result_analyst/{node.id}")
    missing = missing_report_sections(body, is_child)
    if not missing:
        return AnalysisReport(node.id, body)

    retry_ctx = dict(context)
    retry_ctx["request"] = (
        f"Your report for solution {node.id} is missing required sections: "
        f"{', '.join(missing)}. Rewrite the complete report with every required "
        "level-2 section present."
    )
    body = _ask(gateway, agent, ROLE_RESULT_ANALYST, retry_ctx, tag=f"result_analyst/{node.id}/retry")
    still_missing = missing_report_sections(body, is_child)
    if still_missing:
        logger.warning(
            "analysis report for %s kept despite missing sections: %s",
            node.id,
            ", ".join(still_missing),
        )
        return AnalysisReport(node.id, body, flagged=True)
    return AnalysisReport(node.id, body)


# -- exploratory data analysis ------------------------------------------------


def run_eda(
    bundle: ProblemBundle,
    sandbox: Sandbox,
    base: AnalysisBase,
    data_dir: Path | None = None,
) -> str | None:
    """Run the data analyst over training files only; returns the report.

    Returns None (and no report file) when the bundle declares no
    training-role data, or when the analysis script cannot be made to
    run within the repair budget. Validation-role files are never
    staged into the analysis workspace; the staged set is recorded in
    input_manifest.json for auditing.
    """
    training = bundle.training_datasets()
    if not training:
        logger.info("no training-role datasets declared; skipping data analysis")
        return None
    if sandbox.gateway is None:
        raise ValidationError("data analysis needs a gateway")
    gateway = sandbox.gateway
    agent = sandbox.manifest.agent(ROLE_DATA_ANALYST)
    src_dir = Path(data_dir) if data_dir is not None else sandbox.run_dir / "data"

    eda_dir = sandbox.run_dir / "eda"
    eda_dir.mkdir(parents=True, exist_ok=True)
    staged = stage_files(training, src_dir, eda_dir)
    write_json_atomic(eda_dir / INPUT_MANIFEST, {"files": sorted(staged)})

    context = {
        "request": (
            "Write the exploratory analysis script for the training data. "
            "The files listed below sit in the working directory."
        ),
        "problem": bundle.problem,
        "datasets": describe_datasets(training),
    }
    code = code_or_whole_text(_ask(gateway, agent, ROLE_DATA_ANALYST, context, tag="data_analyst/eda_code"))
    script_path = eda_dir / EDA_SCRIPT
    script_path.write_text(code)

    max_repairs = sandbox.manifest.max_debug_iters
    outcome = None
    for attempt in range(1, max_repairs + 2):
        spec = ExecSpec(
            workdir=eda_dir,
            command=(sandbox.interpreter, EDA_SCRIPT),
            mode="eda",
            timeout_s=sandbox.manifest.exec_timeouts["validate"],
        )
        outcome = sandbox.run_process(spec, eda_dir / "logs" / f"attempt_{attempt}")
        if outcome.ok:
            break
        if attempt > max_repairs:
            logger.warning("data analysis script still failing after %d repairs; skipping report", max_repairs)
            return None
        repair_ctx = dict(context)
        repair_ctx.update(
            {
                "request": "Your analysis script failed. Rewrite the complete script fixing the error.",
                "current_code": script_path.read_text(),
                "error_output": (
                    f"exit code: {outcome.exit_code} (timed out: {outcome.timed_out})\n"
                    f"--- stderr tail ---\n{_log_tail(outcome.stderr_path)}"
                ),
            }
        )
        code = code_or_whole_text(
            _ask(gateway, agent, ROLE_DATA_ANALYST, repair_ctx, tag=f"data_analyst/eda/repair{attempt}")
        )
        script_path.write_text(code)

    assert outcome is not None and outcome.ok
    plots_dir = eda_dir / "plots"
    plots = sorted(p.name for p in plots_dir.glob("*.png")) if plots_dir.is_dir() else []
    report_ctx = {
        "request": (
            "Write the text-only data analysis report from the script output below. "
            "Downstream agents see only this text."
        ),
        "problem": bundle.problem,
        "script_output": outcome.stdout_path.read_text(errors="replace"),
        "plots": "\n".join(plots) or "(none)",
    }
    body = _ask(gateway, agent, ROLE_DATA_ANALYST, report_ctx, tag="data_analyst/eda_report")
    base.save_data_analysis(body)
    return body


# -- kinship ------------------------------------------------------------------


def _cap_most_recent(nodes: list[SolutionNode], cap: int | None) -> list[SolutionNode]:
    nodes = sorted(nodes, key=lambda n: n.id)
    if cap is None or len(nodes) <= cap:
        return nodes
    by_age = sorted(nodes, key=lambda n: (n.created_iteration, n.id))
    keep = {n.id for n in by_age[-cap:]}
    return [n for n in nodes if n.id in keep]


def relative_reports(
    tree: SolutionTree,
    parent_id: SolutionId,
    base: AnalysisBase,
    max_per_group: int | None = None,
) -> list[AnalysisReport]:
    """Reports a new child of parent_id should study, closest kin first.

    Order is fixed: the parent's own report, then the parent's existing
    children (the pending child's siblings), then the parent's siblings
    (the pending child's uncles). Relatives without a stored report are
    skipped, so missing kin just shorten the list. max_per_group keeps
    only the most recently created nodes of each group when a group is
    larger (ties go to the later sibling index).
    """
    parent = tree.get(parent_id)
    reports: list[AnalysisReport] = []
    own = base.get(parent_id)
    if own is not None:
        reports.append(own)

    siblings = tree.children(parent_id)
    uncles: list[SolutionNode] = []
    if parent.parent is not None:
        uncles = [n for n in tree.children(parent.parent) if n.id != parent_id]
    for group in (siblings, uncles):
        for node in _cap_most_recent(list(group), max_per_group):
            report = base.get(node.id)
            if report is not None:
                reports.append(report)
    return reports
