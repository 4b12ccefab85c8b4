"""Command-line surface: init, run, resume, tree, report, kb-lint.

Exit codes: 0 success, 1 user error (bad flags, unusable input, a
declined approval gate, lint findings), 2 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import knowledge
from .config import RunManifest
from .errors import EngineError, GateDeclined, InputError, SchemaError, ValidationError
from .gateway import Gateway, HttpBackend, ScriptedBackend
from .model import SolutionTree, improvement_factor
from .runner import (
    METRICS_FILE,
    TREE_FILE,
    read_run_doc,
    resume_pipeline,
    run_pipeline,
)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_PIPELINE_FAILURE = 2

PROBLEM_TEMPLATE = """# Problem

Describe the task: what is being predicted or solved, from what inputs,
and any background a solution author needs.
"""

REQUIREMENTS_TEMPLATE = """# Requirements

List hard constraints: allowed libraries, runtime budget, file layout,
anything a solution must or must not do.
"""

EVALUATION_TEMPLATE = """# Evaluation

Define the score: the metric, the data it is computed on, and the
direction (lower is better).
"""

DATA_CONFIG_TEMPLATE = {
    "train": {
        "filename": "train.csv",
        "description": "training split",
        "loading_instructions": "describe how to load this file",
        "role": "training",
    },
    "val": {
        "filename": "val.csv",
        "description": "held-out validation split, read only by evaluate.py",
        "loading_instructions": "describe how to load this file",
        "role": "validation",
    },
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here that is a user error (1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USER_ERROR)


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", choices=("scripted", "live"), default="scripted",
        help="agent backend: deterministic script file or a live HTTP endpoint",
    )
    parser.add_argument("--script", type=Path, help="script JSON for --backend scripted")
    parser.add_argument(
        "--base-url", default="https://api.openai.com/v1",
        help="chat-completions endpoint for --backend live",
    )
    parser.add_argument(
        "--api-key-env", default="LLM_API_KEY",
        help="environment variable holding the live-backend credential",
    )


def _add_manifest_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="manifest JSON (flags override it)")
    parser.add_argument("--iterations", type=int, help="evolution iteration budget")
    parser.add_argument("--batch", type=int, help="parallel mutations per iteration")
    parser.add_argument("--seed", type=int, help="experiment seed echoed into run.json")
    parser.add_argument("--timeout-validate", type=float, help="validate-mode timeout, seconds")
    parser.add_argument("--timeout-train", type=float, help="train-mode timeout, seconds")
    parser.add_argument("--timeout-evaluate", type=float, help="evaluate-mode timeout, seconds")


def build_parser() -> _Parser:
    parser = _Parser(prog="evotree", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="scaffold an input directory")
    p_init.add_argument("directory", type=Path)
    p_init.add_argument("--force", action="store_true", help="overwrite a non-empty directory")

    p_run = sub.add_parser("run", help="execute the full pipeline")
    p_run.add_argument("input_dir", type=Path)
    p_run.add_argument("--run-dir", type=Path, help="where run artifacts go (default: <input>/../run)")
    p_run.add_argument("--kb", type=Path, help="knowledge-base directory")
    p_run.add_argument(
        "--auto-approve", action="store_true",
        help="accept the evaluation contract without the interactive gate",
    )
    _add_backend_flags(p_run)
    _add_manifest_flags(p_run)

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("run_dir", type=Path)
    p_resume.add_argument("--kb", type=Path, help="knowledge-base directory override")
    p_resume.add_argument("--iterations", type=int, help="extend the iteration budget")
    _add_backend_flags(p_resume)

    p_tree = sub.add_parser("tree", help="print the solution tree")
    p_tree.add_argument("run_dir", type=Path)

    p_report = sub.add_parser("report", help="summarize a finished run")
    p_report.add_argument("run_dir", type=Path)

    p_lint = sub.add_parser("kb-lint", help="check a knowledge-base directory")
    p_lint.add_argument("kb_dir", type=Path)

    return parser


# -- command handlers ----------------------------------------------------------


def cmd_init(args) -> int:
    directory = args.directory
    if directory.exists() and any(directory.iterdir()) and not args.force:
        print(f"{directory} is not empty; pass --force to overwrite", file=sys.stderr)
        return EXIT_USER_ERROR
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "Problem.md").write_text(PROBLEM_TEMPLATE)
    (directory / "Requirements.md").write_text(REQUIREMENTS_TEMPLATE)
    (directory / "Evaluation.md").write_text(EVALUATION_TEMPLATE)
    (directory / "Data_config.json").write_text(json.dumps(DATA_CONFIG_TEMPLATE, indent=2) + "\n")
    (directory / "kb").mkdir(exist_ok=True)
    print(f"Scaffolded input templates in {directory}")
    return EXIT_OK


def _build_manifest(args) -> RunManifest:
    if getattr(args, "config", None):
        try:
            doc = json.loads(args.config.read_text())
        except OSError as exc:
            raise InputError(f"cannot read --config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"--config {args.config} is not valid JSON: {exc}") from exc
        manifest = RunManifest.from_doc(doc)
    else:
        manifest = RunManifest()

    overrides = {}
    if getattr(args, "iterations", None) is not None:
        overrides["max_iterations"] = args.iterations
    if getattr(args, "batch", None) is not None:
        overrides["mutation_batch"] = args.batch
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    timeouts = dict(manifest.exec_timeouts)
    for mode in ("validate", "train", "evaluate"):
        value = getattr(args, f"timeout_{mode}", None)
        if value is not None:
            timeouts[mode] = value
    if timeouts != manifest.exec_timeouts:
        overrides["exec_timeouts"] = timeouts
    return replace(manifest, **overrides) if overrides else manifest


def _build_gateway(args, run_dir: Path) -> Gateway:
    if args.backend == "scripted":
        if not args.script:
            raise InputError("--backend scripted needs --script <file>")
        backend = ScriptedBackend.from_file(args.script)
    else:
        backend = HttpBackend(base_url=args.base_url, api_key_env=args.api_key_env)
    return Gateway(backend, trace_path=run_dir / "gateway_trace.jsonl")


def _terminal_approver(contract) -> bool:
    bar = "-" * 60
    print(f"Generated evaluation contract\n{bar}\n## guidelines.md\n")
    print(contract.guidelines.strip()[:4000])
    print(f"\n{bar}\n## evaluate.py\n")
    print(contract.evaluate_script.strip()[:4000])
    print(bar)
    try:
        answer = input("Approve this contract and start the search? [y/N] ")
    except EOFError:
        return False
    return answer.strip().lower() in ("y", "yes")


def _format_score(score) -> str:
    if score.is_evaluated:
        return f"{score.value:.6g}"
    return f"FAILED ({score.reason})" if score.reason else "FAILED"


def _print_outcome(outcome) -> None:
    root = outcome.tree.get("0")
    champion = outcome.champion
    print(f"Champion: {champion.id}")
    print(f"Champion score: {_format_score(champion.score)}")
    print(f"Root score: {_format_score(root.score)}")
    try:
        factor = improvement_factor(root.score, champion.score)
        print(f"Improvement factor: {factor:.6g}x")
    except EngineError:
        print("Improvement factor: n/a")
    print(f"Run directory: {outcome.run_dir}")


def cmd_run(args) -> int:
    run_dir = args.run_dir or (args.input_dir.resolve().parent / "run")
    manifest = _build_manifest(args)
    gateway = _build_gateway(args, run_dir)
    outcome = run_pipeline(
        args.input_dir,
        run_dir,
        manifest,
        gateway,
        kb_dir=args.kb,
        auto_approve=args.auto_approve,
        approver=_terminal_approver,
    )
    _print_outcome(outcome)
    return EXIT_OK


def cmd_resume(args) -> int:
    manifest = None
    if args.iterations is not None:
        doc = read_run_doc(args.run_dir)
        manifest = replace(
            RunManifest.from_doc(doc["manifest"]), max_iterations=args.iterations
        )
    gateway = _build_gateway(args, args.run_dir)
    outcome = resume_pipeline(args.run_dir, gateway, manifest=manifest, kb_dir=args.kb)
    _print_outcome(outcome)
    return EXIT_OK


def cmd_tree(args) -> int:
    tree = SolutionTree.load(args.run_dir / TREE_FILE)
    champion_id = None
    try:
        champion_id = tree.champion().id
    except EngineError:
        pass
    for node in tree.nodes():
        indent = "  " * (len(node.id) - 1)
        marker = "  <- champion" if node.id == champion_id else ""
        print(f"{indent}{node.id}  {_format_score(node.score)}{marker}")
    print(f"\n{len(tree)} nodes, iteration {tree.iteration}")
    return EXIT_OK


def cmd_report(args) -> int:
    tree = SolutionTree.load(args.run_dir / TREE_FILE)
    metrics_path = args.run_dir / METRICS_FILE
    if not metrics_path.is_file():
        raise InputError(f"{metrics_path} not found; has the run reached the evolution phase?")
    try:
        metrics = json.loads(metrics_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unreadable {metrics_path}: {exc}") from exc

    champion = tree.champion()
    root = tree.get("0")
    lineage = [champion.id[:i] for i in range(1, len(champion.id) + 1)]
    print(f"Champion: {champion.id}  score {_format_score(champion.score)}")
    print("Lineage: " + " -> ".join(f"{i} ({_format_score(tree.get(i).score)})" for i in lineage))
    try:
        print(f"Improvement factor: {improvement_factor(root.score, champion.score):.6g}x")
    except EngineError:
        print("Improvement factor: n/a")

    print("\nIteration  Best score    Champion  Added")
    for row in metrics.get("iterations", []):
        added = ", ".join(row.get("nodes_added", []))
        print(f"{row['iteration']:>9}  {row['best_score']:<12.6g}  {row['champion']:<8}  {added}")

    counts = metrics.get("word_counts", {})
    total = sum(counts.values())
    print("\nRole         Words     Share")
    for role, words in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        share = 100.0 * words / total if total else 0.0
        print(f"{role:<12} {words:>6}    {share:.2f}%")
    return EXIT_OK


def cmd_kb_lint(args) -> int:
    if not args.kb_dir.is_dir():
        raise InputError(f"{args.kb_dir} is not a directory")
    issues = knowledge.lint(args.kb_dir)
    for issue in issues:
        print(issue)
    if issues:
        print(f"{len(issues)} issue(s) found", file=sys.stderr)
        return EXIT_USER_ERROR
    print("knowledge base ok")
    return EXIT_OK


_HANDLERS = {
    "init": cmd_init,
    "run": cmd_run,
    "resume": cmd_resume,
    "tree": cmd_tree,
    "report": cmd_report,
    "kb-lint": cmd_kb_lint,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _HANDLERS[args.command](args)
    except GateDeclined as exc:
        print(f"stopped: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except (InputError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except EngineError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
