"""Structured user input: problem statement, requirements, evaluation, data.

A run starts from a directory holding Problem.md, Requirements.md,
Evaluation.md and an optional Data_config.json describing datasets by
role. Validation-role datasets are never shown to development-phase
agents; the engine only hands their paths to the run-level evaluator.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import InputError

PROBLEM_FILE = "Problem.md"
REQUIREMENTS_FILE = "Requirements.md"
EVALUATION_FILE = "Evaluation.md"
DATA_CONFIG_FILE = "Data_config.json"

ROLE_TRAINING = "training"
ROLE_VALIDATION = "validation"


@dataclass(frozen=True)
class DatasetDecl:
    """One declared dataset file and how candidate code should load it."""

    name: str
    filename: str
    description: str
    loading_instructions: str
    role: str

    def __post_init__(self):
        if self.role not in (ROLE_TRAINING, ROLE_VALIDATION):
            raise InputError(f"dataset {self.name!r}: role must be 'training' or 'validation', got {self.role!r}")
        if not self.filename:
            raise InputError(f"dataset {self.name!r}: filename must be non-empty")


@dataclass(frozen=True)
class ProblemBundle:
    """Parsed user input for one run."""

    problem: str
    requirements: str
    evaluation: str
    datasets: tuple[DatasetDecl, ...]
    input_dir: Path

    def training_datasets(self) -> tuple[DatasetDecl, ...]:
        return tuple(d for d in self.datasets if d.role == ROLE_TRAINING)

    def validation_datasets(self) -> tuple[DatasetDecl, ...]:
        return tuple(d for d in self.datasets if d.role == ROLE_VALIDATION)

    def user_word_count(self) -> int:
        """Words the human contributed, for the contribution breakdown."""
        total = len(self.problem.split()) + len(self.requirements.split()) + len(self.evaluation.split())
        for d in self.datasets:
            total += len(d.description.split()) + len(d.loading_instructions.split())
        return total


def _read_required(input_dir: Path, name: str) -> str:
    path = input_dir / name
    if not path.is_file():
        raise InputError(f"missing required input file: {path}")
    text = path.read_text()
    if not text.strip():
        raise InputError(f"input file is empty: {path}")
    return text


def load_bundle(input_dir: Path, data_dir: Path | None = None) -> ProblemBundle:
    """Parse an input directory into a ProblemBundle.

    Dataset files are expected next to the declaration files, or under
    data_dir when given (a resumed run keeps them in a separate
    directory). Raises InputError naming the offending file on any
    missing or malformed piece, so the CLI can exit 1 with a usable
    message.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise InputError(f"input directory does not exist: {input_dir}")
    file_root = Path(data_dir) if data_dir is not None else input_dir
    problem = _read_required(input_dir, PROBLEM_FILE)
    requirements = _read_required(input_dir, REQUIREMENTS_FILE)
    evaluation = _read_required(input_dir, EVALUATION_FILE)

    datasets: list[DatasetDecl] = []
    config_path = input_dir / DATA_CONFIG_FILE
    if config_path.is_file():
        try:
            doc = json.loads(config_path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{config_path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise InputError(f"{config_path}: top level must be an object of dataset declarations")
        for name, rec in sorted(doc.items()):
            if not isinstance(rec, dict):
                raise InputError(f"{config_path}: dataset {name!r} must be an object")
            try:
                decl = DatasetDecl(
                    name=name,
                    filename=rec["filename"],
                    description=rec.get("description", ""),
                    loading_instructions=rec.get("loading_instructions", ""),
                    role=rec.get("role", ""),
                )
            except KeyError as exc:
                raise InputError(f"{config_path}: dataset {name!r} missing key {exc}") from exc
            src = file_root / decl.filename
            if not src.is_file():
                raise InputError(f"{config_path}: dataset {name!r} file not found: {src}")
            datasets.append(decl)

    return ProblemBundle(
        problem=problem,
        requirements=requirements,
        evaluation=evaluation,
        datasets=tuple(datasets),
        input_dir=input_dir,
    )


def describe_datasets(datasets: Iterable[DatasetDecl]) -> str:
    """Render dataset declarations as prompt-ready text, one block each."""
    blocks = []
    for d in datasets:
        blocks.append(
            f"- {d.name} ({d.role}): file `{d.filename}`\n"
            f"  description: {d.description or '(none)'}\n"
            f"  loading: {d.loading_instructions or '(none)'}"
        )
    return "\n".join(blocks)


def stage_files(datasets: Iterable[DatasetDecl], src_dir: Path, dest_dir: Path) -> list[str]:
    """Copy the given datasets' files into dest_dir, keeping relative paths.

    This is how agent workspaces receive data: hand this only
    training-role declarations and the workspace physically cannot see
    validation files. Returns the copied relative paths.
    """
    src_dir, dest_dir = Path(src_dir), Path(dest_dir)
    copied: list[str] = []
    for decl in datasets:
        src = src_dir / decl.filename
        if not src.is_file():
            raise InputError(f"dataset {decl.name!r} file not found: {src}")
        dest = dest_dir / decl.filename
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(src, dest)
        copied.append(decl.filename)
    return copied
