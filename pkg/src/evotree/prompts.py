"""Prompt assembly from per-role template assets.

Each agent role has a text template under evotree/prompts/. The system
message is the template rendered verbatim with `$name` placeholders
substituted from the call context. Context keys the template does not
consume become titled sections of the user message, concatenated in a
fixed per-role order so requests are reproducible byte for byte.
"""

from __future__ import annotations

import re
import string
from functools import lru_cache
from importlib import resources

from .errors import TemplateError, ValidationError
from . import config as cfg

# Order of user-message sections per role. Keys not listed here are
# appended after the listed ones, alphabetically, so novel context still
# renders deterministically.
SECTION_ORDER: dict[str, tuple[str, ...]] = {
    cfg.ROLE_ROOT_ENGINEER: ("request", "problem", "requirements", "guidelines", "data_analysis"),
    cfg.ROLE_DATA_ANALYST: ("request", "problem", "datasets", "script_output", "plots", "error_output"),
    cfg.ROLE_EVALUATOR: (
        "request",
        "problem",
        "requirements",
        "evaluation",
        "datasets",
        "data_analysis",
        "repair_feedback",
    ),
    cfg.ROLE_RETRIEVER: ("problem", "parent_code_summary", "parent_analysis"),
    cfg.ROLE_PROPOSER: (
        "request",
        "problem",
        "data_analysis",
        "parent_code",
        "parent_analysis",
        "relative_reports",
        "kb_entry",
        "selector_reasoning",
    ),
    cfg.ROLE_CRITIC: (
        "request",
        "problem",
        "data_analysis",
        "parent_code",
        "parent_analysis",
        "relative_reports",
        "kb_entry",
        "selector_reasoning",
    ),
    cfg.ROLE_ENGINEER: (
        "request",
        "problem",
        "guidelines",
        "proposal",
        "parent_code",
        "current_code",
        "error_output",
        "debugger_advice",
    ),
    cfg.ROLE_DEBUGGER: ("request", "solution_code", "error_output", "attempt_history"),
    cfg.ROLE_RESULT_ANALYST: (
        "request",
        "problem",
        "proposal",
        "solution_code",
        "training_log",
        "testing_log",
        "evaluation_score",
        "parent_analysis",
        "plots",
    ),
    cfg.ROLE_SELECTOR: ("request", "candidates"),
}

SECTION_TITLES = {
    "request": "Request",
    "problem": "Problem",
    "requirements": "Requirements",
    "evaluation": "Evaluation",
    "datasets": "Datasets",
    "data_analysis": "Data Analysis Report",
    "guidelines": "Guidelines",
    "proposal": "Proposal",
    "parent_code": "Parent Solution Code",
    "parent_code_summary": "Parent Solution Code",
    "parent_analysis": "Parent Analysis Report",
    "relative_reports": "Analysis Reports of Related Solutions",
    "kb_entry": "Knowledge Base Entry",
    "selector_reasoning": "Selector Reasoning",
    "solution_code": "Solution Code",
    "current_code": "Current Solution Code",
    "training_log": "Training Log",
    "testing_log": "Testing Log",
    "evaluation_score": "Evaluation Score",
    "error_output": "Error Output",
    "debugger_advice": "Debugger Advice",
    "attempt_history": "Attempt History",
    "candidates": "Candidate Solutions",
    "script_output": "Script Output",
    "plots": "Plot Files",
    "repair_feedback": "Repair Feedback",
}

_IDENT_RE = re.compile(r"\$(?:\{([_a-zA-Z][_a-zA-Z0-9]*)\}|([_a-zA-Z][_a-zA-Z0-9]*))")


@lru_cache(maxsize=None)
def load_template(role: str) -> str:
    try:
        ref = resources.files("evotree").joinpath("prompts", f"{role}.txt")
        return ref.read_text()
    except FileNotFoundError:
        raise ValidationError(f"no prompt template for role {role!r}") from None


def template_identifiers(template: str) -> set[str]:
    """Placeholder names a template requires ($$ escapes are skipped)."""
    names = set()
    for match in _IDENT_RE.finditer(template.replace("$$", "")):
        names.add(match.group(1) or match.group(2))
    return names


def render_prompt(role: str, context: dict[str, object]) -> list[dict[str, str]]:
    """Build the [system, user] message pair for one agent call.

    Args:
        role: agent role naming the template asset.
        context: placeholder values plus user-message sections. Values
            are rendered with str().

    Raises:
        TemplateError: a template placeholder has no context value; the
            error lists every missing key.
    """
    template = load_template(role)
    required = template_identifiers(template)
    missing = [k for k in required if k not in context]
    if missing:
        raise TemplateError(role, missing)

    substitutions = {k: str(context[k]) for k in required}
    system_text = string.Template(template).safe_substitute(substitutions).strip()

    section_keys = [k for k in context if k not in required]
    ordered = [k for k in SECTION_ORDER.get(role, ()) if k in section_keys]
    ordered += sorted(k for k in section_keys if k not in ordered)

    parts = []
    for key in ordered:
        value = context[key]
        if value is None or value == "":
            continue
        title = SECTION_TITLES.get(key, key.replace("_", " ").title())
        parts.append(f"## {title}\n{value}")
    user_text = "\n\n".join(parts) if parts else "Proceed as instructed."

    return [
        {"role": "system", "content": system_text},
        {"role": "user", "content": user_text},
    ]
