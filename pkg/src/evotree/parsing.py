"""Parsers for agent responses and sandbox output protocols."""

from __future__ import annotations

import math
import re

_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)
_SCORE_RE = re.compile(r"^FINAL_SCORE:\s*(\S+)\s*$", re.MULTILINE)
_H2_SPLIT_RE = re.compile(r"^##(?!#)\s*(.+?)\s*$", re.MULTILINE)


def extract_code_block(text: str, language: str | None = None) -> str | None:
    """First fenced code block, or None when the text has no fence.

    When language is given, fences tagged with a different language are
    skipped (untagged fences always qualify).
    """
    for match in _FENCE_RE.finditer(text):
        tag, body = match.group(1), match.group(2)
        if language is None or not tag or tag.lower() == language.lower():
            return body
    return None


def code_or_whole_text(text: str, language: str | None = "python") -> str:
    """Engineer responses should be one fenced file; degrade to raw text."""
    block = extract_code_block(text, language)
    return block if block is not None else text


def final_score_from_stdout(stdout: str) -> float | None:
    """Value of the last FINAL_SCORE marker line, or None when absent.

    Unparseable numbers come back as nan so callers can distinguish
    "no marker" from "marker with a broken payload".
    """
    matches = _SCORE_RE.findall(stdout)
    if not matches:
        return None
    try:
        return float(matches[-1])
    except ValueError:
        return math.nan


def split_level2_sections(text: str) -> dict[str, str]:
    """Map of level-2 header name to raw body text, in document order."""
    sections: dict[str, str] = {}
    matches = list(_H2_SPLIT_RE.finditer(text))
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        sections[match.group(1)] = text[start:end].strip("\n")
    return sections


def has_level2_section(text: str, name: str) -> bool:
    return bool(re.search(rf"^##\s*{re.escape(name)}\s*$", text, re.MULTILINE))
