"""Markdown knowledge base: entries, index, lint, and LLM retrieval.

A knowledge base directory holds entries/*.md plus index.json. Every
entry is a method card with the same five level-2 sections, in order:
Problem Setup, Issues addressed, Core method, Implementation, Critical
parameters. The index is a JSON array of {method_name, description,
file_path} records; the retriever agent only ever sees the index
summaries and names at most one entry, whose full card is then attached
to the mutation context.

The full production corpus is an external drop-in; the repository ships
a six-entry miniature under fixtures/kb_mini for offline runs.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError
from .gateway import ChatRequest, Gateway
from .prompts import render_prompt
from . import config as cfg

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = (
    "Problem Setup",
    "Issues addressed",
    "Core method",
    "Implementation",
    "Critical parameters",
)

_H2_RE = re.compile(r"^##(?!#)\s*(.*?)\s*$")
_H1_RE = re.compile(r"^#(?!#)\s*(.*?)\s*$")


@dataclass(frozen=True)
class KnowledgeEntry:
    """One parsed method card."""

    method_name: str
    sections: dict[str, str]
    source_path: Path

    def to_markdown(self) -> str:
        parts = [f"# {self.method_name}"]
        for name in REQUIRED_SECTIONS:
            parts.append(f"## {name}\n{self.sections[name]}")
        return "\n".join(parts)


@dataclass(frozen=True)
class IndexRecord:
    method_name: str
    description: str
    file_path: str


@dataclass
class KnowledgeIndex:
    """Loaded index plus parsed entries, keyed by file path."""

    kb_dir: Path
    records: list[IndexRecord]
    entries: dict[str, KnowledgeEntry]

    def entry_for(self, record: IndexRecord) -> KnowledgeEntry:
        return self.entries[record.file_path]

    def find_by_name(self, name: str) -> IndexRecord | None:
        for record in self.records:
            if record.method_name == name:
                return record
        return None

    def summary_text(self, max_chars: int | None = None) -> str:
        """Numbered one-line summaries for the retriever prompt."""
        lines = [
            f"{i}. {r.method_name}: {r.description}" for i, r in enumerate(self.records, start=1)
        ]
        text = "\n".join(lines)
        if max_chars is not None and len(text) > max_chars:
            logger.warning(
                "KB index summary truncated from %d to %d chars", len(text), max_chars
            )
            text = text[:max_chars] + "\n[index truncated]"
        return text


def parse_entry(path: Path, method_name: str | None = None) -> KnowledgeEntry:
    """Parse one entry file, enforcing the five-section schema.

    Section bodies are captured byte for byte (headers themselves are
    whitespace-normalized), so re-serialization preserves content.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read KB entry {path}: {exc}") from exc

    lines = text.splitlines(keepends=True)
    title: str | None = None
    headers: list[tuple[int, str]] = []  # (line index, normalized name)
    for i, line in enumerate(lines):
        h2 = _H2_RE.match(line.rstrip("\n"))
        if h2:
            headers.append((i, h2.group(1)))
            continue
        h1 = _H1_RE.match(line.rstrip("\n"))
        if h1 and title is None and not headers:
            title = h1.group(1)

    names = [name for _, name in headers]
    if names != list(REQUIRED_SECTIONS):
        missing = [s for s in REQUIRED_SECTIONS if s not in names]
        extra = [s for s in names if s not in REQUIRED_SECTIONS]
        detail = []
        if missing:
            detail.append(f"missing sections: {', '.join(missing)}")
        if extra:
            detail.append(f"unexpected sections: {', '.join(extra)}")
        if not detail:
            detail.append(f"sections out of order: {names}")
        raise SchemaError(f"KB entry {path}: " + "; ".join(detail))

    sections: dict[str, str] = {}
    for idx, (line_no, name) in enumerate(headers):
        end = headers[idx + 1][0] if idx + 1 < len(headers) else len(lines)
        sections[name] = "".join(lines[line_no + 1 : end])

    return KnowledgeEntry(
        method_name=method_name or title or path.stem,
        sections=sections,
        source_path=path,
    )


def load_index(kb_dir: Path) -> KnowledgeIndex:
    """Load and validate index.json plus every referenced entry.

    Raises SchemaError naming the offending file on any violation:
    malformed records, dangling file paths, duplicate
    (method_name, description) pairs, or entries missing sections.
    """
    kb_dir = Path(kb_dir)
    index_path = kb_dir / "index.json"
    if not index_path.is_file():
        raise SchemaError(f"knowledge base index not found: {index_path}")
    try:
        doc = json.loads(index_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{index_path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, list):
        raise SchemaError(f"{index_path}: top level must be an array of records")

    records: list[IndexRecord] = []
    entries: dict[str, KnowledgeEntry] = {}
    seen_pairs: set[tuple[str, str]] = set()
    seen_paths: set[str] = set()
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict) or set(rec) != {"method_name", "description", "file_path"}:
            raise SchemaError(
                f"{index_path}: record #{i} must have exactly method_name, description, file_path"
            )
        record = IndexRecord(rec["method_name"], rec["description"], rec["file_path"])
        pair = (record.method_name, record.description)
        if pair in seen_pairs:
            raise SchemaError(f"{index_path}: duplicate entry {pair!r}")
        seen_pairs.add(pair)
        if record.file_path in seen_paths:
            raise SchemaError(f"{index_path}: file referenced twice: {record.file_path}")
        seen_paths.add(record.file_path)
        entry_path = kb_dir / record.file_path
        if not entry_path.is_file():
            raise SchemaError(f"{index_path}: record #{i} points at missing file {entry_path}")
        entries[record.file_path] = parse_entry(entry_path, method_name=record.method_name)
        records.append(record)

    logger.info("loaded knowledge base %s: %d entries", kb_dir, len(records))
    return KnowledgeIndex(kb_dir=kb_dir, records=records, entries=entries)


def lint(kb_dir: Path) -> list[str]:
    """All schema problems in a KB directory, empty when clean.

    Beyond load_index validation this checks the reverse direction of
    the bijection: every file under entries/ must be referenced.
    """
    kb_dir = Path(kb_dir)
    problems: list[str] = []
    index: KnowledgeIndex | None = None
    try:
        index = load_index(kb_dir)
    except SchemaError as exc:
        problems.append(str(exc))

    entries_dir = kb_dir / "entries"
    if entries_dir.is_dir() and index is not None:
        referenced = {str((kb_dir / r.file_path).resolve()) for r in index.records}
        for path in sorted(entries_dir.glob("*.md")):
            if str(path.resolve()) not in referenced:
                problems.append(f"{path}: entry file not referenced by index.json")
    return problems


@dataclass(frozen=True)
class RetrievalDecision:
    """Outcome of one retrieval call: at most one chosen entry."""

    chosen: KnowledgeEntry | None
    reasoning: str


_SELECTED_RE = re.compile(r"^\s*SELECTED:\s*(.+?)\s*$", re.MULTILINE)
_NONE_RE = re.compile(r"^\s*NONE\b[:.]?\s*(.*)$", re.MULTILINE)


def retrieve(
    index: KnowledgeIndex,
    context: dict[str, object],
    gateway: Gateway,
    agent: cfg.AgentConfig,
    tag: str,
    max_index_chars: int | None = 20000,
) -> RetrievalDecision:
    """Ask the retriever agent for zero or one relevant entry.

    Robust to scripted or live misbehavior: unknown method names,
    multiple selections, and free-form garbage all degrade to an empty
    decision with exactly one logged warning.
    """
    prompt_context = dict(context)
    prompt_context["kb_index"] = index.summary_text(max_index_chars)
    messages = render_prompt(cfg.ROLE_RETRIEVER, prompt_context)
    response = gateway.complete(
        ChatRequest(
            model=agent.models()[0],
            messages=tuple(messages),
            tag=tag,
            temperature=agent.temperature,
            max_tokens=agent.max_tokens,
        )
    )
    text = response.text

    selected = _SELECTED_RE.findall(text)
    if len(selected) > 1:
        logger.warning("retriever named %d entries for %s; keeping the first", len(selected), tag)
        selected = selected[:1]
    if selected:
        name = selected[0].strip()
        record = index.find_by_name(name)
        if record is None:
            number = re.match(r"#?(\d+)\.?\s*$", name) or re.match(r"#?(\d+)\.?\s", name)
            if number:
                ordinal = int(number.group(1))
                if 1 <= ordinal <= len(index.records):
                    record = index.records[ordinal - 1]
        if record is None:
            logger.warning("retriever named unknown method %r for %s; treating as none", name, tag)
            return RetrievalDecision(chosen=None, reasoning=text)
        return RetrievalDecision(chosen=index.entry_for(record), reasoning=text)

    if _NONE_RE.search(text):
        return RetrievalDecision(chosen=None, reasoning=text)

    logger.warning("retriever response for %s had no SELECTED/NONE line; treating as none", tag)
    return RetrievalDecision(chosen=None, reasoning=text)
