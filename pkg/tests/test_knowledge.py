"""Knowledge base: schema enforcement, lint, and retrieval cardinality."""

import json
import logging

import pytest

from evotree.config import AgentConfig, ROLE_RETRIEVER
from evotree.errors import SchemaError
from evotree.gateway import Gateway, ScriptRule, ScriptedBackend
from evotree.knowledge import (
    REQUIRED_SECTIONS,
    lint,
    load_index,
    parse_entry,
    retrieve,
)

from util import KB_MINI

RETRIEVER = AgentConfig(ROLE_RETRIEVER, "scripted-model", 0.0)


def scripted_retrieval(response: str, caplog=None):
    backend = ScriptedBackend([ScriptRule(tag="retriever/*", response=response)])
    gateway = Gateway(backend)
    index = load_index(KB_MINI)
    return retrieve(
        index,
        {"problem": "fit a sharp front", "parent_code_summary": "code", "parent_analysis": "report"},
        gateway,
        RETRIEVER,
        tag="retriever/00",
    )


def write_entry(path, name="Some method", sections=REQUIRED_SECTIONS):
    lines = [f"# {name}"]
    for section in sections:
        lines.append(f"## {section}")
        lines.append(f"Body text for {section}.")
    path.write_text("\n".join(lines) + "\n")


class TestEntryParsing:
    def test_mini_kb_loads(self):
        index = load_index(KB_MINI)
        assert len(index.records) == 6
        assert {r.method_name for r in index.records} >= {
            "Fourier feature embedding",
            "Mixture of local experts",
        }
        for record in index.records:
            entry = index.entry_for(record)
            assert list(entry.sections) == list(REQUIRED_SECTIONS)

    def test_missing_section_names_file_and_section(self, tmp_path):
        bad = tmp_path / "bad.md"
        write_entry(bad, sections=[s for s in REQUIRED_SECTIONS if s != "Core method"])
        with pytest.raises(SchemaError) as err:
            parse_entry(bad)
        assert "bad.md" in str(err.value)
        assert "Core method" in str(err.value)

    def test_extra_section_rejected(self, tmp_path):
        bad = tmp_path / "extra.md"
        write_entry(bad, sections=list(REQUIRED_SECTIONS) + ["Bonus notes"])
        with pytest.raises(SchemaError) as err:
            parse_entry(bad)
        assert "Bonus notes" in str(err.value)

    def test_section_bodies_byte_identical_on_reserialize(self):
        index = load_index(KB_MINI)
        for record in index.records:
            entry = index.entry_for(record)
            reparsed_path = entry.source_path
            original = parse_entry(reparsed_path, record.method_name)
            serialized = entry.to_markdown()
            # Parse the serialized form back and compare section bodies.
            tmp_sections = {}
            current = None
            for line in serialized.splitlines(keepends=True):
                stripped = line.rstrip("\n")
                if stripped.startswith("## "):
                    current = stripped[3:]
                    tmp_sections[current] = ""
                elif current is not None:
                    tmp_sections[current] += line
            for name in REQUIRED_SECTIONS:
                assert tmp_sections[name].rstrip("\n") == original.sections[name].rstrip("\n")

    def test_whitespace_normalized_headers_accepted(self, tmp_path):
        entry = tmp_path / "padded.md"
        body = ["# Padded method"]
        for section in REQUIRED_SECTIONS:
            body.append(f"##   {section}  ")
            body.append("text")
        entry.write_text("\n".join(body) + "\n")
        parsed = parse_entry(entry)
        assert list(parsed.sections) == list(REQUIRED_SECTIONS)


class TestIndex:
    def make_kb(self, tmp_path, n=3):
        (tmp_path / "entries").mkdir()
        records = []
        for i in range(n):
            name = f"Method {i}"
            rel = f"entries/method_{i}.md"
            write_entry(tmp_path / rel, name=name)
            records.append(
                {"method_name": name, "description": f"does thing {i}", "file_path": rel}
            )
        (tmp_path / "index.json").write_text(json.dumps(records))
        return tmp_path

    def test_synthetic_full_corpus(self, tmp_path):
        kb = self.make_kb(tmp_path, n=70)
        assert len(load_index(kb).records) == 70

    def test_dangling_path_rejected(self, tmp_path):
        kb = self.make_kb(tmp_path)
        doc = json.loads((kb / "index.json").read_text())
        doc.append({"method_name": "Ghost", "description": "gone", "file_path": "entries/ghost.md"})
        (kb / "index.json").write_text(json.dumps(doc))
        with pytest.raises(SchemaError) as err:
            load_index(kb)
        assert "ghost.md" in str(err.value)

    def test_duplicate_pair_rejected(self, tmp_path):
        kb = self.make_kb(tmp_path)
        doc = json.loads((kb / "index.json").read_text())
        dup = dict(doc[0])
        dup["file_path"] = doc[1]["file_path"]
        doc[1] = dup
        (kb / "index.json").write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_index(kb)

    def test_same_method_name_different_application_ok(self, tmp_path):
        kb = self.make_kb(tmp_path, n=2)
        doc = json.loads((kb / "index.json").read_text())
        doc[1]["method_name"] = doc[0]["method_name"]  # same method, other application
        (kb / "index.json").write_text(json.dumps(doc))
        index = load_index(kb)
        assert len(index.records) == 2

    def test_lint_clean_and_unreferenced(self, tmp_path):
        kb = self.make_kb(tmp_path)
        assert lint(kb) == []
        write_entry(kb / "entries" / "orphan.md", name="Orphan")
        problems = lint(kb)
        assert len(problems) == 1
        assert "orphan.md" in problems[0]

    def test_lint_mini_kb_clean(self):
        assert lint(KB_MINI) == []

    def test_summary_truncation_logs(self, caplog):
        index = load_index(KB_MINI)
        with caplog.at_level(logging.WARNING, logger="evotree.knowledge"):
            text = index.summary_text(max_chars=50)
        assert len([r for r in caplog.records if "truncated" in r.message]) == 1
        assert text.endswith("[index truncated]")


class TestRetrieval:
    def test_select_known_entry(self):
        decision = scripted_retrieval("SELECTED: Fourier feature embedding\nBecause spectral bias.")
        assert decision.chosen is not None
        assert decision.chosen.method_name == "Fourier feature embedding"
        assert "spectral bias" in decision.reasoning

    def test_select_by_ordinal(self):
        decision = scripted_retrieval("SELECTED: #2\nSecond entry looks right.")
        assert decision.chosen is not None
        assert decision.chosen.method_name == "Mixture of local experts"

    def test_decline(self, caplog):
        with caplog.at_level(logging.WARNING, logger="evotree.knowledge"):
            decision = scripted_retrieval("NONE: parent already implements this.")
        assert decision.chosen is None
        assert not caplog.records

    def test_unknown_method_warns_once(self, caplog):
        with caplog.at_level(logging.WARNING, logger="evotree.knowledge"):
            decision = scripted_retrieval("SELECTED: Quantum annealing of hyperparameters")
        assert decision.chosen is None
        assert len(caplog.records) == 1

    def test_two_selections_keep_first(self, caplog):
        with caplog.at_level(logging.WARNING, logger="evotree.knowledge"):
            decision = scripted_retrieval(
                "SELECTED: Fourier feature embedding\nSELECTED: Mixture of local experts"
            )
        assert decision.chosen.method_name == "Fourier feature embedding"
        assert len(caplog.records) == 1

    def test_garbage_warns_once(self, caplog):
        with caplog.at_level(logging.WARNING, logger="evotree.knowledge"):
            decision = scripted_retrieval("I would simply improve the model somehow.")
        assert decision.chosen is None
        assert len(caplog.records) == 1
