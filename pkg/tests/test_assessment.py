"""Contract generation, result reports, the Analysis Base, EDA, kinship."""

import json
import random

import pytest

from evotree.assessment import (
    AnalysisBase,
    AnalysisReport,
    EvaluationContract,
    analyze_result,
    generate_contract,
    missing_report_sections,
    relative_reports,
    run_eda,
)
from evotree.bundle import load_bundle
from evotree.config import ROLE_RESULT_ANALYST, RunManifest
from evotree.errors import ContractGenerationError, ValidationError
from evotree.gateway import Gateway, ScriptRule, ScriptedBackend
from evotree.model import parent_of
from evotree.sandbox import Sandbox
from util import make_tree, node, random_tree

FAST_TIMEOUTS = {"validate": 20.0, "train": 20.0, "evaluate": 20.0}

EVAL_OK = """## evaluate.py
```python
print("FINAL_SCORE: nan")
```
## guidelines.md
Checkpoint is a JSON object with a "coeffs" key; inputs have shape (n, 1).
"""

EVAL_CRASHING = """## evaluate.py
```python
raise ValueError("protocol broken")
```
## guidelines.md
Same contract text.
"""


def make_sandbox(tmp_path, rules, **manifest_kwargs):
    manifest_kwargs.setdefault("exec_timeouts", dict(FAST_TIMEOUTS))
    manifest = RunManifest(**manifest_kwargs)
    gateway = Gateway(ScriptedBackend(rules))
    return Sandbox(tmp_path, manifest, gateway=gateway), gateway


def make_input_dir(tmp_path, datasets):
    """datasets: {name: (filename, role)}; returns the input dir."""
    input_dir = tmp_path / "input"
    input_dir.mkdir()
    (input_dir / "Problem.md").write_text("Fit the hidden target function.")
    (input_dir / "Requirements.md").write_text("NumPy only, deterministic seeds.")
    (input_dir / "Evaluation.md").write_text("Validation MSE, lower is better.")
    config = {
        name: {
            "filename": filename,
            "description": f"{name} split",
            "loading_instructions": f"np.load('{filename}')",
            "role": role,
        }
        for name, (filename, role) in datasets.items()
    }
    if config:
        (input_dir / "Data_config.json").write_text(json.dumps(config))
    for filename, _role in datasets.values():
        (input_dir / filename).write_text("1,2,3\n")
    return input_dir


class TestEvaluationContract:
    def test_approve_transitions(self):
        contract = EvaluationContract("print('FINAL_SCORE: 1')", "rules")
        assert not contract.approved and contract.approved_by is None
        approved = contract.approve("human")
        assert approved.approved and approved.approved_by == "human"
        assert not contract.approved  # original untouched

    def test_unknown_approver_rejected(self):
        contract = EvaluationContract("code", "rules")
        with pytest.raises(ValidationError):
            contract.approve("robot")

    def test_approved_requires_approver(self):
        with pytest.raises(ValidationError):
            EvaluationContract("code", "rules", approved=True)

    def test_save_load_round_trip(self, tmp_path):
        contract = EvaluationContract("print('FINAL_SCORE: 1')\n", "## Rules\ntext\n")
        contract.save(tmp_path / "contract")
        loaded = EvaluationContract.load(tmp_path / "contract", approved=True, approved_by="auto_flag")
        assert loaded.evaluate_script == contract.evaluate_script
        assert loaded.guidelines == contract.guidelines
        assert loaded.approved_by == "auto_flag"


class TestGenerateContract:
    def test_happy_path_persists_assets(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path, [ScriptRule(tag="evaluator/contract", response=EVAL_OK)]
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        contract = generate_contract(bundle, sandbox)
        assert not contract.approved
        assert 'FINAL_SCORE' in contract.evaluate_script
        assert (tmp_path / "contract" / "evaluate.py").read_text() == contract.evaluate_script
        assert (tmp_path / "contract" / "guidelines.md").read_text() == contract.guidelines
        assert gateway.call_count == 1
        # smoke artifacts stay around for auditing
        assert (tmp_path / "contract" / "smoke" / "logs" / "stdout.log").exists()

    def test_malformed_reply_gets_one_retry(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="evaluator/contract", response="here is some prose, no sections"),
                ScriptRule(tag="evaluator/contract/retry", response=EVAL_OK),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        contract = generate_contract(bundle, sandbox)
        assert gateway.call_count == 2
        assert "coeffs" in contract.guidelines

    def test_malformed_twice_raises(self, tmp_path):
        sandbox, _ = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="evaluator/contract", response="nope"),
                ScriptRule(tag="evaluator/contract/retry", response="still nope"),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        with pytest.raises(ContractGenerationError):
            generate_contract(bundle, sandbox)

    def test_smoke_failure_repaired_once(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="evaluator/contract", response=EVAL_CRASHING),
                ScriptRule(tag="debugger/contract/attempt1", response="Remove the raise."),
                ScriptRule(tag="evaluator/contract/repair1", response=EVAL_OK),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        contract = generate_contract(bundle, sandbox)
        assert gateway.call_count == 3
        assert "protocol broken" not in contract.evaluate_script

    def test_smoke_failure_twice_raises(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="evaluator/contract", response=EVAL_CRASHING),
                ScriptRule(tag="debugger/contract/attempt1", response="Remove the raise."),
                ScriptRule(tag="evaluator/contract/repair1", response=EVAL_CRASHING),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        with pytest.raises(ContractGenerationError, match="twice"):
            generate_contract(bundle, sandbox)
        assert gateway.call_count == 3

    def test_marker_missing_counts_as_smoke_failure(self, tmp_path):
        silent = EVAL_OK.replace('print("FINAL_SCORE: nan")', 'print("done, no marker")')
        sandbox, _ = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="evaluator/contract", response=silent),
                ScriptRule(tag="debugger/contract/attempt1", response="Print the marker."),
                ScriptRule(tag="evaluator/contract/repair1", response=silent),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {}))
        with pytest.raises(ContractGenerationError, match="FINAL_SCORE"):
            generate_contract(bundle, sandbox)


ROOT_REPORT = (
    "## Summary of Approach\nplain MLP\n"
    "## Training Dynamics\nconverged fast\n"
    "## Performance Breakdown\nMSE 0.25, dominated by curvature regions\n"
)
CHILD_REPORT = ROOT_REPORT + "## Comparison with Parent\nhalved the error\n"


def analyst_agent():
    return RunManifest().agent(ROLE_RESULT_ANALYST)


class TestAnalyzeResult:
    def test_root_report_has_no_parent_comparison(self):
        gateway = Gateway(ScriptedBackend([ScriptRule(tag="result_analyst/0", response=ROOT_REPORT)]))
        report = analyze_result(
            node("0", 0.25), gateway=gateway, agent=analyst_agent(), solution_code="code"
        )
        assert report.node_id == "0"
        assert not report.flagged
        assert "Comparison with Parent" not in report.body

    def test_child_missing_section_reasked_once(self):
        gateway = Gateway(
            ScriptedBackend(
                [
                    ScriptRule(tag="result_analyst/00", response=ROOT_REPORT),
                    ScriptRule(tag="result_analyst/00/retry", response=CHILD_REPORT),
                ]
            )
        )
        report = analyze_result(
            node("00", 0.125),
            gateway=gateway,
            agent=analyst_agent(),
            solution_code="code",
            proposal="## Motivation\n...",
            parent_report=ROOT_REPORT,
        )
        assert gateway.call_count == 2
        assert not report.flagged
        assert "Comparison with Parent" in report.body

    def test_twice_invalid_report_kept_flagged(self, caplog):
        gateway = Gateway(
            ScriptedBackend(
                [
                    ScriptRule(tag="result_analyst/00", response="free-form rambling"),
                    ScriptRule(tag="result_analyst/00/retry", response="more rambling"),
                ]
            )
        )
        with caplog.at_level("WARNING", logger="evotree.assessment"):
            report = analyze_result(
                node("00", 0.125), gateway=gateway, agent=analyst_agent(), solution_code="c"
            )
        assert report.flagged
        assert report.body == "more rambling"
        assert any("missing sections" in r.message for r in caplog.records)

    def test_failed_node_score_passed_as_failure_text(self):
        backend = ScriptedBackend([ScriptRule(tag="result_analyst/01", response=CHILD_REPORT)])
        gateway = Gateway(backend)
        analyze_result(node("01", None), gateway=gateway, agent=analyst_agent(), solution_code="c")
        user_text = backend.requests[0].messages[1]["content"]
        assert "FAILED" in user_text

    def test_parenthetical_headers_satisfy_sections(self):
        body = CHILD_REPORT.replace(
            "## Comparison with Parent", "## Comparison with Parent (for child solutions)"
        )
        assert missing_report_sections(body, is_child=True) == []
        assert missing_report_sections("## Summary of Approach\nx", is_child=False) == [
            "Training Dynamics",
            "Performance Breakdown",
        ]


class TestAnalysisBase:
    def test_round_trip_and_listing(self, tmp_path):
        base = AnalysisBase(tmp_path / "analysis_base")
        base.save(AnalysisReport("0", ROOT_REPORT))
        base.save(AnalysisReport("00", CHILD_REPORT))
        base.save_data_analysis("data looks smooth")
        assert base.get("0").body == ROOT_REPORT
        assert base.get("0").report_id == "analysis_0"
        assert base.node_ids() == ["0", "00"]  # data_analysis.md not a node report
        assert base.data_analysis() == "data looks smooth"
        assert base.get("01") is None and not base.has("01")

    def test_flag_survives_reload(self, tmp_path):
        base = AnalysisBase(tmp_path)
        base.save(AnalysisReport("00", "incomplete body", flagged=True))
        loaded = base.get("00")
        assert loaded.flagged
        assert loaded.body == "incomplete body"


EDA_CODE_OK = "```python\nprint('train stats: mean 0.10, one jump at x=0')\n```"
EDA_CODE_BROKEN = "```python\nraise RuntimeError('bad column name')\n```"
EDA_REPORT = "The training signal shows a clear discontinuity near x=0; sample more there."


class TestRunEda:
    def test_no_training_data_skips_phase(self, tmp_path):
        sandbox, gateway = make_sandbox(tmp_path, [])
        bundle = load_bundle(make_input_dir(tmp_path, {"val": ("val.csv", "validation")}))
        base = AnalysisBase(tmp_path / "analysis_base")
        assert run_eda(bundle, sandbox, base, data_dir=bundle.input_dir) is None
        assert gateway.call_count == 0
        assert base.data_analysis() is None

    def test_happy_path_stages_only_training_files(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="data_analyst/eda_code", response=EDA_CODE_OK),
                ScriptRule(tag="data_analyst/eda_report", response=EDA_REPORT),
            ],
        )
        bundle = load_bundle(
            make_input_dir(
                tmp_path,
                {"train": ("train.csv", "training"), "val": ("val.csv", "validation")},
            )
        )
        base = AnalysisBase(tmp_path / "analysis_base")
        body = run_eda(bundle, sandbox, base, data_dir=bundle.input_dir)
        assert "discontinuit" in body
        assert base.data_analysis() == body
        manifest = json.loads((tmp_path / "eda" / "input_manifest.json").read_text())
        assert manifest["files"] == ["train.csv"]
        assert (tmp_path / "eda" / "train.csv").exists()
        assert not (tmp_path / "eda" / "val.csv").exists()
        assert gateway.call_count == 2

    def test_script_repair_loop(self, tmp_path):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="data_analyst/eda_code", response=EDA_CODE_BROKEN),
                ScriptRule(tag="data_analyst/eda/repair1", response=EDA_CODE_OK),
                ScriptRule(tag="data_analyst/eda_report", response=EDA_REPORT),
            ],
        )
        bundle = load_bundle(make_input_dir(tmp_path, {"train": ("train.csv", "training")}))
        base = AnalysisBase(tmp_path / "analysis_base")
        body = run_eda(bundle, sandbox, base, data_dir=bundle.input_dir)
        assert body == EDA_REPORT
        assert gateway.call_count == 3
        assert (tmp_path / "eda" / "logs" / "attempt_2" / "stdout.log").exists()

    def test_unfixable_script_degrades_to_no_report(self, tmp_path, caplog):
        sandbox, gateway = make_sandbox(
            tmp_path,
            [
                ScriptRule(tag="data_analyst/eda_code", response=EDA_CODE_BROKEN),
                ScriptRule(tag="data_analyst/eda/repair1", response=EDA_CODE_BROKEN),
            ],
            max_debug_iters=1,
        )
        bundle = load_bundle(make_input_dir(tmp_path, {"train": ("train.csv", "training")}))
        base = AnalysisBase(tmp_path / "analysis_base")
        with caplog.at_level("WARNING", logger="evotree.assessment"):
            assert run_eda(bundle, sandbox, base, data_dir=bundle.input_dir) is None
        assert gateway.call_count == 2
        assert base.data_analysis() is None
        assert any("still failing" in r.message for r in caplog.records)


def store_reports(base, ids):
    for node_id in ids:
        base.save(AnalysisReport(node_id, f"report for {node_id}"))


def brute_force_relatives(tree, parent_id, base):
    """Kinship from raw id arithmetic, independent of tree traversal."""
    everyone = [n.id for n in tree.nodes()]
    siblings = sorted(i for i in everyone if parent_of(i) == parent_id)
    grandparent = parent_of(parent_id)
    uncles = []
    if grandparent is not None:
        uncles = sorted(i for i in everyone if parent_of(i) == grandparent and i != parent_id)
    ordered = [parent_id] + siblings + uncles
    return [i for i in ordered if base.has(i)]


class TestRelativeReports:
    def test_worked_example_parent_sibling_uncle(self, tmp_path):
        tree = make_tree({"0": 0.30, "00": 0.20, "01": 0.28, "000": 0.10})
        base = AnalysisBase(tmp_path)
        store_reports(base, ["0", "00", "01", "000"])
        got = [r.node_id for r in relative_reports(tree, "00", base)]
        assert got == ["00", "000", "01"]

    def test_root_parent_first_mutation(self, tmp_path):
        tree = make_tree({"0": 0.30})
        base = AnalysisBase(tmp_path)
        store_reports(base, ["0"])
        got = [r.node_id for r in relative_reports(tree, "0", base)]
        assert got == ["0"]

    def test_missing_reports_shorten_list(self, tmp_path):
        tree = make_tree({"0": 0.30, "00": 0.20, "01": 0.28, "000": 0.10})
        base = AnalysisBase(tmp_path)
        store_reports(base, ["00", "01"])  # no report for 000 or root
        got = [r.node_id for r in relative_reports(tree, "00", base)]
        assert got == ["00", "01"]

    def test_group_cap_keeps_most_recent(self, tmp_path):
        tree = make_tree({"0": 0.5})
        for i, iteration in enumerate([1, 2, 3, 4, 5, 6]):
            tree.insert(node(f"0{i}", 0.1 * (i + 1), iteration=iteration))
        base = AnalysisBase(tmp_path)
        store_reports(base, [n.id for n in tree.nodes()])
        got = [r.node_id for r in relative_reports(tree, "0", base, max_per_group=4)]
        # children 02..05 were created latest; presented in id order after the parent
        assert got == ["0", "02", "03", "04", "05"]

    def test_matches_brute_force_on_random_trees(self, tmp_path):
        rng = random.Random(42)
        for trial in range(200):
            tree = random_tree(rng, max_nodes=25)
            base = AnalysisBase(tmp_path / f"t{trial}")
            store_reports(base, [n.id for n in tree.nodes() if rng.random() < 0.8])
            parent_id = rng.choice(tree.ids())
            got = [r.node_id for r in relative_reports(tree, parent_id, base)]
            assert got == brute_force_relatives(tree, parent_id, base)

    def test_report_bodies_returned_in_full(self, tmp_path):
        tree = make_tree({"0": 0.3, "00": 0.2})
        base = AnalysisBase(tmp_path)
        base.save(AnalysisReport("0", ROOT_REPORT))
        base.save(AnalysisReport("00", CHILD_REPORT))
        reports = relative_reports(tree, "0", base)
        assert reports[0].body == ROOT_REPORT
        assert reports[1].body == CHILD_REPORT
