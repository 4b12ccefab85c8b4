"""Sandboxed subprocess execution, the repair loop, and solution scoring.

Candidate code always runs as a child process with its working
directory inside the run directory, a filtered environment, hard
wall-clock kill, and stdout/stderr captured to per-attempt log files. A
run-level semaphore caps concurrency at the mutation batch size.

The scoring protocol is textual: the run-level evaluate script prints a
final `FINAL_SCORE: <decimal>` line; anything else (missing marker,
non-finite value, nonzero exit, missing checkpoint) produces a failed
Score that keeps the node in the tree.
"""

from __future__ import annotations

import logging
import os
import signal
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import ROLE_DEBUGGER, ROLE_ENGINEER, RunManifest
from .errors import LaunchError, ValidationError
from .gateway import ChatRequest, Gateway
from .model import Score
from .parsing import code_or_whole_text, final_score_from_stdout
from .prompts import render_prompt

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "MODEL_CHECKPOINT"
SOLUTION_FILE = "solution.py"

# The three solution modes plus the assessment phase's EDA scripts.
EXEC_MODES = ("validate", "train", "evaluate", "eda")

DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "LC_CTYPE", "TMPDIR")

KILL_GRACE_S = 1.0  # duration may overshoot timeout by at most this


@dataclass(frozen=True)
class ExecSpec:
    """One subprocess execution request."""

    workdir: Path
    command: tuple[str, ...]
    mode: str
    timeout_s: float
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    env_extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in EXEC_MODES:
            raise ValidationError(f"unknown exec mode: {self.mode!r}")
        if self.timeout_s <= 0:
            raise ValidationError("timeout_s must be positive")
        if not self.command:
            raise ValidationError("command must be non-empty")


@dataclass(frozen=True)
class ExecOutcome:
    exit_code: int
    duration_s: float
    stdout_path: Path
    stderr_path: Path
    timed_out: bool

    @property
    def ok(self) -> bool:
        return self.exit_code == 0 and not self.timed_out


@dataclass(frozen=True)
class DebugLoopResult:
    """What the validate/repair loop did for one solution."""

    attempts: int
    success: bool
    final_outcome: ExecOutcome
    patches: tuple[tuple[int, str], ...] = ()  # (attempt, advice digest)


def _advice_digest(advice: str) -> str:
    first_line = advice.strip().splitlines()[0] if advice.strip() else ""
    return first_line[:96]


def _tail(path: Path, max_chars: int = 4000) -> str:
    try:
        text = path.read_text(errors="replace")
    except OSError:
        return ""
    return text[-max_chars:]


class Sandbox:
    """Process runner bound to one run directory and its budgets."""

    def __init__(
        self,
        run_dir: Path,
        manifest: RunManifest,
        gateway: Gateway | None = None,
        interpreter: str = sys.executable,
    ):
        self.run_dir = Path(run_dir).resolve()
        self.manifest = manifest
        self.gateway = gateway
        self.interpreter = interpreter
        self._sem = threading.Semaphore(manifest.mutation_batch)

    # -- process execution ------------------------------------------------

    def run_process(self, spec: ExecSpec, log_dir: Path) -> ExecOutcome:
        """Run one child process to completion under the spec's limits.

        Raises LaunchError when the command cannot start at all; a
        started process that exits nonzero is an ordinary outcome.
        """
        workdir = Path(spec.workdir).resolve()
        if not workdir.is_dir():
            raise ValidationError(f"workdir does not exist: {workdir}")
        if not workdir.is_relative_to(self.run_dir):
            raise ValidationError(f"workdir {workdir} escapes run directory {self.run_dir}")

        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        stdout_path = log_dir / "stdout.log"
        stderr_path = log_dir / "stderr.log"

        env = {k: os.environ[k] for k in spec.env_allowlist if k in os.environ}
        env.update(spec.env_extra)

        started = time.monotonic()
        with self._sem:
            try:
                with stdout_path.open("wb") as out, stderr_path.open("wb") as err:
                    process = subprocess.Popen(
                        spec.command,
                        cwd=str(workdir),
                        env=env,
                        stdout=out,
                        stderr=err,
                        start_new_session=True,
                    )
                    timed_out = False
                    try:
                        process.wait(timeout=spec.timeout_s)
                    except subprocess.TimeoutExpired:
                        timed_out = True
                        try:
                            os.killpg(process.pid, signal.SIGKILL)
                        except ProcessLookupError:
                            pass
                        process.wait()
            except FileNotFoundError as exc:
                raise LaunchError(f"cannot launch {spec.command[0]!r}: {exc}") from exc
            except PermissionError as exc:
                raise LaunchError(f"cannot launch {spec.command[0]!r}: {exc}") from exc

        duration = time.monotonic() - started
        outcome = ExecOutcome(
            exit_code=process.returncode,
            duration_s=duration,
            stdout_path=stdout_path,
            stderr_path=stderr_path,
            timed_out=timed_out,
        )
        logger.debug(
            "ran %s in %s: exit=%d timed_out=%s %.2fs",
            spec.mode,
            workdir.name,
            outcome.exit_code,
            outcome.timed_out,
            duration,
        )
        return outcome

    def solution_spec(self, workdir: Path, mode: str, env_extra: dict[str, str] | None = None) -> ExecSpec:
        return ExecSpec(
            workdir=Path(workdir),
            command=(self.interpreter, SOLUTION_FILE, f"--mode={mode}"),
            mode=mode,
            timeout_s=self.manifest.exec_timeouts[mode],
            env_extra=dict(env_extra or {}),
        )

    # -- validate/repair loop ---------------------------------------------

    def debug_cycle(
        self,
        node_workdir: Path,
        engineer_ctx: dict[str, object],
        max_debug_iters: int | None = None,
        tag_prefix: str | None = None,
    ) -> DebugLoopResult:
        """Validate the solution file, repairing it between failures.

        One validation attempt runs per loop turn; after a failure (and
        while budget remains) the debugger diagnoses the logs and the
        engineer rewrites the file, so attempts <= max_debug_iters + 1.
        engineer_ctx carries the prompt sections the repair calls see
        (problem, guidelines, proposal, ...).
        """
        if max_debug_iters is None:
            max_debug_iters = self.manifest.max_debug_iters
        node_workdir = Path(node_workdir)
        node_id = node_workdir.name.replace("solution_", "")
        prefix = tag_prefix or node_id
        solution_path = node_workdir / SOLUTION_FILE

        patches: list[tuple[int, str]] = []
        outcome: ExecOutcome | None = None
        attempts = 0
        for attempt in range(1, max_debug_iters + 2):
            attempts = attempt
            log_dir = node_workdir / "logs" / f"attempt_{attempt}"
            outcome = self.run_process(self.solution_spec(node_workdir, "validate"), log_dir)
            if outcome.ok:
                return DebugLoopResult(
                    attempts=attempts, success=True, final_outcome=outcome, patches=tuple(patches)
                )
            if attempt > max_debug_iters:
                break

            error_output = (
                f"exit code: {outcome.exit_code} (timed out: {outcome.timed_out})\n"
                f"--- stderr tail ---\n{_tail(outcome.stderr_path)}\n"
                f"--- stdout tail ---\n{_tail(outcome.stdout_path, 2000)}"
            )
            current_code = solution_path.read_text() if solution_path.is_file() else ""
            advice = self._call_agent(
                ROLE_DEBUGGER,
                {
                    "request": "Diagnose why the validation run failed and suggest a minimal fix.",
                    "solution_code": current_code,
                    "error_output": error_output,
                },
                tag=f"debugger/{prefix}/attempt{attempt}",
            )
            patches.append((attempt, _advice_digest(advice)))
            repair_ctx = dict(engineer_ctx)
            repair_ctx.update(
                {
                    "request": "Rewrite the complete solution file fixing the reported failure.",
                    "current_code": current_code,
                    "error_output": error_output,
                    "debugger_advice": advice,
                }
            )
            new_code = code_or_whole_text(
                self._call_agent(ROLE_ENGINEER, repair_ctx, tag=f"engineer/{prefix}/repair{attempt}")
            )
            solution_path.write_text(new_code)

        assert outcome is not None
        return DebugLoopResult(attempts=attempts, success=False, final_outcome=outcome, patches=tuple(patches))

    def _call_agent(self, role: str, context: dict[str, object], tag: str) -> str:
        if self.gateway is None:
            raise ValidationError("sandbox has no gateway; repair loop unavailable")
        agent = self.manifest.agent(role)
        messages = render_prompt(role, context)
        response = self.gateway.complete(
            ChatRequest(
                model=agent.models()[0],
                messages=tuple(messages),
                tag=tag,
                temperature=agent.temperature,
                max_tokens=agent.max_tokens,
            )
        )
        return response.text

    # -- scoring ------------------------------------------------------------

    def evaluate_solution(
        self,
        node_workdir: Path,
        evaluate_script: Path,
        data_dir: Path | None = None,
    ) -> Score:
        """Score a trained solution through the marker protocol.

        Never raises for protocol violations; those become failed
        Scores with a reason so the node still commits.
        """
        node_workdir = Path(node_workdir)
        checkpoint = node_workdir / CHECKPOINT_FILE
        if not checkpoint.is_file():
            return Score.failed(f"missing checkpoint {CHECKPOINT_FILE}")

        env_extra = {"DATA_DIR": str(data_dir)} if data_dir is not None else {}
        spec = ExecSpec(
            workdir=node_workdir,
            command=(self.interpreter, str(Path(evaluate_script).resolve())),
            mode="evaluate",
            timeout_s=self.manifest.exec_timeouts["evaluate"],
            env_extra=env_extra,
        )
        outcome = self.run_process(spec, node_workdir / "logs" / "evaluate")
        if outcome.timed_out:
            return Score.failed("evaluation timed out")
        if outcome.exit_code != 0:
            return Score.failed(f"evaluate script exited {outcome.exit_code}")

        stdout = outcome.stdout_path.read_text(errors="replace")
        value = final_score_from_stdout(stdout)
        if value is None:
            return Score.failed("no FINAL_SCORE marker in evaluate output")
        try:
            return Score.evaluated(value)
        except ValidationError:
            return Score.failed(f"FINAL_SCORE not a usable loss: {value!r}")
