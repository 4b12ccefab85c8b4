"""Proposer/critic debate that turns a parent solution into a proposal.

The schedule for N rounds (N >= 3) is fixed: rounds 1..N-2 pair a
proposer reasoning turn with a critic critique, round N-1 pairs a
proposer synthesis with a critic plan critique, and round N is a single
proposer finalization. That gives 2(N-2) + 2 + 1 = 2N-1 turns. The
proposal is the verbatim text of the last proposer turn and must carry
the four required section headers; a malformed finalization gets
exactly one re-ask (replacing the final turn's text) before the debate
fails.

The engine never branches on debate content: a critic may reject
everything and the schedule still runs to completion.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .config import AgentConfig
from .errors import ProposalFormatError, SchemaError, ValidationError
from .gateway import ChatRequest, Gateway
from .model import write_json_atomic
from .prompts import render_prompt
from . import config as cfg

SPEAKER_PROPOSER = "proposer"
SPEAKER_CRITIC = "critic"

MODE_REASONING = "reasoning"
MODE_CRITIQUE = "critique"
MODE_SYNTHESIS = "synthesis"
MODE_PLAN_CRITIQUE = "plan_critique"
MODE_FINALIZATION = "finalization"

REQUIRED_PROPOSAL_SECTIONS = (
    "Motivation",
    "Core Changes",
    "Implementation Plan",
    "Expected Outcomes",
)

_TURN_INSTRUCTIONS = {
    MODE_REASONING: "Debate round {r} of {n} (reasoning): analyze the context and argue for candidate improvements.",
    MODE_CRITIQUE: "Debate round {r} of {n} (critique): challenge the proposer's latest reasoning.",
    MODE_SYNTHESIS: "Debate round {r} of {n} (synthesis): fold the critic's feedback into one concrete mutation plan.",
    MODE_PLAN_CRITIQUE: "Debate round {r} of {n} (plan critique): review the synthesized plan for completeness and consistency.",
    MODE_FINALIZATION: (
        "Debate round {r} of {n} (finalization): write the complete proposal now, "
        "with the level-2 sections Motivation, Core Changes, Implementation Plan, Expected Outcomes."
    ),
}


def debate_schedule(num_rounds: int) -> list[tuple[int, str, str]]:
    """The exact (round, speaker, mode) sequence for an N-round debate."""
    if num_rounds < 3:
        raise ValidationError(f"debate needs at least 3 rounds, got {num_rounds}")
    schedule: list[tuple[int, str, str]] = []
    for r in range(1, num_rounds - 1):
        schedule.append((r, SPEAKER_PROPOSER, MODE_REASONING))
        schedule.append((r, SPEAKER_CRITIC, MODE_CRITIQUE))
    schedule.append((num_rounds - 1, SPEAKER_PROPOSER, MODE_SYNTHESIS))
    schedule.append((num_rounds - 1, SPEAKER_CRITIC, MODE_PLAN_CRITIQUE))
    schedule.append((num_rounds, SPEAKER_PROPOSER, MODE_FINALIZATION))
    return schedule


def missing_proposal_sections(text: str) -> list[str]:
    """Required section headers absent from a finalization text."""
    missing = []
    for name in REQUIRED_PROPOSAL_SECTIONS:
        if not re.search(rf"^##\s*{re.escape(name)}\s*$", text, re.MULTILINE):
            missing.append(name)
    return missing


@dataclass(frozen=True)
class DebateTurn:
    round: int
    speaker: str
    mode: str
    text: str


@dataclass(frozen=True)
class DebateContext:
    """Everything both debaters see about the pending mutation."""

    child_id: str
    problem: str
    parent_code: str
    parent_analysis: str
    data_analysis: str = ""
    relative_reports: str = ""
    kb_entry: str = ""
    selector_reasoning: str = ""

    def __post_init__(self):
        if not self.parent_code.strip():
            raise ValidationError("debate context needs non-empty parent_code")
        if not self.parent_analysis.strip():
            raise ValidationError("debate context needs non-empty parent_analysis")

    def sections(self) -> dict[str, str]:
        return {
            "problem": self.problem,
            "data_analysis": self.data_analysis,
            "parent_code": self.parent_code,
            "parent_analysis": self.parent_analysis,
            "relative_reports": self.relative_reports,
            "kb_entry": self.kb_entry,
            "selector_reasoning": self.selector_reasoning,
        }


@dataclass
class DebateTranscript:
    num_rounds: int
    turns: list[DebateTurn] = field(default_factory=list)

    @property
    def proposal(self) -> str:
        proposer_turns = [t for t in self.turns if t.speaker == SPEAKER_PROPOSER]
        if not proposer_turns:
            raise ValidationError("transcript has no proposer turn")
        return proposer_turns[-1].text

    def to_doc(self) -> dict:
        return {
            "num_rounds": self.num_rounds,
            "turns": [
                {"round": t.round, "speaker": t.speaker, "mode": t.mode, "text": t.text}
                for t in self.turns
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DebateTranscript":
        try:
            turns = [
                DebateTurn(int(t["round"]), t["speaker"], t["mode"], t["text"])
                for t in doc["turns"]
            ]
            return cls(num_rounds=int(doc["num_rounds"]), turns=turns)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad debate document: {exc}") from exc

    def save(self, path: Path) -> None:
        write_json_atomic(path, self.to_doc())

    @classmethod
    def load(cls, path: Path) -> "DebateTranscript":
        try:
            return cls.from_doc(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read debate transcript {path}: {exc}") from exc


def _turn_messages(
    speaker: str,
    ctx: DebateContext,
    turns: list[DebateTurn],
    mode: str,
    round_no: int,
    num_rounds: int,
) -> list[dict[str, str]]:
    """Chat messages for the next turn, from the speaker's perspective.

    The speaker's own prior turns become assistant messages and the
    opponent's become user messages, so each side carries the full
    debate as ordinary conversation history.
    """
    role = cfg.ROLE_PROPOSER if speaker == SPEAKER_PROPOSER else cfg.ROLE_CRITIC
    messages = render_prompt(role, ctx.sections())
    for turn in turns:
        msg_role = "assistant" if turn.speaker == speaker else "user"
        messages.append({"role": msg_role, "content": turn.text})
    messages.append(
        {"role": "user", "content": _TURN_INSTRUCTIONS[mode].format(r=round_no, n=num_rounds)}
    )
    return messages


def run_debate(
    ctx: DebateContext,
    gateway: Gateway,
    proposer: AgentConfig,
    critic: AgentConfig,
    num_rounds: int,
) -> DebateTranscript:
    """Run the full schedule and return the finished transcript.

    Raises ProposalFormatError when the finalization still lacks
    required sections after its single re-ask.
    """
    schedule = debate_schedule(num_rounds)
    transcript = DebateTranscript(num_rounds=num_rounds)

    for round_no, speaker, mode in schedule:
        agent = proposer if speaker == SPEAKER_PROPOSER else critic
        messages = _turn_messages(speaker, ctx, transcript.turns, mode, round_no, num_rounds)
        tag = f"{speaker}/{ctx.child_id}/round{round_no}"
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

        if mode == MODE_FINALIZATION:
            missing = missing_proposal_sections(text)
            if missing:
                retry_messages = list(messages)
                retry_messages.append({"role": "assistant", "content": text})
                retry_messages.append(
                    {
                        "role": "user",
                        "content": (
                            "The proposal is missing required sections: "
                            + ", ".join(missing)
                            + ". Rewrite the complete proposal with all four level-2 sections."
                        ),
                    }
                )
                response = gateway.complete(
                    ChatRequest(
                        model=agent.models()[0],
                        messages=tuple(retry_messages),
                        tag=tag + "/retry",
                        temperature=agent.temperature,
                        max_tokens=agent.max_tokens,
                    )
                )
                text = response.text
                still_missing = missing_proposal_sections(text)
                if still_missing:
                    raise ProposalFormatError(
                        f"finalization for {ctx.child_id} still missing sections after re-ask: "
                        + ", ".join(still_missing)
                    )

        transcript.turns.append(DebateTurn(round=round_no, speaker=speaker, mode=mode, text=text))

    return transcript
