"""Run configuration: agent roster, budgets, and the persisted manifest.

The manifest is echoed into run.json at run start so a resumed process can
rebuild the exact same configuration without the original flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

from .errors import ValidationError

ROLE_ROOT_ENGINEER = "root_engineer"
ROLE_DATA_ANALYST = "data_analyst"
ROLE_EVALUATOR = "evaluator"
ROLE_RETRIEVER = "retriever"
ROLE_PROPOSER = "proposer"
ROLE_CRITIC = "critic"
ROLE_ENGINEER = "engineer"
ROLE_DEBUGGER = "debugger"
ROLE_RESULT_ANALYST = "result_analyst"
ROLE_SELECTOR = "selector"

ALL_ROLES = (
    ROLE_ROOT_ENGINEER,
    ROLE_DATA_ANALYST,
    ROLE_EVALUATOR,
    ROLE_RETRIEVER,
    ROLE_PROPOSER,
    ROLE_CRITIC,
    ROLE_ENGINEER,
    ROLE_DEBUGGER,
    ROLE_RESULT_ANALYST,
    ROLE_SELECTOR,
)


@dataclass(frozen=True)
class AgentConfig:
    """Backend binding for one agent role.

    The selector role is an ensemble and may carry several backend models;
    every other role carries exactly one. Temperature None means the
    request omits the field entirely (the selector ensemble runs that way).
    """

    role: str
    backend_model: str | tuple[str, ...]
    temperature: float | None = 0.0
    max_tokens: int | None = None

    def __post_init__(self):
        if self.role not in ALL_ROLES:
            raise ValidationError(f"unknown agent role: {self.role!r}")
        if isinstance(self.backend_model, (list, tuple)):
            if self.role != ROLE_SELECTOR:
                raise ValidationError(f"only the selector role may carry a model ensemble, not {self.role}")
            if not self.backend_model:
                raise ValidationError("selector ensemble must name at least one model")
            object.__setattr__(self, "backend_model", tuple(self.backend_model))
        if self.temperature is not None and not 0.0 <= self.temperature <= 1.0:
            raise ValidationError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")

    def models(self) -> tuple[str, ...]:
        if isinstance(self.backend_model, tuple):
            return self.backend_model
        return (self.backend_model,)


def default_roster() -> dict[str, AgentConfig]:
    """Role bindings mirroring the reference run configuration."""
    return {
        ROLE_ROOT_ENGINEER: AgentConfig(ROLE_ROOT_ENGINEER, "claude-haiku-4.5", 0.0),
        ROLE_DATA_ANALYST: AgentConfig(ROLE_DATA_ANALYST, "claude-haiku-4.5", 0.5),
        ROLE_EVALUATOR: AgentConfig(ROLE_EVALUATOR, "claude-haiku-4.5", 0.0),
        ROLE_RETRIEVER: AgentConfig(ROLE_RETRIEVER, "gemini-2.5-pro", 0.0),
        ROLE_PROPOSER: AgentConfig(ROLE_PROPOSER, "gemini-2.5-pro", 0.9),
        ROLE_CRITIC: AgentConfig(ROLE_CRITIC, "gemini-2.5-pro", 0.5),
        ROLE_ENGINEER: AgentConfig(ROLE_ENGINEER, "claude-haiku-4.5", 0.0),
        ROLE_DEBUGGER: AgentConfig(ROLE_DEBUGGER, "claude-haiku-4.5", 0.0),
        ROLE_RESULT_ANALYST: AgentConfig(ROLE_RESULT_ANALYST, "claude-haiku-4.5", 0.5),
        ROLE_SELECTOR: AgentConfig(
            ROLE_SELECTOR,
            ("gpt-5-mini", "grok-4-fast", "gemini-2.5-pro"),
            None,
        ),
    }


DEFAULT_EXEC_TIMEOUTS = {"validate": 120.0, "train": 900.0, "evaluate": 300.0}


@dataclass
class RunManifest:
    """Everything a run needs to be reproduced or resumed.

    Attributes:
        max_iterations: evolution loop budget.
        mutation_batch: parallel mutations per iteration; also the
            early/mature stage boundary and the sandbox concurrency cap.
        max_children: saturation bound per node (10 unless overridden).
        debate_rounds: N for the proposer/critic schedule, N >= 3.
        selector_nominations: K ids each selector ballot must name.
        max_debug_iters: repair passes after the first failed attempt.
        exec_timeouts: per-mode subprocess wall-clock limits in seconds.
        relatives_cap: most-recent cap per sibling/uncle report group
            (None disables the cap).
        max_index_chars: KB index summary budget handed to the retriever.
        seed: 64-bit experiment seed, echoed into run.json.
    """

    max_iterations: int = 6
    mutation_batch: int = 4
    max_children: int = 10
    debate_rounds: int = 4
    selector_nominations: int = 3
    max_debug_iters: int = 3
    exec_timeouts: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EXEC_TIMEOUTS))
    relatives_cap: int | None = 4
    max_index_chars: int = 20000
    seed: int = 0
    roster: dict[str, AgentConfig] = field(default_factory=default_roster)

    def __post_init__(self):
        for name in ("max_iterations", "mutation_batch", "debate_rounds", "selector_nominations"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 1 <= self.max_children <= 10:
            raise ValidationError("max_children must be in [1, 10]")
        if self.debate_rounds < 3:
            raise ValidationError("debate_rounds must be >= 3")
        if self.max_debug_iters < 0:
            raise ValidationError("max_debug_iters must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 bits")
        for mode in ("validate", "train", "evaluate"):
            if mode not in self.exec_timeouts:
                raise ValidationError(f"exec_timeouts missing mode {mode!r}")
            if self.exec_timeouts[mode] <= 0:
                raise ValidationError(f"exec timeout for {mode!r} must be positive")
        missing = [r for r in ALL_ROLES if r not in self.roster]
        if missing:
            raise ValidationError(f"roster missing roles: {', '.join(missing)}")

    def agent(self, role: str) -> AgentConfig:
        if role not in self.roster:
            raise ValidationError(f"unknown agent role: {role!r}")
        return self.roster[role]

    def to_doc(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["roster"] = {
            role: {
                "backend_model": list(cfg.backend_model) if isinstance(cfg.backend_model, tuple) else cfg.backend_model,
                "temperature": cfg.temperature,
                "max_tokens": cfg.max_tokens,
            }
            for role, cfg in self.roster.items()
        }
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "RunManifest":
        data = dict(doc)
        roster_doc = data.pop("roster", None)
        roster = {}
        if roster_doc:
            for role, cfg in roster_doc.items():
                model = cfg["backend_model"]
                roster[role] = AgentConfig(
                    role=role,
                    backend_model=tuple(model) if isinstance(model, list) else model,
                    temperature=cfg.get("temperature"),
                    max_tokens=cfg.get("max_tokens"),
                )
        else:
            roster = default_roster()
        known = {f for f in cls.__dataclass_fields__ if f != "roster"}  # type: ignore[attr-defined]
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(roster=roster, **kwargs)
