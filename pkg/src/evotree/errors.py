"""Exception taxonomy for the engine.

Everything raised on purpose derives from EngineError so callers can fence
pipeline failures off from genuine bugs. The CLI maps user-input problems
(ValidationError subclasses raised while parsing input) to exit code 1 and
everything else under EngineError to exit code 2.
"""


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class ValidationError(EngineError, ValueError):
    """A value violates a documented precondition or range."""


class InputError(ValidationError):
    """User-supplied files or flags are unusable (CLI exit code 1)."""


class TemplateError(EngineError):
    """A prompt template placeholder has no value in the render context."""

    def __init__(self, role: str, missing: list[str]):
        self.role = role
        self.missing = sorted(missing)
        super().__init__(f"template {role!r} missing context keys: {', '.join(self.missing)}")


class SchemaError(EngineError):
    """A persisted document (KB entry, index, tree.json) violates its schema."""


class ScriptMiss(EngineError):
    """A strict scripted backend had no (or no unique) rule for a request."""


class TransportError(EngineError):
    """A retryable backend transport failure (network, 5xx, decode)."""


class LaunchError(EngineError):
    """A sandbox process could not be started at all (distinct from nonzero exit)."""


class ProposalFormatError(EngineError):
    """Debate finalization stayed malformed after the single allowed re-ask."""


class ContractGenerationError(EngineError):
    """Evaluation-contract generation failed after its one repair pass."""


class GateDeclined(EngineError):
    """The human reviewer rejected the evaluation contract."""


class RootGenerationError(EngineError):
    """The baseline solution could not be produced or evaluated."""


class SelectionExhaustedError(EngineError):
    """Every node in the tree is saturated; the run stops gracefully."""


class NoEvaluatedSolutionError(EngineError):
    """Champion requested from a tree with no successfully evaluated node."""


class UndefinedRatioError(EngineError):
    """Improvement factor requested for scores it is not defined on."""
