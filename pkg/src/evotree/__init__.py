"""evotree: evolutionary multi-agent search over candidate ML solutions.

The engine grows a tree of solution programs. Each iteration selects
promising parents (best score for exploitation, selector-ensemble votes
for exploration), mutates them through retrieval-augmented
proposer/critic debate, implements and repairs the code in a sandboxed
subprocess, scores it against a generated evaluation contract, and
commits the children atomically. A deterministic scripted backend makes
whole runs replayable offline.
"""

from .bundle import DatasetDecl, ProblemBundle, load_bundle
from .config import AgentConfig, RunManifest, default_roster
from .errors import EngineError
from .gateway import ChatRequest, ChatResponse, Gateway, HttpBackend, ScriptedBackend, ScriptRule
from .model import (
    Score,
    SolutionNode,
    SolutionTree,
    child_id,
    improvement_factor,
    parent_of,
)

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "ChatRequest",
    "ChatResponse",
    "DatasetDecl",
    "EngineError",
    "Gateway",
    "HttpBackend",
    "ProblemBundle",
    "RunManifest",
    "Score",
    "ScriptRule",
    "ScriptedBackend",
    "SolutionNode",
    "SolutionTree",
    "child_id",
    "default_roster",
    "improvement_factor",
    "load_bundle",
    "parent_of",
    "__version__",
]
