"""promptrl: learned prompt refinement for LLM code generation.

A PPO agent picks among direct generation, genetic lexical mutation, and
semantic rewriting to refine programming prompts until the generated code
passes a task's unit tests.
"""

__version__ = "0.1.0"

from .corpus import Corpus, FixedCounts, Fractional, Split, SplitSpec, Task
from .environment import EnvConfig, RefinementEnv, RewardMode
from .policies import PolicyKind, RefinementPolicy
from .ppo import PolicyParams, PpoConfig
from .sandbox import FailureKind, SandboxJob, SandboxVerdict
from .transforms import ActionId, GaConfig, RewriteConfig

__all__ = [
    "ActionId",
    "Corpus",
    "EnvConfig",
    "FailureKind",
    "FixedCounts",
    "Fractional",
    "GaConfig",
    "PolicyKind",
    "PolicyParams",
    "PpoConfig",
    "RefinementEnv",
    "RefinementPolicy",
    "RewardMode",
    "RewriteConfig",
    "SandboxJob",
    "SandboxVerdict",
    "Split",
    "SplitSpec",
    "Task",
    "__version__",
]
