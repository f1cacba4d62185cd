"""Exception types shared across the package."""


class PromptRlError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PromptRlError):
    """Run configuration is missing, malformed, or references absent files."""


class ParseError(PromptRlError):
    """A corpus or rule file line could not be parsed."""

    def __init__(self, line_no: int, cause: str):
        super().__init__(f"line {line_no}: {cause}")
        self.line_no = line_no
        self.cause = cause


class TaskValidationError(PromptRlError):
    """A task record violates a corpus invariant."""

    def __init__(self, task_id: str, message: str):
        super().__init__(f"task {task_id!r}: {message}")
        self.task_id = task_id


class SplitInfeasible(PromptRlError):
    """The requested split cannot be satisfied by the corpus size."""


class BackendError(PromptRlError):
    """Base class for generation/embedding backend failures."""


class BackendUnavailable(BackendError):
    """Backend unreachable after exhausting retries."""


class BackendTimeout(BackendError):
    """Backend did not answer within the configured timeout."""


class AuthMissing(BackendError):
    """The configured auth environment variable is not set."""


class MockRuleMissing(BackendError):
    """No scripted-mock rule matches the request."""


class EmbeddingServiceUnavailable(PromptRlError):
    """Remote embedding provider failed or returned an unusable vector."""


class SpawnError(PromptRlError):
    """The sandbox child process could not be started (host misconfiguration)."""


class EmptyTests(PromptRlError):
    """A pass ratio was requested over an empty test list."""


class EmptyVocab(PromptRlError):
    """Mutation was asked to draw from an empty vocabulary."""


class StepOnFinishedEpisode(PromptRlError):
    """step() was called after the episode reached a terminal state."""


class EpisodeAborted(PromptRlError):
    """Unclassifiable infrastructure failure mid-episode; excluded from training."""

    def __init__(self, diagnostic: str):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


class DimensionMismatch(PromptRlError):
    """State dimension does not match the policy parameters."""


class DegenerateDistribution(PromptRlError):
    """Action probabilities are NaN or do not sum to 1 within tolerance."""


class LengthMismatch(PromptRlError):
    """Parallel arrays have different lengths."""


class NonFiniteLoss(PromptRlError):
    """The PPO loss became NaN or infinite (divergence signal)."""


class EmptyTrace(PromptRlError):
    """An episode trace with no transitions was given."""


class EmptyEvaluation(PromptRlError):
    """A metric was requested over zero evaluation records."""


class ZeroVariance(PromptRlError):
    """An effect size was requested for differences with zero variance."""


class DomainError(PromptRlError):
    """A statistic argument is outside its mathematical domain."""


class TaskSetMismatch(PromptRlError):
    """Two evaluation reports do not cover the same task ids."""


class CheckpointIncompatible(PromptRlError):
    """A checkpoint does not match the configured state dimension or version."""
