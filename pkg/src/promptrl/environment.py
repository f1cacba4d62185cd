"""Episode state machine for prompt refinement.

One episode = one task: observe the embedded prompt, apply the chosen
transformation, generate code, run it against the task's tests, emit a
shaped (or binary) reward, and terminate on a full pass or the step cap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .corpus import Task, extract_keywords
from .errors import (
    AuthMissing,
    BackendError,
    BackendTimeout,
    BackendUnavailable,
    EmptyTrace,
    EpisodeAborted,
    SpawnError,
    StepOnFinishedEpisode,
)
from .gateway import BackendConfig, DecodingParams, GenRequest, Role, extract_code, generate
from .sandbox import Executor, SandboxJob, SandboxVerdict, run
from .transforms import (
    ActionId,
    GaConfig,
    RewriteConfig,
    TransformContext,
    apply_transform,
)


class RewardMode(Enum):
    SHAPED = "shaped"
    BINARY = "binary"


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 10
    reward_mode: RewardMode = RewardMode.SHAPED
    timeout_ms: int = 5000
    decoding: DecodingParams = field(default_factory=DecodingParams)

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def shaped_reward(verdict: SandboxVerdict) -> float:
    """Piecewise reward: 1.0 on full pass, the pass ratio on partial passes,
    -1 on an executed zero-pass, -2 on execution failure."""
    if not verdict.is_executed:
        return -2.0
    ratio = verdict.pass_ratio
    if ratio == 1.0:
        return 1.0
    if ratio == 0.0:
        return -1.0
    return ratio


def binary_reward(verdict: SandboxVerdict) -> float:
    """1.0 only when every test passes; 0.0 otherwise."""
    return 1.0 if verdict.is_executed and verdict.pass_ratio == 1.0 else 0.0


@dataclass(frozen=True)
class StepOutcome:
    next_state: np.ndarray
    reward: float
    pass_ratio: float
    done: bool
    verdict: SandboxVerdict
    prompt_after: str
    code: str
    gen_seed: int


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    log_prob: float | None
    value: float | None
    reward: float
    pass_ratio: float
    done: bool


@dataclass
class EpisodeTrace:
    task_id: str
    transitions: list[Transition] = field(default_factory=list)

    @property
    def episode_return(self) -> float:
        return episode_return(self)


def episode_return(trace: EpisodeTrace) -> float:
    """Undiscounted sum of the per-step rewards."""
    if not trace.transitions:
        raise EmptyTrace("episode trace has no transitions")
    return float(sum(t.reward for t in trace.transitions))


class RefinementEnv:
    """Single-episode environment; externally synchronized.

    The state is always the embedding of the current prompt (never code or
    tracebacks). Backend/sandbox failures that classify as program outcomes
    become ExecutionFailure verdicts; unclassifiable infrastructure
    failures abort the episode via EpisodeAborted.
    """

    def __init__(
        self,
        embedder,
        generator: BackendConfig,
        rewriter: BackendConfig,
        executor: Executor,
        config: EnvConfig | None = None,
        ga: GaConfig | None = None,
        rewrite: RewriteConfig | None = None,
        rewrite_decoding: DecodingParams | None = None,
        rng: np.random.Generator | None = None,
        workers: int = 1,
    ):
        self.embedder = embedder
        self.generator = generator
        self.rewriter = rewriter
        self.executor = executor
        self.config = config or EnvConfig()
        self.ga = ga or GaConfig()
        self.rewrite = rewrite or RewriteConfig()
        self.rewrite_decoding = rewrite_decoding or self.config.decoding
        self.workers = workers
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._task: Task | None = None
        self._prompt = ""
        self._keywords: frozenset[str] = frozenset()
        self._step_idx = 0
        self._done = True
        self._episode_rng: np.random.Generator | None = None

    @property
    def current_prompt(self) -> str:
        return self._prompt

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, task: Task) -> np.ndarray:
        """Start an episode on the task; returns the initial state vector."""
        self._task = task
        self._prompt = task.prompt
        self._keywords = frozenset(extract_keywords(task))
        self._step_idx = 0
        self._done = False
        self._episode_rng = np.random.default_rng(int(self._rng.integers(0, 2**63)))
        return self.embedder.embed(self._prompt).values

    def step(self, action: ActionId) -> StepOutcome:
        if self._done or self._task is None:
            raise StepOnFinishedEpisode("reset() the environment before stepping")
        ctx = TransformContext(
            task=self._task,
            rng=self._episode_rng,
            generator=self.generator,
            rewriter=self.rewriter,
            executor=self.executor,
            ga=self.ga,
            rewrite=self.rewrite,
            decoding=self.config.decoding,
            rewrite_decoding=self.rewrite_decoding,
            keywords=self._keywords,
            sandbox_timeout_ms=self.config.timeout_ms,
            workers=self.workers,
        )
        try:
            new_prompt = apply_transform(self._prompt, action, ctx)
            gen_seed = int(self._episode_rng.integers(0, 2**63))
            response = generate(
                GenRequest(
                    role=Role.CODE_GENERATOR,
                    prompt=new_prompt,
                    decoding=self.config.decoding,
                    seed=gen_seed,
                ),
                self.generator,
            )
            code = extract_code(response.raw_text, self._task.entry_point)
            verdict = run(
                SandboxJob(
                    code=code,
                    tests=self._task.tests,
                    timeout_ms=self.config.timeout_ms,
                    entry_point=self._task.entry_point,
                ),
                self.executor,
            )
        except (BackendUnavailable, BackendTimeout, AuthMissing):
            # Fatal outage: the caller checkpoints and halts.
            self._done = True
            raise
        except (BackendError, SpawnError) as exc:
            self._done = True
            raise EpisodeAborted(f"infrastructure failure mid-episode: {exc}") from exc

        if self.config.reward_mode == RewardMode.BINARY:
            reward = binary_reward(verdict)
        else:
            reward = shaped_reward(verdict)

        self._step_idx += 1
        solved = verdict.is_executed and verdict.pass_ratio == 1.0
        done = solved or self._step_idx >= self.config.max_steps
        self._prompt = new_prompt
        self._done = done
        next_state = self.embedder.embed(new_prompt).values
        return StepOutcome(
            next_state=next_state,
            reward=reward,
            pass_ratio=verdict.pass_ratio,
            done=done,
            verdict=verdict,
            prompt_after=new_prompt,
            code=code,
            gen_seed=gen_seed,
        )
