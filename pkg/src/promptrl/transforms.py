"""The three prompt transformations the policy chooses among.

Direct generation keeps the prompt; genetic mutation runs a small
test-feedback-driven GA over the prompt's tokens; semantic rewriting asks a
rewriter backend for a reformulation and keeps it only if it survives the
structural filter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .corpus import Task
from .errors import EmptyVocab
from .gateway import (
    BackendConfig,
    DecodingParams,
    GenRequest,
    GenResponse,
    Role,
    extract_code,
    generate,
)
from .sandbox import Executor, SandboxJob, run

DEFAULT_META_PROMPT = (
    "Rewrite the following programming task description to be explicit and "
    "unambiguous. Name the required function and its arguments. Do not add "
    "examples. Task: {prompt}"
)


class ActionId(IntEnum):
    DIRECT_GENERATION = 0
    GENETIC_MUTATION = 1
    SEMANTIC_REWRITE = 2


class KeywordMode(IntEnum):
    NONE = 0
    FROM_TASK = 1


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 4
    generations: int = 2
    mutation_prob: float = 0.2
    tournament_size: int = 2
    elitism: int = 1
    fitness_budget: int | None = None

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 0:
            raise ValueError("population_size must be >= 1 and generations >= 0")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [1, population_size]")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        if self.fitness_budget is None:
            object.__setattr__(
                self, "fitness_budget", self.population_size * (self.generations + 1)
            )
        if self.fitness_budget <= 0:
            raise ValueError("fitness_budget must be positive")


@dataclass(frozen=True)
class RewriteConfig:
    meta_prompt_template: str = DEFAULT_META_PROMPT
    required_keywords_mode: KeywordMode = KeywordMode.FROM_TASK
    max_rewrite_chars: int = 4000

    def __post_init__(self):
        if self.meta_prompt_template.count("{prompt}") != 1:
            raise ValueError("meta_prompt_template must contain '{prompt}' exactly once")
        if self.max_rewrite_chars <= 0:
            raise ValueError("max_rewrite_chars must be positive")


@dataclass
class TransformContext:
    """Everything a transform needs: task, seeded RNG, backends, sandbox."""

    task: Task
    rng: np.random.Generator
    generator: BackendConfig
    rewriter: BackendConfig
    executor: Executor
    ga: GaConfig = field(default_factory=GaConfig)
    rewrite: RewriteConfig = field(default_factory=RewriteConfig)
    decoding: DecodingParams = field(default_factory=DecodingParams)
    rewrite_decoding: DecodingParams = field(default_factory=DecodingParams)
    keywords: frozenset[str] = frozenset()
    sandbox_timeout_ms: int = 5000
    workers: int = 1


def tokenize_prompt(prompt: str) -> list[str]:
    """Whitespace tokens with punctuation left attached."""
    return prompt.split()


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def crossover(a: list[str], b: list[str], cut: int) -> list[str]:
    """Single-point crossover: a's prefix up to cut, b's suffix from cut."""
    if not 0 <= cut <= len(a):
        raise IndexError(f"cut {cut} out of range for parent of length {len(a)}")
    return list(a[:cut]) + list(b[cut:])


def index_shuffle(tokens: list[str], rng: np.random.Generator) -> list[str]:
    """Swap two distinct seeded-random positions; shorter-than-2 lists pass through."""
    out = list(tokens)
    n = len(out)
    if n < 2:
        return out
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    out[i], out[j] = out[j], out[i]
    return out


def mutate(
    tokens: list[str], prob: float, vocab: list[str], rng: np.random.Generator
) -> list[str]:
    """Replace each position with a random vocab token, independently, with prob."""
    if not vocab:
        raise EmptyVocab("mutation vocabulary is empty")
    out = []
    for token in tokens:
        if rng.random() < prob:
            out.append(vocab[int(rng.integers(len(vocab)))])
        else:
            out.append(token)
    return out


def tournament_select(
    population: list[tuple[list[str], float]], k: int, rng: np.random.Generator
) -> tuple[list[str], float]:
    """Fittest of k members sampled with replacement; ties go to the lowest index."""
    n = len(population)
    picks = [int(rng.integers(n)) for _ in range(k)]
    best = min(picks)
    for idx in picks:
        if population[idx][1] > population[best][1] or (
            population[idx][1] == population[best][1] and idx < best
        ):
            best = idx
    return population[best]


class _FitnessOracle:
    """Budgeted, memoized prompt fitness: tests passed by one generated program.

    Execution failure scores -1 so prompts yielding invalid code rank below
    zero-pass prompts. Each fresh candidate costs one generation plus one
    sandbox run from the budget; repeats are served from the cache for free.
    """

    def __init__(self, ctx: TransformContext):
        self.ctx = ctx
        self.budget = ctx.ga.fitness_budget
        self.spent = 0
        self.cache: dict[str, int] = {}

    def evaluate(self, candidates: list[str]) -> list[int | None]:
        fresh: list[tuple[str, int]] = []
        queued: set[str] = set()
        for cand in candidates:
            if cand in self.cache or cand in queued:
                continue
            if self.spent + len(fresh) >= self.budget:
                continue
            queued.add(cand)
            fresh.append((cand, int(self.ctx.rng.integers(0, 2**63))))
        self.spent += len(fresh)
        if self.ctx.workers > 1 and len(fresh) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=self.ctx.workers) as pool:
                scores = list(pool.map(lambda cs: self._score(*cs), fresh))
        else:
            scores = [self._score(cand, seed) for cand, seed in fresh]
        for (cand, _), score in zip(fresh, scores):
            self.cache[cand] = score
        return [self.cache.get(cand) for cand in candidates]

    def _score(self, candidate: str, seed: int) -> int:
        response = generate(
            GenRequest(
                role=Role.CODE_GENERATOR,
                prompt=candidate,
                decoding=self.ctx.decoding,
                seed=seed,
            ),
            self.ctx.generator,
        )
        code = extract_code(response.raw_text, self.ctx.task.entry_point)
        verdict = run(
            SandboxJob(
                code=code,
                tests=self.ctx.task.tests,
                timeout_ms=self.ctx.sandbox_timeout_ms,
                entry_point=self.ctx.task.entry_point,
            ),
            self.ctx.executor,
        )
        return verdict.passed_count if verdict.is_executed else -1


def ga_mutate(prompt: str, task: Task, cfg: GaConfig, ctx: TransformContext) -> str:
    """Evolve lexical prompt variants under test feedback; return the best ever seen.

    The input prompt seeds the population and elitism plus best-ever
    tracking guarantee the result never scores below it. All randomness
    comes from ctx.rng, so equal seeds reproduce the returned prompt.
    """
    tokens0 = tokenize_prompt(prompt)
    if not tokens0:
        return prompt
    vocab = list(tokens0)
    oracle = _FitnessOracle(ctx)

    population: list[str] = [prompt]
    for _ in range(cfg.population_size - 1):
        population.append(detokenize(index_shuffle(tokens0, ctx.rng)))

    best_prompt: str | None = None
    best_fitness = float("-inf")

    def consider(cands: list[str]) -> list[tuple[list[str], float]]:
        nonlocal best_prompt, best_fitness
        scored = []
        for cand, fit in zip(cands, oracle.evaluate(cands)):
            if fit is None:
                continue
            if fit > best_fitness:
                best_prompt, best_fitness = cand, fit
            scored.append((tokenize_prompt(cand), float(fit)))
        return scored

    scored = consider(population)
    for _ in range(cfg.generations):
        if oracle.spent >= oracle.budget or not scored:
            break
        ranked = sorted(
            range(len(scored)), key=lambda i: (-scored[i][1], i)
        )
        elites = [detokenize(scored[i][0]) for i in ranked[: cfg.elitism]]
        children: list[str] = []
        while len(elites) + len(children) < cfg.population_size:
            parent_a, _ = tournament_select(scored, cfg.tournament_size, ctx.rng)
            parent_b, _ = tournament_select(scored, cfg.tournament_size, ctx.rng)
            cut = int(ctx.rng.integers(0, len(parent_a) + 1))
            child = crossover(parent_a, parent_b, cut)
            child = index_shuffle(child, ctx.rng)
            if vocab:
                child = mutate(child, cfg.mutation_prob, vocab, ctx.rng)
            children.append(detokenize(child))
        elite_scored = [
            (tokenize_prompt(e), float(oracle.cache[e]))
            for e in elites
            if e in oracle.cache
        ]
        scored = elite_scored + consider(children)

    if not best_prompt:
        return prompt
    return best_prompt


def _clean_rewrite(raw_text: str) -> str:
    """Strip fencing and surrounding whitespace from a rewriter response."""
    lines = raw_text.splitlines()
    fence_idx = [i for i, line in enumerate(lines) if line.lstrip().startswith("```")]
    if len(fence_idx) >= 2:
        return "\n".join(lines[fence_idx[0] + 1 : fence_idx[1]]).strip()
    return raw_text.strip()


def semantic_rewrite(
    prompt: str, task: Task, cfg: RewriteConfig, ctx: TransformContext
) -> str:
    """Ask the rewriter for a reformulation; keep it only if it passes the filter.

    The rewrite is accepted iff it is non-empty, within the length budget,
    and (in FromTask mode) retains every required task keyword. A rejected
    rewrite falls back to the input prompt; rejection is not an error.
    """
    meta = cfg.meta_prompt_template.replace("{prompt}", prompt)
    response: GenResponse = generate(
        GenRequest(
            role=Role.REWRITER,
            prompt=meta,
            decoding=ctx.rewrite_decoding,
            seed=int(ctx.rng.integers(0, 2**63)),
        ),
        ctx.rewriter,
    )
    rewritten = _clean_rewrite(response.raw_text)
    if not rewritten:
        return prompt
    if len(rewritten) > cfg.max_rewrite_chars:
        return prompt
    if cfg.required_keywords_mode == KeywordMode.FROM_TASK:
        if any(kw not in rewritten for kw in ctx.keywords):
            return prompt
    return rewritten


def apply_transform(prompt: str, action: ActionId, ctx: TransformContext) -> str:
    """Action-specific prompt update: identity, GA mutation, or rewrite."""
    if action == ActionId.DIRECT_GENERATION:
        return prompt
    if action == ActionId.GENETIC_MUTATION:
        return ga_mutate(prompt, ctx.task, ctx.ga, ctx)
    if action == ActionId.SEMANTIC_REWRITE:
        return semantic_rewrite(prompt, ctx.task, ctx.rewrite, ctx)
    raise ValueError(f"unknown action {action!r}")
