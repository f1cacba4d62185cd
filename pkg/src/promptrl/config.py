"""Run configuration: one INI-style file fully determines a run.

Sections group component settings; every referenced path is validated
before any side effect, and all component seeds derive from one master
seed via named substreams.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    NO_SHUFFLE_SEED,
    Corpus,
    FixedCounts,
    Fractional,
    SplitSpec,
    load_corpus,
    split_corpus,
)
from .embedding import (
    CachingEmbedder,
    FallbackEmbedder,
    RemoteEmbedder,
    ResilientEmbedder,
)
from .environment import EnvConfig, RefinementEnv, RewardMode
from .errors import ConfigError
from .gateway import BackendConfig, DecodingParams, HttpEndpoint, ScriptedMock
from .ppo import PpoConfig
from .sandbox import ChildProcess, Executor, InProcessFake
from .seeding import derive_seed, substream
from .transforms import DEFAULT_META_PROMPT, GaConfig, KeywordMode, RewriteConfig


@dataclass(frozen=True)
class BackendSettings:
    kind: str
    script_path: str | None
    base_url: str | None
    model_name: str | None
    auth_env_var: str | None
    timeout_ms: int
    retry_limit: int
    decoding: DecodingParams

    def to_backend(self) -> BackendConfig:
        if self.kind == "mock":
            return BackendConfig(
                kind=ScriptedMock(script_path=self.script_path),
                timeout_ms=self.timeout_ms,
                retry_limit=self.retry_limit,
            )
        return BackendConfig(
            kind=HttpEndpoint(
                base_url=self.base_url,
                model_name=self.model_name,
                auth_env_var=self.auth_env_var,
            ),
            timeout_ms=self.timeout_ms,
            retry_limit=self.retry_limit,
        )


@dataclass(frozen=True)
class SandboxSettings:
    executor: str
    fake_table: str | None
    interpreter: str | None
    harness: str | None
    workers: int

    def to_executor(self) -> Executor:
        if self.executor == "fake":
            return InProcessFake.from_json(self.fake_table)
        return ChildProcess(interpreter_path=self.interpreter, harness_path=self.harness)


@dataclass(frozen=True)
class EmbeddingSettings:
    kind: str
    dim: int
    base_url: str | None
    fallback_on_error: bool

    def to_embedder(self):
        if self.kind == "fallback":
            return CachingEmbedder(FallbackEmbedder(dim=self.dim))
        remote = RemoteEmbedder(base_url=self.base_url, dim=self.dim)
        return CachingEmbedder(
            ResilientEmbedder(remote, fall_back_on_error=self.fallback_on_error)
        )


@dataclass(frozen=True)
class RunConfig:
    config_path: Path
    output_dir: Path
    master_seed: int
    episodes: int | None
    policy: str
    corpus_path: Path
    corpus_name: str | None
    split_spec: SplitSpec | None
    generator: BackendSettings
    rewriter: BackendSettings
    embedding: EmbeddingSettings
    sandbox: SandboxSettings
    env: EnvConfig
    eval_step_cap: int
    ppo: PpoConfig
    ga: GaConfig
    rewrite: RewriteConfig
    checkpoint_interval: int
    raw_echo: dict = field(default_factory=dict)

    def load_split_corpus(self) -> Corpus:
        corpus = load_corpus(self.corpus_path)
        if self.corpus_name:
            corpus = Corpus(
                name=self.corpus_name, tasks=corpus.tasks, split_spec=corpus.split_spec
            )
        if self.split_spec is not None:
            corpus = split_corpus(corpus, self.split_spec)
        return corpus

    def build_env(self, rng: np.random.Generator, reward_mode: RewardMode | None = None) -> RefinementEnv:
        env_cfg = self.env
        if reward_mode is not None and reward_mode != env_cfg.reward_mode:
            env_cfg = EnvConfig(
                max_steps=env_cfg.max_steps,
                reward_mode=reward_mode,
                timeout_ms=env_cfg.timeout_ms,
                decoding=env_cfg.decoding,
            )
        return RefinementEnv(
            embedder=self.embedding.to_embedder(),
            generator=self.generator.to_backend(),
            rewriter=self.rewriter.to_backend(),
            executor=self.sandbox.to_executor(),
            config=env_cfg,
            ga=self.ga,
            rewrite=self.rewrite,
            rewrite_decoding=self.rewriter.decoding,
            rng=rng,
            workers=self.sandbox.workers,
        )

    def seed_for(self, name: str) -> int:
        return derive_seed(self.master_seed, name)

    def rng_for(self, name: str) -> np.random.Generator:
        return substream(self.master_seed, name)


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def _backend_settings(
    parser: configparser.ConfigParser, section: str, base: Path
) -> BackendSettings:
    if not parser.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    sec = parser[section]
    kind = sec.get("kind", "mock")
    if kind not in ("mock", "http"):
        raise ConfigError(f"[{section}] kind must be 'mock' or 'http', got {kind!r}")
    script_path = None
    if kind == "mock":
        raw = sec.get("script_path")
        if not raw:
            raise ConfigError(f"[{section}] mock backend needs script_path")
        script_path = str(_require_file(_resolve(base, raw), f"[{section}] script_path"))
    base_url = sec.get("base_url") or None
    if kind == "http" and not base_url:
        raise ConfigError(f"[{section}] http backend needs base_url")
    try:
        decoding = DecodingParams(
            temperature=sec.getfloat("temperature", 0.8),
            top_p=sec.getfloat("top_p", 0.95),
            max_new_tokens=sec.getint("max_new_tokens", 512),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] invalid decoding: {exc}") from exc
    return BackendSettings(
        kind=kind,
        script_path=script_path,
        base_url=base_url,
        model_name=sec.get("model_name", "default-model"),
        auth_env_var=sec.get("auth_env_var") or None,
        timeout_ms=sec.getint("timeout_ms", 30_000),
        retry_limit=sec.getint("retry_limit", 2),
        decoding=decoding,
    )


def _split_spec(parser: configparser.ConfigParser, master_seed: int) -> SplitSpec | None:
    if not parser.has_section("split"):
        return None
    sec = parser["split"]
    mode = sec.get("mode", "none")
    raw_seed = sec.get("seed", "")
    if raw_seed == "noshuffle":
        seed = NO_SHUFFLE_SEED
    elif raw_seed:
        seed = int(raw_seed)
    else:
        seed = derive_seed(master_seed, "split")
    if mode == "none":
        return None
    if mode == "fixed":
        return SplitSpec(
            mode=FixedCounts(train_n=sec.getint("train_n"), test_n=sec.getint("test_n")),
            seed=seed,
        )
    if mode == "fractional":
        return SplitSpec(mode=Fractional(train_frac=sec.getfloat("train_frac")), seed=seed)
    raise ConfigError(f"[split] mode must be fixed|fractional|none, got {mode!r}")


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run configuration file.

    Raises ConfigError on any structural problem, unknown enum value, or
    missing referenced file, before any side effect happens.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    base = path.parent

    try:
        run_sec = parser["run"]
    except KeyError:
        raise ConfigError("missing [run] section") from None
    if "master_seed" not in run_sec:
        raise ConfigError("[run] master_seed is required")
    master_seed = run_sec.getint("master_seed")
    episodes = run_sec.getint("episodes") if "episodes" in run_sec else None
    policy = run_sec.get("policy", "ppo")
    if policy not in ("ppo", "direct", "ga", "rewrite", "random"):
        raise ConfigError(f"[run] unknown policy {policy!r}")
    output_dir = _resolve(base, run_sec.get("output_dir", "runs"))

    if not parser.has_section("corpus") or not parser["corpus"].get("path"):
        raise ConfigError("[corpus] path is required")
    corpus_path = _require_file(
        _resolve(base, parser["corpus"]["path"]), "[corpus] path"
    )

    generator = _backend_settings(parser, "generator", base)
    rewriter = (
        _backend_settings(parser, "rewriter", base)
        if parser.has_section("rewriter")
        else generator
    )

    emb_sec = parser["embedding"] if parser.has_section("embedding") else {}
    emb_kind = emb_sec.get("kind", "fallback") if emb_sec else "fallback"
    if emb_kind not in ("fallback", "remote"):
        raise ConfigError(f"[embedding] kind must be fallback|remote, got {emb_kind!r}")
    embedding = EmbeddingSettings(
        kind=emb_kind,
        dim=int(emb_sec.get("dim", 384)) if emb_sec else 384,
        base_url=(emb_sec.get("base_url") or None) if emb_sec else None,
        fallback_on_error=(
            str(emb_sec.get("fallback_on_error", "true")).lower() == "true"
            if emb_sec
            else True
        ),
    )
    if embedding.kind == "remote" and not embedding.base_url:
        raise ConfigError("[embedding] remote provider needs base_url")

    sand_sec = parser["sandbox"] if parser.has_section("sandbox") else {}
    executor_kind = sand_sec.get("executor", "fake") if sand_sec else "fake"
    if executor_kind not in ("fake", "child"):
        raise ConfigError(f"[sandbox] executor must be fake|child, got {executor_kind!r}")
    fake_table = interpreter = harness = None
    if executor_kind == "fake":
        raw = sand_sec.get("fake_table") if sand_sec else None
        if not raw:
            raise ConfigError("[sandbox] fake executor needs fake_table")
        fake_table = str(_require_file(_resolve(base, raw), "[sandbox] fake_table"))
    else:
        interpreter = sand_sec.get("interpreter", "python3")
        raw = sand_sec.get("harness")
        if not raw:
            raise ConfigError("[sandbox] child executor needs harness")
        harness = str(_require_file(_resolve(base, raw), "[sandbox] harness"))
    sandbox = SandboxSettings(
        executor=executor_kind,
        fake_table=fake_table,
        interpreter=interpreter,
        harness=harness,
        workers=int(sand_sec.get("workers", 1)) if sand_sec else 1,
    )

    env_sec = parser["env"] if parser.has_section("env") else {}
    reward_raw = env_sec.get("reward_mode", "shaped") if env_sec else "shaped"
    try:
        reward_mode = RewardMode(reward_raw)
    except ValueError:
        raise ConfigError(f"[env] unknown reward_mode {reward_raw!r}") from None
    try:
        env_cfg = EnvConfig(
            max_steps=int(env_sec.get("max_steps", 10)) if env_sec else 10,
            reward_mode=reward_mode,
            timeout_ms=int(env_sec.get("timeout_ms", 5000)) if env_sec else 5000,
            decoding=generator.decoding,
        )
    except ValueError as exc:
        raise ConfigError(f"[env] {exc}") from exc
    eval_step_cap = int(env_sec.get("eval_step_cap", env_cfg.max_steps)) if env_sec else env_cfg.max_steps

    def section_kwargs(name: str, casts: dict) -> dict:
        if not parser.has_section(name):
            return {}
        out = {}
        for key, cast in casts.items():
            if parser[name].get(key):
                out[key] = cast(parser[name][key])
        return out

    try:
        ppo_cfg = PpoConfig(
            **section_kwargs(
                "ppo",
                {
                    "clip_epsilon": float,
                    "gamma": float,
                    "gae_lambda": float,
                    "learning_rate": float,
                    "epochs_per_update": int,
                    "minibatch_size": int,
                    "value_coef": float,
                    "entropy_coef": float,
                    "max_grad_norm": float,
                    "update_every_episodes": int,
                },
            )
        )
        ga_cfg = GaConfig(
            **section_kwargs(
                "ga",
                {
                    "population_size": int,
                    "generations": int,
                    "mutation_prob": float,
                    "tournament_size": int,
                    "elitism": int,
                    "fitness_budget": int,
                },
            )
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    template = DEFAULT_META_PROMPT
    keywords_mode = KeywordMode.FROM_TASK
    max_rewrite_chars = 4000
    if parser.has_section("rewrite"):
        sec = parser["rewrite"]
        if sec.get("meta_prompt_file"):
            template_path = _require_file(
                _resolve(base, sec["meta_prompt_file"]), "[rewrite] meta_prompt_file"
            )
            template = template_path.read_text(encoding="utf-8")
        mode_raw = sec.get("required_keywords_mode", "from_task")
        if mode_raw == "from_task":
            keywords_mode = KeywordMode.FROM_TASK
        elif mode_raw == "none":
            keywords_mode = KeywordMode.NONE
        else:
            raise ConfigError(f"[rewrite] unknown required_keywords_mode {mode_raw!r}")
        max_rewrite_chars = sec.getint("max_rewrite_chars", 4000)
    try:
        rewrite_cfg = RewriteConfig(
            meta_prompt_template=template,
            required_keywords_mode=keywords_mode,
            max_rewrite_chars=max_rewrite_chars,
        )
    except ValueError as exc:
        raise ConfigError(f"[rewrite] {exc}") from exc

    checkpoint_interval = (
        parser["train"].getint("checkpoint_interval", 100)
        if parser.has_section("train")
        else 100
    )

    echo = {s: dict(parser[s]) for s in parser.sections()}
    return RunConfig(
        config_path=path,
        output_dir=output_dir,
        master_seed=master_seed,
        episodes=episodes,
        policy=policy,
        corpus_path=corpus_path,
        corpus_name=parser["corpus"].get("name") or None,
        split_spec=_split_spec(parser, master_seed),
        generator=generator,
        rewriter=rewriter,
        embedding=embedding,
        sandbox=sandbox,
        env=env_cfg,
        eval_step_cap=eval_step_cap,
        ppo=ppo_cfg,
        ga=ga_cfg,
        rewrite=rewrite_cfg,
        checkpoint_interval=checkpoint_interval,
        raw_echo=echo,
    )
