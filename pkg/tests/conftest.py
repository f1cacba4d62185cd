from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from promptrl.embedding import FallbackEmbedder
from promptrl.environment import EnvConfig, RefinementEnv, RewardMode
from promptrl.gateway import BackendConfig, ScriptedMock
from promptrl.sandbox import InProcessFake

FIXTURES = Path(__file__).parent / "fixtures"
SYNTHETIC = FIXTURES / "synthetic"


@pytest.fixture(scope="session")
def synthetic_paths() -> dict[str, Path]:
    return {
        "corpus": SYNTHETIC / "corpus.jsonl",
        "rules": SYNTHETIC / "mock_rules.jsonl",
        "table": SYNTHETIC / "fake_table.json",
    }


@pytest.fixture(scope="session")
def figure_corpus_path() -> Path:
    return FIXTURES / "figure_tasks.jsonl"


@pytest.fixture()
def world_backend(synthetic_paths) -> BackendConfig:
    return BackendConfig(kind=ScriptedMock(str(synthetic_paths["rules"])))


@pytest.fixture()
def world_executor(synthetic_paths) -> InProcessFake:
    return InProcessFake.from_json(synthetic_paths["table"])


def make_world_env(
    backend: BackendConfig,
    executor: InProcessFake,
    seed: int = 0,
    dim: int = 64,
    max_steps: int = 10,
    reward_mode: RewardMode = RewardMode.SHAPED,
) -> RefinementEnv:
    return RefinementEnv(
        embedder=FallbackEmbedder(dim=dim),
        generator=backend,
        rewriter=backend,
        executor=executor,
        config=EnvConfig(max_steps=max_steps, reward_mode=reward_mode),
        rng=np.random.default_rng(seed),
    )


@pytest.fixture()
def world_env(world_backend, world_executor):
    def factory(seed: int = 0, **kwargs) -> RefinementEnv:
        return make_world_env(world_backend, world_executor, seed=seed, **kwargs)

    return factory


EXPERIMENT_SEED = 20260808


def write_experiment_config(
    path: Path,
    out_dir: Path,
    reward_mode: str = "shaped",
    episodes: int = 400,
    master_seed: int = EXPERIMENT_SEED,
) -> Path:
    """Config for the hermetic learning experiment on the synthetic corpus."""
    path.write_text(
        f"""
[run]
output_dir = {out_dir}
episodes = {episodes}
master_seed = {master_seed}
policy = ppo

[corpus]
path = {SYNTHETIC / 'corpus.jsonl'}
name = synthetic

[split]
mode = fixed
train_n = 24
test_n = 16

[generator]
kind = mock
script_path = {SYNTHETIC / 'mock_rules.jsonl'}

[rewriter]
kind = mock
script_path = {SYNTHETIC / 'mock_rules.jsonl'}

[embedding]
kind = fallback
dim = 64

[sandbox]
executor = fake
fake_table = {SYNTHETIC / 'fake_table.json'}

[env]
max_steps = 10
reward_mode = {reward_mode}
eval_step_cap = 10

[ppo]
learning_rate = 0.0025
entropy_coef = 0.005
gamma = 0.9
update_every_episodes = 8
epochs_per_update = 4

[train]
checkpoint_interval = 100
""",
        encoding="utf-8",
    )
    return path
