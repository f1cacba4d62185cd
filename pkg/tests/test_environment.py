from __future__ import annotations

import json

import numpy as np
import pytest

from promptrl.corpus import load_corpus
from promptrl.embedding import FallbackEmbedder
from promptrl.environment import (
    EnvConfig,
    EpisodeTrace,
    RefinementEnv,
    RewardMode,
    Transition,
    binary_reward,
    episode_return,
    shaped_reward,
)
from promptrl.errors import EmptyTrace, EpisodeAborted, StepOnFinishedEpisode
from promptrl.gateway import BackendConfig, ScriptedMock
from promptrl.sandbox import FailureKind, FakeRule, InProcessFake, SandboxVerdict
from promptrl.transforms import ActionId


def executed(per_test):
    return SandboxVerdict.executed(tuple(per_test))


class TestShapedReward:
    def test_four_branch_table(self):
        assert shaped_reward(SandboxVerdict.failure(FailureKind.SYNTAX_ERROR)) == -2.0
        assert shaped_reward(executed([False, False, False])) == -1.0
        assert shaped_reward(executed([True, True, False])) == pytest.approx(2 / 3)
        assert shaped_reward(executed([True, True, True])) == 1.0

    def test_all_failure_kinds_score_minus_two(self):
        for kind in FailureKind:
            assert shaped_reward(SandboxVerdict.failure(kind)) == -2.0

    def test_monotone_in_pass_ratio(self):
        rewards = []
        for passed in range(0, 11):
            verdict = executed([True] * passed + [False] * (10 - passed))
            rewards.append(shaped_reward(verdict))
        assert rewards == sorted(rewards)
        assert rewards[-1] == 1.0
        assert all(rewards[-1] > r for r in rewards[:-1])

    def test_range(self):
        for passed in range(0, 8):
            verdict = executed([True] * passed + [False] * (7 - passed))
            r = shaped_reward(verdict)
            assert r in (-1.0, 1.0) or 0.0 < r < 1.0


class TestBinaryReward:
    def test_full_pass_only(self):
        assert binary_reward(executed([True, True])) == 1.0
        assert binary_reward(executed([True] * 99 + [False])) == 0.0
        assert binary_reward(SandboxVerdict.failure(FailureKind.TIMEOUT)) == 0.0


class TestEpisodeReturn:
    def trace(self, rewards):
        return EpisodeTrace(
            task_id="t",
            transitions=[
                Transition(
                    state=np.zeros(4), action=0, log_prob=None, value=None,
                    reward=r, pass_ratio=0.0, done=(i == len(rewards) - 1),
                )
                for i, r in enumerate(rewards)
            ],
        )

    def test_examples(self):
        assert episode_return(self.trace([-1.0, 0.5, 1.0])) == pytest.approx(0.5)
        assert episode_return(self.trace([1.0])) == 1.0
        assert episode_return(self.trace([-2.0, -2.0])) == -4.0

    def test_empty_trace(self):
        with pytest.raises(EmptyTrace):
            episode_return(EpisodeTrace(task_id="t"))


class TestResetAndStep:
    def test_reset_deterministic_state(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=3)
        a = env.reset(corpus.tasks[0])
        b = env.reset(corpus.tasks[0])
        np.testing.assert_array_equal(a, b)
        assert a.shape == (64,)

    def test_default_dim_is_384(self, world_backend, world_executor):
        corpus_task = load_corpus(
            __import__("pathlib").Path("tests/fixtures/synthetic/corpus.jsonl")
        ).tasks[0]
        env = RefinementEnv(
            embedder=FallbackEmbedder(),
            generator=world_backend,
            rewriter=world_backend,
            executor=world_executor,
        )
        assert env.reset(corpus_task).shape == (384,)

    def test_distinct_prompts_distinct_states(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=3)
        a = env.reset(corpus.tasks[0])
        b = env.reset(corpus.tasks[1])
        assert not np.array_equal(a, b)

    def test_rewrite_chain_reaches_full_pass(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=1)
        env.reset(corpus.tasks[5])
        ratios = []
        for _ in range(10):
            outcome = env.step(ActionId.SEMANTIC_REWRITE)
            ratios.append(outcome.pass_ratio)
            if outcome.done:
                break
        assert outcome.reward == 1.0
        assert outcome.pass_ratio == 1.0
        assert outcome.done
        assert ratios == sorted(ratios)  # each hop strictly improves
        assert len(ratios) == 7

    def test_partial_pass_reward_equals_ratio(self, tmp_path):
        task_path = tmp_path / "c.jsonl"
        partial_code = "def find_tuples(tup, k):\n    return [x for x in tup if len(x) == k]"
        tests = [
            "assert find_tuples([(1, 2), (3, 4, 5)], 2) == [(1, 2)]",
            "assert find_tuples([], 1) == []",
            "assert find_tuples([(1, 2), 'ab'], 2) == [(1, 2)]",
        ]
        task_path.write_text(
            json.dumps(
                {
                    "id": "fig",
                    "prompt": "Write a function to find all tuples matching a condition",
                    "tests": tests,
                    "entry_point": "find_tuples",
                }
            )
            + "\n"
        )
        rules_path = tmp_path / "rules.jsonl"
        rules_path.write_text(
            json.dumps({"role": "generator", "match": "", "response": partial_code}) + "\n"
        )
        executor = InProcessFake(
            rule_table={partial_code: FakeRule(passing_tests=frozenset(tests[:2]))}
        )
        env = RefinementEnv(
            embedder=FallbackEmbedder(dim=32),
            generator=BackendConfig(kind=ScriptedMock(str(rules_path))),
            rewriter=BackendConfig(kind=ScriptedMock(str(rules_path))),
            executor=executor,
            config=EnvConfig(max_steps=10),
            rng=np.random.default_rng(0),
        )
        task = load_corpus(task_path).tasks[0]
        env.reset(task)
        outcome = env.step(ActionId.DIRECT_GENERATION)
        assert outcome.pass_ratio == pytest.approx(2 / 3)
        assert outcome.reward == pytest.approx(2 / 3)
        assert not outcome.done

    def test_step_cap_terminates(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=2, max_steps=3)
        env.reset(corpus.tasks[0])
        outcomes = [env.step(ActionId.DIRECT_GENERATION) for _ in range(3)]
        assert [o.done for o in outcomes] == [False, False, True]
        with pytest.raises(StepOnFinishedEpisode):
            env.step(ActionId.DIRECT_GENERATION)

    def test_done_is_absorbing_after_solve(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=2)
        env.reset(corpus.tasks[0])
        for _ in range(7):
            outcome = env.step(ActionId.SEMANTIC_REWRITE)
        assert outcome.done and outcome.pass_ratio == 1.0
        with pytest.raises(StepOnFinishedEpisode):
            env.step(ActionId.DIRECT_GENERATION)

    def test_binary_mode_rewards(self, world_env, synthetic_paths):
        corpus = load_corpus(synthetic_paths["corpus"])
        env = world_env(seed=2, reward_mode=RewardMode.BINARY)
        env.reset(corpus.tasks[0])
        assert env.step(ActionId.DIRECT_GENERATION).reward == 0.0
        env.reset(corpus.tasks[0])
        rewards = [env.step(ActionId.SEMANTIC_REWRITE).reward for _ in range(7)]
        assert rewards[:-1] == [0.0] * 6  # partial progress earns nothing in binary mode
        assert rewards[-1] == 1.0

    def test_unmatched_prompt_aborts_episode(self, tmp_path, world_executor):
        rules_path = tmp_path / "rules.jsonl"
        rules_path.write_text(
            json.dumps({"role": "generator", "match": "never-present", "response": "x"}) + "\n"
        )
        task_path = tmp_path / "c.jsonl"
        task_path.write_text(
            json.dumps({"id": "t", "prompt": "a prompt", "tests": ["assert True"]}) + "\n"
        )
        env = RefinementEnv(
            embedder=FallbackEmbedder(dim=32),
            generator=BackendConfig(kind=ScriptedMock(str(rules_path))),
            rewriter=BackendConfig(kind=ScriptedMock(str(rules_path))),
            executor=world_executor,
            rng=np.random.default_rng(0),
        )
        env.reset(load_corpus(task_path).tasks[0])
        with pytest.raises(EpisodeAborted):
            env.step(ActionId.DIRECT_GENERATION)

    def test_episode_trace_invariant_single_trailing_full_pass(
        self, world_env, synthetic_paths
    ):
        corpus = load_corpus(synthetic_paths["corpus"])
        rng = np.random.default_rng(42)
        for episode in range(30):
            env = world_env(seed=500 + episode)
            env.reset(corpus.tasks[int(rng.integers(len(corpus.tasks)))])
            ratios = []
            while True:
                outcome = env.step(ActionId(int(rng.integers(3))))
                ratios.append(outcome.pass_ratio)
                if outcome.done:
                    break
            full_passes = [i for i, r in enumerate(ratios) if r == 1.0]
            assert len(full_passes) <= 1
            if full_passes:
                assert full_passes[0] == len(ratios) - 1
            assert len(ratios) <= 10

    def test_replay_reproduces_rewards(self, world_env, synthetic_paths, world_backend, world_executor):
        from promptrl.gateway import GenRequest, Role, extract_code, generate
        from promptrl.sandbox import SandboxJob, run

        corpus = load_corpus(synthetic_paths["corpus"])
        task = corpus.tasks[9]
        env = world_env(seed=31)
        env.reset(task)
        rng = np.random.default_rng(8)
        recorded = []
        while True:
            outcome = env.step(ActionId(int(rng.integers(3))))
            recorded.append((outcome.prompt_after, outcome.gen_seed, outcome.reward,
                             outcome.pass_ratio))
            if outcome.done:
                break
        for prompt_after, gen_seed, reward, ratio in recorded:
            response = generate(
                GenRequest(role=Role.CODE_GENERATOR, prompt=prompt_after, seed=gen_seed),
                world_backend,
            )
            code = extract_code(response.raw_text, task.entry_point)
            verdict = run(SandboxJob(code=code, tests=task.tests), world_executor)
            assert shaped_reward(verdict) == reward
            assert verdict.pass_ratio == ratio
