"""Acceptance suite: every criterion runs at its stated tolerance and
prints one pass/fail line. The learning experiment and the determinism
check run hermetically on the synthetic fixture corpus with the scripted
mock backend, the fallback embedder, and the in-process fake sandbox.
"""
from __future__ import annotations

import json
import math
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import EXPERIMENT_SEED, write_experiment_config
from oracles import t_cdf_tail_quadrature
from promptrl.conformance import CONFORMANCE_CASES, conformance_fake, expected_verdict
from promptrl.corpus import Corpus, FixedCounts, Split, SplitSpec, Task, split_corpus
from promptrl.environment import shaped_reward
from promptrl.evaluation import (
    EvalRecord,
    evaluate_policy,
    soft_pass_at_1,
    strict_pass_at_1,
    trace_scores,
)
from promptrl.policies import PolicyKind, RefinementPolicy
from promptrl.ppo import (
    Batch,
    PpoConfig,
    clipped_surrogate,
    compute_gae,
    init_params,
    load_checkpoint,
    policy_forward,
    ppo_loss,
)
from promptrl.sandbox import FailureKind, SandboxVerdict, run as sandbox_run
from promptrl.stats import cohens_h, mcnemar, paired_t
from promptrl.config import load_run_config
from promptrl.trainer import train


def report_line(name: str, started: float) -> None:
    print(f"ACCEPTANCE {name}: PASS ({time.perf_counter() - started:.2f}s)")


class TestRewardFunctionConformance:
    def test_shaped_reward_four_branch_table(self):
        started = time.perf_counter()
        cases = [
            (SandboxVerdict.failure(FailureKind.SYNTAX_ERROR), -2.0),
            (SandboxVerdict.executed((False, False, False)), -1.0),
            (SandboxVerdict.executed((True, True, False)), 2.0 / 3.0),
            (SandboxVerdict.executed((True, True, True)), 1.0),
        ]
        for verdict, expected in cases:
            assert shaped_reward(verdict) == expected  # exact equality
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report_line("reward-function-conformance", started)


class TestMetricConformance:
    def test_hand_built_traces_and_invariant(self):
        started = time.perf_counter()

        def record(task_id, trace):
            strict, soft = trace_scores(trace)
            return EvalRecord(task_id, strict, soft, len(trace), tuple(trace))

        table = [
            ([[1.0]], (1.0, 1.0)),
            ([[0.5, 0.5]], (0.0, 0.75)),
            ([[0.0, 0.0]], (0.0, 0.0)),
            ([[1.0], [0.5, 0.5]], (0.5, 0.875)),
        ]
        for traces, (expect_strict, expect_soft) in table:
            records = [record(f"t{i}", tr) for i, tr in enumerate(traces)]
            assert abs(strict_pass_at_1(records) - expect_strict) <= 1e-12
            assert abs(soft_pass_at_1(records) - expect_soft) <= 1e-12

        rng = np.random.default_rng(987)
        records = []
        for i in range(1000):
            steps = int(rng.integers(1, 11))
            trace = [float(x) for x in rng.random(steps)]
            if rng.random() < 0.25:
                trace[int(rng.integers(steps))] = 1.0
            records.append(record(f"r{i}", trace))
        assert strict_pass_at_1(records) <= soft_pass_at_1(records)
        for r in records:
            assert not r.strict or r.soft == 1.0

        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report_line("metric-conformance", started)


class TestPpoNumerics:
    def test_gradients_gae_and_clipping(self):
        started = time.perf_counter()

        # analytic vs central finite differences on a dim-8 toy net
        from promptrl.ppo import _loss_and_grads

        rng = np.random.default_rng(2024)
        params = init_params(8, rng)
        states = rng.standard_normal((12, 8))
        actions = rng.integers(0, 3, size=12)
        log_probs, values = [], []
        for state, action in zip(states, actions):
            probs, value = policy_forward(params, state)
            log_probs.append(float(np.log(probs[action])))
            values.append(value)
        rewards = rng.standard_normal(12)
        dones = (rng.random(12) < 0.3).astype(float)
        dones[-1] = 1.0
        batch = Batch.from_transitions(
            states, actions, log_probs, rewards, values, dones, PpoConfig()
        )
        for _, tensor in params.tensors():
            tensor += 0.01 * rng.standard_normal(tensor.shape)
        cfg = PpoConfig()
        _, _, pol_grads, val_grads = _loss_and_grads(params, batch, cfg)
        analytic = {f"policy.{n}": g for n, g in pol_grads.tensors()}
        analytic.update({f"value.{n}": g for n, g in val_grads.tensors()})
        h = 1e-6
        worst = 0.0
        for name, tensor in params.tensors():
            grad = analytic[name]
            it = np.nditer(tensor, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                original = tensor[idx]
                tensor[idx] = original + h
                up, _ = ppo_loss(params, batch, cfg)
                tensor[idx] = original - h
                down, _ = ppo_loss(params, batch, cfg)
                tensor[idx] = original
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric), abs(grad[idx]), 1e-4)
                worst = max(worst, abs(numeric - grad[idx]) / denom)
                it.iternext()
        assert worst < 1e-4

        # hand GAE recursion fixture
        adv, _ = compute_gae([0.5, 1.0], [0.2, 0.1], [0.0, 1.0], gamma=0.99, lam=0.95)
        assert abs(adv[0] - 1.24545) <= 1e-9
        assert abs(adv[1] - 0.9) <= 1e-9

        # clipped term never exceeds the unclipped term
        rng2 = np.random.default_rng(77)
        ratios = np.exp(rng2.standard_normal(10_000))
        advantages = rng2.standard_normal(10_000) * 3
        assert np.all(
            clipped_surrogate(ratios, advantages, 0.2) <= ratios * advantages + 1e-12
        )

        elapsed = time.perf_counter() - started
        assert elapsed < 30.0
        report_line("ppo-numerics", started)


@pytest.fixture(scope="session")
def learning_experiment(tmp_path_factory):
    """Train shaped and binary agents on the synthetic world (fixed seed)."""
    root = tmp_path_factory.mktemp("experiment")
    started = time.perf_counter()
    runs = {}
    for mode in ("shaped", "binary"):
        cfg = load_run_config(
            write_experiment_config(root / f"{mode}.ini", root / mode, reward_mode=mode)
        )
        result = train(cfg)
        runs[mode] = {"config": cfg, "result": result}
    runs["elapsed"] = time.perf_counter() - started
    return runs


def moving_average_crossing(log_path: Path, window: int = 50, threshold: float = 0.8):
    solved = [json.loads(line)["solved"] for line in log_path.read_text().splitlines()]
    for i in range(window, len(solved) + 1):
        if sum(solved[i - window : i]) / window > threshold:
            return i
    return None


class TestHermeticLearningExperiment:
    def test_a_policy_prefers_semantic_rewrite_on_initial_states(self, learning_experiment):
        started = time.perf_counter()
        cfg = learning_experiment["shaped"]["config"]
        ck = load_checkpoint(learning_experiment["shaped"]["result"].checkpoint_path)
        corpus = cfg.load_split_corpus()
        embedder = cfg.embedding.to_embedder()
        rewrite_probs = [
            float(policy_forward(ck.params, embedder.embed(task.prompt).values)[0][2])
            for task in corpus.tasks_in(Split.TEST)
        ]
        mean_prob = float(np.mean(rewrite_probs))
        assert mean_prob > 0.8, f"mean P(rewrite | initial state) = {mean_prob:.3f}"
        report_line(f"experiment-a-rewrite-prob ({mean_prob:.3f})", started)

    def test_b_strict_pass_at_1_on_held_out_split(self, learning_experiment):
        started = time.perf_counter()
        cfg = learning_experiment["shaped"]["config"]
        ck = load_checkpoint(learning_experiment["shaped"]["result"].checkpoint_path)
        corpus = cfg.load_split_corpus()
        env = cfg.build_env(cfg.rng_for("eval-env"))
        report, _ = evaluate_policy(
            RefinementPolicy(kind=PolicyKind.PPO, params=ck.params),
            list(corpus.tasks_in(Split.TEST)),
            env,
            step_cap=cfg.eval_step_cap,
            eval_seed=cfg.seed_for("eval"),
            dataset_name=corpus.name,
        )
        assert report.pass_at_1_strict >= 0.9, f"strict = {report.pass_at_1_strict:.3f}"
        learning_experiment["ppo_report"] = report
        report_line(f"experiment-b-strict ({report.pass_at_1_strict:.3f})", started)

    def test_c_ppo_beats_random_hybrid_by_margin(self, learning_experiment):
        started = time.perf_counter()
        cfg = learning_experiment["shaped"]["config"]
        ck = load_checkpoint(learning_experiment["shaped"]["result"].checkpoint_path)
        corpus = cfg.load_split_corpus()
        test_tasks = list(corpus.tasks_in(Split.TEST))
        env_ppo = cfg.build_env(cfg.rng_for("eval-env"))
        ppo_report, _ = evaluate_policy(
            RefinementPolicy(kind=PolicyKind.PPO, params=ck.params),
            test_tasks,
            env_ppo,
            step_cap=cfg.eval_step_cap,
            eval_seed=cfg.seed_for("eval"),
        )
        env_rnd = cfg.build_env(cfg.rng_for("eval-env"))
        random_report, _ = evaluate_policy(
            RefinementPolicy(kind=PolicyKind.RANDOM_HYBRID, seed=cfg.master_seed),
            test_tasks,
            env_rnd,
            step_cap=cfg.eval_step_cap,
            eval_seed=cfg.seed_for("eval"),
        )
        margin = ppo_report.pass_at_1_strict - random_report.pass_at_1_strict
        assert margin >= 0.15, (
            f"ppo {ppo_report.pass_at_1_strict:.3f} vs "
            f"random {random_report.pass_at_1_strict:.3f}"
        )
        report_line(f"experiment-c-margin ({margin:+.3f})", started)

    def test_training_returns_improve_across_quartiles(self, learning_experiment):
        started = time.perf_counter()
        log = learning_experiment["shaped"]["result"].manifest_path.parent / "episodes.jsonl"
        returns = [json.loads(line)["return"] for line in log.read_text().splitlines()]
        quartile = len(returns) // 4
        first = sum(returns[:quartile]) / quartile
        last = sum(returns[-quartile:]) / quartile
        assert last > first, f"first quartile {first:.3f}, last quartile {last:.3f}"
        report_line(f"experiment-returns-improve ({first:.3f} -> {last:.3f})", started)

    def test_d_binary_reward_converges_more_slowly(self, learning_experiment):
        started = time.perf_counter()
        shaped_log = learning_experiment["shaped"]["result"].manifest_path.parent / "episodes.jsonl"
        binary_log = learning_experiment["binary"]["result"].manifest_path.parent / "episodes.jsonl"
        shaped_cross = moving_average_crossing(shaped_log)
        binary_cross = moving_average_crossing(binary_log)
        assert shaped_cross is not None, "shaped mode never crossed the 0.8 moving average"
        assert binary_cross is None or binary_cross > shaped_cross, (
            f"shaped crossed at {shaped_cross}, binary at {binary_cross}"
        )
        assert learning_experiment["elapsed"] < 300.0
        report_line(
            f"experiment-d-convergence (shaped={shaped_cross}, binary={binary_cross})",
            started,
        )


class TestStatisticsConformance:
    def test_effect_sizes_and_tests(self):
        started = time.perf_counter()

        h = cohens_h(0.5758, 0.4189)
        assert 0.27 <= h <= 0.35

        pairs_forward = [(True, False)] * 14 + [(False, True)] * 6 + [(True, True)] * 30
        pairs_swapped = [(b, a) for a, b in pairs_forward]
        assert mcnemar(pairs_forward).p_value == mcnemar(pairs_swapped).p_value
        balanced = [(True, False)] * 9 + [(False, True)] * 9
        assert mcnemar(balanced).p_value == 1.0

        diffs = [0.1] * 8 + [0.2] * 2
        result = paired_t(diffs)
        oracle = t_cdf_tail_quadrature(result.t, result.df)
        assert abs(result.p_value - oracle) <= 1e-6

        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report_line("statistics-conformance", started)


class TestSplitConformance:
    def test_974_task_fixture_splits_deterministically(self):
        started = time.perf_counter()
        corpus = Corpus(
            name="mbpp-shaped",
            tasks=tuple(
                Task(id=f"task{i:04d}", prompt=f"problem {i}", tests=(f"assert f({i})",))
                for i in range(974)
            ),
        )
        spec = SplitSpec(mode=FixedCounts(train_n=374, test_n=500), seed=1234)
        first = split_corpus(corpus, spec)
        assert first.split_counts() == {"train": 374, "test": 500, "validation": 100}
        second = split_corpus(corpus, spec)
        assert [t.split for t in first.tasks] == [t.split for t in second.tasks]
        report_line("split-conformance", started)


class TestDeterminism:
    def test_train_and_evaluate_twice_byte_identical(self, tmp_path):
        started = time.perf_counter()
        artifacts = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            config = write_experiment_config(
                tmp_path / f"{name}.ini", out, reward_mode="shaped"
            )
            cfg = load_run_config(config)
            result = train(cfg)
            ck = load_checkpoint(result.checkpoint_path)
            corpus = cfg.load_split_corpus()
            env = cfg.build_env(cfg.rng_for("eval-env"))
            report, _ = evaluate_policy(
                RefinementPolicy(kind=PolicyKind.PPO, params=ck.params),
                list(corpus.tasks_in(Split.TEST)),
                env,
                step_cap=cfg.eval_step_cap,
                eval_seed=cfg.seed_for("eval"),
                dataset_name=corpus.name,
            )
            artifacts.append(
                (
                    result.checkpoint_path.read_bytes(),
                    report.to_json().encode(),
                    (out / "episodes.jsonl").read_bytes(),
                )
            )
        assert artifacts[0][0] == artifacts[1][0], "checkpoints differ"
        assert artifacts[0][1] == artifacts[1][1], "reports differ"
        assert artifacts[0][2] == artifacts[1][2], "episode logs differ"
        elapsed = time.perf_counter() - started
        assert elapsed < 360.0
        report_line("determinism", started)


class TestSandboxOrchestration:
    def test_fake_executor_conformance_without_children(self, monkeypatch):
        started = time.perf_counter()

        def forbidden(*args, **kwargs):
            raise AssertionError("child process spawned during the hermetic suite")

        monkeypatch.setattr(subprocess, "Popen", forbidden)
        fake = conformance_fake()
        for case in CONFORMANCE_CASES:
            verdict = sandbox_run(case.job, fake)
            expected = expected_verdict(case)
            assert verdict.status == expected.status, case.name
            assert verdict.per_test == expected.per_test, case.name
            assert verdict.failure_kind == expected.failure_kind, case.name
            assert verdict.pass_ratio == pytest.approx(case.expected_pass_ratio), case.name
        report_line("sandbox-fake-conformance", started)
