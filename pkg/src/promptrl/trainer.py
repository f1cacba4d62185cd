"""Training loop: collect on-policy episodes, update with PPO, checkpoint.

Tasks are sampled uniformly without replacement within an epoch over the
train split. Updates run on a fixed episode cadence; aborted episodes are
excluded from the batches. Everything is reproducible from the config and
master seed.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .corpus import Split, Task
from .environment import RewardMode
from .errors import (
    AuthMissing,
    BackendTimeout,
    BackendUnavailable,
    ConfigError,
    EpisodeAborted,
)
from .ppo import (
    Batch,
    init_params,
    load_checkpoint,
    policy_forward,
    ppo_update,
    sample_action,
    save_checkpoint,
)


class TaskSampler:
    """Uniform without replacement within an epoch, reshuffling per epoch."""

    def __init__(self, n_tasks: int, rng: np.random.Generator, queue: list[int] | None = None):
        self.n_tasks = n_tasks
        self.rng = rng
        self.queue: list[int] = list(queue) if queue is not None else []

    def next_index(self) -> int:
        if not self.queue:
            self.queue = [int(i) for i in self.rng.permutation(self.n_tasks)]
        return self.queue.pop(0)


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


@dataclass
class TrainResult:
    manifest_path: Path
    checkpoint_path: Path
    episodes_done: int
    halted: bool = False


def _write_manifest(
    out_dir: Path,
    cfg: RunConfig,
    started_at: float,
    status: str,
    episodes_done: int,
    artifacts: list[str],
) -> Path:
    manifest_path = out_dir / "manifest.json"
    config_bytes = cfg.config_path.read_bytes()
    manifest = {
        "status": status,
        "episodes_done": episodes_done,
        "config_hash": hashlib.sha256(config_bytes).hexdigest(),
        "config_echo": cfg.raw_echo,
        "started_at": started_at,
        "finished_at": time.time(),
        "artifacts": sorted(set(artifacts + ["manifest.json"])),
    }
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest_path


def train(cfg: RunConfig, resume: str | Path | None = None) -> TrainResult:
    """Run the training loop to cfg.episodes and return the manifest path.

    A fatal backend outage checkpoints, writes a halted manifest, and
    re-raises so the caller can exit with the backend error code.
    """
    if cfg.episodes is None:
        raise ConfigError("[run] episodes is required for training")
    corpus = cfg.load_split_corpus()
    train_tasks: tuple[Task, ...] = corpus.tasks_in(Split.TRAIN)
    if not train_tasks and cfg.episodes > 0:
        raise ConfigError("training split is empty")

    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []

    sampling_rng = cfg.rng_for("sampling")
    action_rng = cfg.rng_for("policy-sample")
    update_rng = cfg.rng_for("ppo-update")
    env_rng = cfg.rng_for("env")

    if resume is not None:
        ck = load_checkpoint(resume)
        params = ck.params
        start_episode = ck.episode_counter
        states = ck.rng_states
        _set_rng_state(sampling_rng, states["sampling"])
        _set_rng_state(action_rng, states["policy-sample"])
        _set_rng_state(update_rng, states["ppo-update"])
        _set_rng_state(env_rng, states["env"])
        sampler = TaskSampler(len(train_tasks), sampling_rng, queue=states.get("sampler_queue"))
        log_mode = "a"
    else:
        params = init_params(cfg.embedding.dim, cfg.rng_for("policy-init"))
        start_episode = 0
        sampler = TaskSampler(len(train_tasks), sampling_rng)
        log_mode = "w"

    env = cfg.build_env(env_rng)
    log_path = out_dir / "episodes.jsonl"
    artifacts.append("episodes.jsonl")
    started_at = time.time()

    def snapshot_states() -> dict:
        return {
            "sampling": _rng_state(sampling_rng),
            "policy-sample": _rng_state(action_rng),
            "ppo-update": _rng_state(update_rng),
            "env": _rng_state(env_rng),
            "sampler_queue": list(sampler.queue),
        }

    def dump_checkpoint(name: str, episode_counter: int) -> Path:
        path = out_dir / name
        save_checkpoint(path, params, cfg.ppo, snapshot_states(), episode_counter)
        if name not in artifacts:
            artifacts.append(name)
        return path

    pending: list[tuple] = []
    episodes_in_window = 0
    episode = start_episode

    def flush_update() -> None:
        nonlocal params, pending, episodes_in_window
        if not pending:
            episodes_in_window = 0
            return
        batch = Batch.from_transitions(
            states=[t[0] for t in pending],
            actions=[t[1] for t in pending],
            log_probs=[t[2] for t in pending],
            rewards=[t[3] for t in pending],
            values=[t[4] for t in pending],
            dones=[t[5] for t in pending],
            cfg=cfg.ppo,
        )
        params = ppo_update(params, batch, cfg.ppo, update_rng)
        pending = []
        episodes_in_window = 0

    with log_path.open(log_mode, encoding="utf-8") as log:
        try:
            while episode < cfg.episodes:
                task = train_tasks[sampler.next_index()]
                record = {
                    "episode": episode,
                    "task_id": task.id,
                    "aborted": False,
                    "solved": False,
                    "steps": 0,
                    "return": 0.0,
                    "final_rho": 0.0,
                }
                try:
                    state = env.reset(task)
                    transitions = []
                    while True:
                        probs, value = policy_forward(params, state)
                        action, log_prob = sample_action(probs, action_rng)
                        outcome = env.step(action)
                        transitions.append(
                            (
                                state,
                                int(action),
                                log_prob,
                                outcome.reward,
                                value,
                                1.0 if outcome.done else 0.0,
                            )
                        )
                        state = outcome.next_state
                        if outcome.done:
                            record["solved"] = outcome.pass_ratio == 1.0
                            record["final_rho"] = outcome.pass_ratio
                            break
                    pending.extend(transitions)
                    record["steps"] = len(transitions)
                    record["return"] = float(sum(t[3] for t in transitions))
                    episodes_in_window += 1
                except EpisodeAborted as exc:
                    record["aborted"] = True
                    record["diagnostic"] = str(exc)
                episode += 1
                log.write(json.dumps(record, sort_keys=True) + "\n")
                if episodes_in_window >= cfg.ppo.update_every_episodes:
                    flush_update()
                if cfg.checkpoint_interval > 0 and episode % cfg.checkpoint_interval == 0:
                    dump_checkpoint(f"checkpoint_ep{episode:06d}.json", episode)
        except (BackendUnavailable, BackendTimeout, AuthMissing):
            log.flush()
            dump_checkpoint("checkpoint_halt.json", episode)
            _write_manifest(out_dir, cfg, started_at, "halted", episode, artifacts)
            raise

        flush_update()

    final_path = dump_checkpoint("checkpoint_final.json", episode)
    manifest_path = _write_manifest(
        out_dir, cfg, started_at, "completed", episode, artifacts
    )
    return TrainResult(
        manifest_path=manifest_path,
        checkpoint_path=final_path,
        episodes_done=episode,
        halted=False,
    )
