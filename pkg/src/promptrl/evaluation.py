"""Held-out evaluation protocol and the two headline metrics.

Per task the policy refines for up to T steps; strict success means some
step passed every test, and the soft score 1 - prod(1 - rho_t) credits
partial progress across steps. Infrastructure aborts are excluded from N
and reported separately.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .corpus import Task
from .environment import RefinementEnv
from .errors import EmptyEvaluation, EpisodeAborted
from .policies import RefinementPolicy, choose_action
from .seeding import substream


@dataclass(frozen=True)
class EvalRecord:
    task_id: str
    strict: bool
    soft: float
    steps_used: int
    rho_trace: tuple[float, ...]


@dataclass(frozen=True)
class EvalReport:
    policy_kind: str
    dataset_name: str
    n: int
    pass_at_1_strict: float
    soft_pass_at_1: float
    records: tuple[EvalRecord, ...]
    aborted_task_ids: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        blob = json.loads(text)
        records = tuple(
            EvalRecord(
                task_id=r["task_id"],
                strict=r["strict"],
                soft=r["soft"],
                steps_used=r["steps_used"],
                rho_trace=tuple(r["rho_trace"]),
            )
            for r in blob["records"]
        )
        return cls(
            policy_kind=blob["policy_kind"],
            dataset_name=blob["dataset_name"],
            n=blob["n"],
            pass_at_1_strict=blob["pass_at_1_strict"],
            soft_pass_at_1=blob["soft_pass_at_1"],
            records=records,
            aborted_task_ids=tuple(blob.get("aborted_task_ids", ())),
        )


def trace_scores(rho_trace) -> tuple[bool, float]:
    """Strict flag and soft score for one per-step pass-ratio trace.

    The soft score is 1 - prod_t(1 - rho_t) with the product including the
    full-pass step, after which no further steps contribute.
    """
    remaining_p = 1.0
    strict = False
    for rho in rho_trace:
        remaining_p *= 1.0 - rho
        if rho == 1.0:
            strict = True
            break
    return strict, 1.0 - remaining_p


def strict_pass_at_1(records) -> float:
    """Fraction of tasks where some refinement step passed all tests."""
    records = list(records)
    if not records:
        raise EmptyEvaluation("no evaluation records")
    return sum(1 for r in records if r.strict) / len(records)


def soft_pass_at_1(records) -> float:
    """Mean per-task soft score 1 - prod_t(1 - rho_t)."""
    records = list(records)
    if not records:
        raise EmptyEvaluation("no evaluation records")
    return sum(r.soft for r in records) / len(records)


@dataclass
class TraceEvent:
    """One persisted evaluation transition (JSON-Lines line)."""

    task_id: str
    step: int
    action: int
    log_prob: float | None
    reward: float
    pass_ratio: float
    done: bool
    prompt_after: str
    gen_seed: int
    state: list[float] = field(default_factory=list)


def evaluate_policy(
    policy: RefinementPolicy,
    tasks: list[Task],
    env: RefinementEnv,
    step_cap: int,
    eval_seed: int,
    dataset_name: str = "",
    collect_traces: bool = False,
) -> tuple[EvalReport, dict[str, list[TraceEvent]]]:
    """Run the evaluation protocol over tasks ordered by id.

    The soft-score product is updated at every executed step, including the
    full-pass step just before the break. Each task gets its own RNG
    substream so results do not depend on task interleaving.
    """
    records: list[EvalRecord] = []
    aborted: list[str] = []
    traces: dict[str, list[TraceEvent]] = {}
    for task in sorted(tasks, key=lambda t: t.id):
        task_rng = substream(eval_seed, f"task:{task.id}")
        events: list[TraceEvent] = []
        try:
            state = env.reset(task)
            remaining_p = 1.0
            strict = False
            rho_trace: list[float] = []
            for step in range(1, step_cap + 1):
                action, log_prob = choose_action(policy, state, task_rng)
                outcome = env.step(action)
                remaining_p *= 1.0 - outcome.pass_ratio
                rho_trace.append(outcome.pass_ratio)
                if collect_traces:
                    events.append(
                        TraceEvent(
                            task_id=task.id,
                            step=step,
                            action=int(action),
                            log_prob=log_prob,
                            reward=outcome.reward,
                            pass_ratio=outcome.pass_ratio,
                            done=outcome.done,
                            prompt_after=outcome.prompt_after,
                            gen_seed=outcome.gen_seed,
                            state=[float(x) for x in state],
                        )
                    )
                if outcome.pass_ratio == 1.0:
                    strict = True
                    break
                if outcome.done:
                    break
                state = outcome.next_state
        except EpisodeAborted:
            aborted.append(task.id)
            continue
        records.append(
            EvalRecord(
                task_id=task.id,
                strict=strict,
                soft=1.0 - remaining_p,
                steps_used=len(rho_trace),
                rho_trace=tuple(rho_trace),
            )
        )
        if collect_traces:
            traces[task.id] = events

    if not records:
        raise EmptyEvaluation("every task aborted; nothing to aggregate")
    report = EvalReport(
        policy_kind=policy.kind.value,
        dataset_name=dataset_name,
        n=len(records),
        pass_at_1_strict=strict_pass_at_1(records),
        soft_pass_at_1=soft_pass_at_1(records),
        records=tuple(records),
        aborted_task_ids=tuple(aborted),
    )
    return report, traces
