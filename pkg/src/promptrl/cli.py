"""Command-line front door: train / evaluate / compare / corpus / replay.

Exit codes: 0 success, 2 configuration error, 3 backend error,
4 evaluation mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_run_config
from .corpus import Split, load_corpus
from .environment import RewardMode, binary_reward, shaped_reward
from .errors import (
    BackendError,
    CheckpointIncompatible,
    ConfigError,
    PromptRlError,
    SpawnError,
    TaskSetMismatch,
)
from .evaluation import EvalReport, evaluate_policy
from .gateway import GenRequest, Role, extract_code, generate
from .policies import PolicyKind, RefinementPolicy
from .ppo import load_checkpoint
from .sandbox import SandboxJob, run
from .stats import cohens_d, cohens_h, mcnemar, paired_t
from .trainer import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_MISMATCH = 4


def cmd_train(config_path: str, resume: str | None = None) -> Path:
    cfg = load_run_config(config_path)
    result = train(cfg, resume=resume)
    print(f"trained {result.episodes_done} episodes -> {result.manifest_path}")
    return result.manifest_path


def cmd_evaluate(
    config_path: str, policy_name: str | None = None, checkpoint: str | None = None
) -> Path:
    cfg = load_run_config(config_path)
    policy_name = policy_name or cfg.policy
    try:
        kind = PolicyKind(policy_name)
    except ValueError:
        raise ConfigError(f"unknown policy kind {policy_name!r}") from None

    params = None
    if kind == PolicyKind.PPO:
        if checkpoint is None:
            raise ConfigError("evaluating the ppo policy requires --checkpoint")
        ck = load_checkpoint(checkpoint)
        if ck.params.dim != cfg.embedding.dim:
            raise CheckpointIncompatible(
                f"checkpoint dim {ck.params.dim} != configured dim {cfg.embedding.dim}"
            )
        params = ck.params
    policy = RefinementPolicy(kind=kind, params=params, seed=cfg.master_seed)

    corpus = cfg.load_split_corpus()
    test_tasks = list(corpus.tasks_in(Split.TEST))
    if not test_tasks:
        raise ConfigError("test split is empty")
    env = cfg.build_env(cfg.rng_for("eval-env"))
    report, traces = evaluate_policy(
        policy,
        test_tasks,
        env,
        step_cap=cfg.eval_step_cap,
        eval_seed=cfg.seed_for("eval"),
        dataset_name=corpus.name,
        collect_traces=True,
    )

    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"report_{kind.value}.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    trace_dir = out_dir / f"traces_{kind.value}"
    trace_dir.mkdir(exist_ok=True)
    for task_id, events in traces.items():
        trace_path = trace_dir / f"{task_id}.jsonl"
        with trace_path.open("w", encoding="utf-8") as fh:
            for event in events:
                fh.write(json.dumps(event.__dict__, sort_keys=True) + "\n")
    print(
        json.dumps(
            {
                "policy": kind.value,
                "n": report.n,
                "pass_at_1_strict": report.pass_at_1_strict,
                "soft_pass_at_1": report.soft_pass_at_1,
                "aborted": len(report.aborted_task_ids),
                "report": str(report_path),
            },
            sort_keys=True,
        )
    )
    return report_path


def compare_reports(report_a: EvalReport, report_b: EvalReport) -> dict:
    ids_a = {r.task_id for r in report_a.records}
    ids_b = {r.task_id for r in report_b.records}
    if ids_a != ids_b:
        raise TaskSetMismatch(
            f"reports cover different tasks ({len(ids_a ^ ids_b)} ids differ)"
        )
    by_id_a = {r.task_id: r for r in report_a.records}
    by_id_b = {r.task_id: r for r in report_b.records}
    ordered = sorted(ids_a)
    strict_pairs = [(by_id_a[i].strict, by_id_b[i].strict) for i in ordered]
    soft_diffs = [by_id_a[i].soft - by_id_b[i].soft for i in ordered]

    mc = mcnemar(strict_pairs)
    h = cohens_h(report_a.pass_at_1_strict, report_b.pass_at_1_strict)
    t_res = paired_t(soft_diffs)
    try:
        d = cohens_d(soft_diffs)
    except PromptRlError:
        d = None
    return {
        "method_a": report_a.policy_kind,
        "method_b": report_b.policy_kind,
        "n": len(ordered),
        "delta_strict": report_a.pass_at_1_strict - report_b.pass_at_1_strict,
        "delta_soft": report_a.soft_pass_at_1 - report_b.soft_pass_at_1,
        "mcnemar": {
            "b": mc.b,
            "c": mc.c,
            "statistic": mc.statistic,
            "p_value": mc.p_value,
            "method": mc.method.value,
        },
        "cohens_h": h,
        "paired_t": {
            "t": None if t_res.degenerate and t_res.t != 0.0 else t_res.t,
            "df": t_res.df,
            "p_value": t_res.p_value,
            "degenerate": t_res.degenerate,
        },
        "cohens_d": d,
    }


def _format_comparison(table: dict) -> str:
    rows = [
        ("pair", f"{table['method_a']} vs {table['method_b']} (n={table['n']})"),
        ("delta strict", f"{table['delta_strict']:+.4f}"),
        ("delta soft", f"{table['delta_soft']:+.4f}"),
        (
            "mcnemar",
            "b={b} c={c} stat={statistic:.4f} p={p_value:.3g} ({method})".format(
                **table["mcnemar"]
            ),
        ),
        ("cohens h", f"{table['cohens_h']:+.4f}"),
        (
            "paired t",
            "t={t} df={df} p={p_value:.3g}{deg}".format(
                t="n/a" if table["paired_t"]["t"] is None else f"{table['paired_t']['t']:.4f}",
                df=table["paired_t"]["df"],
                p_value=table["paired_t"]["p_value"],
                deg=" (degenerate)" if table["paired_t"]["degenerate"] else "",
            ),
        ),
        (
            "cohens d",
            "n/a" if table["cohens_d"] is None else f"{table['cohens_d']:+.4f}",
        ),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def cmd_compare(path_a: str, path_b: str) -> dict:
    report_a = EvalReport.from_json(Path(path_a).read_text(encoding="utf-8"))
    report_b = EvalReport.from_json(Path(path_b).read_text(encoding="utf-8"))
    table = compare_reports(report_a, report_b)
    print(json.dumps(table, sort_keys=True))
    print(_format_comparison(table))
    return table


def cmd_corpus_inspect(path: str) -> dict:
    corpus = load_corpus(path)
    summary = {
        "name": corpus.name,
        "total": len(corpus),
        "splits": corpus.split_counts(),
    }
    print(json.dumps(summary, sort_keys=True))
    return summary


def cmd_replay(trace_path: str, config_path: str) -> int:
    """Re-run a persisted trace through the configured pipeline; count mismatches."""
    cfg: RunConfig = load_run_config(config_path)
    corpus = cfg.load_split_corpus()
    tasks = {t.id: t for t in corpus.tasks}
    executor = cfg.sandbox.to_executor()
    generator = cfg.generator.to_backend()
    mismatches = 0
    total = 0
    with Path(trace_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            event = json.loads(line)
            task = tasks.get(event["task_id"])
            if task is None:
                raise ConfigError(f"trace references unknown task {event['task_id']!r}")
            response = generate(
                GenRequest(
                    role=Role.CODE_GENERATOR,
                    prompt=event["prompt_after"],
                    decoding=cfg.env.decoding,
                    seed=event["gen_seed"],
                ),
                generator,
            )
            code = extract_code(response.raw_text, task.entry_point)
            verdict = run(
                SandboxJob(
                    code=code,
                    tests=task.tests,
                    timeout_ms=cfg.env.timeout_ms,
                    entry_point=task.entry_point,
                ),
                executor,
            )
            if cfg.env.reward_mode == RewardMode.BINARY:
                reward = binary_reward(verdict)
            else:
                reward = shaped_reward(verdict)
            ok = reward == event["reward"] and verdict.pass_ratio == event["pass_ratio"]
            total += 1
            if not ok:
                mismatches += 1
                print(
                    f"step {event['step']}: expected reward {event['reward']} "
                    f"rho {event['pass_ratio']}, got {reward} rho {verdict.pass_ratio}"
                )
    print(json.dumps({"steps": total, "mismatches": mismatches}, sort_keys=True))
    return mismatches


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptrl")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")

    p_eval = sub.add_parser("evaluate", help="evaluate a policy on the test split")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument(
        "--policy", default=None, choices=["ppo", "direct", "ga", "rewrite", "random"]
    )
    p_eval.add_argument("--checkpoint", default=None)

    p_cmp = sub.add_parser("compare", help="significance table for two reports")
    p_cmp.add_argument("report_a")
    p_cmp.add_argument("report_b")

    p_corpus = sub.add_parser("corpus", help="corpus utilities")
    corpus_sub = p_corpus.add_subparsers(dest="corpus_command", required=True)
    p_inspect = corpus_sub.add_parser("inspect", help="print split counts as JSON")
    p_inspect.add_argument("path")

    p_replay = sub.add_parser("replay", help="re-run a persisted episode trace")
    p_replay.add_argument("trace")
    p_replay.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cmd_train(args.config, resume=args.resume)
        elif args.command == "evaluate":
            cmd_evaluate(args.config, policy_name=args.policy, checkpoint=args.checkpoint)
        elif args.command == "compare":
            cmd_compare(args.report_a, args.report_b)
        elif args.command == "corpus":
            cmd_corpus_inspect(args.path)
        elif args.command == "replay":
            if cmd_replay(args.trace, args.config) > 0:
                return EXIT_MISMATCH
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, SpawnError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (TaskSetMismatch, CheckpointIncompatible) as exc:
        print(f"evaluation mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, PromptRlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
