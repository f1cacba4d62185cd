"""Sandboxed execution of one candidate program against assertion tests.

A job runs either in an isolated child process speaking a one-shot JSON
protocol over stdin/stdout, or through an in-process fake (a pure rule
table) so the rest of the system can be tested hermetically.

Child-process wire protocol (bit-exact):
  orchestrator -> child stdin : {"code": str, "tests": [str], "entry_point": str|null}
  child stdout -> orchestrator: {"status": "ok"|"syntax_error"|"load_error",
                                 "results": [bool], "error": str}
Any deviation is classified as a HarnessError verdict.
"""
from __future__ import annotations

import json
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import EmptyTests, SpawnError

_TIMEOUT_GRACE_MS = 1000
_DIAG_LIMIT = 4096


class VerdictStatus(Enum):
    EXECUTED = "executed"
    EXECUTION_FAILURE = "execution_failure"


class FailureKind(Enum):
    SYNTAX_ERROR = "syntax_error"
    RUNTIME_CRASH = "runtime_crash"
    TIMEOUT = "timeout"
    HARNESS_ERROR = "harness_error"


@dataclass(frozen=True)
class SandboxJob:
    code: str
    tests: tuple[str, ...]
    timeout_ms: int = 5000
    entry_point: str | None = None

    def __post_init__(self):
        if len(self.tests) == 0:
            raise EmptyTests("a sandbox job needs at least one test")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


@dataclass(frozen=True)
class SandboxVerdict:
    status: VerdictStatus
    pass_ratio: float
    per_test: tuple[bool, ...] | None = None
    failure_kind: FailureKind | None = None
    diagnostics: str = ""

    @classmethod
    def executed(cls, per_test: tuple[bool, ...], diagnostics: str = "") -> "SandboxVerdict":
        return cls(
            status=VerdictStatus.EXECUTED,
            pass_ratio=pass_ratio(per_test),
            per_test=tuple(per_test),
            diagnostics=diagnostics,
        )

    @classmethod
    def failure(cls, kind: FailureKind, diagnostics: str = "") -> "SandboxVerdict":
        return cls(
            status=VerdictStatus.EXECUTION_FAILURE,
            pass_ratio=0.0,
            failure_kind=kind,
            diagnostics=diagnostics,
        )

    @property
    def is_executed(self) -> bool:
        return self.status == VerdictStatus.EXECUTED

    @property
    def passed_count(self) -> int:
        return sum(self.per_test) if self.per_test is not None else 0


def pass_ratio(per_test) -> float:
    """Fraction of tests passed: count/len as an exact rational in binary."""
    per_test = list(per_test)
    if not per_test:
        raise EmptyTests("pass_ratio over an empty test list")
    return sum(bool(x) for x in per_test) / len(per_test)


@dataclass(frozen=True)
class FakeRule:
    """Outcome the in-process fake assigns to one exact code string."""

    passing_tests: frozenset[str] = frozenset()
    failure: FailureKind | None = None


@dataclass(frozen=True)
class InProcessFake:
    """Pure executor: verdicts come from a code-keyed rule table, no processes."""

    rule_table: dict[str, FakeRule] = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "InProcessFake":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        table: dict[str, FakeRule] = {}
        for entry in data["entries"]:
            if "failure" in entry:
                rule = FakeRule(failure=FailureKind(entry["failure"]))
            else:
                rule = FakeRule(passing_tests=frozenset(entry["passing"]))
            table[entry["code"]] = rule
        return cls(rule_table=table)


@dataclass(frozen=True)
class ChildProcess:
    interpreter_path: str
    harness_path: str


Executor = InProcessFake | ChildProcess


def _run_fake(job: SandboxJob, fake: InProcessFake) -> SandboxVerdict:
    rule = fake.rule_table.get(job.code)
    if rule is None:
        return SandboxVerdict.failure(
            FailureKind.RUNTIME_CRASH, "no fake rule for candidate code"
        )
    if rule.failure is not None:
        return SandboxVerdict.failure(rule.failure, f"fake {rule.failure.value}")
    per_test = tuple(t in rule.passing_tests for t in job.tests)
    return SandboxVerdict.executed(per_test)


def _run_child(job: SandboxJob, child: ChildProcess) -> SandboxVerdict:
    interpreter = Path(child.interpreter_path)
    harness = Path(child.harness_path)
    if not harness.exists():
        raise SpawnError(f"harness not found: {harness}")
    payload = json.dumps(
        {"code": job.code, "tests": list(job.tests), "entry_point": job.entry_point}
    )
    try:
        proc = subprocess.Popen(
            [str(interpreter), str(harness)],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        raise SpawnError(f"cannot start sandbox child: {exc}") from exc

    wall_budget_s = (job.timeout_ms + _TIMEOUT_GRACE_MS) / 1000.0
    try:
        stdout, stderr = proc.communicate(payload, timeout=wall_budget_s)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()
        return SandboxVerdict.failure(
            FailureKind.TIMEOUT, f"killed after {job.timeout_ms} ms + grace"
        )
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()

    diagnostics = (stderr or "")[:_DIAG_LIMIT]
    if proc.returncode != 0:
        return SandboxVerdict.failure(
            FailureKind.HARNESS_ERROR, f"harness exit {proc.returncode}: {diagnostics}"
        )
    try:
        report = json.loads(stdout)
        status = report["status"]
        error = report.get("error", "")
    except (json.JSONDecodeError, TypeError, KeyError):
        return SandboxVerdict.failure(
            FailureKind.HARNESS_ERROR, f"malformed harness output: {stdout[:200]!r}"
        )
    if status == "ok":
        results = report.get("results")
        if not isinstance(results, list) or len(results) != len(job.tests):
            return SandboxVerdict.failure(
                FailureKind.HARNESS_ERROR, "result count does not match test count"
            )
        return SandboxVerdict.executed(tuple(bool(r) for r in results), diagnostics=error)
    if status == "syntax_error":
        return SandboxVerdict.failure(FailureKind.SYNTAX_ERROR, error)
    if status == "load_error":
        return SandboxVerdict.failure(FailureKind.RUNTIME_CRASH, error)
    return SandboxVerdict.failure(FailureKind.HARNESS_ERROR, f"unknown status {status!r}")


def run(job: SandboxJob, executor: Executor) -> SandboxVerdict:
    """Execute one job and classify the outcome.

    Child processes are always reaped; the wall clock is bounded by
    timeout_ms plus a fixed grace before a kill. SpawnError is raised (not
    returned as a verdict) because it signals host misconfiguration.
    """
    if isinstance(executor, InProcessFake):
        return _run_fake(job, executor)
    return _run_child(job, executor)


def run_many(jobs, executor: Executor, workers: int = 1) -> list[SandboxVerdict]:
    """Run jobs preserving order, optionally through a bounded worker pool."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [run(job, executor) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: run(j, executor), jobs))
