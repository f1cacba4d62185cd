"""Shared sandbox conformance fixtures.

The same jobs and expected verdicts are asserted against the in-process
fake (hermetic suite) and against the real child-process harness, so the
two executors are provably interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass

from .sandbox import FailureKind, FakeRule, InProcessFake, SandboxJob, SandboxVerdict

_IDENTITY_CODE = "def f(x):\n    return x"

# Candidate from the partial-pass stage of a refinement trajectory: it keeps
# any length-k element, so a length-2 string sneaks past and one test fails.
_FIND_TUPLES_PARTIAL = (
    "def find_tuples(tup, k):\n    return [x for x in tup if len(x) == k]"
)
_FIND_TUPLES_FULL = (
    "def find_tuples(tup, k):\n"
    "    return [x for x in tup if isinstance(x, tuple) and len(x) == k]"
)
_FIND_TUPLES_TESTS = (
    "assert find_tuples([(1, 2), (3, 4, 5)], 2) == [(1, 2)]",
    "assert find_tuples([], 1) == []",
    "assert find_tuples([(1, 2), 'ab'], 2) == [(1, 2)]",
)

_SYNTAX_ERROR_CODE = "def f(:\n    pass"
_LOAD_CRASH_CODE = "raise RuntimeError('boom at import time')"
_SPIN_CODE = "def f(x):\n    while True:\n        pass\n    return x"


@dataclass(frozen=True)
class ConformanceCase:
    name: str
    job: SandboxJob
    expect_status_executed: bool
    expect_per_test: tuple[bool, ...] | None = None
    expect_failure_kind: FailureKind | None = None

    @property
    def expected_pass_ratio(self) -> float:
        if not self.expect_status_executed:
            return 0.0
        return sum(self.expect_per_test) / len(self.expect_per_test)


CONFORMANCE_CASES: tuple[ConformanceCase, ...] = (
    ConformanceCase(
        name="identity_pass",
        job=SandboxJob(code=_IDENTITY_CODE, tests=("assert f(1) == 1",)),
        expect_status_executed=True,
        expect_per_test=(True,),
    ),
    ConformanceCase(
        name="forced_assert_failure",
        job=SandboxJob(code=_IDENTITY_CODE, tests=("assert f(1) == 2",)),
        expect_status_executed=True,
        expect_per_test=(False,),
    ),
    ConformanceCase(
        name="syntax_error",
        job=SandboxJob(code=_SYNTAX_ERROR_CODE, tests=("assert True",)),
        expect_status_executed=False,
        expect_failure_kind=FailureKind.SYNTAX_ERROR,
    ),
    ConformanceCase(
        name="load_time_crash",
        job=SandboxJob(code=_LOAD_CRASH_CODE, tests=("assert True",)),
        expect_status_executed=False,
        expect_failure_kind=FailureKind.RUNTIME_CRASH,
    ),
    ConformanceCase(
        name="partial_two_of_three",
        job=SandboxJob(code=_FIND_TUPLES_PARTIAL, tests=_FIND_TUPLES_TESTS),
        expect_status_executed=True,
        expect_per_test=(True, True, False),
    ),
    ConformanceCase(
        name="full_three_of_three",
        job=SandboxJob(code=_FIND_TUPLES_FULL, tests=_FIND_TUPLES_TESTS),
        expect_status_executed=True,
        expect_per_test=(True, True, True),
    ),
    ConformanceCase(
        name="timeout_kill",
        job=SandboxJob(
            code=_SPIN_CODE, tests=("assert f(1) == 1",), timeout_ms=500
        ),
        expect_status_executed=False,
        expect_failure_kind=FailureKind.TIMEOUT,
    ),
)


def conformance_fake() -> InProcessFake:
    """Fake executor whose rule table mirrors the real verdicts above."""
    table: dict[str, FakeRule] = {}
    for case in CONFORMANCE_CASES:
        if not case.expect_status_executed:
            table[case.job.code] = FakeRule(failure=case.expect_failure_kind)
        else:
            passing = frozenset(
                t for t, ok in zip(case.job.tests, case.expect_per_test) if ok
            )
            existing = table.get(case.job.code)
            if existing is not None and existing.failure is None:
                passing = passing | existing.passing_tests
            table[case.job.code] = FakeRule(passing_tests=passing)
    return InProcessFake(rule_table=table)


def expected_verdict(case: ConformanceCase) -> SandboxVerdict:
    if case.expect_status_executed:
        return SandboxVerdict.executed(case.expect_per_test)
    return SandboxVerdict.failure(case.expect_failure_kind)
