"""Benchmark task corpora: loading, validation, deterministic splitting.

Task files are JSON-Lines: one object per line with keys ``id``, ``prompt``,
``tests`` and optionally ``entry_point``, ``language_tag``, ``split``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .errors import ParseError, SplitInfeasible, TaskValidationError
from .seeding import rng_from

# Sentinel split seed: keep the corpus file order instead of shuffling.
NO_SHUFFLE_SEED = (1 << 64) - 1


class Split(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class Task:
    """One programming problem: prompt text, assertion tests, entry point."""

    id: str
    prompt: str
    tests: tuple[str, ...]
    entry_point: str | None = None
    split: Split = Split.TRAIN
    language_tag: str = "python"

    def __post_init__(self):
        if not self.id:
            raise TaskValidationError("<missing>", "id must be a non-empty string")
        if not self.prompt.strip():
            raise TaskValidationError(self.id, "prompt is empty after trimming")
        if len(self.tests) == 0:
            raise TaskValidationError(self.id, "tests must be non-empty")
        if not all(isinstance(t, str) and t.strip() for t in self.tests):
            raise TaskValidationError(self.id, "every test must be a non-empty string")


@dataclass(frozen=True)
class FixedCounts:
    train_n: int
    test_n: int


@dataclass(frozen=True)
class Fractional:
    train_frac: float

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError(f"train_frac must be in (0, 1), got {self.train_frac}")


@dataclass(frozen=True)
class SplitSpec:
    mode: FixedCounts | Fractional
    seed: int


@dataclass(frozen=True)
class Corpus:
    name: str
    tasks: tuple[Task, ...]
    split_spec: SplitSpec | None = None

    def __len__(self) -> int:
        return len(self.tasks)

    def split_counts(self) -> dict[str, int]:
        counts = {s.value: 0 for s in Split}
        for task in self.tasks:
            counts[task.split.value] += 1
        return counts

    def tasks_in(self, split: Split) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.split == split)


def _task_from_record(record: dict, line_no: int) -> Task:
    if not isinstance(record, dict):
        raise ParseError(line_no, "record is not a JSON object")
    task_id = record.get("id")
    if not isinstance(task_id, str) or not task_id:
        raise TaskValidationError(f"<line {line_no}>", "missing or invalid 'id'")
    for key in ("prompt", "tests"):
        if key not in record:
            raise TaskValidationError(task_id, f"missing required field '{key}'")
    prompt = record["prompt"]
    tests = record["tests"]
    if not isinstance(prompt, str):
        raise TaskValidationError(task_id, "'prompt' must be a string")
    if not isinstance(tests, list):
        raise TaskValidationError(task_id, "'tests' must be a list of strings")
    split_name = record.get("split", "train")
    try:
        split = Split(split_name)
    except ValueError:
        raise TaskValidationError(task_id, f"unknown split tag {split_name!r}") from None
    return Task(
        id=task_id,
        prompt=prompt,
        tests=tuple(tests),
        entry_point=record.get("entry_point"),
        split=split,
        language_tag=record.get("language_tag", "python"),
    )


def load_corpus(path: str | Path, fmt: str = "jsonl") -> Corpus:
    """Load and validate a JSON-Lines task file.

    Raises OSError if the file is unreadable, ParseError with the offending
    line number for malformed JSON, and TaskValidationError naming the task
    for invariant violations (including duplicate ids).
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported corpus format {fmt!r}")
    path = Path(path)
    tasks: list[Task] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, str(exc)) from exc
            task = _task_from_record(record, line_no)
            if task.id in seen_ids:
                raise TaskValidationError(task.id, "duplicate id in corpus")
            seen_ids.add(task.id)
            tasks.append(task)
    return Corpus(name=path.stem, tasks=tuple(tasks))


def split_corpus(corpus: Corpus, spec: SplitSpec) -> Corpus:
    """Assign every task to exactly one split, deterministically in the seed.

    FixedCounts tags the first train_n shuffled tasks Train, the next test_n
    Test, and the remainder Validation. Fractional tags floor(frac * total)
    Train and the rest Test. The seed NO_SHUFFLE_SEED keeps file order.
    """
    total = len(corpus.tasks)
    order = list(range(total))
    if spec.seed != NO_SHUFFLE_SEED:
        order = list(rng_from(spec.seed).permutation(total))

    if isinstance(spec.mode, FixedCounts):
        train_n, test_n = spec.mode.train_n, spec.mode.test_n
        if train_n < 0 or test_n < 0 or train_n + test_n > total:
            raise SplitInfeasible(
                f"FixedCounts({train_n}, {test_n}) infeasible for {total} tasks"
            )
    elif isinstance(spec.mode, Fractional):
        train_n = int(spec.mode.train_frac * total)
        test_n = total - train_n
    else:
        raise TypeError(f"unknown split mode {spec.mode!r}")

    assignment: dict[int, Split] = {}
    for rank, idx in enumerate(order):
        if rank < train_n:
            assignment[idx] = Split.TRAIN
        elif rank < train_n + test_n:
            assignment[idx] = Split.TEST
        else:
            assignment[idx] = Split.VALIDATION

    tasks = tuple(
        replace(task, split=assignment[i]) for i, task in enumerate(corpus.tasks)
    )
    return Corpus(name=corpus.name, tasks=tasks, split_spec=spec)


_STRING_LITERAL_RE = re.compile(r"('[^']*'|\"[^\"]*\")")
_CALL_TARGET_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(")


def extract_keywords(task: Task) -> set[str]:
    """Identifiers a rewritten prompt must preserve.

    The entry point (when present) plus every identifier called in the test
    assertions, found by the conservative rule "name followed by '('" with
    quoted literals excluded.
    """
    keywords: set[str] = set()
    if task.entry_point:
        keywords.add(task.entry_point)
    for test in task.tests:
        without_literals = _STRING_LITERAL_RE.sub("", test)
        keywords.update(_CALL_TARGET_RE.findall(without_literals))
    return keywords
