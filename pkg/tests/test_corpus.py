from __future__ import annotations

import json
from collections import Counter

import pytest

from promptrl.corpus import (
    NO_SHUFFLE_SEED,
    Corpus,
    FixedCounts,
    Fractional,
    Split,
    SplitSpec,
    Task,
    extract_keywords,
    load_corpus,
    split_corpus,
)
from promptrl.errors import ParseError, SplitInfeasible, TaskValidationError


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


def record(i, **overrides):
    base = {
        "id": f"task-{i:03d}",
        "prompt": f"Write a function number {i}",
        "tests": [f"assert f({i}) == {i}"],
        "entry_point": "f",
    }
    base.update(overrides)
    return base


class TestLoadCorpus:
    def test_three_well_formed_records(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(i) for i in range(3)])
        corpus = load_corpus(path)
        assert len(corpus) == 3
        assert [t.id for t in corpus.tasks] == ["task-000", "task-001", "task-002"]

    def test_missing_tests_field_names_the_id(self, tmp_path):
        bad = record(0)
        del bad["tests"]
        path = write_jsonl(tmp_path / "c.jsonl", [bad])
        with pytest.raises(TaskValidationError) as err:
            load_corpus(path)
        assert "task-000" in str(err.value)

    def test_figure_fixture_has_three_tests(self, figure_corpus_path):
        corpus = load_corpus(figure_corpus_path)
        task = next(t for t in corpus.tasks if t.id == "fig-find-tuples")
        assert len(task.tests) == 3
        assert task.prompt.startswith("Write a function to find all tuples")

    def test_malformed_json_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(record(0)) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(ParseError) as err:
            load_corpus(path)
        assert err.value.line_no == 2

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(0), record(0)])
        with pytest.raises(TaskValidationError):
            load_corpus(path)

    def test_empty_prompt_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(0, prompt="   ")])
        with pytest.raises(TaskValidationError):
            load_corpus(path)

    def test_empty_tests_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(0, tests=[])])
        with pytest.raises(TaskValidationError):
            load_corpus(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_corpus(tmp_path / "nope.jsonl")


def make_corpus(n):
    return Corpus(
        name="synthetic",
        tasks=tuple(
            Task(id=f"t{i:04d}", prompt=f"prompt {i}", tests=(f"assert f({i})",))
            for i in range(n)
        ),
    )


class TestSplitCorpus:
    def test_fixed_counts_paper_shape(self):
        corpus = make_corpus(974)
        out = split_corpus(corpus, SplitSpec(mode=FixedCounts(374, 500), seed=11))
        assert out.split_counts() == {"train": 374, "test": 500, "validation": 100}

    def test_fractional_eight_two(self):
        corpus = make_corpus(10)
        out = split_corpus(corpus, SplitSpec(mode=Fractional(0.8), seed=3))
        assert out.split_counts() == {"train": 8, "test": 2, "validation": 0}

    def test_same_seed_identical_assignment(self):
        corpus = make_corpus(97)
        spec = SplitSpec(mode=FixedCounts(40, 30), seed=1234)
        first = {t.id: t.split for t in split_corpus(corpus, spec).tasks}
        second = {t.id: t.split for t in split_corpus(corpus, spec).tasks}
        assert first == second

    def test_different_seeds_differ(self):
        corpus = make_corpus(97)
        a = {t.id: t.split for t in split_corpus(corpus, SplitSpec(FixedCounts(40, 30), 1)).tasks}
        b = {t.id: t.split for t in split_corpus(corpus, SplitSpec(FixedCounts(40, 30), 2)).tasks}
        assert a != b

    def test_partition_property(self):
        corpus = make_corpus(53)
        out = split_corpus(corpus, SplitSpec(mode=FixedCounts(20, 20), seed=7))
        assert sorted(t.id for t in out.tasks) == sorted(t.id for t in corpus.tasks)
        counts = Counter(t.split for t in out.tasks)
        assert sum(counts.values()) == 53

    def test_no_shuffle_sentinel_keeps_order(self):
        corpus = make_corpus(10)
        out = split_corpus(corpus, SplitSpec(mode=FixedCounts(6, 3), seed=NO_SHUFFLE_SEED))
        splits = [t.split for t in out.tasks]
        assert splits == [Split.TRAIN] * 6 + [Split.TEST] * 3 + [Split.VALIDATION]

    def test_infeasible_counts(self):
        with pytest.raises(SplitInfeasible):
            split_corpus(make_corpus(5), SplitSpec(mode=FixedCounts(4, 4), seed=0))

    def test_fractional_validates_range(self):
        with pytest.raises(ValueError):
            Fractional(1.0)
        with pytest.raises(ValueError):
            Fractional(0.0)


class TestExtractKeywords:
    def test_single_call_target(self):
        task = Task(
            id="a",
            prompt="find tuples",
            tests=("assert find_tuples([(1,2)],2)==[(1,2)]",),
        )
        assert extract_keywords(task) == {"find_tuples"}

    def test_entry_point_included(self):
        task = Task(id="a", prompt="p", tests=("assert f(1)==1",), entry_point="f")
        assert extract_keywords(task) == {"f"}

    def test_two_helpers(self):
        # hand-tokenized: call targets are exactly g and h
        task = Task(id="a", prompt="p", tests=("assert g(1) == h(2)",))
        assert extract_keywords(task) == {"g", "h"}

    def test_quoted_literals_excluded(self):
        task = Task(id="a", prompt="p", tests=('assert f("g(") == 1',), entry_point="f")
        assert extract_keywords(task) == {"f"}

    def test_output_subset_of_test_tokens(self):
        task = Task(
            id="a",
            prompt="p",
            tests=("assert alpha(beta(1), 2) == [3]", "assert gamma() is None"),
            entry_point="alpha",
        )
        keywords = extract_keywords(task)
        joined = " ".join(task.tests) + " alpha"
        assert all(kw in joined for kw in keywords)
        assert keywords == {"alpha", "beta", "gamma"}
