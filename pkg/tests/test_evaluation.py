"""Exact-match evaluation and table reporting."""

from __future__ import annotations

import json

import pytest

from errloop.corpus import ProblemSet, load_problems, load_records
from errloop.evaluation import DatasetEval, EmReport, evaluate, report_table
from errloop.badcases import grade_attempt
from conftest import echo_reference_rules, scripted_handle, write_toy_corpus


@pytest.fixture
def corpus(tmp_path):
    path = write_toy_corpus(tmp_path / "toy-test.jsonl", 10)
    return load_problems(path, "generic", dataset="toy", split="test", role="test")


def test_perfect_mock_scores_hundred(tmp_path, gateway, corpus):
    handle = scripted_handle(tmp_path, "perfect", echo_reference_rules(corpus))
    entry = evaluate(gateway, handle, corpus)
    assert entry.em_percent == 100.0
    assert entry.correct == entry.n == 10


def test_hand_counted_em(tmp_path, gateway):
    lines = []
    for i in range(10):
        answer = 0 if i in (4, 7) else i + 1  # 2 of 10 references are "0"
        lines.append({
            "question": f"Pick a number (case {i})",
            "solution": f"The answer is {answer}.",
        })
    path = tmp_path / "t.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    testset = load_problems(path, "generic", dataset="zeroes", split="test", role="test")
    handle = scripted_handle(tmp_path, "zeros", [
        {"match_kind": "any", "response": "The answer is 0."},
    ])
    entry = evaluate(gateway, handle, testset)
    assert entry.em_percent == pytest.approx(20.0)


def test_full_size_test_split_em_hundred(tmp_path, gateway):
    # perfect mock over a full-size (1,319-problem) test split -> EM 100.0
    from conftest import write_hint_corpus, mock_handle
    from errloop.gateway import write_mock_script
    path = write_hint_corpus(tmp_path / "big-test.jsonl", 1319, start=0, hard_every=10**9)
    testset = load_problems(path, "generic", dataset="big", split="test", role="test")
    assert len(testset) == 1319
    script = write_mock_script(tmp_path / "hint-echo.jsonl", [
        {"match_kind": "regex", "pattern": r"\[hint (\d+)\]",
         "response": r"Read the hint. The answer is \1."},
    ])
    entry = evaluate(gateway, mock_handle(script), testset)
    assert entry.em_percent == 100.0


def test_empty_test_set_is_error(tmp_path, gateway):
    handle = scripted_handle(tmp_path, "x", [{"match_kind": "any", "response": "1"}])
    with pytest.raises(ValueError, match="empty"):
        evaluate(gateway, handle, ProblemSet(name="none", problems=[], role="test"))


def test_requires_greedy_standard_budget(tmp_path, gateway, corpus):
    warm = scripted_handle(tmp_path, "warm", [{"match_kind": "any", "response": "1"}],
                           temperature=0.5)
    with pytest.raises(ValueError, match="greedy"):
        evaluate(gateway, warm, corpus)
    short = scripted_handle(tmp_path, "short", [{"match_kind": "any", "response": "1"}])
    short = short.with_decoding(0.0, 128)
    with pytest.raises(ValueError, match="max_tokens"):
        evaluate(gateway, short, corpus)


def test_infra_failures_counted_wrong_and_reported(tmp_path, gateway, corpus):
    import re
    rules = [r for r in echo_reference_rules(corpus)
             if r["pattern"] != re.escape("(case 0)")]
    handle = scripted_handle(tmp_path, "flaky", rules)
    entry = evaluate(gateway, handle, corpus)
    assert entry.infra_failures == 1
    assert entry.correct == 9
    assert entry.em_percent == pytest.approx(90.0)


def test_transcripts_allow_recount(tmp_path, gateway, corpus):
    handle = scripted_handle(tmp_path, "perfect", echo_reference_rules(corpus))
    transcript = tmp_path / "transcript.jsonl"
    entry = evaluate(gateway, handle, corpus, transcript_path=transcript)
    attempts = load_records(transcript)
    by_id = corpus.by_id()
    recounted = sum(
        1 for a in attempts
        if grade_attempt(by_id[a.problem_id], a.reasoning, "m").correct
    )
    assert recounted == entry.correct


def test_evaluation_order_independent(tmp_path, gateway, corpus):
    handle = scripted_handle(tmp_path, "perfect", echo_reference_rules(corpus))
    reversed_set = ProblemSet(
        name=corpus.name, problems=list(reversed(corpus.problems)), role="test"
    )
    a = evaluate(gateway, handle, corpus)
    b = evaluate(gateway, handle, reversed_set)
    assert a.em_percent == b.em_percent


def test_report_table_layout(tmp_path):
    reports = [
        EmReport(model_name="model-one", entries=[
            DatasetEval(dataset="gsm8k-test", n=100, correct=50, em_percent=50.0),
            DatasetEval(dataset="math-test", n=100, correct=25, em_percent=25.005),
        ]),
        EmReport(model_name="model-two", entries=[
            DatasetEval(dataset="gsm8k-test", n=100, correct=80, em_percent=80.0),
            DatasetEval(dataset="math-test", n=100, correct=60, em_percent=60.0),
        ]),
    ]
    out = tmp_path / "table.txt"
    text = report_table(reports, out)
    lines = text.strip().splitlines()
    assert lines[0].split() == ["model", "gsm8k-test", "math-test", "AVG"]
    assert len(lines) == 4  # header + rule + 2 rows
    # half-up at the second decimal
    assert "25.01" in lines[2]
    sibling = json.loads(out.with_suffix(".json").read_text())
    assert sibling[0]["entries"][1]["em_percent"] == 25.005


def test_single_entry_average_equals_em():
    report = EmReport(model_name="m", entries=[
        DatasetEval(dataset="d", n=10, correct=7, em_percent=70.0),
    ])
    assert report.average == 70.0
    text = report_table([report])
    assert text.splitlines()[2].endswith("70.00")


def test_report_table_deterministic():
    report = EmReport(model_name="m", entries=[
        DatasetEval(dataset="d", n=3, correct=1, em_percent=100 / 3),
    ])
    assert report_table([report]) == report_table([report])
