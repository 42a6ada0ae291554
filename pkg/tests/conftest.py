"""Shared fixtures: toy corpora and scripted mock backends.

Toy problems are tiny addition questions whose text carries a stable
``(case N)`` tag, so mock scripts can key rules on individual problems.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from errloop.corpus import Problem, ProblemSet, load_problems
from errloop.gateway import Decoding, Gateway, ModelHandle, write_mock_script


def toy_lines(n: int, start: int = 0) -> list[dict]:
    lines = []
    for i in range(start, start + n):
        a, b = i + 1, (i % 7) + 2
        lines.append(
            {
                "question": f"If you add {a} and {b}, what do you get? (case {i})",
                "solution": f"Adding {a} and {b} gives {a + b}. The answer is {a + b}.",
            }
        )
    return lines


def write_toy_corpus(path: Path, n: int, start: int = 0) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for line in toy_lines(n, start):
            fh.write(json.dumps(line) + "\n")
    return path


def echo_reference_rules(pset: ProblemSet) -> list[dict]:
    """Mock rules answering every problem with its reference answer."""
    rules = []
    for problem in pset.problems:
        tag = re.escape(_case_tag(problem))
        rules.append(
            {
                "match_kind": "regex",
                "pattern": tag,
                "response": f"I worked it out. The answer is {problem.reference_answer}.",
            }
        )
    return rules


def failing_subset_rules(pset: ProblemSet, fail_ids: set[str]) -> list[dict]:
    """Mock rules: wrong answer on ``fail_ids``, reference answer elsewhere."""
    rules = []
    for problem in pset.problems:
        tag = re.escape(_case_tag(problem))
        if problem.id in fail_ids:
            response = "I think the answer is wrong-value-999999."
        else:
            response = f"I worked it out. The answer is {problem.reference_answer}."
        rules.append({"match_kind": "regex", "pattern": tag, "response": response})
    return rules


def _case_tag(problem: Problem) -> str:
    m = re.search(r"\(case \d+\)", problem.question)
    assert m, f"toy problem without case tag: {problem.question}"
    return m.group(0)


@pytest.fixture
def toy_corpus(tmp_path) -> ProblemSet:
    path = write_toy_corpus(tmp_path / "toy.jsonl", 10)
    return load_problems(path, "generic", dataset="toy", split="train")


@pytest.fixture
def gateway(tmp_path) -> Gateway:
    return Gateway(cache_dir=tmp_path / "cache")


def mock_handle(script_path: Path, role: str = "target", temperature: float = 0.0,
                model_name: str = "mock-model") -> ModelHandle:
    return ModelHandle(
        role=role,
        endpoint=f"mock:{script_path}",
        model_name=model_name,
        decoding=Decoding(temperature=temperature),
    )


def scripted_handle(tmp_path: Path, name: str, rules: list[dict],
                    role: str = "target", temperature: float = 0.0) -> ModelHandle:
    path = write_mock_script(tmp_path / f"{name}.jsonl", rules)
    return mock_handle(path, role=role, temperature=temperature, model_name=name)


# -- end-to-end toy run fixtures ------------------------------------------------

def synthesis_items_rule(batch_size: int = 20) -> dict:
    """Synthesis responses whose question tokens are digest-unique, so every
    distinct prompt contributes fresh questions that pass the dedup filter."""
    items = [
        {
            "question": f"q<<prompt_digest>>a{i} mock q<<prompt_digest>>b{i} "
                        f"problem q<<prompt_digest>>c{i}",
            "solution": f"Steps here. The answer is {i}.",
        }
        for i in range(batch_size)
    ]
    return {
        "match_kind": "substring",
        "pattern": f"Write {batch_size} new",
        "response": json.dumps(items),
    }


def instructor_rules(fail_indices: list[int], batch_size: int = 20,
                     n_kinds: int = 3) -> list[dict]:
    """One scripted instructor covering keyphrase, cluster, and synthesis calls.

    Every bad case (case i) yields the keyphrase "Mistake Kind i"; the
    scripted clustering response groups those phrases into ``n_kinds``
    clusters by i % n_kinds.
    """
    groups: dict[int, list[str]] = {j: [] for j in range(n_kinds)}
    for position, i in enumerate(fail_indices):
        groups[position % n_kinds].append(f"Mistake Kind {i}")
    cluster_response = json.dumps([
        {
            "name": f"Error Family {j}",
            "explanation": f"instructor grouped these as family {j}",
            "keyphrases": phrases,
        }
        for j, phrases in groups.items() if phrases
    ])
    return [
        {
            "match_kind": "substring",
            "pattern": "Group these keyphrases",
            "response": cluster_response,
        },
        synthesis_items_rule(batch_size),
        {
            "match_kind": "regex",
            "pattern": r"reached a wrong final answer(?:.|\n)*\(case (\d+)\)",
            "response": r'["Mistake Kind \1"]',
        },
    ]


def write_hint_corpus(path: Path, n: int, start: int, hard_every: int = 2) -> Path:
    """Toy corpus whose questions carry the answer as a [hint N] plus an
    easy/hard tag, so a two-rule mock script can answer any problem: right on
    easy cases, wrong on hard ones. Keeps mock scripts O(1) at corpus scale."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(start, start + n):
            value = (i * 7) % 100 + 1
            tag = "hard" if i % hard_every == 0 else "easy"
            fh.write(json.dumps({
                "question": f"Compute the value hinted here [hint {value}] ({tag} case {i})",
                "solution": f"Read the hint. The answer is {value}.",
            }) + "\n")
    return path


def unique_token_items_rule(batch_size: int = 20) -> dict:
    """Synthesis items whose question tokens are all digest-derived, sharing no
    vocabulary with anything else: dedup bounds prune every comparison."""
    items = [
        {
            "question": " ".join(f"q<<prompt_digest>>{c}{i}" for c in "abcde"),
            "solution": f"Steps here. The answer is {i}.",
        }
        for i in range(batch_size)
    ]
    return {
        "match_kind": "substring",
        "pattern": f"Write {batch_size} new",
        "response": json.dumps(items),
    }


def make_scaled_run_config(tmp_path: Path, *, run_name: str = "scaled",
                           part_sizes: tuple[int, ...] = (150, 150),
                           per_part_total: int = 5000,
                           iterations: int = 3,
                           dev_good: int = 50, dev_bad: int = 50,
                           select_fraction: float = 0.05,
                           master_seed: int = 7,
                           n_kinds: int = 3):
    """Paper-scale run config with constant-size mock scripts and no cache.

    Per-case transcripts are not persisted at this scale (30k samples x 100
    dev cases); the recount criterion runs separately at default settings.
    """
    from errloop.config import HandleConfig, PartConfig, RunConfig, TrainerConfig

    parts = []
    fail_indices: list[int] = []
    start = 0
    for j, size in enumerate(part_sizes):
        name = f"part{'abcdefgh'[j]}"
        train_path = write_hint_corpus(tmp_path / f"{name}.jsonl", size, start)
        parts.append(PartConfig(name=name, train_path=str(train_path), format="generic"))
        fail_indices += [i for i in range(start, start + size) if i % 2 == 0]
        start += size

    target_script = write_mock_script(tmp_path / "scaled-target.jsonl", [
        {"match_kind": "regex", "pattern": r"\[hint (\d+)\][^\n]*\(easy case",
         "response": r"Read the hint. The answer is \1."},
        {"match_kind": "regex", "pattern": r"\(hard case",
         "response": "I am lost. The answer is 999999."},
    ])
    groups: dict[int, list[str]] = {j: [] for j in range(n_kinds)}
    for position, i in enumerate(fail_indices):
        groups[position % n_kinds].append(f"Mistake Kind {i}")
    cluster_response = json.dumps([
        {"name": f"Error Family {j}", "explanation": f"family {j}", "keyphrases": phrases}
        for j, phrases in groups.items() if phrases
    ])
    instructor_script = write_mock_script(tmp_path / "scaled-instructor.jsonl", [
        {"match_kind": "substring", "pattern": "Group these keyphrases",
         "response": cluster_response},
        unique_token_items_rule(),
        {"match_kind": "regex",
         "pattern": r"reached a wrong final answer(?:.|\n)*\(hard case (\d+)\)",
         "response": r'["Mistake Kind \1"]'},
    ])
    return RunConfig(
        run_dir=str(tmp_path / run_name),
        parts=parts,
        target=HandleConfig(endpoint=f"mock:{target_script}", model_name="scaled-target"),
        instructor=HandleConfig(
            endpoint=f"mock:{instructor_script}", model_name="scaled-instructor"),
        iterations=iterations,
        per_part_total=per_part_total,
        dev_good=dev_good,
        dev_bad=dev_bad,
        select_fraction=select_fraction,
        training_mode="from_scratch",
        master_seed=master_seed,
        auto_approve=True,
        cache_dir=None,
        trainer=TrainerConfig(kind="null"),
        persist_score_transcripts=False,
    )


def make_run_config(tmp_path: Path, *, run_name: str = "run",
                    part_sizes: tuple[int, ...] = (30, 30),
                    fail_every: int = 3,
                    per_part_total: int = 30,
                    iterations: int = 1,
                    dev_good: int = 5, dev_bad: int = 5,
                    select_fraction: float = 0.05,
                    training_mode: str = "iterative",
                    master_seed: int = 42,
                    cache: bool = True,
                    trainer_kind: str = "null",
                    trainer_command: list[str] | None = None,
                    persist_score_transcripts: bool = True):
    """A fully mock-backed RunConfig over toy parts.

    Part ``j`` holds ``part_sizes[j]`` problems with globally unique case
    numbers; every ``fail_every``-th case is scripted to fail. Returns
    (RunConfig, fail_ids_by_part).
    """
    from errloop.config import HandleConfig, PartConfig, RunConfig, TrainerConfig

    parts = []
    target_rules: list[dict] = []
    fail_ids: dict[str, set[str]] = {}
    all_fail_indices: list[int] = []
    start = 0
    for j, size in enumerate(part_sizes):
        name = f"toy{'abcdefgh'[j]}"
        train_path = tmp_path / f"{name}.jsonl"
        write_toy_corpus(train_path, size, start=start)
        pset = load_problems(train_path, "generic", dataset=name, split="train")
        failing = {p.id for i, p in enumerate(pset.problems) if (start + i) % fail_every == 0}
        fail_ids[name] = failing
        all_fail_indices += [start + i for i in range(size) if (start + i) % fail_every == 0]
        target_rules += failing_subset_rules(pset, failing)
        parts.append(PartConfig(name=name, train_path=str(train_path), format="generic"))
        start += size

    target_script = write_mock_script(tmp_path / "target.jsonl", target_rules)
    instructor_script = write_mock_script(
        tmp_path / "instructor.jsonl", instructor_rules(all_fail_indices)
    )
    config = RunConfig(
        run_dir=str(tmp_path / run_name),
        parts=parts,
        target=HandleConfig(endpoint=f"mock:{target_script}", model_name="toy-target"),
        instructor=HandleConfig(endpoint=f"mock:{instructor_script}", model_name="toy-instructor"),
        iterations=iterations,
        per_part_total=per_part_total,
        dev_good=dev_good,
        dev_bad=dev_bad,
        select_fraction=select_fraction,
        training_mode=training_mode,
        master_seed=master_seed,
        auto_approve=True,
        cache_dir="auto" if cache else None,
        trainer=TrainerConfig(kind=trainer_kind, command=trainer_command or []),
        persist_score_transcripts=persist_score_transcripts,
    )
    return config, fail_ids
