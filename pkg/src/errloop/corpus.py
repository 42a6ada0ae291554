"""Problem corpora: loading, validation, and persistence.

Input files are line-delimited JSON. Two dataset flavors are understood
besides a generic one:

* ``gsm8k-style`` — ``{question, answer}`` where the final answer follows a
  ``"#### "`` delimiter inside the answer text;
* ``math-style`` — ``{problem, solution}`` with the final answer in a
  ``\\boxed{...}`` expression;
* ``generic`` — ``{question, solution}`` (or ``answer``) toy records.

Malformed lines are skipped with a diagnostic and reported with their line
numbers; a rejection rate above ``MAX_REJECT_RATE`` (or zero valid records)
is fatal. ``reference_answer`` is always the canonical form produced by the
answer rules, so Eq.-style comparisons downstream are well-defined.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import records
from .answers import extract_answer

log = logging.getLogger(__name__)

MAX_REJECT_RATE = 0.05

FORMATS = ("gsm8k-style", "math-style", "generic")

_FIELD_MAP = {
    "gsm8k-style": ("question", "answer"),
    "math-style": ("problem", "solution"),
    "generic": ("question", "solution"),
}


class CorpusError(Exception):
    """Fatal corpus problem: unreadable file, empty load, or excess rejects."""


@dataclass
class Problem:
    id: str
    source: str  # gsm8k-style | math-style | toy
    question: str
    reference_solution: str
    reference_answer: str
    extras: dict = field(default_factory=dict)


@dataclass
class ProblemSet:
    name: str
    problems: list[Problem]
    role: str = "train"  # train | test | synthetic

    def __len__(self) -> int:
        return len(self.problems)

    def by_id(self) -> dict[str, Problem]:
        return {p.id: p for p in self.problems}


@dataclass
class RejectedLine:
    line_number: int
    reason: str


def load_problems(
    path: str | Path,
    fmt: str,
    dataset: str | None = None,
    split: str = "train",
    role: str = "train",
) -> ProblemSet:
    """Load a problem file, extracting reference answers as it goes.

    Returns a ProblemSet whose size is the input line count minus rejected
    lines; rejects are logged with line numbers. Raises CorpusError when the
    file is unreadable, yields zero valid records, or rejects more than
    MAX_REJECT_RATE of its lines.
    """
    if fmt not in FORMATS:
        raise CorpusError(f"unknown corpus format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    dataset = dataset or path.stem
    name = f"{dataset}-{split}"
    source = "toy" if fmt == "generic" else fmt
    q_field, s_field = _FIELD_MAP[fmt]

    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    problems: list[Problem] = []
    rejected: list[RejectedLine] = []
    seen_ids: set[str] = set()
    total = 0
    for index, line in enumerate(raw_lines):
        if not line.strip():
            continue
        total += 1
        lineno = index + 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            rejected.append(RejectedLine(lineno, f"invalid JSON: {exc}"))
            continue
        if not isinstance(obj, dict):
            rejected.append(RejectedLine(lineno, "record is not an object"))
            continue
        question = obj.get(q_field)
        solution = obj.get(s_field)
        if fmt == "generic" and solution is None:
            solution = obj.get("answer")
        if not isinstance(question, str) or not question.strip():
            rejected.append(RejectedLine(lineno, f"missing or empty {q_field!r}"))
            continue
        if not isinstance(solution, str) or not solution.strip():
            rejected.append(RejectedLine(lineno, f"missing or empty {s_field!r}"))
            continue
        answer = extract_answer(solution)
        if answer is None:
            rejected.append(RejectedLine(lineno, "no extractable final answer"))
            continue
        pid = f"{dataset}-{split}-{index}"
        if pid in seen_ids:  # cannot happen with line indices; defensive
            rejected.append(RejectedLine(lineno, f"duplicate id {pid}"))
            continue
        seen_ids.add(pid)
        extras = {k: v for k, v in obj.items() if k not in (q_field, s_field)}
        problems.append(
            Problem(
                id=pid,
                source=source,
                question=question,
                reference_solution=solution,
                reference_answer=answer.canonical,
                extras=extras,
            )
        )

    for rej in rejected:
        log.warning("%s:%d rejected: %s", path, rej.line_number, rej.reason)
    if not problems:
        raise CorpusError(f"{path}: no valid records (of {total} lines)")
    if total and len(rejected) / total > MAX_REJECT_RATE:
        raise CorpusError(
            f"{path}: {len(rejected)}/{total} lines rejected "
            f"(> {MAX_REJECT_RATE:.0%}); first: "
            f"line {rejected[0].line_number}: {rejected[0].reason}"
        )
    return ProblemSet(name=name, problems=problems, role=role)


def persist_records(items: list, path: str | Path) -> int:
    """Write artifact records, one per line, atomically. Returns count written."""
    return records.write_records(items, path)


def load_records(path: str | Path) -> list:
    return records.read_records(path)


def persist_problem_set(pset: ProblemSet, path: str | Path) -> int:
    """Persist a ProblemSet as a header record followed by problem records."""
    header = _SetHeader(name=pset.name, role=pset.role)
    return records.write_records([header] + list(pset.problems), path)


def load_problem_set(path: str | Path) -> ProblemSet:
    items = records.read_records(path)
    if not items or not isinstance(items[0], _SetHeader):
        raise CorpusError(f"{path}: not a problem-set file (missing header record)")
    header = items[0]
    problems = [p for p in items[1:] if isinstance(p, Problem)]
    return ProblemSet(name=header.name, problems=problems, role=header.role)


@dataclass
class _SetHeader:
    name: str
    role: str


records.register_record_type(
    "problem_set",
    _SetHeader,
    lambda h: {"name": h.name, "role": h.role},
    lambda d: _SetHeader(name=d["name"], role=d["role"]),
)

records.register_record_type(
    "problem",
    Problem,
    lambda p: {
        "id": p.id,
        "source": p.source,
        "question": p.question,
        "reference_solution": p.reference_solution,
        "reference_answer": p.reference_answer,
        "extras": p.extras,
    },
    lambda d: Problem(
        id=d["id"],
        source=d["source"],
        question=d["question"],
        reference_solution=d["reference_solution"],
        reference_answer=d["reference_answer"],
        extras=d.get("extras", {}),
    ),
)
