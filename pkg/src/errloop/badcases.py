"""Good/bad partition of a corpus for a target model, and fix-rate bookkeeping.

A problem is a bad case when the answer extracted from the model's reasoning
disagrees with the reference answer; an absent model answer counts as
incorrect (a non-answer is a failure). Each problem gets one greedy attempt.
Problems whose completion fails at the endpoint are routed to an
``undecided`` sidecar and excluded from both lists and from fix-rate
numerators and denominators, so infrastructure failures never masquerade as
model errors.

Fix rate follows fixed-denominator semantics: the iteration-0 bad set is the
reference forever; the rate is the fraction of it the current model now
answers correctly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from . import records
from .answers import Answer, answers_match, extract_answer, normalize
from .corpus import Problem, ProblemSet
from .gateway import ChatExchange, Gateway, GatewayError, ModelHandle, user

log = logging.getLogger(__name__)


@dataclass
class Attempt:
    problem_id: str
    model_name: str
    reasoning: str
    extracted: Optional[Answer]
    correct: bool


@dataclass
class BadCase:
    problem: Problem
    model_reasoning: str
    iteration_found: int = 0

    @property
    def id(self) -> str:
        return self.problem.id


@dataclass
class Undecided:
    problem_id: str
    error: str


@dataclass
class PartitionResult:
    good: list[Problem] = field(default_factory=list)
    bad: list[BadCase] = field(default_factory=list)
    undecided: list[Undecided] = field(default_factory=list)
    attempts: list[Attempt] = field(default_factory=list)


def grade_attempt(problem: Problem, reasoning: str, model_name: str) -> Attempt:
    """Extract and compare one reasoning path against the reference answer."""
    extracted = extract_answer(reasoning)
    correct = extracted is not None and answers_match(
        extracted, normalize(problem.reference_answer)
    )
    return Attempt(
        problem_id=problem.id,
        model_name=model_name,
        reasoning=reasoning,
        extracted=extracted,
        correct=correct,
    )


def partition(
    gateway: Gateway,
    target: ModelHandle,
    problems: ProblemSet,
    iteration: int = 0,
) -> PartitionResult:
    """Split a corpus into good problems and bad cases for the target model.

    Every problem lands in exactly one of good/bad/undecided; good + bad
    equals the corpus minus endpoint failures.
    """
    result = PartitionResult()
    requests = [[user(p.question)] for p in problems.problems]
    responses = gateway.complete_many(target, requests)
    for problem, slot in zip(problems.problems, responses):
        if isinstance(slot, GatewayError):
            log.warning("undecided %s: %s", problem.id, slot)
            result.undecided.append(Undecided(problem_id=problem.id, error=str(slot)))
            continue
        attempt = grade_attempt(problem, slot.response, target.model_name)
        result.attempts.append(attempt)
        if attempt.correct:
            result.good.append(problem)
        else:
            result.bad.append(
                BadCase(
                    problem=problem,
                    model_reasoning=slot.response,
                    iteration_found=iteration,
                )
            )
    return result


def fix_rate(
    gateway: Gateway,
    target: ModelHandle,
    original_bad: list[BadCase],
) -> float:
    """Fraction of the original bad set the current model answers correctly.

    The denominator is the original bad set (minus endpoint failures on this
    scan); it never changes across iterations.
    """
    if not original_bad:
        raise ValueError("fix rate is undefined for an empty original bad set")
    requests = [[user(bc.problem.question)] for bc in original_bad]
    responses = gateway.complete_many(target, requests)
    fixed = 0
    decided = 0
    for bc, slot in zip(original_bad, responses):
        if isinstance(slot, GatewayError):
            log.warning("fix-rate scan undecided %s: %s", bc.problem.id, slot)
            continue
        decided += 1
        if grade_attempt(bc.problem, slot.response, target.model_name).correct:
            fixed += 1
    if decided == 0:
        raise ValueError("fix rate is undefined: every scan attempt failed at the endpoint")
    return fixed / decided


def fix_rate_from_partition(original_bad_ids: set[str], good_ids: set[str]) -> float:
    """Fix rate derived from an existing full-corpus partition."""
    if not original_bad_ids:
        raise ValueError("fix rate is undefined for an empty original bad set")
    return len(original_bad_ids & good_ids) / len(original_bad_ids)


records.register_record_type(
    "attempt",
    Attempt,
    lambda a: {
        "problem_id": a.problem_id,
        "model_name": a.model_name,
        "reasoning": a.reasoning,
        "extracted": None
        if a.extracted is None
        else {"raw": a.extracted.raw, "canonical": a.extracted.canonical, "kind": a.extracted.kind},
        "correct": a.correct,
    },
    lambda d: Attempt(
        problem_id=d["problem_id"],
        model_name=d["model_name"],
        reasoning=d["reasoning"],
        extracted=None
        if d["extracted"] is None
        else Answer(**d["extracted"]),
        correct=d["correct"],
    ),
)

records.register_record_type(
    "undecided",
    Undecided,
    lambda u: {"problem_id": u.problem_id, "error": u.error},
    lambda d: Undecided(problem_id=d["problem_id"], error=d["error"]),
)

records.register_record_type(
    "bad_case",
    BadCase,
    lambda b: {
        "problem": records.to_record(b.problem),
        "model_reasoning": b.model_reasoning,
        "iteration_found": b.iteration_found,
    },
    lambda d: BadCase(
        problem=records.from_record(d["problem"]),
        model_reasoning=d["model_reasoning"],
        iteration_found=d["iteration_found"],
    ),
)
