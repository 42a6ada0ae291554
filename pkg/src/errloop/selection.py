"""One-shot-learning scoring and data selection.

A validation set of good and bad cases is sampled from the training corpus
each iteration. Every kept synthetic sample is prepended as a worked example
(user question, assistant solution) ahead of each dev question; the sample's
score is the number of dev cases the target then answers correctly. The top
fraction per dataset part (ties broken by sample id) becomes the training
selection. Per-case transcripts are persisted so every score can be recounted
from the stored responses alone.

``random_select`` is the comparison baseline: cluster-proportional random
sampling, with more samples drawn from error types with more bad cases.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import records
from .answers import answers_match, extract_answer, normalize
from .badcases import BadCase
from .corpus import Problem
from .gateway import Gateway, GatewayError, ModelHandle, assistant, user
from .synthesis import SyntheticSample, largest_remainder

log = logging.getLogger(__name__)


@dataclass
class DevCase:
    problem: Problem
    origin: str  # good | bad


@dataclass
class DevSet:
    cases: list[DevCase]
    seed: int
    iteration: int = 0

    def __len__(self) -> int:
        return len(self.cases)


@dataclass
class OslCase:
    dev_problem_id: str
    solved: bool
    response: str = ""
    error: Optional[str] = None


@dataclass
class OslResult:
    sample_id: str
    score: int
    per_case: list[OslCase] = field(default_factory=list)


def build_dev_set(
    good: Sequence[Problem],
    bad: Sequence[BadCase],
    n_good: int,
    n_bad: int,
    seed: int,
    iteration: int = 0,
) -> DevSet:
    """Sample the validation set: n_good good cases plus n_bad bad cases."""
    if len(good) < n_good or len(bad) < n_bad:
        raise ValueError(
            f"dev set needs {n_good} good / {n_bad} bad cases but pools hold "
            f"{len(good)} / {len(bad)}"
        )
    rng = random.Random(seed)
    picked_good = rng.sample(list(good), n_good) if n_good else []
    picked_bad = rng.sample(list(bad), n_bad) if n_bad else []
    cases = [DevCase(problem=p, origin="good") for p in picked_good]
    cases += [DevCase(problem=bc.problem, origin="bad") for bc in picked_bad]
    ids = [c.problem.id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("dev set sampled duplicate problem ids")
    return DevSet(cases=cases, seed=seed, iteration=iteration)


def render_one_shot(sample: SyntheticSample, dev_question: str) -> list[dict]:
    """The worked-example conversation: sample Q, sample solution, dev Q."""
    return [
        user(sample.question),
        assistant(sample.solution),
        user(dev_question),
    ]


def _solved(response: str, reference_answer: str) -> bool:
    extracted = extract_answer(response)
    return extracted is not None and answers_match(extracted, normalize(reference_answer))


def osl_score(
    gateway: Gateway,
    target: ModelHandle,
    sample: SyntheticSample,
    dev: DevSet,
) -> OslResult:
    """Score one sample: how many dev cases it unlocks as a one-shot prompt.

    Completion failures count as unsolved and are flagged on the case; they
    never abort the scan.
    """
    if target.decoding.temperature != 0:
        raise ValueError("one-shot scoring requires a greedy (temperature 0) handle")
    if target.decoding.max_tokens != 2048:
        raise ValueError("one-shot scoring requires the standard max_tokens of 2048")
    requests = [render_one_shot(sample, case.problem.question) for case in dev.cases]
    slots = gateway.complete_many(target, requests)
    per_case: list[OslCase] = []
    for case, slot in zip(dev.cases, slots):
        if isinstance(slot, GatewayError):
            per_case.append(
                OslCase(dev_problem_id=case.problem.id, solved=False, error=str(slot))
            )
            continue
        per_case.append(
            OslCase(
                dev_problem_id=case.problem.id,
                solved=_solved(slot.response, case.problem.reference_answer),
                response=slot.response,
            )
        )
    return OslResult(
        sample_id=sample.id,
        score=sum(1 for c in per_case if c.solved),
        per_case=per_case,
    )


def score_pool(
    gateway: Gateway,
    target: ModelHandle,
    samples: Sequence[SyntheticSample],
    dev: DevSet,
) -> list[OslResult]:
    results = []
    for i, sample in enumerate(samples):
        results.append(osl_score(gateway, target, sample, dev))
        if (i + 1) % 1000 == 0:
            log.info("scored %d/%d samples", i + 1, len(samples))
    return results


def recount(result: OslResult, reference_answers: dict[str, str]) -> int:
    """Recompute a score from persisted per-case transcripts alone."""
    total = 0
    for case in result.per_case:
        if case.error is not None:
            continue
        if _solved(case.response, reference_answers[case.dev_problem_id]):
            total += 1
    return total


def rank_and_select(
    results: Sequence[OslResult],
    pool: Sequence[SyntheticSample],
    fraction: float,
) -> list[SyntheticSample]:
    """Top ``ceil(fraction * |pool|)`` samples by score, ties by id ascending."""
    if not pool:
        log.warning("rank_and_select called with an empty pool")
        return []
    scores = {r.sample_id: r.score for r in results}
    missing = [s.id for s in pool if s.id not in scores]
    if missing:
        raise ValueError(f"{len(missing)} pool samples were never scored (e.g. {missing[0]})")
    ordered = sorted(pool, key=lambda s: (-scores[s.id], s.id))
    count = math.ceil(fraction * len(pool))
    chosen = ordered[:count]
    for sample in pool:
        sample.osl_score = scores[sample.id]
    for sample in chosen:
        sample.selected = True
    return chosen


def random_select(
    pool: Sequence[SyntheticSample],
    cluster_weights: dict[str, int],
    n: int,
    seed: int,
) -> list[SyntheticSample]:
    """Cluster-proportional random baseline selection.

    Per-cluster counts follow largest-remainder proportionality to the
    cluster weights (bad-case counts); sampling within a cluster is uniform
    without replacement. Allocation spilling past a cluster's pool size is
    redistributed to clusters with spare capacity.
    """
    if n > len(pool):
        raise ValueError(f"cannot select {n} from a pool of {len(pool)}")
    by_cluster: dict[str, list[SyntheticSample]] = {}
    for sample in pool:
        by_cluster.setdefault(sample.cluster_id, []).append(sample)
    for members in by_cluster.values():
        members.sort(key=lambda s: s.id)
    weights = {cid: cluster_weights.get(cid, 1) for cid in by_cluster}
    alloc = largest_remainder(weights, n)
    # Cap at availability and re-spread any excess.
    for _ in range(len(by_cluster) + 1):
        excess = 0
        spare: dict[str, int] = {}
        for cid, members in by_cluster.items():
            if alloc.get(cid, 0) > len(members):
                excess += alloc[cid] - len(members)
                alloc[cid] = len(members)
            elif alloc.get(cid, 0) < len(members):
                spare[cid] = weights[cid]
        if excess == 0 or not spare:
            break
        for cid, amount in largest_remainder(spare, excess).items():
            alloc[cid] = alloc.get(cid, 0) + amount
    # n <= |pool| guarantees this tops out; fill any residue deterministically.
    shortfall = n - sum(min(alloc.get(c, 0), len(m)) for c, m in by_cluster.items())
    for cid in sorted(by_cluster):
        while shortfall > 0 and alloc.get(cid, 0) < len(by_cluster[cid]):
            alloc[cid] = alloc.get(cid, 0) + 1
            shortfall -= 1
    rng = random.Random(seed)
    chosen: list[SyntheticSample] = []
    for cid in sorted(by_cluster):
        members = by_cluster[cid]
        k = min(alloc.get(cid, 0), len(members))
        chosen.extend(rng.sample(members, k) if k < len(members) else list(members))
    return chosen


records.register_record_type(
    "dev_case",
    DevCase,
    lambda c: {"problem": records.to_record(c.problem), "origin": c.origin},
    lambda d: DevCase(problem=records.from_record(d["problem"]), origin=d["origin"]),
)

records.register_record_type(
    "osl_result",
    OslResult,
    lambda r: {
        "sample_id": r.sample_id,
        "score": r.score,
        "per_case": [
            {
                "dev_problem_id": c.dev_problem_id,
                "solved": c.solved,
                "response": c.response,
                "error": c.error,
            }
            for c in r.per_case
        ],
    },
    lambda d: OslResult(
        sample_id=d["sample_id"],
        score=d["score"],
        per_case=[OslCase(**c) for c in d.get("per_case", [])],
    ),
)
