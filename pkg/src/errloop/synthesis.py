"""Error-type-specific data synthesis with Rouge-L leakage filtering.

Each active error cluster gets a share of the per-part total proportional to
its bad-case count (largest-remainder rounding, every cluster at least one).
Batches prompt the instructor with a few bad cases of the cluster plus a few
of its own previous generations, ask for a fixed number of new problems in
strict JSON, and keep only candidates whose max Rouge-L against the train
sets, test sets, and everything kept so far stays at or below the
threshold. A cluster that produces five consecutive batches with nothing
kept is closed short and its remaining quota is redistributed
proportionally among the clusters still open.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import records
from .answers import extract_answer
from .badcases import BadCase
from .clustering import ErrorCluster, _parse_json_array
from .config import derive_seed
from .corpus import ProblemSet
from .gateway import Gateway, GatewayError, ModelHandle, user
from .prompts import render
from .rouge import ReferenceIndex, tokenize

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 20
DEFAULT_EXEMPLAR_BAD = 5
DEFAULT_EXEMPLAR_GENERATED = 3
DEFAULT_ROUGE_THRESHOLD = 0.7
STALL_LIMIT = 5


class SynthesisError(Exception):
    """Fatal synthesis problem (no active clusters, empty exemplar pool)."""


class SynthesisBatchError(Exception):
    """One batch produced nothing parseable; the cluster loop continues."""


@dataclass
class SyntheticSample:
    id: str
    iteration: int
    cluster_id: str
    question: str
    solution: str
    final_answer: str
    rouge_max: float = 0.0
    osl_score: Optional[int] = None
    selected: bool = False


@dataclass
class SynthesisQuota:
    per_cluster: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.per_cluster.values())


def largest_remainder(
    weights: dict[str, int], total: int, minimum_one: bool = False
) -> dict[str, int]:
    """Apportion ``total`` across keys proportionally to ``weights``.

    Floor shares first, then hand out the remainder by largest fractional
    part, ties broken by key. With ``minimum_one`` every key with positive
    weight receives at least 1 (taken from the largest allocations).
    """
    keys = sorted(weights)
    weight_sum = sum(weights[k] for k in keys)
    if weight_sum <= 0 or total <= 0:
        return {k: 0 for k in keys}
    exact = {k: total * weights[k] / weight_sum for k in keys}
    alloc = {k: math.floor(exact[k]) for k in keys}
    leftover = total - sum(alloc.values())
    by_remainder = sorted(keys, key=lambda k: (-(exact[k] - alloc[k]), k))
    for k in by_remainder[:leftover]:
        alloc[k] += 1
    if minimum_one:
        zeros = [k for k in keys if alloc[k] == 0 and weights[k] > 0]
        for k in zeros:
            donor = max(keys, key=lambda j: (alloc[j], j))
            if alloc[donor] <= 1:
                break
            alloc[donor] -= 1
            alloc[k] = 1
    return alloc


def allocate_quota(clusters: Sequence[ErrorCluster], total: int) -> SynthesisQuota:
    """Per-cluster generation targets over the active clusters."""
    active = [c for c in clusters if c.status == "active"]
    if not active:
        raise SynthesisError("no active clusters to allocate quota to")
    if total < len(active):
        raise SynthesisError(
            f"total {total} is below the number of active clusters ({len(active)})"
        )
    weights = {c.id: c.member_count for c in active}
    return SynthesisQuota(per_cluster=largest_remainder(weights, total, minimum_one=True))


def _format_bad_example(i: int, case: BadCase) -> str:
    return (
        f"Example {i}\n"
        f"Question: {case.problem.question}\n"
        f"Correct solution: {case.problem.reference_solution}"
    )


def _format_generated_example(i: int, sample: "SyntheticSample") -> str:
    return (
        f"Example {i}\n"
        f"Question: {sample.question}\n"
        f"Solution: {sample.solution}"
    )


def build_synthesis_prompt(
    cluster: ErrorCluster,
    bad_pool: Sequence[BadCase],
    generated_pool: Sequence[SyntheticSample],
    rng: random.Random,
    template: str = "synthesis_gsm8k",
    n_bad: int = DEFAULT_EXEMPLAR_BAD,
    n_generated: int = DEFAULT_EXEMPLAR_GENERATED,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[dict]:
    """Render one synthesis request for a cluster.

    Samples ``n_bad`` bad cases and ``n_generated`` prior generations of the
    same cluster without replacement (all of them when the pool is smaller).
    """
    if cluster.status != "active":
        raise SynthesisError(f"cluster {cluster.id} is not active")
    if not bad_pool:
        raise SynthesisError(f"cluster {cluster.id} has no bad cases to exemplify")
    bad = list(bad_pool) if len(bad_pool) <= n_bad else rng.sample(list(bad_pool), n_bad)
    gen = (
        list(generated_pool)
        if len(generated_pool) <= n_generated
        else rng.sample(list(generated_pool), n_generated)
    )
    bad_text = "\n\n".join(_format_bad_example(i + 1, c) for i, c in enumerate(bad))
    gen_text = (
        "\n\n".join(_format_generated_example(i + 1, s) for i, s in enumerate(gen))
        if gen
        else "(none yet)"
    )
    prompt = render(
        template,
        cluster_name=cluster.name,
        cluster_description=cluster.description or cluster.name,
        bad_examples=bad_text,
        generated_examples=gen_text,
        count=str(batch_size),
    )
    return [user(prompt)]


def synthesize_batch(
    gateway: Gateway,
    instructor: ModelHandle,
    prompt: list[dict],
    iteration: int,
    cluster_id: str,
    seq_start: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[SyntheticSample]:
    """One synthesis call, parsed and answer-gated.

    Items whose solution yields no extractable final answer are dropped with
    a diagnostic. A malformed whole response is retried once; zero parseable
    items after the retry raises SynthesisBatchError.
    """
    messages = prompt
    for attempt in (1, 2):
        try:
            response = gateway.complete(instructor, messages).response
        except GatewayError as exc:
            log.warning("synthesis call failed for %s: %s", cluster_id, exc)
            response = ""
        items = _parse_json_array(response) if response else None
        samples: list[SyntheticSample] = []
        if items:
            seq = seq_start
            for obj in items[:batch_size]:
                if not isinstance(obj, dict):
                    continue
                question = obj.get("question")
                solution = obj.get("solution")
                if not isinstance(question, str) or not question.strip():
                    continue
                if not isinstance(solution, str) or not solution.strip():
                    continue
                answer = extract_answer(solution)
                if answer is None:
                    log.info("dropping item with no extractable answer (cluster %s)", cluster_id)
                    continue
                samples.append(
                    SyntheticSample(
                        id=f"{iteration}-{cluster_id}-{seq:05d}",
                        iteration=iteration,
                        cluster_id=cluster_id,
                        question=question.strip(),
                        solution=solution,
                        final_answer=answer.canonical,
                    )
                )
                seq += 1
        if samples:
            return samples
        if attempt == 1:
            messages = prompt + [
                user(
                    "Your previous reply could not be parsed as the required JSON "
                    "array. Reply again with only the JSON array. (attempt 2)"
                )
            ]
    raise SynthesisBatchError(f"no parseable items for cluster {cluster_id} after retry")


def dedup_filter(
    candidates: Sequence[SyntheticSample],
    corpora: Iterable[ProblemSet] | ReferenceIndex,
    threshold: float = DEFAULT_ROUGE_THRESHOLD,
) -> tuple[list[SyntheticSample], list[SyntheticSample]]:
    """Split candidates into (kept, rejected) by max Rouge-L over the references.

    Comparison uses question text only. Candidates in one call are compared
    against the reference set as passed in, not against each other; the
    caller appends kept questions to its index between waves.
    """
    if isinstance(corpora, ReferenceIndex):
        index = corpora
    else:
        index = ReferenceIndex()
        for pset in corpora:
            for problem in pset.problems:
                index.add_text(problem.question)
    kept: list[SyntheticSample] = []
    rejected: list[SyntheticSample] = []
    for sample in candidates:
        score, exceeded = index.max_score(tokenize(sample.question), threshold)
        sample.rouge_max = score
        (rejected if exceeded else kept).append(sample)
    return kept, rejected


@dataclass
class PartSynthesisResult:
    kept: list[SyntheticSample] = field(default_factory=list)
    rejected: list[SyntheticSample] = field(default_factory=list)
    attempted_batches: int = 0
    parsed_count: int = 0
    closed_short: list[str] = field(default_factory=list)
    quota: dict[str, int] = field(default_factory=dict)


def generate_part(
    gateway: Gateway,
    instructor: ModelHandle,
    clusters: Sequence[ErrorCluster],
    bad_by_cluster: dict[str, list[BadCase]],
    total: int,
    index: ReferenceIndex,
    iteration: int,
    seed: int,
    template: str = "synthesis_gsm8k",
    batch_size: int = DEFAULT_BATCH_SIZE,
    n_bad: int = DEFAULT_EXEMPLAR_BAD,
    n_generated: int = DEFAULT_EXEMPLAR_GENERATED,
    threshold: float = DEFAULT_ROUGE_THRESHOLD,
    stall_limit: int = STALL_LIMIT,
) -> PartSynthesisResult:
    """Fill one dataset part's synthesis quota, cluster by cluster.

    Clusters run in id order for reproducibility. Kept samples join the
    shared reference index after each batch (single-writer append); shortfall
    from clusters closed by the stall guard is redistributed proportionally
    among the clusters not yet processed.
    """
    usable = [
        c for c in clusters
        if c.status == "active" and bad_by_cluster.get(c.id)
    ]
    skipped = [
        c.id for c in clusters
        if c.status == "active" and not bad_by_cluster.get(c.id)
    ]
    for cid in skipped:
        log.warning("cluster %s has an empty exemplar pool; skipping", cid)
    if not usable:
        raise SynthesisError("no active cluster has a non-empty exemplar pool")
    quota = allocate_quota(usable, total).per_cluster
    result = PartSynthesisResult(quota=dict(quota))

    order = sorted(quota)
    for pos, cluster_id in enumerate(order):
        cluster = next(c for c in usable if c.id == cluster_id)
        pool = bad_by_cluster[cluster_id]
        target = quota[cluster_id]
        kept_here: list[SyntheticSample] = []
        stall = 0
        batch_no = 0
        seq = 0
        while len(kept_here) < target and stall < stall_limit:
            rng = random.Random(derive_seed(seed, cluster_id, batch_no))
            prompt = build_synthesis_prompt(
                cluster, pool, kept_here, rng,
                template=template, n_bad=n_bad, n_generated=n_generated,
                batch_size=batch_size,
            )
            batch_no += 1
            result.attempted_batches += 1
            try:
                parsed = synthesize_batch(
                    gateway, instructor, prompt, iteration, cluster_id, seq,
                    batch_size=batch_size,
                )
            except SynthesisBatchError as exc:
                log.warning("%s", exc)
                stall += 1
                continue
            seq += len(parsed)
            result.parsed_count += len(parsed)
            kept_new, rejected_new = dedup_filter(parsed, index, threshold)
            result.rejected.extend(rejected_new)
            if not kept_new:
                stall += 1
                continue
            stall = 0
            room = target - len(kept_here)
            accepted = kept_new[:room]
            kept_here.extend(accepted)
            for sample in accepted:
                index.add_text(sample.question)
        result.kept.extend(kept_here)
        shortfall = target - len(kept_here)
        if shortfall > 0:
            result.closed_short.append(cluster_id)
            log.warning(
                "cluster %s closed %d short of its quota of %d",
                cluster_id, shortfall, target,
            )
            remaining = order[pos + 1:]
            if remaining:
                weights = {
                    cid: next(c for c in usable if c.id == cid).member_count
                    for cid in remaining
                }
                extra = largest_remainder(weights, shortfall)
                for cid, amount in extra.items():
                    quota[cid] += amount
    return result


records.register_record_type(
    "synthetic_sample",
    SyntheticSample,
    lambda s: {
        "id": s.id,
        "iteration": s.iteration,
        "cluster_id": s.cluster_id,
        "question": s.question,
        "solution": s.solution,
        "final_answer": s.final_answer,
        "rouge_max": s.rouge_max,
        "osl_score": s.osl_score,
        "selected": s.selected,
    },
    lambda d: SyntheticSample(
        id=d["id"],
        iteration=d["iteration"],
        cluster_id=d["cluster_id"],
        question=d["question"],
        solution=d["solution"],
        final_answer=d["final_answer"],
        rouge_max=d.get("rouge_max", 0.0),
        osl_score=d.get("osl_score"),
        selected=d.get("selected", False),
    ),
)
