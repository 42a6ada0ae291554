"""The iterative pipeline: partition, analyze, synthesize, score, select, train.

Each iteration writes one artifact file per stage under
``<run_dir>/iter-<k>/`` and every stage loads its artifact instead of
recomputing when the file already exists, so a crashed run resumes from the
last completed stage and (with pure mock backends and fixed seeds) produces
the same artifacts as an uninterrupted one. Wall-clock timings go to a
sidecar file so the iteration record itself stays byte-reproducible.

The review gate sits between clustering and everything downstream: the
pipeline blocks until a decision file exists for the iteration (written by
``review apply``, the review service, or the companion UI), or proceeds with
an empty decision in auto-approve mode.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

from . import records
from .badcases import Attempt, BadCase, PartitionResult, Undecided, partition
from .clustering import (
    ErrorCluster,
    ErrorKeyphrase,
    ReviewDecision,
    apply_review,
    cluster_keyphrases,
    generate_keyphrases,
    read_decision,
    write_decision,
)
from .config import RunConfig, stage_seed
from .corpus import Problem, ProblemSet, load_problems
from .evaluation import EmReport, evaluate, report_table
from .gateway import Gateway, ModelHandle
from .rouge import ReferenceIndex
from .selection import (
    DevCase,
    DevSet,
    OslResult,
    build_dev_set,
    rank_and_select,
    score_pool,
)
from .synthesis import PartSynthesisResult, SyntheticSample, generate_part
from .trainer import TrainerError, count_invocations, invoke_trainer

log = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


class ReviewPending(PipelineError):
    """The review gate is blocked and no decision arrived in time."""


class RunLock:
    """Single-owner lock on a run directory."""

    def __init__(self, run_dir: Path):
        self.path = run_dir / ".lock"

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            owner = self.path.read_text(encoding="utf-8").strip() or "0"
            if _pid_alive(int(owner)):
                raise PipelineError(
                    f"run directory is locked by live pid {owner} ({self.path})"
                ) from None
            log.warning("breaking stale lock held by dead pid %s", owner)
            self.path.unlink()
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc) -> None:
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _pid_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@dataclass
class PartStats:
    part: str
    good: int = 0
    bad: int = 0
    undecided: int = 0
    clusters_active: int = 0
    clusters_excluded: int = 0
    clusters_merged: int = 0
    attempted_batches: int = 0
    parsed: int = 0
    kept: int = 0
    rejected: int = 0
    scored: int = 0
    selected: int = 0
    fix_rate: float = 0.0


@dataclass
class IterationRecord:
    index: int
    parts: list[PartStats] = field(default_factory=list)
    dev_seed: int = 0
    dev_size: int = 0
    devset_ref: str = ""
    handle_in: dict = field(default_factory=dict)
    handle_out: dict = field(default_factory=dict)
    selected_total: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        data = dict(data)
        data["parts"] = [PartStats(**p) for p in data.get("parts", [])]
        return cls(**data)


def _handle_dict(handle: ModelHandle) -> dict:
    return {"endpoint": handle.endpoint, "model_name": handle.model_name}


class Pipeline:
    def __init__(self, config: RunConfig, gateway: Optional[Gateway] = None):
        config.validate()
        self.config = config
        self.run_dir = Path(config.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        snapshot = self.run_dir / "config.json"
        if not snapshot.exists():
            records.write_json(config.to_dict(), snapshot)
        self.gateway = gateway or Gateway(
            cache_dir=config.resolved_cache_dir(),
            max_attempts=config.max_attempts,
            concurrency=config.concurrency,
            context_budget_chars=config.context_budget_chars,
        )
        self._train_sets: dict[str, ProblemSet] = {}
        self._test_sets: dict[str, ProblemSet] = {}
        self._timings: dict[str, float] = {}

    # -- paths ---------------------------------------------------------------

    def iter_dir(self, k: int) -> Path:
        return self.run_dir / f"iter-{k}"

    def artifact(self, k: int, name: str) -> Path:
        return self.iter_dir(k) / name

    # -- corpora ---------------------------------------------------------------

    def train_set(self, part_name: str) -> ProblemSet:
        if part_name not in self._train_sets:
            part = next(p for p in self.config.parts if p.name == part_name)
            self._train_sets[part_name] = load_problems(
                part.train_path, part.format, dataset=part.name, split="train"
            )
        return self._train_sets[part_name]

    def test_set(self, part_name: str) -> Optional[ProblemSet]:
        if part_name not in self._test_sets:
            part = next(p for p in self.config.parts if p.name == part_name)
            if not part.test_path:
                self._test_sets[part_name] = None
            else:
                self._test_sets[part_name] = load_problems(
                    part.test_path, part.format, dataset=part.name, split="test", role="test"
                )
        return self._test_sets[part_name]

    # -- stage helpers ---------------------------------------------------------

    def _timed(self, label: str, start: float) -> None:
        self._timings[label] = round(time.monotonic() - start, 3)

    def _stage_partition(self, k: int, part: str, handle: ModelHandle) -> PartitionResult:
        path = self.artifact(k, f"partition-{part}.jsonl")
        pset = self.train_set(part)
        if path.exists():
            return self._load_partition(path, pset, k)
        start = time.monotonic()
        result = partition(self.gateway, handle, pset, iteration=k)
        records.write_records(result.attempts + result.undecided, path)
        self._timed(f"partition-{part}", start)
        return result

    def _load_partition(self, path: Path, pset: ProblemSet, k: int) -> PartitionResult:
        by_id = pset.by_id()
        result = PartitionResult()
        for item in records.read_records(path):
            if isinstance(item, Undecided):
                result.undecided.append(item)
                continue
            assert isinstance(item, Attempt)
            result.attempts.append(item)
            problem = by_id[item.problem_id]
            if item.correct:
                result.good.append(problem)
            else:
                result.bad.append(
                    BadCase(problem=problem, model_reasoning=item.reasoning, iteration_found=k)
                )
        return result

    def _stage_keyphrases(self, k: int, part: str, bad: list[BadCase]) -> list[ErrorKeyphrase]:
        path = self.artifact(k, f"keyphrases-{part}.jsonl")
        if path.exists():
            return [p for p in records.read_records(path) if isinstance(p, ErrorKeyphrase)]
        start = time.monotonic()
        phrases = generate_keyphrases(
            self.gateway,
            self.config.instructor_handle(),
            bad,
            retries=self.config.keyphrase_retries,
        )
        records.write_records(phrases, path)
        self._timed(f"keyphrases-{part}", start)
        return phrases

    def _stage_clusters(
        self, k: int, part: str, phrases: list[ErrorKeyphrase]
    ) -> list[ErrorCluster]:
        path = self.artifact(k, f"clusters-{part}.jsonl")
        if path.exists():
            return [c for c in records.read_records(path) if isinstance(c, ErrorCluster)]
        start = time.monotonic()
        clusters = cluster_keyphrases(
            self.gateway,
            self.config.instructor_handle(),
            phrases,
            batch_size=self.config.cluster_batch_size,
            id_prefix=f"{part}/",
        )
        records.write_records(clusters, path)
        self._timed(f"clusters-{part}", start)
        return clusters

    def review_path(self, k: int) -> Path:
        return self.artifact(k, "review.jsonl")

    def _review_gate(self, k: int) -> ReviewDecision:
        path = self.review_path(k)
        if path.exists():
            return read_decision(path)
        if self.config.auto_approve:
            decision = ReviewDecision()
            write_decision(decision, path)
            return decision
        log.info(
            "iteration %d blocked at the review gate; waiting for %s "
            "(review apply / review service / UI)", k, path,
        )
        deadline = (
            None
            if self.config.review_timeout is None
            else time.monotonic() + self.config.review_timeout
        )
        while not path.exists():
            if deadline is not None and time.monotonic() > deadline:
                raise ReviewPending(
                    f"no review decision for iteration {k} after "
                    f"{self.config.review_timeout}s (expected at {path})"
                )
            time.sleep(self.config.review_poll_seconds)
        return read_decision(path)

    def _stage_reviewed_clusters(
        self, k: int, clusters_by_part: dict[str, list[ErrorCluster]]
    ) -> dict[str, list[ErrorCluster]]:
        paths = {
            part: self.artifact(k, f"clusters-reviewed-{part}.jsonl")
            for part in clusters_by_part
        }
        if all(p.exists() for p in paths.values()):
            return {
                part: [c for c in records.read_records(p) if isinstance(c, ErrorCluster)]
                for part, p in paths.items()
            }
        decision = self._review_gate(k)
        combined = [c for clusters in clusters_by_part.values() for c in clusters]
        reviewed = apply_review(combined, decision)
        out: dict[str, list[ErrorCluster]] = {part: [] for part in clusters_by_part}
        for cluster in reviewed:
            part = cluster.id.split("/", 1)[0]
            out.setdefault(part, []).append(cluster)
        for part, path in paths.items():
            records.write_records(out.get(part, []), path)
        return out

    def _stage_devset(
        self, k: int, good: list[Problem], bad: list[BadCase]
    ) -> DevSet:
        path = self.artifact(k, "devset.jsonl")
        seed = stage_seed(self.config.master_seed, k, "devset")
        if path.exists():
            cases = [c for c in records.read_records(path) if isinstance(c, DevCase)]
            return DevSet(cases=cases, seed=seed, iteration=k)
        dev = build_dev_set(
            good, bad, self.config.dev_good, self.config.dev_bad, seed, iteration=k
        )
        records.write_records(dev.cases, path)
        return dev

    def _reference_index(self, k: int) -> ReferenceIndex:
        """Train + test questions plus every question kept in earlier iterations."""
        index = ReferenceIndex()
        for part in self.config.parts:
            for problem in self.train_set(part.name).problems:
                index.add_text(problem.question)
            test = self.test_set(part.name)
            if test is not None:
                for problem in test.problems:
                    index.add_text(problem.question)
        for prev in range(k):
            for part in self.config.parts:
                path = self.artifact(prev, f"kept-{part.name}.jsonl")
                if path.exists():
                    for item in records.read_records(path):
                        if isinstance(item, SyntheticSample):
                            index.add_text(item.question)
        return index

    def _stage_synthesis(
        self,
        k: int,
        part: str,
        clusters: list[ErrorCluster],
        bad_by_cluster: dict[str, list[BadCase]],
        index: ReferenceIndex,
        stats: PartStats,
    ) -> list[SyntheticSample]:
        kept_path = self.artifact(k, f"kept-{part}.jsonl")
        if kept_path.exists():
            kept = [s for s in records.read_records(kept_path) if isinstance(s, SyntheticSample)]
            for sample in kept:
                index.add_text(sample.question)
            summary_path = self.artifact(k, f"synthesis-stats-{part}.json")
            if summary_path.exists():
                summary = records.read_json(summary_path)
                stats.attempted_batches = summary["attempted_batches"]
                stats.parsed = summary["parsed"]
                stats.rejected = summary["rejected"]
            stats.kept = len(kept)
            return kept
        start = time.monotonic()
        part_cfg = next(p for p in self.config.parts if p.name == part)
        result = generate_part(
            self.gateway,
            self.config.instructor_handle().with_decoding(self.config.synthesis_temperature),
            clusters,
            bad_by_cluster,
            total=self.config.per_part_total,
            index=index,
            iteration=k,
            seed=stage_seed(self.config.master_seed, k, "synthesis", part),
            template=part_cfg.template(),
            batch_size=self.config.batch_size,
            n_bad=self.config.exemplar_bad,
            n_generated=self.config.exemplar_generated,
            threshold=self.config.rouge_threshold,
            stall_limit=self.config.stall_limit,
        )
        records.write_records(result.kept, kept_path)
        records.write_records(result.rejected, self.artifact(k, f"rejected-{part}.jsonl"))
        records.write_records(
            sorted(result.kept + result.rejected, key=lambda s: s.id),
            self.artifact(k, f"generated-{part}.jsonl"),
        )
        records.write_json(
            {
                "attempted_batches": result.attempted_batches,
                "parsed": result.parsed_count,
                "rejected": len(result.rejected),
                "kept": len(result.kept),
                "quota": result.quota,
                "closed_short": result.closed_short,
            },
            self.artifact(k, f"synthesis-stats-{part}.json"),
        )
        stats.attempted_batches = result.attempted_batches
        stats.parsed = result.parsed_count
        stats.rejected = len(result.rejected)
        stats.kept = len(result.kept)
        self._timed(f"synthesis-{part}", start)
        return result.kept

    def _stage_scores(
        self, k: int, part: str, kept: list[SyntheticSample], dev: DevSet, handle: ModelHandle
    ) -> list[OslResult]:
        path = self.artifact(k, f"scores-{part}.jsonl")
        if path.exists():
            return [r for r in records.read_records(path) if isinstance(r, OslResult)]
        start = time.monotonic()
        results = score_pool(self.gateway, handle.with_decoding(0.0), kept, dev)
        to_persist = results
        if not self.config.persist_score_transcripts:
            to_persist = [OslResult(sample_id=r.sample_id, score=r.score) for r in results]
        records.write_records(to_persist, path)
        self._timed(f"scores-{part}", start)
        return results

    def _stage_selection(
        self, k: int, part: str, kept: list[SyntheticSample], results: list[OslResult]
    ) -> list[SyntheticSample]:
        path = self.artifact(k, f"selection-{part}.jsonl")
        if path.exists():
            return [s for s in records.read_records(path) if isinstance(s, SyntheticSample)]
        chosen = rank_and_select(results, kept, self.config.select_fraction)
        records.write_records(chosen, path)
        return chosen

    # -- iteration -------------------------------------------------------------

    def run_iteration(
        self, k: int, handle: ModelHandle, stop_after: Optional[str] = None
    ) -> tuple[IterationRecord, list[SyntheticSample], ModelHandle]:
        """Run (or resume) iteration k. Returns the record, its selected
        samples, and the model handle for the next iteration.

        ``stop_after`` ends the iteration early at a stage boundary
        (partition | review | devset | synthesis | scores | selection); the
        artifacts written so far stay on disk and a later call resumes from
        them. The iteration record is only written on full completion.
        """
        record_path = self.artifact(k, "record.json")
        if record_path.exists():
            record = IterationRecord.from_dict(records.read_json(record_path))
            selected = []
            for part in self.config.parts:
                path = self.artifact(k, f"selection-{part.name}.jsonl")
                selected.extend(
                    s for s in records.read_records(path) if isinstance(s, SyntheticSample)
                )
            handle_out = handle.with_endpoint(
                record.handle_out["endpoint"], record.handle_out["model_name"]
            )
            log.info("iteration %d already complete; loaded its record", k)
            return record, selected, handle_out

        self.iter_dir(k).mkdir(parents=True, exist_ok=True)
        self._timings = {}
        record = IterationRecord(index=k, handle_in=_handle_dict(handle))
        part_names = [p.name for p in self.config.parts]
        try:
            # 1. partition every part with the current model
            partitions = {
                part: self._stage_partition(k, part, handle) for part in part_names
            }
            original_bad = self._original_bad_ids(k, partitions)
            stats_by_part: dict[str, PartStats] = {}
            for part in part_names:
                res = partitions[part]
                stats = PartStats(
                    part=part,
                    good=len(res.good),
                    bad=len(res.bad),
                    undecided=len(res.undecided),
                )
                stats.fix_rate = self._fix_rate(k, original_bad[part], res)
                stats_by_part[part] = stats
            if stop_after == "partition":
                return record, [], handle

            # 2-3. keyphrases and clusters per part
            clusters_by_part: dict[str, list[ErrorCluster]] = {}
            for part in part_names:
                bad = partitions[part].bad
                if not bad:
                    log.info("part %s has no bad cases at iteration %d", part, k)
                    clusters_by_part[part] = []
                    continue
                phrases = self._stage_keyphrases(k, part, bad)
                clusters_by_part[part] = self._stage_clusters(k, part, phrases)

            # 4. review gate
            reviewed = self._stage_reviewed_clusters(
                k, {p: c for p, c in clusters_by_part.items() if c}
            )
            for part in part_names:
                clusters = reviewed.get(part, [])
                stats = stats_by_part[part]
                stats.clusters_active = sum(1 for c in clusters if c.status == "active")
                stats.clusters_excluded = sum(1 for c in clusters if c.status == "excluded")
                stats.clusters_merged = sum(1 for c in clusters if c.status == "merged")
            if stop_after == "review":
                return record, [], handle

            # 5. dev set (before synthesis so dev cases are excluded from
            # exemplar sampling in this iteration)
            all_good = [p for part in part_names for p in partitions[part].good]
            all_bad = [b for part in part_names for b in partitions[part].bad]
            dev = self._stage_devset(k, all_good, all_bad)
            dev_ids = {c.problem.id for c in dev.cases}
            record.dev_seed = dev.seed
            record.dev_size = len(dev)
            record.devset_ref = f"iter-{k}/devset.jsonl"
            if stop_after == "devset":
                return record, [], handle

            # 6. synthesis per part against the shared reference index
            index = self._reference_index(k)
            bad_by_id = {b.id: b for part in part_names for b in partitions[part].bad}
            kept_by_part: dict[str, list[SyntheticSample]] = {}
            for part in part_names:
                clusters = reviewed.get(part, [])
                if not clusters:
                    kept_by_part[part] = []
                    continue
                bad_by_cluster = {
                    c.id: [
                        bad_by_id[mid]
                        for mid in c.member_bad_case_ids
                        if mid in bad_by_id and mid not in dev_ids
                    ]
                    for c in clusters
                    if c.status == "active"
                }
                kept_by_part[part] = self._stage_synthesis(
                    k, part, clusters, bad_by_cluster, index, stats_by_part[part]
                )
            if stop_after == "synthesis":
                return record, [], handle

            # 7-8. one-shot scoring and per-part selection
            selected: list[SyntheticSample] = []
            manifest: dict[str, list[str]] = {}
            score_results: dict[str, list[OslResult]] = {}
            for part in part_names:
                kept = kept_by_part[part]
                if not kept:
                    score_results[part] = []
                    continue
                score_results[part] = self._stage_scores(k, part, kept, dev, handle)
                stats_by_part[part].scored = len(score_results[part])
            if stop_after == "scores":
                return record, [], handle
            for part in part_names:
                kept = kept_by_part[part]
                stats = stats_by_part[part]
                if not kept:
                    manifest[part] = []
                    continue
                chosen = self._stage_selection(k, part, kept, score_results[part])
                stats.selected = len(chosen)
                selected.extend(chosen)
                manifest[part] = [s.id for s in chosen]
            records.write_json(
                {"iteration": k, "parts": manifest, "total": len(selected)},
                self.artifact(k, "selection.json"),
            )
            if stop_after == "selection":
                return record, selected, handle

            # 9. trainer hook (iterative mode trains every round)
            handle_out = handle
            if self.config.training_mode == "iterative":
                handle_out = invoke_trainer(
                    selected,
                    handle,
                    self.config.training_mode,
                    self.config.trainer,
                    self.run_dir,
                    tag=f"iter-{k}",
                )

            record.parts = [stats_by_part[p] for p in part_names]
            record.selected_total = len(selected)
            record.handle_out = _handle_dict(handle_out)
            records.write_json(record.to_dict(), record_path)
            if self._timings:
                records.write_json(self._timings, self.artifact(k, "timings.json"))
            return record, selected, handle_out
        except Exception as exc:
            if not isinstance(exc, ReviewPending):
                records.write_json(
                    {"failed_at": type(exc).__name__, "error": str(exc)},
                    self.artifact(k, "failed.json"),
                )
            raise

    def _original_bad_ids(
        self, k: int, partitions: dict[str, PartitionResult]
    ) -> dict[str, set[str]]:
        """Iteration-0 bad ids per part: the fixed fix-rate denominator."""
        out: dict[str, set[str]] = {}
        for part in partitions:
            if k == 0:
                out[part] = {b.id for b in partitions[part].bad}
                continue
            path = self.artifact(0, f"partition-{part}.jsonl")
            if not path.exists():
                raise PipelineError(
                    f"iteration {k} needs the iteration-0 partition for part {part}"
                )
            bad_ids = set()
            for item in records.read_records(path):
                if isinstance(item, Attempt) and not item.correct:
                    bad_ids.add(item.problem_id)
            out[part] = bad_ids
        return out

    def _fix_rate(self, k: int, original_bad: set[str], result: PartitionResult) -> float:
        """Share of the original bad set this iteration's model answers correctly.

        Iteration 0 discovers the original bad set, so its rate is 0 by
        definition. Problems undecided on this scan leave the denominator.
        """
        if k == 0 or not original_bad:
            return 0.0
        undecided = {u.problem_id for u in result.undecided}
        denominator = original_bad - undecided
        if not denominator:
            log.warning("fix rate undefined at iteration %d: every original bad case undecided", k)
            return 0.0
        good_ids = {p.id for p in result.good}
        return len(denominator & good_ids) / len(denominator)

    # -- full run ----------------------------------------------------------------

    def run_pipeline(self) -> dict:
        """All iterations plus the training schedule; returns the final report."""
        config = self.config
        with RunLock(self.run_dir):
            handle = config.target_handle()
            iteration_records: list[IterationRecord] = []
            accumulated: list[SyntheticSample] = []
            for k in range(config.iterations):
                record, selected, handle = self.run_iteration(k, handle)
                iteration_records.append(record)
                accumulated.extend(selected)
            if config.training_mode == "from_scratch":
                try:
                    handle = invoke_trainer(
                        accumulated,
                        config.target_handle(),
                        config.training_mode,
                        config.trainer,
                        self.run_dir,
                        tag="final",
                    )
                except TrainerError:
                    log.error("final training call failed; selection manifests are intact")
                    raise

            report = {
                "run_dir": str(self.run_dir),
                "mode": config.training_mode,
                "iterations": config.iterations,
                "totals": {
                    "generated": sum(s.kept for r in iteration_records for s in r.parts),
                    "selected": sum(r.selected_total for r in iteration_records),
                },
                "per_iteration": [
                    {
                        "index": r.index,
                        "kept": sum(s.kept for s in r.parts),
                        "selected": r.selected_total,
                        "fix_rate": {s.part: s.fix_rate for s in r.parts},
                    }
                    for r in iteration_records
                ],
                "trainer_invocations": count_invocations(self.run_dir),
                "final_model": _handle_dict(handle),
            }
            if config.evaluate_at_end:
                report["evaluation"] = self._final_evaluation(handle)
            records.write_json(report, self.run_dir / "report.json")
            return report

    def _final_evaluation(self, handle: ModelHandle) -> dict:
        entries = []
        for part in self.config.parts:
            test = self.test_set(part.name)
            if test is None:
                continue
            entries.append(
                evaluate(
                    self.gateway,
                    handle.with_decoding(0.0, 2048),
                    test,
                    transcript_path=self.run_dir / f"eval-transcript-{part.name}.jsonl",
                )
            )
        if not entries:
            return {}
        report = EmReport(model_name=handle.model_name, entries=entries)
        report_table([report], self.run_dir / "eval-report.txt")
        return {
            "average": report.average,
            "per_dataset": {e.dataset: e.em_percent for e in entries},
        }

    def handle_for_iteration(self, k: int) -> ModelHandle:
        """The model handle in effect at the start of iteration k, replayed
        from completed iteration records."""
        handle = self.config.target_handle()
        for j in range(k):
            record_path = self.artifact(j, "record.json")
            if not record_path.exists():
                raise PipelineError(
                    f"iteration {k} needs iteration {j} complete first (no record.json)"
                )
            record = IterationRecord.from_dict(records.read_json(record_path))
            handle = handle.with_endpoint(
                record.handle_out["endpoint"], record.handle_out["model_name"]
            )
        return handle

    def next_incomplete_iteration(self) -> Optional[int]:
        for k in range(self.config.iterations):
            if not self.artifact(k, "record.json").exists():
                return k
        return None

    def pending_review_iteration(self) -> Optional[int]:
        """Smallest iteration with clusters persisted but no decision file."""
        for k in range(self.config.iterations):
            iter_dir = self.iter_dir(k)
            if not iter_dir.exists():
                return None
            cluster_files = list(iter_dir.glob("clusters-*.jsonl"))
            cluster_files = [p for p in cluster_files if "reviewed" not in p.name]
            if cluster_files and not self.review_path(k).exists():
                return k
            if not self.artifact(k, "record.json").exists():
                return None
        return None
