"""Zero-shot exact-match evaluation over test sets, with table reporting.

One greedy completion per test problem, the question as the sole user
message. Endpoint failures count as wrong inside EM and are reported
separately as infra failures, so a flaky endpoint can neither inflate nor
deflate a comparison unnoticed. Transcripts persist so EM can be recounted
from the stored responses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Optional, Sequence

from . import records
from .badcases import grade_attempt
from .corpus import ProblemSet
from .gateway import Gateway, GatewayError, ModelHandle, user

log = logging.getLogger(__name__)

GREEDY_EVAL_MAX_TOKENS = 2048


@dataclass
class DatasetEval:
    dataset: str
    n: int
    correct: int
    em_percent: float
    infra_failures: int = 0
    transcript_path: str = ""


@dataclass
class EmReport:
    model_name: str
    entries: list[DatasetEval] = field(default_factory=list)

    @property
    def average(self) -> float:
        if not self.entries:
            return 0.0
        return sum(e.em_percent for e in self.entries) / len(self.entries)


def evaluate(
    gateway: Gateway,
    target: ModelHandle,
    testset: ProblemSet,
    transcript_path: str | Path | None = None,
) -> DatasetEval:
    """EM over one test set. Requires a greedy handle with the standard budget."""
    if target.decoding.temperature != 0:
        raise ValueError("evaluation requires temperature 0 (greedy decoding)")
    if target.decoding.max_tokens != GREEDY_EVAL_MAX_TOKENS:
        raise ValueError(f"evaluation requires max_tokens {GREEDY_EVAL_MAX_TOKENS}")
    if not len(testset):
        raise ValueError(f"test set {testset.name} is empty; EM is undefined")
    slots = gateway.complete_many(target, [[user(p.question)] for p in testset.problems])
    correct = 0
    infra = 0
    attempts = []
    for problem, slot in zip(testset.problems, slots):
        if isinstance(slot, GatewayError):
            infra += 1
            log.warning("infra failure on %s: %s", problem.id, slot)
            continue
        attempt = grade_attempt(problem, slot.response, target.model_name)
        attempts.append(attempt)
        if attempt.correct:
            correct += 1
    if transcript_path is not None:
        records.write_records(attempts, transcript_path)
    return DatasetEval(
        dataset=testset.name,
        n=len(testset),
        correct=correct,
        em_percent=100.0 * correct / len(testset),
        infra_failures=infra,
        transcript_path=str(transcript_path or ""),
    )


def _fmt(value: float) -> str:
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def report_table(reports: Sequence[EmReport], path: str | Path | None = None) -> str:
    """Deterministic text table: one row per model, columns per dataset + AVG.

    When ``path`` is given the text table is written there and a
    machine-readable JSON sibling next to it.
    """
    if not reports:
        raise ValueError("report_table needs at least one report")
    datasets: list[str] = []
    for report in reports:
        for entry in report.entries:
            if entry.dataset not in datasets:
                datasets.append(entry.dataset)
    header = ["model"] + datasets + ["AVG"]
    rows = [header]
    for report in reports:
        by_name = {e.dataset: e for e in report.entries}
        row = [report.model_name]
        for ds in datasets:
            entry = by_name.get(ds)
            row.append(_fmt(entry.em_percent) if entry else "-")
        row.append(_fmt(report.average))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for row_index, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if row_index == 0:
            lines.append("  ".join("-" * w for w in widths))
    text = "\n".join(lines) + "\n"
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        payload = [
            {
                "model_name": rep.model_name,
                "average": rep.average,
                "entries": [
                    {
                        "dataset": e.dataset,
                        "n": e.n,
                        "correct": e.correct,
                        "em_percent": e.em_percent,
                        "infra_failures": e.infra_failures,
                    }
                    for e in rep.entries
                ],
            }
            for rep in reports
        ]
        records.write_json(payload, path.with_suffix(".json"))
    return text
