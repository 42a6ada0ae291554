"""HTTP review service: the wire surface behind manual cluster review.

Serves the pending iteration's cluster census and sample bad cases, accepts
one review decision, validates it, persists the canonical decision file, and
thereby releases the pipeline's review gate. The companion browser UI is a
pure client of these endpoints and is served statically when its build
output is present; deleting the UI costs ergonomics, not capability.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import records
from .badcases import Attempt
from .clustering import (
    ErrorCluster,
    decision_from_payload,
    validate_decision,
    write_decision,
)
from .config import RunConfig
from .pipeline import Pipeline

log = logging.getLogger(__name__)

SAMPLES_PER_CLUSTER = 5


def _load_clusters(pipeline: Pipeline, k: int) -> list[ErrorCluster]:
    iter_dir = pipeline.iter_dir(k)
    clusters: list[ErrorCluster] = []
    if not iter_dir.exists():
        return clusters
    for path in sorted(iter_dir.glob("clusters-*.jsonl")):
        if "reviewed" in path.name:
            continue
        clusters.extend(
            c for c in records.read_records(path) if isinstance(c, ErrorCluster)
        )
    return clusters


def _cluster_view(cluster: ErrorCluster, phrase_by_id: dict[str, str]) -> dict:
    counts: dict[str, int] = {}
    for kid in cluster.keyphrase_ids:
        phrase = phrase_by_id.get(kid, "")
        if phrase:
            counts[phrase] = counts.get(phrase, 0) + 1
    return {
        "id": cluster.id,
        "name": cluster.name,
        "description": cluster.description,
        "status": cluster.status,
        "merged_into": cluster.merged_into,
        "flagged": cluster.flagged,
        "member_count": cluster.member_count,
        "keyphrases": [
            {"phrase": phrase, "count": count}
            for phrase, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ],
    }


def create_app(config: RunConfig, frontend_dir: str | Path | None = None) -> FastAPI:
    pipeline = Pipeline(config)
    app = FastAPI(title="errloop review service")

    def pending() -> Optional[int]:
        return pipeline.pending_review_iteration()

    @app.get("/api/status")
    def status() -> dict:
        return {"pending_iteration": pending()}

    @app.get("/iterations/{k}/clusters")
    def clusters(k: int) -> list[dict]:
        found = _load_clusters(pipeline, k)
        if not found:
            raise HTTPException(status_code=404, detail=f"no clusters for iteration {k}")
        phrase_by_id: dict[str, str] = {}
        iter_dir = pipeline.iter_dir(k)
        for path in sorted(iter_dir.glob("keyphrases-*.jsonl")):
            for item in records.read_records(path):
                phrase_by_id[item.bad_case_id] = item.phrase
        views = [_cluster_view(c, phrase_by_id) for c in found]
        views.sort(key=lambda v: (-v["member_count"], v["id"]))
        return views

    @app.get("/iterations/{k}/clusters/{cid:path}/samples")
    def samples(k: int, cid: str) -> list[dict]:
        found = {c.id: c for c in _load_clusters(pipeline, k)}
        cluster = found.get(cid)
        if cluster is None:
            raise HTTPException(status_code=404, detail=f"unknown cluster {cid}")
        attempts: dict[str, Attempt] = {}
        for path in sorted(pipeline.iter_dir(k).glob("partition-*.jsonl")):
            for item in records.read_records(path):
                if isinstance(item, Attempt):
                    attempts[item.problem_id] = item
        problems = {}
        for part in config.parts:
            problems.update(pipeline.train_set(part.name).by_id())
        out = []
        for member_id in cluster.member_bad_case_ids[:SAMPLES_PER_CLUSTER]:
            problem = problems.get(member_id)
            attempt = attempts.get(member_id)
            if problem is None or attempt is None:
                continue
            out.append(
                {
                    "problem_id": member_id,
                    "question": problem.question,
                    "reference_solution": problem.reference_solution,
                    "reference_answer": problem.reference_answer,
                    "model_reasoning": attempt.reasoning,
                    "model_answer": attempt.extracted.canonical if attempt.extracted else None,
                }
            )
        return out

    @app.post("/iterations/{k}/review")
    async def submit_review(k: int, request: Request) -> JSONResponse:
        pending_k = pending()
        if pending_k is None or pending_k != k:
            raise HTTPException(
                status_code=409,
                detail=f"no review pending for iteration {k}"
                + (f" (pending: {pending_k})" if pending_k is not None else ""),
            )
        payload = await request.json()
        decision = decision_from_payload(payload)
        clusters_list = _load_clusters(pipeline, k)
        diagnostics = validate_decision(clusters_list, decision)
        if diagnostics:
            return JSONResponse(
                status_code=422,
                content={
                    "accepted": False,
                    "diagnostics": [
                        {"action_index": i, "message": msg} for i, msg in diagnostics
                    ],
                },
            )
        path = pipeline.review_path(k)
        write_decision(decision, path)
        log.info("review for iteration %d accepted; gate released (%s)", k, path)
        return JSONResponse(
            status_code=200,
            content={"accepted": True, "written": str(path), "actions": len(decision.actions)},
        )

    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app


def default_frontend_dir() -> Optional[Path]:
    """The built companion UI, when the repo checkout carries one."""
    here = Path(__file__).resolve()
    for base in here.parents:
        candidate = base / "frontend" / "dist"
        if candidate.exists():
            return candidate
    return None
