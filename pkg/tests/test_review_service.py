"""Review service endpoints: census reads, decision submission, gate release."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from errloop.pipeline import Pipeline, ReviewPending
from errloop.review_service import create_app
from conftest import make_run_config


@pytest.fixture
def blocked_run(tmp_path):
    """A run stopped at the review gate for iteration 0."""
    config, fail_ids = make_run_config(tmp_path)
    config.auto_approve = False
    config.review_timeout = 0.1
    config.review_poll_seconds = 0.02
    pipeline = Pipeline(config)
    with pytest.raises(ReviewPending):
        pipeline.run_iteration(0, config.target_handle())
    return config, pipeline, fail_ids


def client_for(config):
    return TestClient(create_app(config))


def test_status_reports_pending_iteration(blocked_run):
    config, _, _ = blocked_run
    client = client_for(config)
    assert client.get("/api/status").json() == {"pending_iteration": 0}


def test_cluster_census_matches_persisted_files(blocked_run):
    config, pipeline, _ = blocked_run
    client = client_for(config)
    body = client.get("/iterations/0/clusters").json()
    from errloop import records
    persisted = []
    for part in ("toya", "toyb"):
        persisted.extend(records.read_records(pipeline.artifact(0, f"clusters-{part}.jsonl")))
    assert {v["id"] for v in body} == {c.id for c in persisted}
    counts = [v["member_count"] for v in body]
    assert counts == sorted(counts, reverse=True)
    by_id = {v["id"]: v for v in body}
    for cluster in persisted:
        view = by_id[cluster.id]
        assert view["name"] == cluster.name
        assert view["member_count"] == len(cluster.member_bad_case_ids)
        assert sum(kp["count"] for kp in view["keyphrases"]) == len(cluster.keyphrase_ids)


def test_cluster_samples_carry_both_paths(blocked_run):
    config, _, fail_ids = blocked_run
    client = client_for(config)
    census = client.get("/iterations/0/clusters").json()
    cid = census[0]["id"]
    samples = client.get(f"/iterations/0/clusters/{cid}/samples").json()
    assert 1 <= len(samples) <= 5
    for sample in samples:
        assert sample["problem_id"] in fail_ids["toya"] | fail_ids["toyb"]
        assert sample["question"]
        assert sample["reference_solution"]
        assert sample["model_reasoning"]
        assert sample["reference_answer"] != sample["model_answer"]


def test_unknown_cluster_404(blocked_run):
    config, _, _ = blocked_run
    client = client_for(config)
    assert client.get("/iterations/0/clusters/nope/samples").status_code == 404


def test_missing_iteration_404(blocked_run):
    config, _, _ = blocked_run
    client = client_for(config)
    assert client.get("/iterations/7/clusters").status_code == 404


def test_valid_review_writes_file_and_releases_gate(blocked_run):
    config, pipeline, _ = blocked_run
    client = client_for(config)
    census = client.get("/iterations/0/clusters").json()
    merge_from = census[1]["id"]
    merge_into = census[0]["id"]
    payload = {
        "actions": [
            {"action": "merge", "from_ids": [merge_from], "into": merge_into},
            {"action": "rename", "cluster_id": merge_into, "new_name": "Merged Family"},
        ],
        "author": "curator",
        "timestamp": "2026-08-10T00:00:00Z",
    }
    response = client.post("/iterations/0/review", json=payload)
    assert response.status_code == 200
    assert response.json()["accepted"] is True
    assert pipeline.review_path(0).exists()
    # pipeline resumes to completion with the review applied
    config.review_timeout = 2.0
    report = Pipeline(config).run_pipeline()
    assert report["totals"]["selected"] == 4
    reviewed = (Path(config.run_dir) / "iter-0" / f"clusters-reviewed-{merge_into.split('/')[0]}.jsonl").read_text()
    assert "Merged Family" in reviewed


def test_invalid_review_rejected_with_per_action_diagnostics(blocked_run):
    config, pipeline, _ = blocked_run
    client = client_for(config)
    payload = {
        "actions": [
            {"action": "exclude", "cluster_id": "toya/c00"},
            {"action": "exclude", "cluster_id": "does-not-exist"},
        ],
        "author": "curator",
        "timestamp": "t",
    }
    response = client.post("/iterations/0/review", json=payload)
    assert response.status_code == 422
    body = response.json()
    assert body["accepted"] is False
    assert body["diagnostics"] == [
        {"action_index": 1, "message": "unknown cluster id: does-not-exist"},
    ]
    assert not pipeline.review_path(0).exists()  # gate still blocked


def test_post_without_pending_review_conflicts(blocked_run):
    config, _, _ = blocked_run
    client = client_for(config)
    ok = client.post("/iterations/0/review", json={"actions": []})
    assert ok.status_code == 200
    again = client.post("/iterations/0/review", json={"actions": []})
    assert again.status_code == 409
    wrong_iteration = client.post("/iterations/5/review", json={"actions": []})
    assert wrong_iteration.status_code == 409


def test_empty_actions_is_explicit_approve(blocked_run):
    config, pipeline, _ = blocked_run
    client = client_for(config)
    response = client.post(
        "/iterations/0/review", json={"actions": [], "author": "curator", "timestamp": "t"}
    )
    assert response.status_code == 200
    assert pipeline.review_path(0).read_text() == ""  # identity review, empty file


def test_serves_built_frontend_when_present(blocked_run):
    from errloop.review_service import default_frontend_dir
    config, _, _ = blocked_run
    frontend = default_frontend_dir()
    if frontend is None:
        pytest.skip("frontend not built")
    client = TestClient(create_app(config, frontend_dir=frontend))
    page = client.get("/")
    assert page.status_code == 200
    assert "Error-cluster review" in page.text
    bundle = client.get("/app.js")
    assert bundle.status_code == 200
    # API routes still win over the static mount
    assert client.get("/api/status").json() == {"pending_iteration": 0}
