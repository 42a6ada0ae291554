"""External trainer hook.

Training itself happens outside this pipeline. The hook writes the selected
samples to a training file (question/solution record pairs), invokes the
configured external command or HTTP endpoint, and reads back the new model
handle. The "null" trainer returns the base handle unchanged so the whole
pipeline can run without any training infrastructure. Every invocation is
appended to a log file for accounting.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path

import requests

from . import records
from .config import TrainerConfig
from .gateway import ModelHandle
from .synthesis import SyntheticSample

log = logging.getLogger(__name__)


class TrainerError(Exception):
    pass


@dataclass
class TrainingPair:
    question: str
    solution: str


records.register_record_type(
    "training_pair",
    TrainingPair,
    lambda p: {"question": p.question, "solution": p.solution},
    lambda d: TrainingPair(question=d["question"], solution=d["solution"]),
)


def write_training_file(samples: list[SyntheticSample], path: str | Path) -> int:
    pairs = [TrainingPair(question=s.question, solution=s.solution) for s in samples]
    return records.write_records(pairs, path)


def _log_invocation(log_path: Path, entry: dict) -> None:
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False))
        fh.write("\n")


def _parse_handle_line(line: str, base: ModelHandle) -> ModelHandle:
    line = line.strip()
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, dict) and "endpoint" in obj:
        return base.with_endpoint(obj["endpoint"], obj.get("model_name"))
    return base.with_endpoint(line)


def invoke_trainer(
    selected: list[SyntheticSample],
    base_model: ModelHandle,
    mode: str,
    trainer: TrainerConfig,
    work_dir: str | Path,
    tag: str,
) -> ModelHandle:
    """Run one training call; returns the new model handle.

    ``tag`` names this invocation's files under ``work_dir`` (e.g. "iter-2").
    The selection data is written before any invocation, so a trainer failure
    never loses it.
    """
    if not selected:
        raise TrainerError("refusing to train on an empty selection")
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    train_file = work_dir / f"train-{tag}.jsonl"
    write_training_file(selected, train_file)
    log_path = work_dir / "trainer_log.jsonl"

    if trainer.kind == "null":
        _log_invocation(log_path, {
            "tag": tag, "kind": "null", "mode": mode,
            "train_file": train_file.name, "samples": len(selected),
            "result_endpoint": base_model.endpoint,
        })
        return base_model

    if trainer.kind == "command":
        params_file = work_dir / f"params-{tag}.json"
        records.write_json(
            {
                "mode": mode,
                "base_model": {
                    "endpoint": base_model.endpoint,
                    "model_name": base_model.model_name,
                },
                "params": trainer.params,
            },
            params_file,
        )
        cmd = list(trainer.command) + [
            "--train-file", str(train_file),
            "--base-model", base_model.model_name,
            "--mode", mode,
            "--params-file", str(params_file),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise TrainerError(
                f"trainer command exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        lines = [l for l in proc.stdout.splitlines() if l.strip()]
        if not lines:
            raise TrainerError("trainer command printed no model handle")
        handle = _parse_handle_line(lines[-1], base_model)
        _log_invocation(log_path, {
            "tag": tag, "kind": "command", "mode": mode,
            "train_file": train_file.name, "samples": len(selected),
            "result_endpoint": handle.endpoint,
        })
        return handle

    if trainer.kind == "http":
        try:
            resp = requests.post(
                trainer.endpoint,
                json={
                    "train_file": str(train_file),
                    "base_model": {
                        "endpoint": base_model.endpoint,
                        "model_name": base_model.model_name,
                    },
                    "mode": mode,
                    "params": trainer.params,
                },
                timeout=None,
            )
            resp.raise_for_status()
            body = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise TrainerError(f"trainer endpoint failed: {exc}") from exc
        if "endpoint" not in body:
            raise TrainerError(f"trainer response missing endpoint: {body}")
        handle = base_model.with_endpoint(body["endpoint"], body.get("model_name"))
        _log_invocation(log_path, {
            "tag": tag, "kind": "http", "mode": mode,
            "train_file": train_file.name, "samples": len(selected),
            "result_endpoint": handle.endpoint,
        })
        return handle

    raise TrainerError(f"unknown trainer kind {trainer.kind!r}")


def count_invocations(work_dir: str | Path) -> int:
    log_path = Path(work_dir) / "trainer_log.jsonl"
    if not log_path.exists():
        return 0
    with open(log_path, encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())
