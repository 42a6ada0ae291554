"""Run configuration and the per-stage seed schedule.

A single declarative config (JSON file or dict) drives the whole pipeline.
Stage seeds derive from the master seed by hashing a counter string
``"<master>|<iteration>|<stage>|<extra>"`` (sha256, first 8 bytes), so every
stage is independently reproducible without stateful RNG threading.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

from . import records
from .gateway import Decoding, ModelHandle

TRAINING_MODES = ("iterative", "from_scratch")


class ConfigError(Exception):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labeled parts."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def stage_seed(master_seed: int, iteration: int, stage: str, extra: str = "") -> int:
    return derive_seed(master_seed, iteration, stage, extra)


@dataclass
class PartConfig:
    """One dataset part (e.g. the gsm8k-style part, the math-style part)."""

    name: str
    train_path: str
    format: str  # gsm8k-style | math-style | generic
    test_path: Optional[str] = None
    synthesis_template: str = ""  # defaults from format

    def template(self) -> str:
        if self.synthesis_template:
            return self.synthesis_template
        return "synthesis_math" if self.format == "math-style" else "synthesis_gsm8k"


@dataclass
class HandleConfig:
    endpoint: str
    model_name: str
    temperature: float = 0.0
    max_tokens: int = 2048

    def to_handle(self, role: str) -> ModelHandle:
        return ModelHandle(
            role=role,
            endpoint=self.endpoint,
            model_name=self.model_name,
            decoding=Decoding(temperature=self.temperature, max_tokens=self.max_tokens),
        )


@dataclass
class TrainerConfig:
    kind: str = "null"  # null | command | http
    command: list[str] = field(default_factory=list)
    endpoint: str = ""
    params: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    run_dir: str
    parts: list[PartConfig]
    target: HandleConfig
    instructor: HandleConfig
    iterations: int = 3
    per_part_total: int = 5000
    batch_size: int = 20
    exemplar_bad: int = 5
    exemplar_generated: int = 3
    rouge_threshold: float = 0.7
    dev_good: int = 50
    dev_bad: int = 50
    select_fraction: float = 0.05
    training_mode: str = "iterative"
    master_seed: int = 0
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    synthesis_temperature: float = 0.7
    auto_approve: bool = False
    cache_dir: Optional[str] = "auto"  # "auto" -> <run_dir>/cache; None disables
    concurrency: int = 8
    context_budget_chars: int = 16_000
    max_attempts: int = 5
    stall_limit: int = 5
    keyphrase_retries: int = 3
    cluster_batch_size: int = 300
    persist_score_transcripts: bool = True
    review_poll_seconds: float = 0.5
    review_timeout: Optional[float] = None
    evaluate_at_end: bool = False

    def validate(self) -> None:
        problems = []
        if not self.parts:
            problems.append("at least one dataset part is required")
        if self.iterations < 1:
            problems.append("iterations must be >= 1")
        for name, value in (
            ("per_part_total", self.per_part_total),
            ("batch_size", self.batch_size),
            ("exemplar_bad", self.exemplar_bad),
            ("exemplar_generated", self.exemplar_generated),
            ("concurrency", self.concurrency),
        ):
            if value < 1:
                problems.append(f"{name} must be positive")
        if not 0 < self.select_fraction <= 1:
            problems.append("select_fraction must be in (0, 1]")
        if not 0 <= self.rouge_threshold <= 1:
            problems.append("rouge_threshold must be in [0, 1]")
        if self.dev_good < 0 or self.dev_bad < 0 or self.dev_good + self.dev_bad < 1:
            problems.append("dev set counts must be nonnegative and sum to >= 1")
        if self.training_mode not in TRAINING_MODES:
            problems.append(f"training_mode must be one of {TRAINING_MODES}")
        if self.trainer.kind not in ("null", "command", "http"):
            problems.append("trainer.kind must be null, command, or http")
        seen = set()
        for part in self.parts:
            if part.name in seen:
                problems.append(f"duplicate part name {part.name!r}")
            seen.add(part.name)
        if problems:
            raise ConfigError("; ".join(problems))

    def resolved_cache_dir(self) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        if self.cache_dir == "auto":
            return Path(self.run_dir) / "cache"
        return Path(self.cache_dir)

    def target_handle(self) -> ModelHandle:
        return self.target.to_handle("target")

    def instructor_handle(self) -> ModelHandle:
        return self.instructor.to_handle("instructor")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        try:
            data["parts"] = [PartConfig(**p) for p in data["parts"]]
            data["target"] = HandleConfig(**data["target"])
            data["instructor"] = HandleConfig(**data["instructor"])
            if "trainer" in data and isinstance(data["trainer"], dict):
                data["trainer"] = TrainerConfig(**data["trainer"])
            config = cls(**data)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad run config: {exc}") from exc
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(records.read_json(path))
