"""Error keyphrases, instructor-driven clustering, and review application.

One keyphrase is generated per bad case; keyphrases are deduplicated,
clustered in batches of at most ``CLUSTER_BATCH_SIZE`` unique phrases, and,
when more than one batch was needed, a second pass clusters the batch-level
cluster names. Instructor responses must be structured JSON; returned
keyphrase strings are fuzzy-matched (case-insensitive, whitespace
normalized) back to input ids, and anything the instructor dropped or
mangled lands in an explicit "unclustered" bucket flagged for review —
silent drops are worse than an ugly bucket.

Review decisions (merge / exclude / rename) come from a decision file or
the review service; both produce identical records. ``apply_review`` is a
pure transformation, tolerant of re-application: an action whose effect
already holds is a no-op, so applying a decision twice equals applying it
once.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import records
from .badcases import BadCase
from .gateway import Gateway, GatewayError, ModelHandle, user
from .prompts import render

log = logging.getLogger(__name__)

CLUSTER_BATCH_SIZE = 300
PARSE_FAILURE_PHRASE = "uncategorized-parse-failure"
UNCLUSTERED_NAME = "Unclustered"
MAX_PHRASE_WORDS = 12


@dataclass
class ErrorKeyphrase:
    bad_case_id: str
    phrase: str
    iteration: int = 0
    flagged: bool = False

    @property
    def id(self) -> str:
        return self.bad_case_id


@dataclass
class ErrorCluster:
    id: str
    name: str
    description: str = ""
    keyphrase_ids: list[str] = field(default_factory=list)
    member_bad_case_ids: list[str] = field(default_factory=list)
    status: str = "active"  # active | excluded | merged
    merged_into: Optional[str] = None
    flagged: bool = False
    review_note: str = ""

    @property
    def member_count(self) -> int:
        return len(self.member_bad_case_ids)


@dataclass
class ReviewAction:
    action: str  # merge | exclude | rename
    from_ids: list[str] = field(default_factory=list)
    into: str = ""
    cluster_id: str = ""
    reason: str = ""
    new_name: str = ""


@dataclass
class ReviewDecision:
    actions: list[ReviewAction] = field(default_factory=list)
    author: str = ""
    timestamp: str = ""


class ReviewValidationError(Exception):
    """A decision referenced unknown or unusable clusters."""

    def __init__(self, diagnostics: list[tuple[int, str]]):
        self.diagnostics = diagnostics
        lines = "; ".join(f"action {i}: {msg}" for i, msg in diagnostics)
        super().__init__(f"invalid review decision: {lines}")


# -- response parsing ---------------------------------------------------------

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")


def _parse_json_array(text: str) -> Optional[list]:
    text = _FENCE_RE.sub("", text.strip())
    try:
        value = json.loads(text)
        if isinstance(value, list):
            return value
    except json.JSONDecodeError:
        pass
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        try:
            value = json.loads(text[start:end + 1])
            if isinstance(value, list):
                return value
        except json.JSONDecodeError:
            return None
    return None


def _clip_phrase(phrase: str) -> str:
    words = " ".join(str(phrase).split()).split()
    return " ".join(words[:MAX_PHRASE_WORDS])


def _fuzzy_key(phrase: str) -> str:
    return " ".join(phrase.casefold().split())


def _retry_nudge(base: list[dict], attempt: int, contract: str) -> list[dict]:
    return base + [
        user(
            f"Your previous reply could not be parsed. Reply again with {contract} "
            f"and nothing else. (attempt {attempt})"
        )
    ]


# -- keyphrase generation -----------------------------------------------------

def generate_keyphrase(
    gateway: Gateway,
    instructor: ModelHandle,
    case: BadCase,
    retries: int = 3,
) -> ErrorKeyphrase:
    """One concise error keyphrase for one bad case.

    Parse failures are retried with a corrective follow-up message; after the
    retries run out the case gets the fallback phrase and a review flag.
    """
    base = [
        user(
            render(
                "keyphrase",
                question=case.problem.question,
                reference_solution=case.problem.reference_solution,
                model_reasoning=case.model_reasoning,
            )
        )
    ]
    messages = base
    for attempt in range(1, retries + 2):
        try:
            response = gateway.complete(instructor, messages).response
        except GatewayError as exc:
            log.warning("keyphrase call failed for %s: %s", case.id, exc)
            response = ""
        parsed = _parse_json_array(response) if response else None
        if parsed and isinstance(parsed[0], str) and parsed[0].strip():
            return ErrorKeyphrase(
                bad_case_id=case.id,
                phrase=_clip_phrase(parsed[0]),
                iteration=case.iteration_found,
            )
        messages = _retry_nudge(base, attempt + 1, 'a JSON list containing one keyphrase string')
    log.warning("keyphrase unparseable for %s after %d retries", case.id, retries)
    return ErrorKeyphrase(
        bad_case_id=case.id,
        phrase=PARSE_FAILURE_PHRASE,
        iteration=case.iteration_found,
        flagged=True,
    )


def generate_keyphrases(
    gateway: Gateway,
    instructor: ModelHandle,
    cases: list[BadCase],
    retries: int = 3,
) -> list[ErrorKeyphrase]:
    return [generate_keyphrase(gateway, instructor, case, retries=retries) for case in cases]


# -- clustering ---------------------------------------------------------------

@dataclass
class _Proto:
    name: str
    description: str
    fuzzy_keys: list[str]


def _cluster_call(
    gateway: Gateway,
    instructor: ModelHandle,
    template: str,
    phrases: list[str],
    retries: int,
) -> Optional[list[dict]]:
    listing = "\n".join(f"{i + 1}. {p}" for i, p in enumerate(phrases))
    base = [user(render(template, keyphrases=listing))]
    messages = base
    for attempt in range(1, retries + 2):
        try:
            response = gateway.complete(instructor, messages).response
        except GatewayError as exc:
            log.warning("cluster call failed: %s", exc)
            response = ""
        parsed = _parse_json_array(response) if response else None
        if parsed is not None:
            clusters = [
                c for c in parsed
                if isinstance(c, dict)
                and isinstance(c.get("name"), str)
                and isinstance(c.get("keyphrases"), list)
            ]
            if clusters:
                return clusters
        messages = _retry_nudge(
            base, attempt + 1,
            'a JSON array of {"name", "explanation", "keyphrases"} objects',
        )
    return None


def cluster_keyphrases(
    gateway: Gateway,
    instructor: ModelHandle,
    phrases: list[ErrorKeyphrase],
    batch_size: int = CLUSTER_BATCH_SIZE,
    retries: int = 3,
    id_prefix: str = "",
) -> list[ErrorCluster]:
    """Cluster keyphrases into named error types via the instructor.

    Every input keyphrase is assigned to exactly one cluster; phrases the
    instructor failed to place go to a flagged "unclustered" cluster.
    """
    if not phrases:
        raise ValueError("cannot cluster an empty keyphrase list")

    # Deduplicate exact phrases (multiplicity tracked through the id lists).
    reps: list[str] = []
    ids_by_key: dict[str, list[str]] = {}
    for kp in phrases:
        key = _fuzzy_key(kp.phrase)
        if key not in ids_by_key:
            ids_by_key[key] = []
            reps.append(kp.phrase)
        ids_by_key[key].append(kp.id)

    batches = [reps[i:i + batch_size] for i in range(0, len(reps), batch_size)]
    protos: list[_Proto] = []
    unplaced: list[str] = []  # fuzzy keys
    for batch in batches:
        parsed = _cluster_call(gateway, instructor, "cluster", batch, retries)
        pending = {_fuzzy_key(p) for p in batch}
        if parsed is None:
            log.warning("cluster batch unparseable after retries; %d phrases unclustered", len(batch))
            unplaced.extend(_fuzzy_key(p) for p in batch)
            continue
        for obj in parsed:
            keys = []
            for returned in obj["keyphrases"]:
                key = _fuzzy_key(str(returned))
                if key in pending:
                    pending.discard(key)
                    keys.append(key)
            if keys:
                protos.append(
                    _Proto(
                        name=" ".join(str(obj["name"]).split()),
                        description=str(obj.get("explanation", "")),
                        fuzzy_keys=keys,
                    )
                )
        unplaced.extend(k for k in (_fuzzy_key(p) for p in batch) if k in pending)

    if len(batches) > 1 and len(protos) > 1:
        protos = _merge_pass(gateway, instructor, protos, retries)

    clusters: list[ErrorCluster] = []
    for i, proto in enumerate(protos):
        kp_ids = [pid for key in proto.fuzzy_keys for pid in ids_by_key[key]]
        clusters.append(
            ErrorCluster(
                id=f"{id_prefix}c{i:02d}",
                name=proto.name,
                description=proto.description,
                keyphrase_ids=list(kp_ids),
                member_bad_case_ids=list(kp_ids),
            )
        )
    if unplaced:
        kp_ids = [pid for key in unplaced for pid in ids_by_key[key]]
        clusters.append(
            ErrorCluster(
                id=f"{id_prefix}unclustered",
                name=UNCLUSTERED_NAME,
                description="Keyphrases the instructor failed to place; needs review.",
                keyphrase_ids=list(kp_ids),
                member_bad_case_ids=list(kp_ids),
                flagged=True,
            )
        )
    return clusters


def _merge_pass(
    gateway: Gateway,
    instructor: ModelHandle,
    protos: list[_Proto],
    retries: int,
) -> list[_Proto]:
    names = [p.name for p in protos]
    parsed = _cluster_call(gateway, instructor, "cluster_merge", names, retries)
    if parsed is None:
        log.warning("cluster merge pass unparseable; keeping batch-level clusters")
        return protos
    by_key: dict[str, list[_Proto]] = {}
    order: list[str] = []
    for proto in protos:
        key = _fuzzy_key(proto.name)
        if key not in by_key:
            by_key[key] = []
            order.append(key)
        by_key[key].append(proto)
    taken: set[str] = set()
    merged: list[_Proto] = []
    for obj in parsed:
        group = []
        for returned in obj["keyphrases"]:
            key = _fuzzy_key(str(returned))
            if key in by_key and key not in taken:
                taken.add(key)
                group.extend(by_key[key])
        if group:
            merged.append(
                _Proto(
                    name=" ".join(str(obj["name"]).split()),
                    description=str(obj.get("explanation", "")) or group[0].description,
                    fuzzy_keys=[k for p in group for k in p.fuzzy_keys],
                )
            )
    for key in order:
        if key not in taken:
            merged.extend(by_key[key])
    return merged


# -- review -------------------------------------------------------------------

def _resolve(by_id: dict[str, ErrorCluster], cid: str) -> ErrorCluster:
    cluster = by_id[cid]
    seen = {cid}
    while cluster.status == "merged" and cluster.merged_into:
        if cluster.merged_into in seen:  # defensive; normalization prevents cycles
            break
        seen.add(cluster.merged_into)
        cluster = by_id[cluster.merged_into]
    return cluster


def _apply_actions(
    clusters: list[ErrorCluster],
    actions: list[ReviewAction],
) -> tuple[list[ErrorCluster], list[tuple[int, str]]]:
    out = [replace(
        c,
        keyphrase_ids=list(c.keyphrase_ids),
        member_bad_case_ids=list(c.member_bad_case_ids),
    ) for c in clusters]
    by_id = {c.id: c for c in out}
    diagnostics: list[tuple[int, str]] = []

    for i, action in enumerate(actions):
        if action.action == "merge":
            unknown = [cid for cid in [*action.from_ids, action.into] if cid not in by_id]
            if unknown:
                diagnostics.append((i, f"unknown cluster ids: {', '.join(unknown)}"))
                continue
            target = _resolve(by_id, action.into)
            if target.status == "excluded":
                diagnostics.append((i, f"merge target {action.into} is excluded"))
                continue
            for src_id in action.from_ids:
                src = by_id[src_id]
                if _resolve(by_id, src_id).id == target.id:
                    continue  # already merged here (or is the target itself)
                if src.status == "excluded":
                    diagnostics.append((i, f"cannot merge excluded cluster {src_id}"))
                    continue
                if src.status == "merged":
                    diagnostics.append(
                        (i, f"cluster {src_id} already merged into {src.merged_into}")
                    )
                    continue
                target.keyphrase_ids.extend(src.keyphrase_ids)
                target.member_bad_case_ids.extend(src.member_bad_case_ids)
                src.keyphrase_ids = []
                src.member_bad_case_ids = []
                src.status = "merged"
                src.merged_into = target.id
        elif action.action == "exclude":
            cluster = by_id.get(action.cluster_id)
            if cluster is None:
                diagnostics.append((i, f"unknown cluster id: {action.cluster_id}"))
                continue
            if cluster.status == "merged":
                diagnostics.append((i, f"cannot exclude merged cluster {action.cluster_id}"))
                continue
            cluster.status = "excluded"
            if action.reason:
                cluster.review_note = action.reason
        elif action.action == "rename":
            cluster = by_id.get(action.cluster_id)
            if cluster is None:
                diagnostics.append((i, f"unknown cluster id: {action.cluster_id}"))
                continue
            if cluster.status == "merged":
                diagnostics.append((i, f"cannot rename merged cluster {action.cluster_id}"))
                continue
            if action.new_name.strip():
                cluster.name = action.new_name.strip()
            else:
                diagnostics.append((i, "rename needs a non-empty new name"))
        else:
            diagnostics.append((i, f"unknown action {action.action!r}"))

    # Normalization: collapse merge chains so merged_into points at a terminal.
    for cluster in out:
        if cluster.status == "merged":
            cluster.merged_into = _resolve(by_id, cluster.id).id
    return out, diagnostics


def validate_decision(
    clusters: list[ErrorCluster], decision: ReviewDecision
) -> list[tuple[int, str]]:
    """Dry-run a decision; returns per-action diagnostics (empty means valid)."""
    _, diagnostics = _apply_actions(clusters, decision.actions)
    return diagnostics


def apply_review(
    clusters: list[ErrorCluster], decision: ReviewDecision
) -> list[ErrorCluster]:
    """Apply review actions, returning new clusters. Deterministic and pure.

    Raises ReviewValidationError (listing every offending action) when any
    action references unknown clusters or clusters it cannot act on.
    """
    out, diagnostics = _apply_actions(clusters, decision.actions)
    if diagnostics:
        raise ReviewValidationError(diagnostics)
    return out


def active_clusters(clusters: list[ErrorCluster]) -> list[ErrorCluster]:
    return [c for c in clusters if c.status == "active"]


# -- decision file IO ---------------------------------------------------------

@dataclass
class _DecisionLine:
    action: ReviewAction
    author: str = ""
    timestamp: str = ""


def write_decision(decision: ReviewDecision, path: str | Path) -> int:
    """Canonical decision file: one action record per line."""
    lines = [
        _DecisionLine(action=a, author=decision.author, timestamp=decision.timestamp)
        for a in decision.actions
    ]
    return records.write_records(lines, path)


def read_decision(path: str | Path) -> ReviewDecision:
    lines = [item for item in records.read_records(path) if isinstance(item, _DecisionLine)]
    return ReviewDecision(
        actions=[line.action for line in lines],
        author=lines[0].author if lines else "",
        timestamp=lines[0].timestamp if lines else "",
    )


def decision_from_payload(payload: dict) -> ReviewDecision:
    """Build a ReviewDecision from the wire payload used by the service/UI."""
    actions = []
    for obj in payload.get("actions", []):
        actions.append(
            ReviewAction(
                action=str(obj.get("action", "")),
                from_ids=[str(x) for x in obj.get("from_ids", [])],
                into=str(obj.get("into", "")),
                cluster_id=str(obj.get("cluster_id", "")),
                reason=str(obj.get("reason", "")),
                new_name=str(obj.get("new_name", "")),
            )
        )
    return ReviewDecision(
        actions=actions,
        author=str(payload.get("author", "")),
        timestamp=str(payload.get("timestamp", "")),
    )


records.register_record_type(
    "error_keyphrase",
    ErrorKeyphrase,
    lambda k: {
        "bad_case_id": k.bad_case_id,
        "phrase": k.phrase,
        "iteration": k.iteration,
        "flagged": k.flagged,
    },
    lambda d: ErrorKeyphrase(
        bad_case_id=d["bad_case_id"],
        phrase=d["phrase"],
        iteration=d["iteration"],
        flagged=d.get("flagged", False),
    ),
)

records.register_record_type(
    "error_cluster",
    ErrorCluster,
    lambda c: {
        "id": c.id,
        "name": c.name,
        "description": c.description,
        "keyphrase_ids": c.keyphrase_ids,
        "member_bad_case_ids": c.member_bad_case_ids,
        "status": c.status,
        "merged_into": c.merged_into,
        "flagged": c.flagged,
        "review_note": c.review_note,
    },
    lambda d: ErrorCluster(
        id=d["id"],
        name=d["name"],
        description=d.get("description", ""),
        keyphrase_ids=d.get("keyphrase_ids", []),
        member_bad_case_ids=d.get("member_bad_case_ids", []),
        status=d.get("status", "active"),
        merged_into=d.get("merged_into"),
        flagged=d.get("flagged", False),
        review_note=d.get("review_note", ""),
    ),
)

records.register_record_type(
    "review_action",
    _DecisionLine,
    lambda l: {
        "action": l.action.action,
        "from_ids": l.action.from_ids,
        "into": l.action.into,
        "cluster_id": l.action.cluster_id,
        "reason": l.action.reason,
        "new_name": l.action.new_name,
        "author": l.author,
        "timestamp": l.timestamp,
    },
    lambda d: _DecisionLine(
        action=ReviewAction(
            action=d["action"],
            from_ids=d.get("from_ids", []),
            into=d.get("into", ""),
            cluster_id=d.get("cluster_id", ""),
            reason=d.get("reason", ""),
            new_name=d.get("new_name", ""),
        ),
        author=d.get("author", ""),
        timestamp=d.get("timestamp", ""),
    ),
)
