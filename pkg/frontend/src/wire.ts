/** Serialization to the review-service wire format.
 *
 * The shape must match what `review apply` accepts on the server byte for
 * byte once persisted, so every action carries the full fixed field set.
 */

import type { ActionKind, ReviewActionWire, ReviewPayload } from "./types";

export function mergeAction(fromIds: string[], into: string): ReviewActionWire {
  return { action: "merge", from_ids: [...fromIds], into, cluster_id: "", reason: "", new_name: "" };
}

export function excludeAction(clusterId: string, reason: string): ReviewActionWire {
  return { action: "exclude", from_ids: [], into: "", cluster_id: clusterId, reason, new_name: "" };
}

export function renameAction(clusterId: string, newName: string): ReviewActionWire {
  return { action: "rename", from_ids: [], into: "", cluster_id: clusterId, reason: "", new_name: newName };
}

export function buildPayload(
  actions: ReviewActionWire[],
  author: string,
  timestamp: string,
): ReviewPayload {
  return {
    actions: actions.map((a) => ({
      action: a.action,
      from_ids: [...a.from_ids],
      into: a.into,
      cluster_id: a.cluster_id,
      reason: a.reason,
      new_name: a.new_name,
    })),
    author,
    timestamp,
  };
}

/** Deterministic rendering (sorted keys) used by tests to pin the format. */
export function stableStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${JSON.stringify(k)}:${stableStringify(v)}`);
    return `{${entries.join(",")}}`;
  }
  return JSON.stringify(value);
}

export function describeAction(a: ReviewActionWire): string {
  switch (a.action as ActionKind) {
    case "merge":
      return `merge ${a.from_ids.join(", ")} into ${a.into}`;
    case "exclude":
      return `exclude ${a.cluster_id}${a.reason ? ` (${a.reason})` : ""}`;
    case "rename":
      return `rename ${a.cluster_id} to "${a.new_name}"`;
  }
}
