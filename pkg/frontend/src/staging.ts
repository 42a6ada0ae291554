/** Staged-decision state: an ordered action list with undo history and
 * per-action validity, computed by replaying the actions against the census
 * with the same rules the server applies. The UI never decides cluster
 * semantics itself; this mirror exists only to flag mistakes before submit.
 */

import type { ClusterView, Diagnostic, ReviewActionWire } from "./types";

interface SimCluster {
  id: string;
  status: "active" | "excluded" | "merged";
  mergedInto: string | null;
  memberCount: number;
  name: string;
}

export interface ReplayResult {
  clusters: Map<string, SimCluster>;
  diagnostics: Diagnostic[];
}

function resolve(clusters: Map<string, SimCluster>, id: string): SimCluster {
  let cluster = clusters.get(id)!;
  const seen = new Set([id]);
  while (cluster.status === "merged" && cluster.mergedInto && !seen.has(cluster.mergedInto)) {
    seen.add(cluster.mergedInto);
    cluster = clusters.get(cluster.mergedInto)!;
  }
  return cluster;
}

/** Replay staged actions over the census; mirrors the server's validation. */
export function replay(census: ClusterView[], actions: ReviewActionWire[]): ReplayResult {
  const clusters = new Map<string, SimCluster>();
  for (const view of census) {
    clusters.set(view.id, {
      id: view.id,
      status: view.status,
      mergedInto: view.merged_into,
      memberCount: view.member_count,
      name: view.name,
    });
  }
  const diagnostics: Diagnostic[] = [];
  const complain = (index: number, message: string) =>
    diagnostics.push({ action_index: index, message });

  actions.forEach((action, index) => {
    if (action.action === "merge") {
      const unknown = [...action.from_ids, action.into].filter((id) => !clusters.has(id));
      if (unknown.length) {
        complain(index, `unknown cluster ids: ${unknown.join(", ")}`);
        return;
      }
      const target = resolve(clusters, action.into);
      if (target.status === "excluded") {
        complain(index, `merge target ${action.into} is excluded`);
        return;
      }
      for (const srcId of action.from_ids) {
        const src = clusters.get(srcId)!;
        if (resolve(clusters, srcId).id === target.id) continue;
        if (src.status === "excluded") {
          complain(index, `cannot merge excluded cluster ${srcId}`);
          continue;
        }
        if (src.status === "merged") {
          complain(index, `cluster ${srcId} already merged into ${src.mergedInto}`);
          continue;
        }
        target.memberCount += src.memberCount;
        src.memberCount = 0;
        src.status = "merged";
        src.mergedInto = target.id;
      }
    } else if (action.action === "exclude") {
      const cluster = clusters.get(action.cluster_id);
      if (!cluster) {
        complain(index, `unknown cluster id: ${action.cluster_id}`);
        return;
      }
      if (cluster.status === "merged") {
        complain(index, `cannot exclude merged cluster ${action.cluster_id}`);
        return;
      }
      cluster.status = "excluded";
    } else if (action.action === "rename") {
      const cluster = clusters.get(action.cluster_id);
      if (!cluster) {
        complain(index, `unknown cluster id: ${action.cluster_id}`);
        return;
      }
      if (cluster.status === "merged") {
        complain(index, `cannot rename merged cluster ${action.cluster_id}`);
        return;
      }
      if (!action.new_name.trim()) {
        complain(index, "rename needs a non-empty new name");
        return;
      }
      cluster.name = action.new_name.trim();
    } else {
      complain(index, `unknown action ${JSON.stringify(action.action)}`);
    }
  });
  for (const cluster of clusters.values()) {
    if (cluster.status === "merged") {
      cluster.mergedInto = resolve(clusters, cluster.id).id;
    }
  }
  return { clusters, diagnostics };
}

/** The staged decision: ordered actions, undo history, validity flags. */
export class Staging {
  private actions: ReviewActionWire[] = [];
  private undone: ReviewActionWire[] = [];
  private serverDiagnostics = new Map<number, string>();

  stage(action: ReviewActionWire): void {
    this.actions.push(action);
    this.undone = [];
    this.serverDiagnostics.clear();
  }

  undo(): ReviewActionWire | undefined {
    const action = this.actions.pop();
    if (action) {
      this.undone.push(action);
      this.serverDiagnostics.clear();
    }
    return action;
  }

  redo(): ReviewActionWire | undefined {
    const action = this.undone.pop();
    if (action) this.actions.push(action);
    return action;
  }

  removeAt(index: number): void {
    if (index >= 0 && index < this.actions.length) {
      this.actions.splice(index, 1);
      this.serverDiagnostics.clear();
    }
  }

  clear(): void {
    this.actions = [];
    this.undone = [];
    this.serverDiagnostics.clear();
  }

  list(): readonly ReviewActionWire[] {
    return this.actions;
  }

  /** Per-action validity against the census plus any server rejections. */
  flags(census: ClusterView[]): { valid: boolean; message: string }[] {
    const { diagnostics } = replay(census, this.actions);
    const byIndex = new Map(diagnostics.map((d) => [d.action_index, d.message]));
    return this.actions.map((_, i) => {
      const message = byIndex.get(i) ?? this.serverDiagnostics.get(i) ?? "";
      return { valid: !message, message };
    });
  }

  /** Submit is enabled only when every staged action validates. */
  canSubmit(census: ClusterView[]): boolean {
    return this.flags(census).every((f) => f.valid);
  }

  applyServerRejection(diagnostics: { action_index: number; message: string }[]): void {
    this.serverDiagnostics = new Map(
      diagnostics.map((d) => [d.action_index, `server: ${d.message}`]),
    );
  }
}
