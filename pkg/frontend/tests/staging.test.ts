import { describe, expect, it } from "vitest";

import { Staging, replay } from "../src/staging";
import type { ClusterView } from "../src/types";
import { excludeAction, mergeAction, renameAction } from "../src/wire";

function view(id: string, memberCount: number, overrides: Partial<ClusterView> = {}): ClusterView {
  return {
    id,
    name: id.toUpperCase(),
    description: "",
    status: "active",
    merged_into: null,
    flagged: false,
    member_count: memberCount,
    keyphrases: [],
    ...overrides,
  };
}

const census = () => [view("p/a", 6), view("p/b", 3), view("p/c", 5)];

describe("replay", () => {
  it("merge moves member counts and marks the source merged", () => {
    const { clusters, diagnostics } = replay(census(), [mergeAction(["p/b"], "p/a")]);
    expect(diagnostics).toEqual([]);
    expect(clusters.get("p/a")!.memberCount).toBe(9);
    expect(clusters.get("p/b")!.status).toBe("merged");
    expect(clusters.get("p/b")!.mergedInto).toBe("p/a");
  });

  it("collapses merge chains", () => {
    const { clusters, diagnostics } = replay(census(), [
      mergeAction(["p/a"], "p/b"),
      mergeAction(["p/b"], "p/c"),
    ]);
    expect(diagnostics).toEqual([]);
    expect(clusters.get("p/a")!.mergedInto).toBe("p/c");
    expect(clusters.get("p/c")!.memberCount).toBe(14);
  });

  it("merging into a merged target resolves to its terminal", () => {
    const { clusters, diagnostics } = replay(census(), [
      mergeAction(["p/a"], "p/b"),
      mergeAction(["p/c"], "p/a"),
    ]);
    expect(diagnostics).toEqual([]);
    expect(clusters.get("p/b")!.memberCount).toBe(14);
  });

  it("flags unknown ids with the offending action index", () => {
    const { diagnostics } = replay(census(), [
      excludeAction("p/a", ""),
      mergeAction(["ghost"], "p/b"),
    ]);
    expect(diagnostics).toEqual([
      { action_index: 1, message: "unknown cluster ids: ghost" },
    ]);
  });

  it("rejects merging into an excluded cluster", () => {
    const { diagnostics } = replay(census(), [
      excludeAction("p/a", "no error"),
      mergeAction(["p/b"], "p/a"),
    ]);
    expect(diagnostics[0].message).toContain("excluded");
  });

  it("rejects excluding or renaming a merged cluster", () => {
    const { diagnostics } = replay(census(), [
      mergeAction(["p/b"], "p/a"),
      excludeAction("p/b", ""),
      renameAction("p/b", "X"),
    ]);
    expect(diagnostics.map((d) => d.action_index)).toEqual([1, 2]);
  });

  it("requires a non-empty rename", () => {
    const { diagnostics } = replay(census(), [renameAction("p/a", "   ")]);
    expect(diagnostics[0].message).toContain("non-empty");
  });

  it("re-merging an already satisfied merge is a no-op", () => {
    const actions = [mergeAction(["p/b"], "p/a")];
    const once = replay(census(), actions);
    const twice = replay(census(), [...actions, ...actions]);
    expect(twice.diagnostics).toEqual([]);
    expect(twice.clusters.get("p/a")!.memberCount).toBe(
      once.clusters.get("p/a")!.memberCount,
    );
  });
});

describe("Staging", () => {
  it("stages, undoes, redoes, and removes", () => {
    const staging = new Staging();
    staging.stage(excludeAction("p/a", "r"));
    staging.stage(renameAction("p/b", "B2"));
    expect(staging.list()).toHaveLength(2);
    staging.undo();
    expect(staging.list()).toHaveLength(1);
    staging.redo();
    expect(staging.list()).toHaveLength(2);
    staging.removeAt(0);
    expect(staging.list()).toHaveLength(1);
    expect(staging.list()[0].action).toBe("rename");
  });

  it("staging after undo clears the redo history", () => {
    const staging = new Staging();
    staging.stage(excludeAction("p/a", ""));
    staging.undo();
    staging.stage(renameAction("p/b", "B2"));
    expect(staging.redo()).toBeUndefined();
    expect(staging.list()).toHaveLength(1);
  });

  it("submit is enabled only when every staged action validates", () => {
    const staging = new Staging();
    expect(staging.canSubmit(census())).toBe(true); // empty = identity review
    staging.stage(mergeAction(["p/b"], "p/a"));
    expect(staging.canSubmit(census())).toBe(true);
    staging.stage(excludeAction("ghost", ""));
    expect(staging.canSubmit(census())).toBe(false);
    const flags = staging.flags(census());
    expect(flags[0].valid).toBe(true);
    expect(flags[1].valid).toBe(false);
    expect(flags[1].message).toContain("ghost");
  });

  it("maps server rejections onto staged actions and clears on change", () => {
    const staging = new Staging();
    staging.stage(excludeAction("p/a", ""));
    staging.applyServerRejection([{ action_index: 0, message: "conflict with census" }]);
    expect(staging.flags(census())[0].message).toBe("server: conflict with census");
    expect(staging.canSubmit(census())).toBe(false);
    staging.stage(renameAction("p/b", "B2"));
    expect(staging.flags(census())[0].message).toBe("");
  });
});
