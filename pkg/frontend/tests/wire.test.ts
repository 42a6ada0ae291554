import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  buildPayload,
  describeAction,
  excludeAction,
  mergeAction,
  renameAction,
  stableStringify,
} from "../src/wire";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/decision-payload.json", import.meta.url), "utf-8"),
);

describe("wire format", () => {
  it("serializes the staged scenario exactly as the golden payload", () => {
    const payload = buildPayload(
      [
        mergeAction(["toya/c01"], "toya/c00"),
        excludeAction("toyb/c02", "no error"),
        renameAction("toya/c00", "Merged Family"),
      ],
      "curator",
      "2026-08-10T00:00:00Z",
    );
    expect(payload).toEqual(fixture);
    expect(stableStringify(payload)).toBe(stableStringify(fixture));
  });

  it("always emits the full fixed field set", () => {
    const keys = ["action", "from_ids", "into", "cluster_id", "reason", "new_name"].sort();
    for (const action of [
      mergeAction(["a"], "b"),
      excludeAction("c", ""),
      renameAction("d", "D"),
    ]) {
      expect(Object.keys(action).sort()).toEqual(keys);
    }
  });

  it("copies inputs so later mutation cannot corrupt a payload", () => {
    const fromIds = ["a"];
    const action = mergeAction(fromIds, "b");
    const payload = buildPayload([action], "x", "t");
    fromIds.push("z");
    action.from_ids.push("y");
    expect(payload.actions[0].from_ids).toEqual(["a"]);
  });

  it("describes actions readably", () => {
    expect(describeAction(mergeAction(["a", "b"], "c"))).toBe("merge a, b into c");
    expect(describeAction(excludeAction("x", "why"))).toBe("exclude x (why)");
    expect(describeAction(renameAction("x", "New"))).toBe('rename x to "New"');
  });

  it("stableStringify orders keys deterministically", () => {
    expect(stableStringify({ b: 1, a: [{ d: 2, c: 3 }] })).toBe(
      '{"a":[{"c":3,"d":2}],"b":1}',
    );
  });
});
