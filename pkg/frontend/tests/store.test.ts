import { describe, expect, it } from "vitest";

import { ViewState, WorkspaceStore } from "../src/store.js";
import type { Delta, Snapshot } from "../src/types.js";

function baseSnapshot(): Snapshot {
  return {
    format_version: 1,
    revision: 5,
    meta: { purpose: "", audience: "", intent: "", domain_requirements: "",
            references: [] },
    layers: {
      L1: { layer_kind: "writing", layer_id: "L1", name: "A", blocks: [],
            folded: false, fold_summary: null, summary_stale: false,
            tags: [], parent_link: null },
    },
    placements: { L1: { x: 0, y: 0, width: 100, height: 80, z: 1 } },
    placeholders: {},
    groups: {},
    binned: {},
    documents: {},
    comparisons: {},
    feedback: {},
    counters: { L: 1 },
  };
}

describe("WorkspaceStore", () => {
  it("applies upserts and removals from a delta", () => {
    const store = new WorkspaceStore();
    store.setFull(baseSnapshot());
    const delta: Delta = {
      kind: "delta", from_revision: 5, to_revision: 6,
      layers: {
        upsert: {
          L2: { layer_kind: "writing", layer_id: "L2", name: "B", blocks: [],
                folded: false, fold_summary: null, summary_stale: false,
                tags: [], parent_link: null },
        },
        remove: ["L1"],
      },
      placements: {
        upsert: { L2: { x: 10, y: 10, width: 100, height: 80, z: 2 } },
        remove: ["L1"],
      },
    };
    store.applyDelta(delta);
    expect(store.revision).toBe(6);
    expect(store.layer("L1")).toBeUndefined();
    expect(store.layer("L2")?.name).toBe("B");
    expect(store.placement("L2")?.z).toBe(2);
  });

  it("ignores deltas that do not chain from the current revision", () => {
    const store = new WorkspaceStore();
    store.setFull(baseSnapshot());
    store.applyDelta({ kind: "delta", from_revision: 9, to_revision: 10 });
    expect(store.revision).toBe(5);
  });

  it("ingests revision events carrying deltas", () => {
    const store = new WorkspaceStore();
    store.setFull(baseSnapshot());
    const changed = store.ingest({
      kind: "revision", revision: 6, data: {},
      delta: { kind: "delta", from_revision: 5, to_revision: 6,
               meta: { purpose: "p", audience: "a", intent: "",
                       domain_requirements: "", references: [] } },
    });
    expect(changed).toBe(true);
    expect(store.snapshot?.meta.purpose).toBe("p");
  });

  it("notifies subscribers on every change", () => {
    const store = new WorkspaceStore();
    let calls = 0;
    store.subscribe(() => { calls += 1; });
    store.setFull(baseSnapshot());
    store.applyDelta({ kind: "delta", from_revision: 5, to_revision: 6 });
    expect(calls).toBe(2);
  });

  it("orders paint by z", () => {
    const store = new WorkspaceStore();
    const snapshot = baseSnapshot();
    snapshot.placements.L0 = { x: 0, y: 0, width: 10, height: 10, z: 0 };
    store.setFull(snapshot);
    expect(store.paintOrder().map((entry) => entry.id)).toEqual(["L0", "L1"]);
  });
});

describe("ViewState", () => {
  it("is pure client state, separate from the snapshot", () => {
    const view = new ViewState();
    view.panX = 40;
    view.zoom = 2;
    const world = view.toWorld(140, 100);
    expect(world).toEqual({ x: 50, y: 50 });
    const store = new WorkspaceStore();
    store.setFull(baseSnapshot());
    expect(JSON.stringify(store.snapshot)).not.toContain("panX");
  });
});
