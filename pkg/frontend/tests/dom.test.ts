// @vitest-environment happy-dom
import { describe, expect, it, vi } from "vitest";

import { WorkspaceController } from "../src/controller.js";
import { DocumentViewer } from "../src/docview.js";
import { renderSlashMenu } from "../src/editor.js";
import { ViewState, WorkspaceStore } from "../src/store.js";
import type { ApiClient } from "../src/client.js";
import type { Friend, Snapshot } from "../src/types.js";

const SEVEN_FRIENDS: Friend[] = [
  { friend_id: "ivy", display_name: "Idea Ivy", description: "ideation",
    task_id: "ideate", surface: "inline-slash" },
  { friend_id: "danny", display_name: "Detail Danny", description: "elaboration",
    task_id: "elaborate", surface: "inline-slash" },
  { friend_id: "sam", display_name: "Structure Sam", description: "structure",
    task_id: "restructure", surface: "layer-toolbar" },
  { friend_id: "tara", display_name: "Tone Tara", description: "tone",
    task_id: "tone-variants", surface: "layer-toolbar" },
  { friend_id: "felix", display_name: "Feedback Felix", description: "feedback",
    task_id: "feedback", surface: "layer-toolbar" },
  { friend_id: "ali", display_name: "Audience Ali", description: "audience",
    task_id: "audience-feedback", surface: "layer-toolbar" },
  { friend_id: "ramesh", display_name: "Research Ramesh", description: "research",
    task_id: "research", surface: "scratchpad" },
];

function fakeController(opResults: Record<string, unknown>) {
  const calls: { name: string; body: Record<string, unknown> }[] = [];
  const client = {
    requestCount: 0,
    friends: async () => SEVEN_FRIENDS,
    op: async (_sid: string, name: string, body: Record<string, unknown>) => {
      client.requestCount += 1;
      calls.push({ name, body });
      return opResults[name] ?? {};
    },
  };
  const controller = new WorkspaceController(
    client as unknown as ApiClient, "sid", new WorkspaceStore(), new ViewState());
  return { controller, calls, client };
}

describe("slash menu", () => {
  it("lists all seven friends, inline ones clickable", async () => {
    const { controller, calls } = fakeController({
      "invoke-inline": { placeholder_id: "P1" },
    });
    const friends = await controller.openSlashMenu("L1", "B1", 0);
    const menu = renderSlashMenu(friends, controller);
    const items = [...menu.querySelectorAll(".ls-slash-item")] as HTMLButtonElement[];
    expect(items).toHaveLength(7);
    expect(items.map((item) => item.dataset.friendId)).toEqual(
      ["ivy", "danny", "sam", "tara", "felix", "ali", "ramesh"]);
    const enabled = items.filter((item) => !item.disabled);
    expect(enabled.map((item) => item.dataset.friendId)).toEqual(["ivy", "danny"]);

    vi.stubGlobal("prompt", () => "write something");
    enabled[1].click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(calls).toEqual([{
      name: "invoke-inline",
      body: { layer_id: "L1", block_id: "B1", offset: 0, friend: "danny",
              prompt: "write something", wait: true },
    }]);
    vi.unstubAllGlobals();
  });
});

describe("document viewer", () => {
  it("click on a span traces back in one round trip and focuses the source", async () => {
    const snapshot = {
      format_version: 1, revision: 1,
      meta: { purpose: "", audience: "", intent: "", domain_requirements: "",
              references: [] },
      layers: {}, placements: {}, placeholders: {}, groups: {}, binned: {},
      comparisons: {}, feedback: {}, counters: {},
      documents: {
        D1: {
          layer_kind: "document", doc_layer_id: "D1", name: "Doc",
          index: [], created_from: ["L9"], directives_used: [],
          blocks: [{ block_id: "B50", kind: "paragraph", level: 0,
                     spans: [{ text: "compiled text",
                               attribution: { origin: "human", friend_id: null,
                                              accepted: true } }] }],
          hyper_refs: [["B50:0", { layer_id: "L9", block_id: "B7",
                                   start: 0, end: 13, kind: "verbatim" }]],
        },
      },
    } as unknown as Snapshot;

    const { controller, client } = fakeController({
      traceback: { ref: { layer_id: "L9", block_id: "B7", start: 0, end: 13,
                          kind: "verbatim" }, context: null },
    });
    controller.store.setFull(snapshot);

    const viewer = new DocumentViewer(controller);
    document.body.appendChild(viewer.element);
    viewer.open("D1");

    const focused: unknown[] = [];
    viewer.element.addEventListener("ls-traceback", ((event: CustomEvent) => {
      focused.push(event.detail);
    }) as EventListener);

    const before = client.requestCount;
    const span = viewer.element.querySelector(".ls-doc-span") as HTMLElement;
    span.click();
    await new Promise((resolve) => setTimeout(resolve, 0));

    expect(client.requestCount - before).toBe(1); // at most one round trip
    expect(focused).toEqual([{ layerId: "L9", blockId: "B7", edited: false }]);
    expect(controller.view.focusedBlock).toEqual({ layerId: "L9", blockId: "B7" });
    expect([...controller.view.selected]).toEqual(["L9"]);
  });
});
