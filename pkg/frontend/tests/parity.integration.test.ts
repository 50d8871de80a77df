/**
 * Gesture parity checklist against a live mock-backend session.
 *
 * Spawns the Python service, opens a session, and walks every canvas
 * interaction (the full a-i inventory: meta context, free writing, slash
 * menu, inline generation with accept, research scratchpad, sub-layers,
 * tunneling, peek, feedback annotations) plus the shifting gestures
 * (adjacency -> compare, combine, stack/fan, fold, tear, compile,
 * document trace-back) through the controller that the DOM drives.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, EventStream } from "../src/client.js";
import { WorkspaceController } from "../src/controller.js";
import { ViewState, WorkspaceStore } from "../src/store.js";
import type { ServerEvent, WritingLayer } from "../src/types.js";

const PORT = 18000 + Math.floor(Math.random() * 10000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let controller: WorkspaceController;
let stream: EventStream;
const streamEvents: ServerEvent[] = [];

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const response = await fetch(`${BASE}/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("service did not come up");
}

async function eventSeen(predicate: (event: ServerEvent) => boolean,
                         timeoutMs = 10000): Promise<ServerEvent> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const found = streamEvents.find(predicate);
    if (found) return found;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error("expected event never arrived");
}

function writingLayer(id: string): WritingLayer {
  const layer = controller.store.layer(id);
  if (!layer || layer.layer_kind !== "writing") throw new Error(`no layer ${id}`);
  return layer;
}

beforeAll(async () => {
  const workDir = mkdtempSync(join(tmpdir(), "ls-ui-"));
  server = spawn("python3",
    ["-m", "layerspace", "serve", "--port", String(PORT),
     "--workspace-dir", workDir, "--backend", "mock"],
    { cwd: join(__dirname, "..", ".."), stdio: "ignore" });
  await waitForHealth();

  const client = new ApiClient(BASE);
  const session = await client.openSession("ui.json");
  controller = new WorkspaceController(
    client, session.session_id, new WorkspaceStore(), new ViewState());
  stream = new EventStream(BASE, session.session_id, {
    onEvent: (event) => {
      streamEvents.push(event);
      controller.store.ingest(event);
    },
  });
  void stream.run();
  await controller.refresh();
}, 60000);

afterAll(async () => {
  stream?.stop();
  try {
    await controller.client.closeSession(controller.sid);
  } finally {
    server?.kill();
  }
});

describe("gesture parity against a live mock session", () => {
  let essayId: string;
  let padId: string;

  it("a: meta layer captures the writing context", async () => {
    await controller.editMeta({
      purpose: "an essay on models and creative ownership",
      audience: "technology creators and potentially legal professionals",
      intent: "argue for consent-based licensing",
    });
    await controller.attachReference("Case brief",
      "The filing describes verbatim training copies at scale.");
    await controller.resync();
    expect(controller.store.snapshot?.meta.audience)
      .toContain("legal professionals");
    expect(controller.store.snapshot?.meta.references).toHaveLength(1);
  });

  it("b: free writing in a fresh layer", async () => {
    essayId = await controller.beginWriting("Essay");
    await controller.resync();
    const block = writingLayer(essayId).blocks[0];
    await controller.typeText(essayId, block.block_id, 0,
      "Models remix the work of many hands.");
    await controller.newParagraph(essayId, "Attribution rarely follows.");
    await controller.resync();
    expect(writingLayer(essayId).blocks).toHaveLength(2);
  });

  it("c: slash at a paragraph start lists all seven friends", async () => {
    const block = writingLayer(essayId).blocks[0];
    const friends = await controller.openSlashMenu(
      essayId, block.block_id, 0);
    expect(friends.map((friend) => friend.friend_id)).toEqual(
      ["ivy", "danny", "sam", "tara", "felix", "ali", "ramesh"]);
  });

  it("d: inline invocation fills a placeholder, accept keeps attribution", async () => {
    const placeholderId = await controller.invokeFriendInline(
      "danny", "describe what these models do");
    await controller.resync();
    expect(controller.store.snapshot?.placeholders[placeholderId]?.state)
      .toBe("filled");
    await controller.acceptPlaceholder(placeholderId);
    await controller.resync();
    const spans = writingLayer(essayId).blocks[0].spans;
    const friendSpan = spans.find((span) => span.attribution.origin === "friend");
    expect(friendSpan?.attribution.friend_id).toBe("danny");
    expect(friendSpan?.attribution.accepted).toBe(true);
  });

  it("e: the research scratchpad answers with citations", async () => {
    padId = await controller.newScratchpad("Research");
    const entry = await controller.askResearch(padId,
      "What does the filing allege about training?");
    expect(entry.citations.length).toBeGreaterThan(0);
    expect(entry.unverified).toBe(false);
  });

  it("f: selecting text seeds a linked sub-layer", async () => {
    const block = writingLayer(essayId).blocks[1];
    const subId = await controller.createSublayer(
      essayId, block.block_id, 0, 11, "Attribution");
    await controller.resync();
    const sub = writingLayer(subId);
    expect(sub.parent_link?.parent_layer_id).toBe(essayId);
    expect(sub.blocks[0].spans.map((span) => span.text).join(""))
      .toBe("Attribution");
  });

  it("g: tunneling imports a selection as quoted context", async () => {
    const sourceId = await controller.beginWriting("Evidence");
    await controller.resync();
    const sourceBlock = writingLayer(sourceId).blocks[0];
    await controller.typeText(sourceId, sourceBlock.block_id, 0,
      "terms grant broad sublicensable rights");
    const view = await controller.tunnel(essayId, sourceId);
    expect(view.blocks).toHaveLength(1);
    const cursorBlock = writingLayer(essayId).blocks[0];
    const before = writingLayer(essayId).blocks.length;
    await controller.importSelection(essayId, cursorBlock.block_id,
      sourceId, sourceBlock.block_id, 0, 11);
    await controller.resync();
    const after = writingLayer(essayId).blocks;
    expect(after).toHaveLength(before + 1);
    expect(after[1].spans.map((span) => span.text).join(""))
      .toContain("[from: Evidence]");
  });

  it("h: peek previews a continuation without touching blocks", async () => {
    const before = writingLayer(essayId).blocks.length;
    const preview = await controller.peekCorner(essayId);
    expect(preview).toBeTruthy();
    await controller.dismissPeek(essayId);
    await controller.resync();
    expect(writingLayer(essayId).blocks).toHaveLength(before);
  });

  it("i: feedback annotations attach per block and toggle", async () => {
    const count = await controller.annotate(essayId, "felix");
    expect(count).toBe(writingLayer(essayId).blocks.length);
    await controller.toggleAnnotations(essayId, false);
    await controller.resync();
    const annotations = controller.store.annotationsFor(essayId);
    expect(annotations.length).toBe(count);
    expect(annotations.every((annotation) => !annotation.visible)).toBe(true);
  });

  it("drag to adjacency raises the compare affordance, compare annotates", async () => {
    const leftId = await controller.beginWriting("Left");
    const rightId = await controller.beginWriting("Right");
    await controller.resync();
    for (const id of [leftId, rightId]) {
      const block = writingLayer(id).blocks[0];
      await controller.typeText(id, block.block_id, 0, `view from ${id}`);
    }
    await controller.dragLayerTo(leftId, 0, 2000);
    await controller.resync();
    const placement = controller.store.placement(leftId)!;
    await controller.dragLayerTo(rightId, placement.x + placement.width + 2, 2005);
    const adjacency = await eventSeen((event) =>
      event.kind === "adjacency" && event.data.left === leftId
      && event.data.right === rightId);
    // the canvas shows the floating button from exactly this event
    controller.view.compareButton = {
      left: adjacency.data.left, right: adjacency.data.right };
    const annotationCount = await controller.compareAdjacent(
      leftId, rightId, "align or conflict?");
    expect(annotationCount).toBe(2);
    await controller.dragLayerTo(rightId, 5000, 5000);
    await controller.resync();
    expect(Object.keys(controller.store.snapshot?.comparisons ?? {}))
      .toHaveLength(0);
  });

  it("bottom-edge drop combines with a generated transition", async () => {
    const topId = await controller.beginWriting("Top");
    const bottomId = await controller.beginWriting("Bottom");
    await controller.resync();
    for (const id of [topId, bottomId]) {
      const block = writingLayer(id).blocks[0];
      await controller.typeText(id, block.block_id, 0, `${id} body`);
    }
    const combinedId = await controller.dropCombine(topId, bottomId, "bridge");
    await controller.resync();
    expect(writingLayer(combinedId).blocks).toHaveLength(3);
    const placeholder = Object.values(
      controller.store.snapshot?.placeholders ?? {})
      .find((entry) => entry.layer_id === combinedId);
    expect(placeholder?.state).toBe("filled");
    await controller.acceptPlaceholder(placeholder!.placeholder_id);
  });

  it("stack, fan, fold, tear are all reachable", async () => {
    const ids = [];
    for (const name of ["S1", "S2"]) {
      const id = await controller.beginWriting(name);
      await controller.resync();
      const block = writingLayer(id).blocks[0];
      await controller.typeText(id, block.block_id, 0, `${name} text`);
      await controller.newParagraph(id, `${name} more`);
      ids.push(id);
    }
    const torn = await controller.tear(ids[0], [1]);
    expect(torn).toHaveLength(2);
    const groupId = await controller.stackSelection([torn[0], torn[1]]);
    await controller.fan(groupId, true);
    await controller.resync();
    expect(controller.store.snapshot?.groups[groupId]?.fanned).toBe(true);
    await controller.fold(ids[1], true);
    await controller.resync();
    const folded = writingLayer(ids[1]);
    expect(folded.folded).toBe(true);
    expect(folded.fold_summary).toBeTruthy();
    await controller.fold(ids[1], false);
  });

  it("compile opens a document; clicking text focuses the source in <=1 round trip",
     async () => {
    const docId = await controller.compile([essayId]);
    await controller.resync();
    const doc = controller.store.snapshot?.documents[docId];
    expect(doc).toBeDefined();
    const firstBlock = doc!.blocks[0];
    const before = controller.client.requestCount;
    const focus = await controller.clickDocumentSpan(
      docId, firstBlock.block_id, 0);
    expect(controller.client.requestCount - before).toBe(1);
    expect(focus.focusLayerId).toBe(essayId);
    expect(focus.focusBlockId)
      .toBe(writingLayer(essayId).blocks[0].block_id);
    expect(controller.view.focusedBlock?.blockId).toBe(focus.focusBlockId);
  });

  it("the event stream carried chunks and placeholder transitions", () => {
    expect(streamEvents.some((event) => event.kind === "chunk")).toBe(true);
    expect(streamEvents.some((event) => event.kind === "placeholder"
      && event.data.state === "filled")).toBe(true);
    expect(streamEvents.some((event) => event.kind === "revision"
      && event.delta)).toBe(true);
  });
});
