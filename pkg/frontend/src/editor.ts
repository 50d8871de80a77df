/**
 * Layer body rendering: attributed spans, placeholders, annotations, the
 * composer line, and the slash-command menu.
 *
 * Editing model: clicking a block focuses the composer input for that
 * block; Enter inserts the typed text at the block's end (the engine owns
 * all content). Typing "/" as the first character of an empty paragraph
 * opens the friend menu, per the inline invocation gesture.
 */

import { WorkspaceController } from "./controller.js";
import type { Block, Friend, Layer, ScratchpadLayer, WritingLayer } from "./types.js";
import { FRIEND_COLORS } from "./types.js";

export function renderLayerBody(layer: Layer,
                                controller: WorkspaceController): HTMLElement {
  if (layer.layer_kind === "scratchpad") {
    return renderScratchpad(layer, controller);
  }
  return renderWriting(layer, controller);
}

function renderWriting(layer: WritingLayer,
                       controller: WorkspaceController): HTMLElement {
  const body = document.createElement("div");
  body.className = "ls-layer-body";
  const annotationsVisible =
    controller.view.annotationVisibility.get(layer.layer_id) ?? true;
  const annotations = controller.store.annotationsFor(layer.layer_id);
  const placeholders = controller.store.placeholdersFor(layer.layer_id);

  for (const block of layer.blocks) {
    const blockEl = renderBlock(layer, block, controller);
    body.appendChild(blockEl);

    for (const placeholder of placeholders) {
      if (placeholder.block_id !== block.block_id) continue;
      blockEl.appendChild(renderPlaceholder(placeholder, controller));
    }
    if (annotationsVisible) {
      for (const annotation of annotations) {
        if (annotation.block_id !== block.block_id ||
            annotation.visible === false) continue;
        const note = document.createElement("div");
        note.className = `ls-annotation ls-annotation-${annotation.persona}`;
        note.textContent = `${annotation.persona}: ${annotation.note}`;
        blockEl.appendChild(note);
      }
    }
  }

  body.appendChild(renderComposer(layer, controller));
  body.appendChild(renderToolbar(layer, controller));
  return body;
}

function renderBlock(layer: WritingLayer, block: Block,
                     controller: WorkspaceController): HTMLElement {
  const el = document.createElement(block.kind === "heading" ? `h${block.level}` : "p");
  el.className = "ls-block";
  el.dataset.blockId = block.block_id;
  block.spans.forEach((span, index) => {
    const spanEl = document.createElement("span");
    spanEl.textContent = span.text;
    spanEl.dataset.spanIndex = String(index);
    const attribution = span.attribution;
    if (attribution.origin === "friend" && attribution.friend_id) {
      // Generated text keeps a background color matching its friend.
      spanEl.style.background = FRIEND_COLORS[attribution.friend_id] ?? "#eee";
      spanEl.classList.add(attribution.accepted ? "ls-accepted" : "ls-pending");
    } else if (attribution.origin === "transition") {
      spanEl.classList.add("ls-transition");
    } else if (attribution.origin === "compiler-edit") {
      spanEl.classList.add("ls-edit-highlight");
    }
    el.appendChild(spanEl);
  });
  // Selecting text offers a linked sub-layer.
  el.addEventListener("dblclick", async () => {
    const selection = window.getSelection?.()?.toString() ?? "";
    if (!selection) return;
    const start = block.spans.map((s) => s.text).join("").indexOf(selection);
    if (start < 0) return;
    const name = window.prompt("Name the linked sub-layer:", selection);
    if (name) {
      await controller.createSublayer(layer.layer_id, block.block_id,
        start, start + selection.length, name);
    }
  });
  return el;
}

function renderPlaceholder(placeholder: any,
                           controller: WorkspaceController): HTMLElement {
  const el = document.createElement("div");
  el.className = `ls-placeholder ls-placeholder-${placeholder.state}`;
  if (placeholder.state === "streaming" || placeholder.state === "pending") {
    el.textContent = placeholder.partial_text || "•••";
  } else if (placeholder.state === "filled") {
    const accept = document.createElement("button");
    accept.textContent = "accept";
    accept.addEventListener("click", () =>
      controller.acceptPlaceholder(placeholder.placeholder_id));
    const reject = document.createElement("button");
    reject.textContent = "reject";
    reject.addEventListener("click", () =>
      controller.rejectPlaceholder(placeholder.placeholder_id));
    el.append("suggestion ready: ", accept, reject);
  }
  return el;
}

function renderComposer(layer: WritingLayer,
                        controller: WorkspaceController): HTMLElement {
  const composer = document.createElement("input");
  composer.className = "ls-composer";
  composer.placeholder = "type here; / at paragraph start calls a friend";
  const lastBlock = layer.blocks[layer.blocks.length - 1];

  composer.addEventListener("keydown", async (event) => {
    if (event.key === "/" && composer.value === "") {
      event.preventDefault();
      const atStart = lastBlock.spans.map((s) => s.text).join("") === "";
      const blockId = atStart ? lastBlock.block_id
        : await controller.newParagraph(layer.layer_id);
      const friends = await controller.openSlashMenu(layer.layer_id, blockId, 0);
      composer.parentElement?.appendChild(
        renderSlashMenu(friends, controller));
      return;
    }
    if (event.key === "Enter" && composer.value) {
      const text = composer.value;
      composer.value = "";
      const offset = lastBlock.spans.map((s) => s.text).join("").length;
      await controller.typeText(layer.layer_id, lastBlock.block_id, offset, text);
    }
  });
  return composer;
}

export function renderSlashMenu(friends: Friend[],
                                controller: WorkspaceController): HTMLElement {
  const menu = document.createElement("div");
  menu.className = "ls-slash-menu";
  for (const friend of friends) {
    const item = document.createElement("button");
    item.className = "ls-slash-item";
    item.dataset.friendId = friend.friend_id;
    item.textContent = `${friend.display_name}: ${friend.description}`;
    const inline = friend.surface === "inline-slash";
    item.disabled = !inline;
    if (inline) {
      item.addEventListener("click", async () => {
        const prompt = window.prompt(`${friend.display_name} prompt:`, "") ?? "";
        menu.remove();
        if (prompt) await controller.invokeFriendInline(friend.friend_id, prompt);
        else controller.closeSlashMenu();
      });
    }
    menu.appendChild(item);
  }
  return menu;
}

function renderToolbar(layer: WritingLayer,
                       controller: WorkspaceController): HTMLElement {
  const bar = document.createElement("div");
  bar.className = "ls-toolbar";
  const actions: [string, () => Promise<unknown>][] = [
    ["structure", () => controller.restructure(layer.layer_id)],
    ["tone", async () => {
      const instruction = window.prompt("Tone instruction:", "") ?? "";
      if (instruction) await controller.toneVariants(layer.layer_id, instruction);
    }],
    ["feedback", () => controller.annotate(layer.layer_id, "felix")],
    ["audience", () => controller.annotate(layer.layer_id, "ali")],
    ["notes on/off", async () => {
      const current = controller.view.annotationVisibility.get(layer.layer_id) ?? true;
      await controller.toggleAnnotations(layer.layer_id, !current);
    }],
    ["fold", () => controller.fold(layer.layer_id, true)],
    ["tunnel", async () => {
      const target = window.prompt("Tunnel into layer id:", "") ?? "";
      if (target) await controller.tunnel(layer.layer_id, target);
    }],
    ["bin", () => controller.binLayer(layer.layer_id)],
  ];
  for (const [label, action] of actions) {
    const button = document.createElement("button");
    button.className = "ls-tool";
    button.textContent = label;
    button.addEventListener("click", () => { void action(); });
    bar.appendChild(button);
  }
  return bar;
}

function renderScratchpad(layer: ScratchpadLayer,
                          controller: WorkspaceController): HTMLElement {
  const body = document.createElement("div");
  body.className = "ls-layer-body ls-scratchpad-body";
  for (const entry of layer.entries) {
    const q = document.createElement("p");
    q.className = "ls-research-question";
    q.textContent = `Q: ${entry.question}`;
    body.appendChild(q);
    for (const block of entry.answer_blocks) {
      const a = document.createElement("p");
      a.className = "ls-research-answer";
      a.textContent = block.spans.map((s) => s.text).join("");
      if (entry.unverified) a.classList.add("ls-unverified");
      body.appendChild(a);
    }
    if (entry.citations.length) {
      const cites = document.createElement("div");
      cites.className = "ls-citations";
      cites.textContent = "cites: " + entry.citations
        .map((c) => `${c.doc_id}[${c.start}-${c.end}]`).join(", ");
      body.appendChild(cites);
    }
  }
  const ask = document.createElement("input");
  ask.className = "ls-composer";
  ask.placeholder = "ask the research friend…";
  ask.addEventListener("keydown", async (event) => {
    if (event.key === "Enter" && ask.value) {
      const question = ask.value;
      ask.value = "";
      await controller.askResearch(layer.layer_id, question);
    }
  });
  body.appendChild(ask);
  return body;
}
