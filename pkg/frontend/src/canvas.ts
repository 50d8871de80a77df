/**
 * Zoomable, scrollable workspace renderer.
 *
 * Layers render as absolutely positioned cards inside a transformed
 * viewport (pan by dragging the background, zoom with the wheel).
 * Dragging a layer moves it server-side on drop; when the server reports
 * edge adjacency, a floating "Compare the two layers?" button appears;
 * dropping a layer near another's bottom edge offers combining. Folded
 * layers render their summary edge; stacks render as offset piles, or
 * spread out when fanned.
 */

import { WorkspaceController } from "./controller.js";
import type { Group, Layer, Placement, ServerEvent } from "./types.js";
import { renderLayerBody } from "./editor.js";

const COMBINE_EDGE = 24;

export class WorkspaceCanvas {
  readonly viewport: HTMLElement;
  private banner: HTMLElement;
  private compareButton: HTMLButtonElement;
  private combineHint: HTMLElement;

  constructor(private root: HTMLElement,
              private controller: WorkspaceController) {
    this.root.classList.add("ls-canvas");
    this.viewport = document.createElement("div");
    this.viewport.className = "ls-viewport";
    this.root.appendChild(this.viewport);

    this.banner = document.createElement("div");
    this.banner.className = "ls-banner";
    this.banner.textContent = "connection lost: read-only until resync";
    this.banner.style.display = "none";
    this.root.appendChild(this.banner);

    this.compareButton = document.createElement("button");
    this.compareButton.className = "ls-compare-button";
    this.compareButton.textContent = "Compare the two layers?";
    this.compareButton.style.display = "none";
    this.compareButton.addEventListener("click", () => this.onCompareClicked());
    this.root.appendChild(this.compareButton);

    this.combineHint = document.createElement("div");
    this.combineHint.className = "ls-combine-hint";
    this.combineHint.textContent = "Release to combine";
    this.combineHint.style.display = "none";
    this.root.appendChild(this.combineHint);

    this.bindPanZoom();
    controller.store.subscribe(() => this.render());
  }

  /** Server events drive the affordances that depend on engine geometry. */
  handleEvent(event: ServerEvent): void {
    if (event.kind === "adjacency") {
      this.controller.view.compareButton = {
        left: event.data.left, right: event.data.right,
      };
      this.render();
    }
    if (event.kind === "comparison-destroyed") {
      this.render();
    }
  }

  setConnection(status: "open" | "reconnecting" | "closed"): void {
    this.controller.view.connection = status;
    this.banner.style.display = status === "open" ? "none" : "block";
    this.root.classList.toggle("ls-readonly", status !== "open");
  }

  private bindPanZoom(): void {
    const view = this.controller.view;
    let panning: { x: number; y: number } | null = null;
    this.root.addEventListener("pointerdown", (event) => {
      if (event.target === this.root || event.target === this.viewport) {
        panning = { x: event.clientX - view.panX, y: event.clientY - view.panY };
      }
    });
    this.root.addEventListener("pointermove", (event) => {
      if (panning) {
        view.panX = event.clientX - panning.x;
        view.panY = event.clientY - panning.y;
        this.applyTransform();
      }
    });
    this.root.addEventListener("pointerup", () => { panning = null; });
    this.root.addEventListener("wheel", (event) => {
      event.preventDefault();
      const factor = event.deltaY < 0 ? 1.1 : 0.9;
      view.zoom = Math.min(3, Math.max(0.2, view.zoom * factor));
      this.applyTransform();
    }, { passive: false });
  }

  private applyTransform(): void {
    const view = this.controller.view;
    this.viewport.style.transform =
      `translate(${view.panX}px, ${view.panY}px) scale(${view.zoom})`;
  }

  render(): void {
    const snapshot = this.controller.store.snapshot;
    if (!snapshot) return;
    this.applyTransform();
    this.viewport.textContent = "";

    const grouped = new Set<string>();
    for (const group of Object.values(snapshot.groups)) {
      for (const id of flattenGroup(group)) grouped.add(id);
    }

    for (const { id, placement } of this.controller.store.paintOrder()) {
      if (grouped.has(id)) continue;
      const layer = snapshot.layers[id];
      if (layer) {
        this.viewport.appendChild(this.layerCard(id, layer, placement));
        continue;
      }
      const group = snapshot.groups[id];
      if (group) {
        this.viewport.appendChild(this.groupCard(group, placement, snapshot.layers));
        continue;
      }
      const doc = snapshot.documents[id];
      if (doc) {
        this.viewport.appendChild(this.documentCard(id, doc.name, placement));
      }
    }
    this.renderCompareButton();
  }

  private card(id: string, placement: Placement, className: string): HTMLElement {
    const card = document.createElement("div");
    card.className = `ls-layer ${className}`;
    card.dataset.id = id;
    card.style.left = `${placement.x}px`;
    card.style.top = `${placement.y}px`;
    card.style.width = `${placement.width}px`;
    card.style.minHeight = `${placement.height}px`;
    card.style.zIndex = String(placement.z);
    return card;
  }

  private layerCard(id: string, layer: Layer, placement: Placement): HTMLElement {
    const card = this.card(id, placement, `ls-${layer.layer_kind}`);

    const title = document.createElement("div");
    title.className = "ls-layer-title";
    title.textContent = layer.name;
    card.appendChild(title);
    this.bindLayerDrag(card, title, id, placement);

    if (layer.folded) {
      // Folded side shows the generated summary instead of content.
      const summary = document.createElement("div");
      summary.className = "ls-fold-summary";
      summary.textContent = layer.fold_summary ?? "(folded)";
      summary.addEventListener("dblclick", () => this.controller.fold(id, false));
      card.appendChild(summary);
      card.classList.add("ls-folded");
      return card;
    }

    card.appendChild(renderLayerBody(layer, this.controller));

    if (layer.layer_kind === "writing") {
      const peek = document.createElement("button");
      peek.className = "ls-peek-corner";
      peek.title = "Peek at what could come next";
      peek.textContent = "…";
      peek.addEventListener("click", () => this.onPeek(id));
      card.appendChild(peek);
    }
    return card;
  }

  private groupCard(group: Group, placement: Placement,
                    layers: Record<string, Layer>): HTMLElement {
    const card = this.card(group.group_id, placement, "ls-stack");
    const title = document.createElement("div");
    title.className = "ls-layer-title";
    title.textContent = `stack (${flattenGroup(group).length})`;
    card.appendChild(title);
    const ids = flattenGroup(group);
    ids.forEach((memberId, index) => {
      const sheet = document.createElement("div");
      sheet.className = "ls-stack-sheet";
      sheet.textContent = layers[memberId]?.name ?? memberId;
      if (group.fanned) {
        sheet.style.transform = `translateX(${index * 36}px)`;
      } else {
        sheet.style.transform = `translate(${index * 4}px, ${index * 4}px)`;
      }
      card.appendChild(sheet);
    });
    title.addEventListener("dblclick", () =>
      this.controller.fan(group.group_id, !group.fanned));
    return card;
  }

  private documentCard(id: string, name: string, placement: Placement): HTMLElement {
    const card = this.card(id, placement, "ls-document");
    const title = document.createElement("div");
    title.className = "ls-layer-title";
    title.textContent = `${name} (compiled)`;
    card.appendChild(title);
    card.addEventListener("click", () => {
      this.controller.view.openDocument = id;
      this.root.dispatchEvent(new CustomEvent("ls-open-document",
        { detail: { docId: id } }));
    });
    return card;
  }

  private bindLayerDrag(card: HTMLElement, handle: HTMLElement, id: string,
                        placement: Placement): void {
    const view = this.controller.view;
    handle.addEventListener("pointerdown", (event) => {
      event.stopPropagation();
      view.drag = {
        id,
        startX: event.clientX, startY: event.clientY,
        originX: placement.x, originY: placement.y,
      };
    });
    this.root.addEventListener("pointermove", (event) => {
      const drag = view.drag;
      if (!drag || drag.id !== id) return;
      const dx = (event.clientX - drag.startX) / view.zoom;
      const dy = (event.clientY - drag.startY) / view.zoom;
      card.style.left = `${drag.originX + dx}px`;
      card.style.top = `${drag.originY + dy}px`;
      this.updateCombineHint(id, drag.originX + dx, drag.originY + dy);
    });
    this.root.addEventListener("pointerup", async (event) => {
      const drag = view.drag;
      if (!drag || drag.id !== id) return;
      view.drag = null;
      const dx = (event.clientX - drag.startX) / view.zoom;
      const dy = (event.clientY - drag.startY) / view.zoom;
      const hint = view.combineHint;
      this.combineHint.style.display = "none";
      view.combineHint = null;
      if (hint && hint.top !== id) {
        const prompt = window.prompt(
          "Transition prompt between the layers (empty for none):", "") ?? "";
        await this.controller.dropCombine(hint.top, id, prompt || undefined);
        return;
      }
      await this.controller.dragLayerTo(id, drag.originX + dx, drag.originY + dy);
    });
  }

  /** Dragging near another layer's bottom edge offers to combine. */
  private updateCombineHint(dragId: string, x: number, y: number): void {
    const snapshot = this.controller.store.snapshot;
    if (!snapshot) return;
    const view = this.controller.view;
    view.combineHint = null;
    for (const [otherId, other] of Object.entries(snapshot.placements)) {
      if (otherId === dragId || !snapshot.layers[otherId]) continue;
      const bottom = other.y + other.height;
      const horizontal = Math.abs(other.x - x) < other.width / 2;
      if (horizontal && Math.abs(bottom - y) < COMBINE_EDGE) {
        view.combineHint = { top: otherId, bottom: dragId };
        break;
      }
    }
    this.combineHint.style.display = view.combineHint ? "block" : "none";
  }

  private renderCompareButton(): void {
    const pair = this.controller.view.compareButton;
    const snapshot = this.controller.store.snapshot;
    if (!pair || !snapshot) {
      this.compareButton.style.display = "none";
      return;
    }
    const left = snapshot.placements[pair.left];
    const right = snapshot.placements[pair.right];
    if (!left || !right) {
      this.compareButton.style.display = "none";
      return;
    }
    const view = this.controller.view;
    const x = (left.x + left.width) * view.zoom + view.panX;
    const y = Math.min(left.y, right.y) * view.zoom + view.panY - 28;
    this.compareButton.style.left = `${x - 70}px`;
    this.compareButton.style.top = `${y}px`;
    this.compareButton.style.display = "block";
  }

  private async onCompareClicked(): Promise<void> {
    const pair = this.controller.view.compareButton;
    if (!pair) return;
    const instruction = window.prompt("What should the comparison look for?", "")
      ?? "";
    if (instruction) {
      await this.controller.compareAdjacent(pair.left, pair.right, instruction);
    }
    this.compareButton.style.display = "none";
  }

  private async onPeek(layerId: string): Promise<void> {
    const preview = await this.controller.peekCorner(layerId);
    if (preview === null) return;
    const keep = window.confirm(`${preview}\n\nKeep this continuation?`);
    if (keep) {
      await this.controller.acceptPeek(layerId);
    } else {
      await this.controller.dismissPeek(layerId);
    }
  }
}

export function flattenGroup(group: Group): string[] {
  const out: string[] = [];
  for (const member of group.members) {
    if (member.member_kind === "group" && member.group) {
      out.push(...flattenGroup(member.group));
    } else if (member.layer_id) {
      out.push(member.layer_id);
    }
  }
  return out;
}
