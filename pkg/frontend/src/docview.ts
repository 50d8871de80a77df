/**
 * Compiled document viewer: read-only rendering with highlighted compiler
 * edits and click-to-traceback on every span.
 */

import { WorkspaceController } from "./controller.js";
import type { DocumentLayer } from "./types.js";

export class DocumentViewer {
  readonly element: HTMLElement;

  constructor(private controller: WorkspaceController) {
    this.element = document.createElement("div");
    this.element.className = "ls-docview";
    this.element.style.display = "none";
  }

  open(docId: string): void {
    const doc = this.controller.store.snapshot?.documents[docId];
    if (!doc) return;
    this.element.textContent = "";
    this.element.style.display = "block";

    const close = document.createElement("button");
    close.className = "ls-docview-close";
    close.textContent = "close";
    close.addEventListener("click", () => { this.element.style.display = "none"; });
    this.element.appendChild(close);

    const title = document.createElement("h2");
    title.textContent = `${doc.name} (from ${doc.created_from.join(", ")})`;
    this.element.appendChild(title);

    if (doc.index.length) {
      const index = document.createElement("ul");
      index.className = "ls-doc-index";
      for (const entry of doc.index) {
        const item = document.createElement("li");
        item.textContent = entry.title;
        item.style.marginLeft = `${(entry.level - 1) * 16}px`;
        index.appendChild(item);
      }
      this.element.appendChild(index);
    }

    this.element.appendChild(this.renderBlocks(doc));
  }

  private renderBlocks(doc: DocumentLayer): HTMLElement {
    const body = document.createElement("div");
    body.className = "ls-doc-body";
    const refKinds = new Map(doc.hyper_refs.map(([key, ref]) => [key, ref.kind]));
    for (const block of doc.blocks) {
      const el = document.createElement(
        block.kind === "heading" ? `h${block.level + 2}` : "p");
      block.spans.forEach((span, index) => {
        const spanEl = document.createElement("span");
        spanEl.textContent = span.text;
        spanEl.className = "ls-doc-span";
        spanEl.dataset.blockId = block.block_id;
        spanEl.dataset.spanIndex = String(index);
        if (refKinds.get(`${block.block_id}:${index}`) === "compiler-edit") {
          spanEl.classList.add("ls-edit-highlight");
          spanEl.title = "edited during compilation; click to trace back";
        } else {
          spanEl.title = "click to trace back to the source layer";
        }
        spanEl.addEventListener("click", async () => {
          const focus = await this.controller.clickDocumentSpan(
            doc.doc_layer_id, block.block_id, index);
          this.element.dispatchEvent(new CustomEvent("ls-traceback", {
            bubbles: true,
            detail: {
              layerId: focus.focusLayerId,
              blockId: focus.focusBlockId,
              edited: focus.ref.kind === "compiler-edit",
            },
          }));
        });
        el.appendChild(spanEl);
      });
      body.appendChild(el);
    }
    return body;
  }
}
