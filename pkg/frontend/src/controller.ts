/**
 * The gesture surface: every canvas interaction maps here, and every
 * method maps to engine operations over the wire. The renderer translates
 * raw DOM events into these calls; integration tests drive them directly
 * against a live mock-backend session.
 *
 * Interaction inventory (all reachable by gesture or toolbar):
 *   - meta editing and reference upload
 *   - free writing in layers (typing, new paragraphs)
 *   - slash menu at paragraph start -> inline friends (ivy, danny)
 *   - placeholder accept/reject
 *   - research scratchpad (ramesh)
 *   - sub-layer creation from a selection
 *   - tunneling + selection import
 *   - peek from the bottom-right corner, accept/dismiss
 *   - toolbar friends: restructure (sam), tone variants (tara),
 *     feedback/audience annotations (felix, ali) with visibility toggle
 *   - drag to move; edge adjacency -> compare button -> comparison
 *   - drag to bottom edge -> combine (optional transition prompt)
 *   - stack / reorder / fan; fold / unfold; tear; tag; bin / restore
 *   - compile to a document; click a document span -> trace back to source
 */

import { ApiClient } from "./client.js";
import { ViewState, WorkspaceStore } from "./store.js";
import type { Friend, SourceRef } from "./types.js";

export interface TracebackFocus {
  ref: SourceRef;
  context: SourceRef | null;
  focusLayerId: string;
  focusBlockId: string;
}

export class WorkspaceController {
  private friendList: Friend[] = [];

  constructor(public client: ApiClient, public sid: string,
              public store: WorkspaceStore, public view: ViewState) {}

  async refresh(): Promise<void> {
    this.store.setFull(await this.client.snapshot(this.sid));
  }

  /**
   * Re-sync using a since-revision delta. Stream events may advance the
   * store while the delta is in flight, so retry until the chain closes;
   * fall back to a full snapshot if it never does.
   */
  async resync(): Promise<void> {
    for (let attempt = 0; attempt < 5; attempt += 1) {
      const since = this.store.revision;
      const result = await this.client.snapshotSince(this.sid, since);
      if (result.kind !== "delta") {
        this.store.setFull(result.snapshot);
        return;
      }
      if (result.to_revision <= this.store.revision) return; // already current
      if (this.store.revision === result.from_revision) {
        this.store.applyDelta(result);
        if (this.store.revision >= result.to_revision) return;
      }
    }
    await this.refresh();
  }

  // -- meta layer (fig a) ------------------------------------------------

  async editMeta(fields: { purpose?: string; audience?: string; intent?: string;
                           domain_requirements?: string }): Promise<void> {
    await this.client.op(this.sid, "set-meta", fields);
  }

  async attachReference(title: string, text: string): Promise<string> {
    const result = await this.client.op(this.sid, "attach-reference", { title, text });
    return result.doc_id;
  }

  // -- free writing (fig b) ----------------------------------------------

  async beginWriting(name: string): Promise<string> {
    const result = await this.client.op(this.sid, "new-writing-layer", { name });
    return result.layer.layer_id;
  }

  async typeText(layerId: string, blockId: string, offset: number,
                 text: string): Promise<void> {
    await this.client.op(this.sid, "apply-edit", {
      layer_id: layerId, action: "insert", block_id: blockId,
      start: offset, text,
    });
  }

  async newParagraph(layerId: string, text = ""): Promise<string> {
    const result = await this.client.op(this.sid, "append-block",
      { layer_id: layerId, text });
    const blocks = result.layer.blocks;
    return blocks[blocks.length - 1].block_id;
  }

  // -- slash menu + inline friends (fig c, d) ------------------------------

  /** Typing "/" at a paragraph start opens the friend menu (all seven). */
  async openSlashMenu(layerId: string, blockId: string,
                      offset: number): Promise<Friend[]> {
    if (this.friendList.length === 0) {
      this.friendList = await this.client.friends(this.sid);
    }
    this.view.slashMenu = { layerId, blockId, offset };
    return this.friendList;
  }

  closeSlashMenu(): void {
    this.view.slashMenu = null;
  }

  async invokeFriendInline(friendId: string, prompt: string): Promise<string> {
    const menu = this.view.slashMenu;
    if (!menu) throw new Error("slash menu is not open");
    this.closeSlashMenu();
    const result = await this.client.op(this.sid, "invoke-inline", {
      layer_id: menu.layerId, block_id: menu.blockId, offset: menu.offset,
      friend: friendId, prompt, wait: true,
    });
    return result.placeholder_id;
  }

  async acceptPlaceholder(placeholderId: string): Promise<void> {
    await this.client.op(this.sid, "resolve-placeholder",
      { placeholder_id: placeholderId, action: "accept" });
  }

  async rejectPlaceholder(placeholderId: string): Promise<void> {
    await this.client.op(this.sid, "resolve-placeholder",
      { placeholder_id: placeholderId, action: "reject" });
  }

  // -- research scratchpad (fig e) -----------------------------------------

  async newScratchpad(name: string): Promise<string> {
    const result = await this.client.op(this.sid, "new-scratchpad-layer", { name });
    return result.layer.layer_id;
  }

  async askResearch(padId: string, question: string): Promise<any> {
    const result = await this.client.op(this.sid, "research",
      { layer_id: padId, question, wait: true });
    return result.entry;
  }

  // -- sub-layers from a selection (fig f) -----------------------------------

  async createSublayer(parentId: string, blockId: string, start: number,
                       end: number, name: string): Promise<string> {
    const result = await this.client.op(this.sid, "create-sublayer", {
      parent_id: parentId, block_id: blockId, start, end, name,
    });
    return result.layer.layer_id;
  }

  // -- tunneling (fig g) ------------------------------------------------------

  async tunnel(currentId: string, targetId: string): Promise<any> {
    return this.client.op(this.sid, "tunnel",
      { current_id: currentId, target_id: targetId });
  }

  async importSelection(currentId: string, cursorBlock: string, targetId: string,
                        targetBlock: string, start: number, end: number): Promise<void> {
    await this.client.op(this.sid, "import-selection", {
      current_id: currentId, cursor_block: cursorBlock, target_id: targetId,
      target_block: targetBlock, start, end,
    });
  }

  // -- peek from the bottom-right corner (fig h) --------------------------------

  async peekCorner(layerId: string): Promise<string | null> {
    const result = await this.client.op(this.sid, "peek",
      { layer_id: layerId, wait: true });
    return result.preview;
  }

  async acceptPeek(layerId: string): Promise<void> {
    await this.client.op(this.sid, "accept-peek", { layer_id: layerId });
  }

  async dismissPeek(layerId: string): Promise<void> {
    await this.client.op(this.sid, "dismiss-peek", { layer_id: layerId });
  }

  // -- toolbar friends (fig i plus sam/tara) --------------------------------------

  async restructure(layerId: string): Promise<string> {
    const result = await this.client.op(this.sid, "restructure",
      { layer_id: layerId, wait: true });
    return result.layer.layer_id;
  }

  async toneVariants(layerId: string, instruction: string, n = 2): Promise<string[]> {
    const result = await this.client.op(this.sid, "tone-variants",
      { layer_id: layerId, instruction, n, wait: true });
    return result.layers.map((layer: any) => layer.layer_id);
  }

  async annotate(layerId: string, persona: "felix" | "ali",
                 prompt = ""): Promise<number> {
    const result = await this.client.op(this.sid, "annotate",
      { layer_id: layerId, persona, prompt, wait: true });
    return result.annotations.length;
  }

  async toggleAnnotations(layerId: string, visible: boolean): Promise<void> {
    this.view.annotationVisibility.set(layerId, visible);
    await this.client.op(this.sid, "toggle-annotations",
      { layer_id: layerId, visible });
  }

  // -- spatial gestures ---------------------------------------------------------

  async dragLayerTo(layerId: string, x: number, y: number): Promise<void> {
    await this.client.op(this.sid, "move-layer", { layer_id: layerId, x, y });
  }

  /** Shown as the floating "Compare the two layers?" button. */
  async compareAdjacent(left: string, right: string,
                        instruction: string): Promise<number> {
    this.view.compareButton = null;
    const result = await this.client.op(this.sid, "compare",
      { left, right, instruction, wait: true });
    return result.session.annotations.length;
  }

  /** Dropping a layer on another's bottom edge offers combining. */
  async dropCombine(topId: string, bottomId: string,
                    transitionPrompt?: string): Promise<string> {
    this.view.combineHint = null;
    const result = await this.client.op(this.sid, "combine", {
      top: topId, bottom: bottomId, transition_prompt: transitionPrompt ?? null,
      wait: true,
    });
    return result.layer.layer_id;
  }

  async stackSelection(ids: string[]): Promise<string> {
    const result = await this.client.op(this.sid, "stack", { members: ids });
    return result.group.group_id;
  }

  async reorderStack(groupId: string, permutation: number[]): Promise<void> {
    await this.client.op(this.sid, "reorder-stack",
      { group_id: groupId, permutation });
  }

  async fan(groupId: string, fanned: boolean): Promise<void> {
    await this.client.op(this.sid, fanned ? "fan" : "unfan", { group_id: groupId });
  }

  async fold(layerId: string, folded: boolean): Promise<void> {
    await this.client.op(this.sid, folded ? "fold" : "unfold",
      { layer_id: layerId });
  }

  async tear(layerId: string, cutPoints: number[]): Promise<string[]> {
    const result = await this.client.op(this.sid, "tear",
      { layer_id: layerId, cut_points: cutPoints });
    return result.layers.map((layer: any) => layer.layer_id);
  }

  async tag(targetId: string, label: string, add = true): Promise<void> {
    await this.client.op(this.sid, add ? "tag" : "untag",
      { target: targetId, label });
  }

  async binLayer(layerId: string): Promise<void> {
    await this.client.op(this.sid, "bin", { layer_id: layerId });
  }

  async restoreLayer(layerId: string): Promise<void> {
    await this.client.op(this.sid, "restore", { layer_id: layerId });
  }

  // -- compile + document trace-back -----------------------------------------------

  async compile(members: string[], options: {
    mode?: "manual" | "llm-order";
    directives?: { kind: string; target_words?: number }[];
    transitions?: { after: string; before: string; prompt: string }[];
  } = {}): Promise<string> {
    const result = await this.client.op(this.sid, "compile",
      { members, ...options });
    this.view.openDocument = result.document.doc_layer_id;
    return result.document.doc_layer_id;
  }

  /**
   * Clicking document text focuses its source. Exactly one round trip:
   * the traceback endpoint returns the ref, and the focus change is
   * client-side view state.
   */
  async clickDocumentSpan(docId: string, blockId: string,
                          spanIndex: number): Promise<TracebackFocus> {
    const result = await this.client.op(this.sid, "traceback",
      { doc_id: docId, block_id: blockId, span_index: spanIndex });
    const ref = result.ref as SourceRef;
    this.view.focusedBlock = { layerId: ref.layer_id, blockId: ref.block_id };
    this.view.selected = new Set([ref.layer_id]);
    return {
      ref,
      context: result.context,
      focusLayerId: ref.layer_id,
      focusBlockId: ref.block_id,
    };
  }

  async save(): Promise<void> {
    await this.client.op(this.sid, "save");
  }
}
