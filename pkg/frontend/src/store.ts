/**
 * Client-side snapshot store and pure view state.
 *
 * The store hold the latest server snapshot and applies revision deltas
 * from the event stream. ViewState (pan/zoom, selection, drags, open
 * menus, annotation toggles) is pure client state and is never persisted
 * or sent to the server.
 */

import type { Delta, Layer, Placement, ServerEvent, Snapshot } from "./types.js";

const COLLECTIONS = [
  "layers", "placements", "placeholders", "groups", "binned",
  "documents", "comparisons", "feedback",
] as const;

export class WorkspaceStore {
  snapshot: Snapshot | null = null;
  private listeners = new Set<() => void>();

  get revision(): number {
    return this.snapshot?.revision ?? -1;
  }

  setFull(snapshot: Snapshot): void {
    if (this.snapshot && snapshot.revision < this.snapshot.revision) {
      return; // never regress behind events already applied
    }
    this.snapshot = snapshot;
    this.notify();
  }

  applyDelta(delta: Delta): void {
    if (!this.snapshot) return;
    if (delta.from_revision !== this.snapshot.revision) return; // stale; caller refetches
    const next: Snapshot = { ...this.snapshot, revision: delta.to_revision };
    for (const name of COLLECTIONS) {
      const change = delta[name];
      if (!change) continue;
      const table: Record<string, unknown> = { ...(this.snapshot as any)[name] };
      for (const key of change.remove) delete table[key];
      Object.assign(table, change.upsert);
      (next as any)[name] = table;
    }
    if (delta.meta) next.meta = delta.meta;
    if (delta.counters) next.counters = delta.counters;
    this.snapshot = next;
    this.notify();
  }

  /** Route a server event; returns true when the snapshot changed. */
  ingest(event: ServerEvent): boolean {
    if (event.kind === "revision" && event.delta) {
      this.applyDelta(event.delta);
      return true;
    }
    return false;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  // Convenience accessors for renderers -------------------------------

  layer(layerId: string): Layer | undefined {
    return this.snapshot?.layers[layerId];
  }

  placement(id: string): Placement | undefined {
    return this.snapshot?.placements[id];
  }

  /** Placeable items sorted by z, lowest first (paint order). */
  paintOrder(): { id: string; placement: Placement }[] {
    if (!this.snapshot) return [];
    return Object.entries(this.snapshot.placements)
      .map(([id, placement]) => ({ id, placement }))
      .sort((a, b) => a.placement.z - b.placement.z);
  }

  annotationsFor(layerId: string) {
    return Object.values(this.snapshot?.feedback ?? {})
      .filter((a) => a.layer_id === layerId);
  }

  placeholdersFor(layerId: string) {
    return Object.values(this.snapshot?.placeholders ?? {})
      .filter((p) => p.layer_id === layerId);
  }
}

export interface DragState {
  id: string;
  startX: number;
  startY: number;
  originX: number;
  originY: number;
}

export interface SlashMenuState {
  layerId: string;
  blockId: string;
  offset: number;
}

/** Pure client view state; closing and reopening the UI loses nothing. */
export class ViewState {
  panX = 0;
  panY = 0;
  zoom = 1;
  selected = new Set<string>();
  drag: DragState | null = null;
  slashMenu: SlashMenuState | null = null;
  compareButton: { left: string; right: string } | null = null;
  combineHint: { top: string; bottom: string } | null = null;
  annotationVisibility = new Map<string, boolean>();
  openDocument: string | null = null;
  focusedBlock: { layerId: string; blockId: string } | null = null;
  connection: "open" | "reconnecting" | "closed" = "open";

  toWorld(clientX: number, clientY: number): { x: number; y: number } {
    return {
      x: (clientX - this.panX) / this.zoom,
      y: (clientY - this.panY) / this.zoom,
    };
  }
}
