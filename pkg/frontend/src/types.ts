/**
 * Wire types for the layerspace HTTP API (see docs/api.md in the repo root).
 * Field names mirror the JSON exactly; all workspace truth lives server-side.
 */

export interface SpanAttribution {
  origin: "human" | "friend" | "compiler-edit" | "transition";
  friend_id: string | null;
  accepted: boolean;
}

export interface Span {
  text: string;
  attribution: SpanAttribution;
}

export interface Block {
  block_id: string;
  kind: "paragraph" | "heading" | "comment-anchor";
  level: number;
  spans: Span[];
}

export interface ParentLink {
  parent_layer_id: string;
  block_id: string;
  start: number;
  end: number;
  anchored_text: string;
  orphaned: boolean;
}

export interface WritingLayer {
  layer_kind: "writing";
  layer_id: string;
  name: string;
  blocks: Block[];
  folded: boolean;
  fold_summary: string | null;
  summary_stale: boolean;
  tags: string[];
  parent_link: ParentLink | null;
}

export interface ScratchEntry {
  question: string;
  answer_blocks: Block[];
  citations: { doc_id: string; start: number; end: number }[];
  unverified: boolean;
}

export interface ScratchpadLayer {
  layer_kind: "scratchpad";
  layer_id: string;
  name: string;
  entries: ScratchEntry[];
  folded: boolean;
  fold_summary: string | null;
  summary_stale: boolean;
  tags: string[];
}

export type Layer = WritingLayer | ScratchpadLayer;

export interface Placement {
  x: number;
  y: number;
  width: number;
  height: number;
  z: number;
}

export interface GroupMemberRef {
  member_kind: "layer" | "group";
  layer_id?: string;
  group?: Group;
}

export interface Group {
  group_id: string;
  members: GroupMemberRef[];
  kind: "stack" | "cluster";
  tags: string[];
  fanned: boolean;
}

export interface SourceRef {
  layer_id: string;
  block_id: string;
  start: number;
  end: number;
  kind: "verbatim" | "compiler-edit";
}

export interface DocumentLayer {
  layer_kind: "document";
  doc_layer_id: string;
  name: string;
  index: { title: string; level: number; block_id: string }[];
  blocks: Block[];
  hyper_refs: [string, SourceRef][];
  created_from: string[];
  directives_used: string[];
}

export interface Placeholder {
  placeholder_id: string;
  layer_id: string;
  block_id: string;
  span_offset: number;
  task_id: string;
  friend_id: string | null;
  state: "pending" | "streaming" | "filled" | "accepted" | "rejected";
  partial_text: string;
  filled_text: string;
  note: string;
}

export interface ComparisonAnnotation {
  annotation_id: string;
  layer_id: string;
  block_id: string;
  start: number;
  end: number;
  kind: "similarity" | "difference";
  note: string;
}

export interface ComparisonSession {
  session_id: string;
  left: string;
  right: string;
  instruction: string;
  annotations: ComparisonAnnotation[];
}

export interface FeedbackAnnotation {
  annotation_id: string;
  layer_id: string;
  block_id: string;
  persona: "felix" | "ali";
  note: string;
  visible: boolean;
}

export interface MetaLayer {
  purpose: string;
  audience: string;
  intent: string;
  domain_requirements: string;
  references: { doc_id: string; title: string; text: string }[];
}

export interface Snapshot {
  format_version: number;
  revision: number;
  meta: MetaLayer;
  layers: Record<string, Layer>;
  placements: Record<string, Placement>;
  placeholders: Record<string, Placeholder>;
  groups: Record<string, Group>;
  binned: Record<string, { layer: Layer; placement: Placement | null }>;
  documents: Record<string, DocumentLayer>;
  comparisons: Record<string, ComparisonSession>;
  feedback: Record<string, FeedbackAnnotation>;
  counters: Record<string, number>;
}

export interface CollectionDelta {
  upsert: Record<string, unknown>;
  remove: string[];
}

export interface Delta {
  kind: "delta";
  from_revision: number;
  to_revision: number;
  layers?: CollectionDelta;
  placements?: CollectionDelta;
  placeholders?: CollectionDelta;
  groups?: CollectionDelta;
  binned?: CollectionDelta;
  documents?: CollectionDelta;
  comparisons?: CollectionDelta;
  feedback?: CollectionDelta;
  meta?: MetaLayer;
  counters?: Record<string, number>;
}

export interface ServerEvent {
  kind: string;
  revision: number;
  data: Record<string, any>;
  delta?: Delta;
}

export interface Friend {
  friend_id: string;
  display_name: string;
  description: string;
  task_id: string;
  surface: "inline-slash" | "layer-toolbar" | "scratchpad";
}

/** Background colors for generated text, one per friend (documented palette). */
export const FRIEND_COLORS: Record<string, string> = {
  ivy: "#dcefdc",
  danny: "#dce6f7",
  sam: "#f3e5cf",
  tara: "#eadcf5",
  felix: "#f7dcdc",
  ali: "#dcf2f0",
  ramesh: "#f5f0d0",
  peek: "#e8e8e8",
  template: "#eeeeee",
};
