"""Compile layers into an immutable document with span-level provenance.

A compile job snapshots its member layers up front, so concurrent edits
never tear the output, and lands as a single atomic mutation. In manual
mode with no directives the document is the exact in-order concatenation
of member blocks, every span verbatim-referenced back to its source.
LLM-chosen ordering is applied only when the returned permutation is a
bijection over the member ids; anything else falls back to the given
order and logs an ordering-invalid event. Directive edits are block-level
replacements, so every changed span is highlighted and traceable.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .composing import OrderingPart, render_layer_content
from .errors import (
    BadAddressError,
    DocumentMemberError,
    DuplicateMemberError,
    EmptyCompileError,
    TypeMismatchError,
    UnknownLayerError,
    UnknownTargetError,
)
from .model import (
    COMPILER_EDIT,
    TRANSITION,
    Block,
    DocumentLayer,
    IndexEntry,
    SourceRef,
    Span,
    SpanAddress,
    SpanAttribution,
    WritingLayer,
    human_span,
)
from .workspace import Workspace, WorkspaceState, _next_id, flatten_group

DIRECTIVE_KINDS = ("audience-version", "consistency-edit", "target-length")

# target-length stops once the word count is within this fraction of target.
LENGTH_TOLERANCE = 0.10
_MAX_LENGTH_ROUNDS = 100


@dataclass(frozen=True)
class Directive:
    kind: str
    target_words: Optional[int] = None

    def __post_init__(self):
        if self.kind not in DIRECTIVE_KINDS:
            raise ValueError(f"unknown directive {self.kind!r}")
        if self.kind == "target-length" and not (self.target_words and self.target_words > 0):
            raise ValueError("target-length requires a positive word count")

    def label(self) -> str:
        if self.kind == "target-length":
            return f"target-length({self.target_words})"
        return self.kind


@dataclass(frozen=True)
class TransitionSpec:
    after: str   # layer id the transition follows
    before: str  # layer id the transition precedes
    prompt: str


@dataclass(frozen=True)
class CompileSpec:
    members: tuple  # layer ids and/or group ids, ordered
    mode: str = "manual"  # manual | llm-order
    directives: tuple = ()
    transitions: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("manual", "llm-order"):
            raise ValueError(f"unknown compile mode {self.mode!r}")


@dataclass
class _PlannedBlock:
    """Working copy of one output block while the job assembles it."""

    kind: str
    level: int
    spans: list            # list[Span]
    source_layer: str
    source_block: str
    ref_kind: str          # verbatim | compiler-edit

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.spans)


def _expand_members(ws: Workspace, state: WorkspaceState,
                    spec: CompileSpec) -> list:
    """Resolve groups, reject documents, and drop folded/binned members."""
    ordered: list = []
    for mid in spec.members:
        if mid in state.documents:
            raise DocumentMemberError(f"{mid} is a document layer")
        if mid in state.groups:
            ordered.extend(flatten_group(state.groups[mid]))
        else:
            ordered.append(mid)
    seen = set()
    for mid in ordered:
        if mid in seen:
            raise DuplicateMemberError(f"{mid} appears twice in the compile spec")
        seen.add(mid)
    members = []
    for mid in ordered:
        if mid in state.binned:
            continue
        if mid in state.documents:
            raise DocumentMemberError(f"{mid} is a document layer")
        if mid not in state.layers:
            raise UnknownLayerError(f"no layer {mid!r}")
        layer = state.layers[mid]
        if not isinstance(layer, WritingLayer):
            raise TypeMismatchError(f"{mid} is not a writing layer")
        if layer.folded:
            continue
        members.append(layer)
    if not members:
        raise EmptyCompileError("nothing to compile after exclusions")
    return members


def _member_listing(members: Sequence[WritingLayer]) -> str:
    lines = []
    for layer in members:
        excerpt = " ".join(layer.text.split())[:80]
        lines.append(f"[member {layer.layer_id}] {layer.name}: {excerpt}")
    return "\n".join(lines)


def _plan_listing(plan: Sequence[_PlannedBlock]) -> str:
    lines = []
    for pb in plan:
        tag = f"heading{pb.level}" if pb.kind == "heading" else pb.kind
        flat = " ".join(pb.text.split())
        lines.append(f"[member {pb.source_layer} block {pb.source_block}|{tag}] {flat}")
    return "\n".join(lines)


def _resolve_order(ws: Workspace, spec: CompileSpec,
                   members: list) -> list:
    if spec.mode == "manual" or len(members) < 2:
        return members
    prompt = ws.compose_for_layer("order-stack", None,
                                  extra_content=_member_listing(members))
    request = ws.new_request("order-stack", prompt, "")
    result = ws.generate_sync(request)
    member_ids = [m.layer_id for m in members]
    if result.ok and isinstance(result.parts[0], OrderingPart):
        ids = list(result.parts[0].layer_ids)
        if sorted(ids) == sorted(member_ids) and len(set(ids)) == len(ids):
            by_id = {m.layer_id: m for m in members}
            return [by_id[i] for i in ids]
    ws.emit_event("ordering-invalid",
                  {"returned": list(getattr(result.parts[0], "layer_ids", ()))
                   if result.ok and result.parts else [],
                   "fallback": member_ids})
    ws._log("error", "ordering-invalid", {"members": member_ids})
    return members


def _transition_prompt_layer(after: WritingLayer, before: WritingLayer):
    """Synthetic one-shot layer giving the transition task its context."""
    anchor = Block(block_id="T0", kind="paragraph", spans=(human_span(""),))
    blocks = []
    if after.blocks:
        blocks.append(after.blocks[-1])
    blocks.append(anchor)
    if before.blocks:
        blocks.append(before.blocks[0])
    return WritingLayer(layer_id="pair", name=f"{after.name} to {before.name}",
                        blocks=tuple(blocks)), anchor.block_id


def _generate_transitions(ws: Workspace, spec: CompileSpec,
                          ordered: list) -> dict:
    """Generated transition text keyed by (after_id, before_id)."""
    wanted = {(t.after, t.before): t.prompt for t in spec.transitions}
    texts: dict = {}
    for i in range(len(ordered) - 1):
        key = (ordered[i].layer_id, ordered[i + 1].layer_id)
        if key not in wanted:
            continue
        layer, anchor_id = _transition_prompt_layer(ordered[i], ordered[i + 1])
        task = ws.registry.lookup("transition")
        from .composing import compose
        prompt = compose(task, ws.state.meta, layer, user_params=wanted[key],
                         anchor_block=anchor_id, anchor_offset=0)
        request = ws.new_request("transition", prompt, ordered[i].layer_id)
        result = ws.generate_sync(request)
        if result.ok:
            texts[key] = result.parts[0].text
        else:
            ws.emit_event("warning", {"about": "transition-failed",
                                      "pair": list(key), "error": result.error})
    return texts


def _apply_replacements(ws: Workspace, plan: list, directive: Directive,
                        result) -> None:
    if not result.ok:
        ws.emit_event("warning", {"about": "directive-failed",
                                  "directive": directive.kind,
                                  "error": result.error})
        return
    edit_attr = SpanAttribution(origin=COMPILER_EDIT)
    for part in result.parts:
        # First match wins: transition blocks share their key with the
        # preceding content block and therefore never shadow it.
        target = next((pb for pb in plan
                       if pb.source_layer == part.layer_id
                       and pb.source_block == part.block_id), None)
        if target is None:
            ws.emit_event("warning", {"about": "invalid-replacement-target",
                                      "layer_id": part.layer_id,
                                      "block_id": part.block_id})
            continue
        target.spans = [Span(part.text, edit_attr)]
        target.ref_kind = COMPILER_EDIT


def _run_directive(ws: Workspace, plan: list, directive: Directive) -> None:
    if directive.kind in ("audience-version", "consistency-edit"):
        prompt = ws.compose_for_layer(
            "compile-directives", None,
            user_params=f"directive: {directive.kind}",
            extra_content=_plan_listing(plan))
        request = ws.new_request("compile-directives", prompt, "")
        _apply_replacements(ws, plan, directive, ws.generate_sync(request))
        return

    # target-length: adaptive per-block summarization until within tolerance.
    target = directive.target_words or 0
    for _ in range(_MAX_LENGTH_ROUNDS):
        total = sum(len(pb.text.split()) for pb in plan)
        if total <= target * (1 + LENGTH_TOLERANCE):
            break
        seen_keys = set()
        candidates = []
        for pb in plan:
            key = (pb.source_layer, pb.source_block)
            if key in seen_keys:
                continue  # only the first holder of a key is addressable
            seen_keys.add(key)
            if len(pb.text.split()) > 1:
                candidates.append(pb)
        if not candidates:
            break
        longest = max(candidates, key=lambda pb: len(pb.text.split()))
        words = len(longest.text.split())
        budget = max(1, min(words - 1, int(words * target / total)))
        prompt = ws.compose_for_layer(
            "compile-directives", None,
            user_params=(f"directive: target-length\n"
                         f"summarize block {longest.source_block} of layer "
                         f"{longest.source_layer} to at most {budget} words"),
            extra_content=_plan_listing(plan))
        request = ws.new_request("compile-directives", prompt, "")
        result = ws.generate_sync(request)
        before = longest.text
        _apply_replacements(ws, plan, directive, result)
        if longest.text == before:
            break  # no progress; avoid spinning


def compile_document(ws: Workspace, spec: CompileSpec) -> Future:
    """Run a compile job; resolves to the created DocumentLayer."""
    outer: Future = Future()

    def job():
        try:
            outer.set_result(_compile(ws, spec))
        except Exception as exc:
            outer.set_exception(exc)

    threading.Thread(target=job, name="compile", daemon=True).start()
    ws.track(outer)
    return outer


def compile_document_sync(ws: Workspace, spec: CompileSpec) -> DocumentLayer:
    return _compile(ws, spec)


def _compile(ws: Workspace, spec: CompileSpec) -> DocumentLayer:
    state = ws.state  # snapshot; concurrent edits cannot tear the output
    members = _expand_members(ws, state, spec)
    ordered = _resolve_order(ws, spec, members)
    transition_texts = _generate_transitions(ws, spec, ordered)

    plan: list = []
    transition_attr = SpanAttribution(origin=TRANSITION)
    for i, layer in enumerate(ordered):
        for block in layer.blocks:
            plan.append(_PlannedBlock(
                kind=block.kind, level=block.level, spans=list(block.spans),
                source_layer=layer.layer_id, source_block=block.block_id,
                ref_kind="verbatim"))
        if i + 1 < len(ordered):
            key = (layer.layer_id, ordered[i + 1].layer_id)
            if key in transition_texts:
                anchor = layer.blocks[-1].block_id if layer.blocks else ""
                plan.append(_PlannedBlock(
                    kind="paragraph", level=0,
                    spans=[Span(transition_texts[key], transition_attr)],
                    source_layer=layer.layer_id, source_block=anchor,
                    ref_kind=COMPILER_EDIT))

    for directive in spec.directives:
        _run_directive(ws, plan, directive)

    member_ids = [m.layer_id for m in ordered]
    directive_labels = [d.label() for d in spec.directives]
    doc_name = spec.name or "Document"

    def fn(state):
        counters, doc_id = _next_id(state.counters, "D")
        blocks = []
        refs = []
        index = []
        for pb in plan:
            counters, block_id = _next_id(counters, "B")
            block = Block(block_id=block_id, kind=pb.kind, level=pb.level,
                          spans=tuple(pb.spans))
            blocks.append(block)
            if pb.kind == "heading":
                index.append(IndexEntry(title=block.text, level=pb.level,
                                        block_id=block_id))
            offset = 0
            for span_index, span in enumerate(block.spans):
                if pb.ref_kind == "verbatim":
                    ref = SourceRef(layer_id=pb.source_layer,
                                    block_id=pb.source_block,
                                    start=offset, end=offset + len(span.text),
                                    kind="verbatim")
                else:
                    ref = SourceRef(layer_id=pb.source_layer,
                                    block_id=pb.source_block,
                                    start=0, end=len(span.text),
                                    kind=COMPILER_EDIT)
                refs.append((SpanAddress(block_id=block_id, span_index=span_index), ref))
                offset += len(span.text)
        doc = DocumentLayer(
            doc_layer_id=doc_id,
            name=doc_name if doc_name != "Document" else f"Document {doc_id[1:]}",
            index=tuple(index), blocks=tuple(blocks), hyper_refs=tuple(refs),
            created_from=tuple(member_ids),
            directives_used=tuple(directive_labels))
        documents = dict(state.documents)
        documents[doc_id] = doc
        origin = state.placements.get(member_ids[0])
        counters, placement = ws._place_beside(counters, origin)
        placements = dict(state.placements)
        placements[doc_id] = placement
        return (replace(state, documents=documents, placements=placements,
                        counters=counters),
                doc, [("document-created", {"doc_id": doc_id,
                                            "created_from": member_ids})])

    _, doc = ws.mutate("compile", fn)
    ws._log("compile", "compile", {"doc_id": doc.doc_layer_id,
                                   "members": member_ids,
                                   "mode": spec.mode,
                                   "directives": directive_labels})
    return doc


# ---------------------------------------------------------------------------
# trace-back and exports
# ---------------------------------------------------------------------------

def traceback(ws: Workspace, doc_id: str, block_id: str,
              span_index: int) -> tuple:
    """Resolve a document span to its SourceRef.

    Returns (ref, context): for compiler-edit spans, context is the
    nearest preceding verbatim ref; None otherwise.
    """
    doc = ws.state.documents.get(doc_id)
    if doc is None:
        raise UnknownTargetError(f"no document {doc_id!r}")
    address = SpanAddress(block_id=block_id, span_index=span_index)
    position = next((i for i, (addr, _) in enumerate(doc.hyper_refs)
                     if addr == address), None)
    if position is None:
        raise BadAddressError(f"no span at {address.key()}")
    ref = doc.hyper_refs[position][1]
    context = None
    if ref.kind == COMPILER_EDIT:
        for i in range(position - 1, -1, -1):
            if doc.hyper_refs[i][1].kind == "verbatim":
                context = doc.hyper_refs[i][1]
                break
    return ref, context


def export_text(doc: DocumentLayer) -> str:
    return doc.text


def export_markup(doc: DocumentLayer) -> str:
    """Markup export: heading prefixes, compiler edits wrapped in markers."""
    lines = []
    for block in doc.blocks:
        parts = []
        for span in block.spans:
            if span.attribution.origin in (COMPILER_EDIT, TRANSITION):
                parts.append(f"[[edit]]{span.text}[[/edit]]")
            else:
                parts.append(span.text)
        text = "".join(parts)
        if block.kind == "heading":
            text = "#" * block.level + " " + text
        lines.append(text)
    return "\n".join(lines)


def export_provenance(doc: DocumentLayer) -> dict:
    """Structured sidecar mapping every span address to its source."""
    return {
        "doc_layer_id": doc.doc_layer_id,
        "created_from": list(doc.created_from),
        "directives_used": list(doc.directives_used),
        "refs": [{"address": addr.key(), "ref": ref.to_dict()}
                 for addr, ref in doc.hyper_refs],
    }
