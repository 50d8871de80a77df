"""Writer's friends: persona-scoped tasks and the scripting operations.

Seven personas are always registered: Idea Ivy (ideation), Detail Danny
(elaboration), Structure Sam (structuring), Tone Tara (stylistic
variants), Feedback Felix (content feedback), Audience Ali
(audience-specific feedback), and Research Ramesh (grounded research).
Each is invocable only through its declared surface: the inline slash
menu, the layer toolbar, or a scratchpad.

Two internal personas exist purely for span attribution: ``peek``
(accepted continuation previews) and ``template`` (guidance notes in
template components). They never appear in the friend menu.

Every operation here is non-destructive: restructure, tone variants,
annotation, and templates never change the source layer's blocks.
"""

from __future__ import annotations

from concurrent.futures import Future
from dataclasses import dataclass, replace

from .composing import CitedAnswerPart, SectionPart
from .errors import (
    BackendUnavailableError,
    BadAnchorError,
    EmptyLayerError,
    GenerationTimeoutError,
    MetaFieldRequiredError,
    SchemaInvalidError,
    TypeMismatchError,
    UnknownFriendError,
    VariantCountError,
    WrongStateError,
)
from .gateway import GenerationResult
from .model import (
    FRIEND,
    Block,
    ScratchEntry,
    ScratchpadLayer,
    Span,
    SpanAttribution,
    WritingLayer,
    human_span,
)
from .workspace import FeedbackAnnotation, PeekPreview, Workspace, _next_id


@dataclass(frozen=True)
class Friend:
    friend_id: str
    display_name: str
    description: str
    task_id: str
    surface: str  # inline-slash | layer-toolbar | scratchpad | internal


CATALOG = {
    "ivy": Friend("ivy", "Idea Ivy", "content ideation and brainstorming",
                  "ideate", "inline-slash"),
    "danny": Friend("danny", "Detail Danny", "elaboration and detail",
                    "elaborate", "inline-slash"),
    "sam": Friend("sam", "Structure Sam", "content structuring",
                  "restructure", "layer-toolbar"),
    "tara": Friend("tara", "Tone Tara", "stylistic variants",
                   "tone-variants", "layer-toolbar"),
    "felix": Friend("felix", "Feedback Felix", "feedback on content",
                    "feedback", "layer-toolbar"),
    "ali": Friend("ali", "Audience Ali", "audience-specific feedback",
                  "audience-feedback", "layer-toolbar"),
    "ramesh": Friend("ramesh", "Research Ramesh", "research over uploaded references",
                     "research", "scratchpad"),
    # internal attribution-only personas; never listed in menus
    "peek": Friend("peek", "Peek", "continuation previews",
                   "peek-continuation", "internal"),
    "template": Friend("template", "Template", "writing template guidance",
                       "template-argument", "internal"),
}

MENU_SURFACES = ("inline-slash", "layer-toolbar", "scratchpad")


def menu_friends() -> tuple:
    """The seven user-facing friends, in stable order."""
    order = ("ivy", "danny", "sam", "tara", "felix", "ali", "ramesh")
    return tuple(CATALOG[f] for f in order)


def friend_attr(friend_id: str, accepted: bool = False) -> SpanAttribution:
    return SpanAttribution(origin=FRIEND, friend_id=friend_id, accepted=accepted)


def _raise_for_status(result: GenerationResult) -> None:
    if result.status == "schema-invalid":
        raise SchemaInvalidError(result.error)
    if result.status == "timeout":
        raise GenerationTimeoutError(result.error)
    raise BackendUnavailableError(result.error or result.status)


DEFAULT_VARIANTS = 2
MAX_VARIANTS = 4


# ---------------------------------------------------------------------------
# inline invocation (slash menu)
# ---------------------------------------------------------------------------

def invoke_inline(ws: Workspace, layer_id: str, block_id: str, offset: int,
                  friend_id: str, user_prompt: str):
    """Open an inline placeholder and stream a friend's response into it.

    Only slash-surface friends may be invoked inline; a block that already
    hosts an unresolved placeholder rejects a second invocation.
    Returns (placeholder, future).
    """
    friend = CATALOG.get(friend_id)
    if friend is None or friend.surface != "inline-slash":
        raise UnknownFriendError(
            f"{friend_id!r} is not available from the inline slash menu")
    layer = ws.state.layer(layer_id)
    if not isinstance(layer, WritingLayer):
        raise TypeMismatchError("inline invocation requires a writing layer")
    block = layer.block(block_id)
    if block.kind != "paragraph":
        raise BadAnchorError("inline invocation anchors at a paragraph position")

    placeholder = ws.open_placeholder(layer_id, block_id, offset,
                                      task_id=friend.task_id, friend_id=friend_id)
    ws._log("feature-invocation", f"invoke-{friend_id}", {"layer_id": layer_id})
    ws._log("user-prompt", friend.task_id, {"prompt": user_prompt})
    prompt = ws.compose_for_layer(friend.task_id, layer_id,
                                  user_params=user_prompt,
                                  anchor_block=block_id, anchor_offset=offset)
    request = ws.new_request(friend.task_id, prompt, layer_id)
    future = ws.submit_placeholder_fill(request, placeholder.placeholder_id,
                                        friend_attr(friend_id))
    return placeholder, future


# ---------------------------------------------------------------------------
# peek (greyed continuation preview)
# ---------------------------------------------------------------------------

def peek(ws: Workspace, layer_id: str) -> Future:
    """Preview what would come next; the preview is never part of blocks."""
    layer = ws.state.layer(layer_id)
    if layer.is_empty():
        raise EmptyLayerError(f"layer {layer_id} has no content to continue")
    ws._log("feature-invocation", "peek", {"layer_id": layer_id})
    prompt = ws.compose_for_layer("peek-continuation", layer_id)
    request = ws.new_request("peek-continuation", prompt, layer_id)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)
            preview = PeekPreview(layer_id=layer_id, text=result.parts[0].text)
            if layer_id in ws.state.layers:
                ws.set_preview(preview)
            outer.set_result(preview)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer


def accept_peek(ws: Workspace, layer_id: str) -> WritingLayer:
    """Convert the preview into an accepted, peek-attributed block."""
    preview = ws.clear_preview(layer_id)
    if preview is None:
        raise WrongStateError(f"no preview open on layer {layer_id}")

    def fn(state):
        layer = state.layer(layer_id)
        counters, block_id = _next_id(state.counters, "B")
        block = Block(block_id=block_id, kind="paragraph",
                      spans=(Span(preview.text, friend_attr("peek", accepted=True)),))
        layers = dict(state.layers)
        layers[layer_id] = replace(layer, blocks=layer.blocks + (block,))
        return (replace(state, layers=layers, counters=counters),
                layers[layer_id], [("edit", {"layer_id": layer_id})])

    _, layer = ws.mutate("accept-peek", fn)
    ws._log("feature-invocation", "peek-accept", {"layer_id": layer_id})
    return layer


def dismiss_peek(ws: Workspace, layer_id: str) -> None:
    """Drop the preview; blocks are untouched, only the event is logged."""
    ws.clear_preview(layer_id)
    ws._log("feature-invocation", "peek-dismiss", {"layer_id": layer_id})
    ws.emit_event("peek-dismissed", {"layer_id": layer_id})


# ---------------------------------------------------------------------------
# structure sam: structured representation in a new layer
# ---------------------------------------------------------------------------

def restructure(ws: Workspace, layer_id: str) -> Future:
    """Create a new layer with headings/paragraphs parsed from the response.

    The original layer is never touched. Resolves to the new layer.
    """
    layer = ws.state.layer(layer_id)
    if not isinstance(layer, WritingLayer) or layer.is_empty():
        raise EmptyLayerError("restructure needs a non-empty writing layer")
    ws._log("feature-invocation", "restructure", {"layer_id": layer_id})
    prompt = ws.compose_for_layer("restructure", layer_id)
    request = ws.new_request("restructure", prompt, layer_id)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)
            section_part: SectionPart = result.parts[0]

            def fn(state):
                source = state.layer(layer_id)
                counters = state.counters
                blocks = []
                for level, title, body in section_part.sections:
                    counters, hid = _next_id(counters, "B")
                    blocks.append(Block(
                        block_id=hid, kind="heading", level=level,
                        spans=(Span(title, friend_attr("sam", accepted=True)),)))
                    if body:
                        counters, pid = _next_id(counters, "B")
                        blocks.append(Block(
                            block_id=pid, kind="paragraph",
                            spans=(Span(body, friend_attr("sam", accepted=True)),)))
                counters, new_id = _next_id(counters, "L")
                new_layer = WritingLayer(layer_id=new_id,
                                         name=f"{source.name} — structured",
                                         blocks=tuple(blocks))
                origin = state.placements.get(layer_id)
                counters, placement = ws._place_beside(counters, origin)
                layers = dict(state.layers)
                layers[new_id] = new_layer
                placements = dict(state.placements)
                placements[new_id] = placement
                return (replace(state, layers=layers, placements=placements,
                                counters=counters),
                        new_layer,
                        [("layer-created", {"layer_id": new_id,
                                            "name": new_layer.name})])

            new_layer = ws.apply_once(result.request_id, "restructure-apply", fn)
            if new_layer is not None:
                ws._log("feature-invocation", "create-layer",
                        {"layer_id": new_layer.layer_id, "name": new_layer.name})
            ws._notify_layer(layer_id, result)
            outer.set_result(new_layer)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer


# ---------------------------------------------------------------------------
# tone tara: n stylistic variants as new layers
# ---------------------------------------------------------------------------

def tone_variants(ws: Workspace, layer_id: str, instruction: str,
                  n: int = DEFAULT_VARIANTS) -> Future:
    """Generate n variant layers beside the original; resolves to the list."""
    if not (1 <= n <= MAX_VARIANTS):
        raise VariantCountError(f"variant count {n} outside 1..{MAX_VARIANTS}")
    layer = ws.state.layer(layer_id)
    if not isinstance(layer, WritingLayer) or layer.is_empty():
        raise EmptyLayerError("tone variants need a non-empty writing layer")
    ws._log("feature-invocation", "tone-variants", {"layer_id": layer_id, "n": n})
    ws._log("user-prompt", "tone-variants", {"prompt": instruction})
    prompt = ws.compose_for_layer("tone-variants", layer_id,
                                  user_params=instruction, n_override=n)
    request = ws.new_request("tone-variants", prompt, layer_id, n_override=n)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)

            def fn(state):
                source = state.layer(layer_id)
                counters = state.counters
                layers = dict(state.layers)
                placements = dict(state.placements)
                origin = state.placements.get(layer_id)
                created = []
                events = []
                for k, part in enumerate(result.parts, start=1):
                    counters, block_id = _next_id(counters, "B")
                    block = Block(block_id=block_id, kind="paragraph",
                                  spans=(Span(part.text, friend_attr("tara", accepted=True)),))
                    counters, new_id = _next_id(counters, "L")
                    variant = WritingLayer(layer_id=new_id,
                                           name=f"{source.name} — variant {k}",
                                           blocks=(block,))
                    counters, placement = ws._place_beside(counters, origin, index=k - 1)
                    layers[new_id] = variant
                    placements[new_id] = placement
                    created.append(variant)
                    events.append(("layer-created", {"layer_id": new_id,
                                                     "name": variant.name}))
                return (replace(state, layers=layers, placements=placements,
                                counters=counters), tuple(created), events)

            created = ws.apply_once(result.request_id, "tone-variants-apply", fn)
            for variant in created or ():
                ws._log("feature-invocation", "create-layer",
                        {"layer_id": variant.layer_id, "name": variant.name})
            ws._notify_layer(layer_id, result)
            outer.set_result(created)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer


# ---------------------------------------------------------------------------
# feedback felix / audience ali: toggleable inline annotations
# ---------------------------------------------------------------------------

def annotate(ws: Workspace, layer_id: str, persona: str,
             user_prompt: str = "") -> Future:
    """Attach per-block feedback annotations; blocks are never modified."""
    if persona not in ("felix", "ali"):
        raise UnknownFriendError(f"{persona!r} does not annotate")
    friend = CATALOG[persona]
    layer = ws.state.layer(layer_id)
    if not isinstance(layer, WritingLayer) or layer.is_empty():
        raise EmptyLayerError("annotation needs a non-empty writing layer")
    if persona == "ali" and not ws.state.meta.audience.strip():
        raise MetaFieldRequiredError(
            "Audience Ali needs the meta layer's audience field; set it first")
    ws._log("feature-invocation", f"annotate-{persona}", {"layer_id": layer_id})
    if user_prompt:
        ws._log("user-prompt", friend.task_id, {"prompt": user_prompt})
    prompt = ws.compose_for_layer(friend.task_id, layer_id, user_params=user_prompt)
    request = ws.new_request(friend.task_id, prompt, layer_id)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)

            def fn(state):
                target = state.layer(layer_id)
                counters = state.counters
                feedback = dict(state.feedback)
                created = []
                events = []
                for note in result.parts:
                    block = next((b for b in target.blocks
                                  if b.block_id == note.block_id), None)
                    if block is None:
                        events.append(("warning",
                                       {"about": "invalid-annotation-address",
                                        "block_id": note.block_id}))
                        continue
                    counters, ann_id = _next_id(counters, "F")
                    ann = FeedbackAnnotation(
                        annotation_id=ann_id, layer_id=layer_id,
                        block_id=note.block_id, persona=persona, note=note.text)
                    feedback[ann_id] = ann
                    created.append(ann)
                events.append(("annotated", {"layer_id": layer_id,
                                             "persona": persona,
                                             "count": len(created)}))
                return (replace(state, feedback=feedback, counters=counters),
                        tuple(created), events)

            created = ws.apply_once(result.request_id, "annotate-apply", fn)
            ws._notify_layer(layer_id, result)
            outer.set_result(created)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer


def toggle_annotations(ws: Workspace, layer_id: str, visible: bool) -> int:
    """Show or hide a layer's annotations; they are retained either way."""

    def fn(state):
        feedback = dict(state.feedback)
        count = 0
        for ann_id, ann in feedback.items():
            if ann.layer_id == layer_id:
                feedback[ann_id] = replace(ann, visible=visible)
                count += 1
        return (replace(state, feedback=feedback), count,
                [("annotations-toggled", {"layer_id": layer_id,
                                          "visible": visible})])

    _, count = ws.mutate("toggle-annotations", fn)
    ws._log("feature-invocation", "toggle-annotations",
            {"layer_id": layer_id, "visible": visible})
    return count


def annotations_for(ws: Workspace, layer_id: str) -> tuple:
    return tuple(a for a in ws.state.feedback.values() if a.layer_id == layer_id)


# ---------------------------------------------------------------------------
# research ramesh: grounded scratchpad answers
# ---------------------------------------------------------------------------

def research(ws: Workspace, scratchpad_id: str, question: str) -> Future:
    """Append a question/answer entry; citations must name attached docs.

    Citations naming unknown documents are dropped with a warning; an
    answer that ends up with no citations is flagged unverified.
    """
    layer = ws.state.layer(scratchpad_id)
    if not isinstance(layer, ScratchpadLayer):
        raise TypeMismatchError(f"{scratchpad_id} is not a scratchpad layer")
    ws._log("feature-invocation", "research", {"layer_id": scratchpad_id})
    ws._log("user-prompt", "research", {"prompt": question})
    prompt = ws.compose_for_layer("research", scratchpad_id, user_params=question)
    request = ws.new_request("research", prompt, scratchpad_id)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)
            part: CitedAnswerPart = result.parts[0]

            def fn(state):
                pad = state.layer(scratchpad_id)
                counters, block_id = _next_id(state.counters, "B")
                answer = Block(block_id=block_id, kind="paragraph",
                               spans=(Span(part.text, friend_attr("ramesh", accepted=True)),))
                events = []
                kept = []
                for cite in part.citations:
                    if state.meta.reference(cite.doc_id) is None:
                        events.append(("warning", {"about": "unknown-citation",
                                                   "doc_id": cite.doc_id}))
                        continue
                    kept.append(cite)
                entry = ScratchEntry(question=question, answer_blocks=(answer,),
                                     citations=tuple(kept),
                                     unverified=not kept)
                layers = dict(state.layers)
                layers[scratchpad_id] = replace(pad, entries=pad.entries + (entry,))
                events.append(("research-answered", {"layer_id": scratchpad_id,
                                                     "unverified": entry.unverified}))
                return (replace(state, layers=layers, counters=counters),
                        entry, events)

            entry = ws.apply_once(result.request_id, "research-apply", fn)
            ws._notify_layer(scratchpad_id, result)
            outer.set_result(entry)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer


# ---------------------------------------------------------------------------
# writing templates
# ---------------------------------------------------------------------------

GUIDANCE_NOTE = "Write the {component} here."


def apply_template(ws: Workspace, template_id: str, source_layer_id: str) -> Future:
    """Partition a layer into one new layer per template component.

    Components always come out in template order with the exact component
    names; empty components get a one-line guidance note instead of
    fabricated content. The source layer is untouched.
    """
    template = ws.registry.lookup_template(template_id)
    layer = ws.state.layer(source_layer_id)
    if not isinstance(layer, WritingLayer) or layer.is_empty():
        raise EmptyLayerError("templates need a non-empty source layer")
    ws._log("feature-invocation", "apply-template",
            {"template": template_id, "layer_id": source_layer_id})
    prompt = ws.compose_for_layer(template.task_id, source_layer_id)
    request = ws.new_request(template.task_id, prompt, source_layer_id)
    outer: Future = Future()

    def on_final(result: GenerationResult) -> None:
        try:
            if not result.ok:
                _raise_for_status(result)

            def fn(state):
                counters = state.counters
                layers = dict(state.layers)
                placements = dict(state.placements)
                origin = state.placements.get(source_layer_id)
                created = []
                events = []
                for k, (component, part) in enumerate(
                        zip(template.component_names, result.parts)):
                    counters, block_id = _next_id(counters, "B")
                    if part.text:
                        # The writer's own words, routed by the template.
                        spans = (human_span(part.text),)
                    else:
                        spans = (Span(GUIDANCE_NOTE.format(component=component),
                                      friend_attr("template", accepted=True)),)
                    block = Block(block_id=block_id, kind="paragraph", spans=spans)
                    counters, new_id = _next_id(counters, "L")
                    comp_layer = WritingLayer(
                        layer_id=new_id, name=component, blocks=(block,),
                        tags=frozenset({template_id}))
                    counters, placement = ws._place_beside(counters, origin, index=k)
                    layers[new_id] = comp_layer
                    placements[new_id] = placement
                    created.append(comp_layer)
                    events.append(("layer-created", {"layer_id": new_id,
                                                     "name": component}))
                return (replace(state, layers=layers, placements=placements,
                                counters=counters), tuple(created), events)

            created = ws.apply_once(result.request_id, "apply-template", fn)
            for comp in created or ():
                ws._log("feature-invocation", "create-layer",
                        {"layer_id": comp.layer_id, "name": comp.name})
            ws._notify_layer(source_layer_id, result)
            outer.set_result(created)
        except Exception as exc:
            outer.set_exception(exc)

    ws.track(ws.generator.submit(request, on_final=on_final))
    ws.track(outer)
    return outer
