"""Prompt composition pipeline: task knowledge, templatizing, and output schemas.

A composed prompt is an ordered list of labeled segments. The order is
canonical and never varies:

    base-prompt, meta-context, cross-layer-context, layer-content,
    user-parameters, output-constraints

Empty optional segments are omitted, never reordered. Serialization is
byte-stable so identical inputs always produce identical prompt bytes,
which the deterministic mock backend (and the golden tests) rely on.

Backend output is machine-parseable: multi-part responses use
``<<<part k>>>`` style markers, record-shaped responses (annotations,
replacements) use ``key: value`` lines. Every response is validated
against its task's schema before any of it is applied.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .errors import BadAnchorError, SchemaInvalidError, UnknownTaskError, UnknownTemplateError
from .model import Block, Citation, Layer, MetaLayer, ScratchpadLayer, WritingLayer

SEGMENT_ORDER = (
    "base-prompt",
    "meta-context",
    "cross-layer-context",
    "layer-content",
    "user-parameters",
    "output-constraints",
)

# Anchor sentinel injected into layer content to mark the insertion point.
# User text is escaped so the sentinel can never be forged from a layer.
SENTINEL = "{{{cursor}}}"

SCHEMA_KINDS = (
    "free-text",
    "inline-paragraph",
    "n-new-layers",
    "annotation-list",
    "ordering",
    "structured-sections",
    "replacement-list",
    "cited-answer",
)

RENDER_TARGETS = ("in-place", "new-layers", "annotations", "document", "scratchpad", "job")

# How much of a long layer is included in layer-content before head+tail
# truncation kicks in. Chars, not tokens; deliberately generous.
CONTENT_BUDGET = 16000
_HEAD = 12000
_TAIL = 3500


def escape_user_text(text: str) -> str:
    return text.replace("{{{", "{{ {")


@dataclass(frozen=True)
class StructuredSchema:
    """Output contract for a task; owns the parse rules for backend output."""

    kind: str
    n: int = 0

    def __post_init__(self):
        if self.kind not in SCHEMA_KINDS:
            raise ValueError(f"unknown schema kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n}


@dataclass(frozen=True)
class TaskKnowledge:
    task_id: str
    base_prompt: str
    schema: StructuredSchema
    render_target: str
    friend_id: Optional[str] = None
    instance_count: int = 1

    def __post_init__(self):
        if self.render_target not in RENDER_TARGETS:
            raise ValueError(f"unknown render target {self.render_target!r}")
        if self.instance_count < 1:
            raise ValueError("instance_count must be >= 1")


@dataclass(frozen=True)
class AnchorPlan:
    """Where generated content lands: an in-place anchor or a new-layer plan."""

    mode: str  # mirrors the task's render target
    layer_id: str = ""
    block_id: Optional[str] = None
    offset: Optional[int] = None
    layer_count: int = 0
    naming_rule: str = ""


@dataclass(frozen=True)
class CrossContext:
    """Text imported via tunneling, attached to the next composition."""

    source_layer_id: str
    source_layer_name: str
    block_id: str
    text: str


@dataclass(frozen=True)
class ComposedPrompt:
    task_id: str
    segments: tuple  # ordered (label, text) pairs
    anchor_plan: AnchorPlan
    instance_count: int = 1

    def segment(self, label: str) -> Optional[str]:
        for name, text in self.segments:
            if name == label:
                return text
        return None

    def serialize(self) -> str:
        lines = [f"[[task: {self.task_id}]]"]
        for label, text in self.segments:
            lines.append(f"[[segment: {label}]]")
            lines.append(text)
        lines.append("[[end]]")
        return "\n".join(lines)


# --- layer content rendering ---------------------------------------------------

def _block_tag(block: Block) -> str:
    if block.kind == "heading":
        return f"heading{block.level}"
    return block.kind


def render_layer_content(layer: Layer, anchor_block: Optional[str] = None,
                         anchor_offset: Optional[int] = None) -> str:
    """Render a layer as addressable block lines, with an optional anchor sentinel."""
    lines = []
    if isinstance(layer, ScratchpadLayer):
        for i, entry in enumerate(layer.entries, start=1):
            lines.append(f"[entry {i}|question] {escape_user_text(entry.question)}")
            for b in entry.answer_blocks:
                lines.append(f"[entry {i}|answer] {escape_user_text(b.text)}")
        return "\n".join(lines)
    for block in layer.blocks:
        text = escape_user_text(block.text)
        if block.block_id == anchor_block:
            offset = min(anchor_offset or 0, len(text))
            text = text[:offset] + SENTINEL + text[offset:]
        lines.append(f"[block {block.block_id}|{_block_tag(block)}] {text}")
    content = "\n".join(lines)
    if len(content) > CONTENT_BUDGET:
        content = (content[:_HEAD] + "\n[... truncated ...]\n" + content[-_TAIL:])
    return content


def render_meta_context(meta: MetaLayer, include_reference_texts: bool = False) -> str:
    """Label every non-empty meta field; omit empty ones."""
    lines = []
    if meta.purpose:
        lines.append(f"purpose: {meta.purpose}")
    if meta.audience:
        lines.append(f"audience: {meta.audience}")
    if meta.intent:
        lines.append(f"intent: {meta.intent}")
    if meta.domain_requirements:
        lines.append(f"domain requirements: {meta.domain_requirements}")
    for ref in meta.references:
        lines.append(f"reference {ref.doc_id}: {ref.title} ({ref.byte_size} bytes)")
    if include_reference_texts:
        for ref in meta.references:
            lines.append(f"reference-text {ref.doc_id}:")
            lines.append(ref.text)
    return "\n".join(lines)


def render_cross_context(items: Sequence[CrossContext]) -> str:
    lines = [
        f"imported from {c.source_layer_name} ({c.source_layer_id}:{c.block_id}): "
        f"{escape_user_text(c.text)}"
        for c in items
    ]
    return "\n".join(lines)


# --- output constraints ---------------------------------------------------------

def render_constraints(schema: StructuredSchema) -> str:
    kind = schema.kind
    if kind in ("free-text", "inline-paragraph"):
        body = "Respond with the text only: no preamble, no markers."
        if kind == "inline-paragraph":
            body = ("Respond with a single paragraph of text to insert at the "
                    "cursor sentinel. No preamble, no markers.")
        return f"format: {kind}\n{body}"
    if kind == "n-new-layers":
        return (
            f"format: n-new-layers\nparts: {schema.n}\n"
            f"Respond with exactly {schema.n} parts. Begin part k with a line "
            f'reading "<<<part k>>>" and follow it with that part\'s text. '
            f"A part may be empty."
        )
    if kind == "structured-sections":
        return (
            "format: structured-sections\n"
            "Respond with markdown-style sections: heading lines start with "
            "#, ## or ### followed by the title; paragraphs follow their "
            "heading. At least one heading is required."
        )
    if kind == "annotation-list":
        return (
            "format: annotation-list\n"
            'Respond with zero or more notes. Begin note k with "<<<note k>>>" '
            "followed by exactly these lines:\n"
            "target: layer=<layer-id> block=<block-id> span=<start>-<end>\n"
            "kind: <similarity|difference|comment>\n"
            "text: <the note text>"
        )
    if kind == "ordering":
        return (
            "format: ordering\n"
            "Respond with one line: the layer ids in your chosen order, "
            "comma-separated, nothing else."
        )
    if kind == "replacement-list":
        return (
            "format: replacement-list\n"
            'Respond with zero or more replacements. Begin replacement k with '
            '"<<<replacement k>>>" followed by:\n'
            "target: layer=<layer-id> block=<block-id>\n"
            "text: <the full replacement text for that block>"
        )
    if kind == "cited-answer":
        return (
            "format: cited-answer\n"
            "Respond with the answer text. After it, cite supporting "
            'excerpts, each as a line "<<<cite>>>" followed by '
            '"doc=<doc-id> range=<start>-<end>". Only cite attached '
            "references; answers without citations are marked unverified."
        )
    raise ValueError(kind)


# --- templatize + compose --------------------------------------------------------

def templatize(layer: Optional[Layer], task: TaskKnowledge,
               anchor_block: Optional[str] = None,
               anchor_offset: Optional[int] = None,
               n_override: Optional[int] = None) -> tuple:
    """Produce (anchor_plan, layer-content, output-constraints) for a task.

    In-place tasks require a valid anchor inside the layer snapshot;
    whole-layer tasks ignore the anchor. Job tasks that operate on a set
    of layers (ordering, compile directives) pass ``layer=None`` and
    supply their listing through ``extra_content``.
    """
    schema = task.schema
    if n_override is not None and schema.kind == "n-new-layers":
        schema = replace(schema, n=n_override)

    if task.render_target == "in-place":
        if layer is None or anchor_block is None:
            raise BadAnchorError("in-place task requires an anchor")
        if not isinstance(layer, WritingLayer):
            raise BadAnchorError("in-place anchor requires a writing layer")
        block = layer.block(anchor_block)  # raises BadRangeError if missing
        offset = anchor_offset or 0
        if not (0 <= offset <= len(block.text)):
            raise BadAnchorError(
                f"anchor offset {offset} out of bounds for block {anchor_block}")
        plan = AnchorPlan(mode="in-place", layer_id=layer.layer_id,
                          block_id=anchor_block, offset=offset)
        content = render_layer_content(layer, anchor_block, offset)
    elif task.render_target == "new-layers":
        if layer is None:
            raise BadAnchorError("new-layer task requires a source layer")
        count = schema.n if schema.kind == "n-new-layers" else 1
        naming = "{name} — variant {k}" if schema.kind == "n-new-layers" else "{name} — structured"
        plan = AnchorPlan(mode="new-layers", layer_id=layer.layer_id,
                          layer_count=count, naming_rule=naming)
        content = render_layer_content(layer)
    else:
        plan = AnchorPlan(mode=task.render_target,
                          layer_id=layer.layer_id if layer else "")
        content = render_layer_content(layer) if layer else ""
    return plan, content, render_constraints(schema)


def compose(task: TaskKnowledge, meta: MetaLayer, layer: Optional[Layer],
            user_params: str = "",
            anchor_block: Optional[str] = None,
            anchor_offset: Optional[int] = None,
            cross_context: Sequence[CrossContext] = (),
            n_override: Optional[int] = None,
            extra_content: str = "") -> ComposedPrompt:
    """Assemble the canonical segment sequence for one generation request."""
    plan, content, constraints = templatize(
        layer, task, anchor_block, anchor_offset, n_override)
    if extra_content:
        content = content + "\n" + extra_content if content else extra_content

    segments = [("base-prompt", task.base_prompt)]
    meta_text = render_meta_context(meta, include_reference_texts=(task.schema.kind == "cited-answer"))
    if meta_text:
        segments.append(("meta-context", meta_text))
    if cross_context:
        segments.append(("cross-layer-context", render_cross_context(cross_context)))
    segments.append(("layer-content", content))
    if user_params.strip():
        segments.append(("user-parameters", escape_user_text(user_params.strip())))
    segments.append(("output-constraints", constraints))
    return ComposedPrompt(
        task_id=task.task_id,
        segments=tuple(segments),
        anchor_plan=plan,
        instance_count=task.instance_count,
    )


# --- structured output parsing ----------------------------------------------------

@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class SectionPart:
    sections: tuple  # (level, title, body) triples


@dataclass(frozen=True)
class NotePart:
    layer_id: str
    block_id: str
    start: int
    end: int
    note_kind: str
    text: str


@dataclass(frozen=True)
class OrderingPart:
    layer_ids: tuple


@dataclass(frozen=True)
class ReplacementPart:
    layer_id: str
    block_id: str
    text: str


@dataclass(frozen=True)
class CitedAnswerPart:
    text: str
    citations: tuple


_PART_RE = re.compile(r"^<<<part (\d+)>>>\s*$", re.MULTILINE)
_NOTE_RE = re.compile(r"^<<<note (\d+)>>>\s*$", re.MULTILINE)
_REPL_RE = re.compile(r"^<<<replacement (\d+)>>>\s*$", re.MULTILINE)
_CITE_RE = re.compile(r"^<<<cite>>>\s*$", re.MULTILINE)
_TARGET_RE = re.compile(
    r"^target:\s*(?:layer=(\S+)\s+)?block=(\S+)(?:\s+span=(\d+)-(\d+))?\s*$")
_HEADING_RE = re.compile(r"^(#{1,3})\s+(.*)$")


def _split_marked(raw: str, marker_re: re.Pattern) -> list:
    chunks = []
    matches = list(marker_re.finditer(raw))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        chunks.append(raw[m.end():end].strip("\n"))
    return chunks


def _parse_record(chunk: str, want_span: bool) -> dict:
    target = None
    note_kind = "comment"
    text_lines: list = []
    in_text = False
    for line in chunk.splitlines():
        if in_text:
            text_lines.append(line)
            continue
        m = _TARGET_RE.match(line.strip())
        if m:
            target = m
            continue
        if line.startswith("kind:"):
            note_kind = line.split(":", 1)[1].strip()
            continue
        if line.startswith("text:"):
            text_lines.append(line.split(":", 1)[1].lstrip())
            in_text = True
    if target is None:
        raise SchemaInvalidError("record missing target line")
    layer_id, block_id, start, end = target.group(1), target.group(2), target.group(3), target.group(4)
    if want_span and (start is None or end is None):
        raise SchemaInvalidError("record missing span")
    return {
        "layer_id": layer_id or "",
        "block_id": block_id,
        "start": int(start) if start is not None else 0,
        "end": int(end) if end is not None else 0,
        "kind": note_kind,
        "text": "\n".join(text_lines).strip(),
    }


def parse_output(schema: StructuredSchema, raw: str) -> tuple:
    """Validate raw backend text against a schema; returns structured parts.

    Raises SchemaInvalidError on any malformation; an invalid response is
    rejected in full, never partially applied.
    """
    kind = schema.kind
    if kind in ("free-text", "inline-paragraph"):
        text = raw.strip()
        if not text:
            raise SchemaInvalidError("empty response")
        return (TextPart(text=text),)

    if kind == "n-new-layers":
        chunks = _split_marked(raw, _PART_RE)
        if len(chunks) != schema.n:
            raise SchemaInvalidError(
                f"expected {schema.n} parts, got {len(chunks)}")
        return tuple(TextPart(text=c.strip()) for c in chunks)

    if kind == "structured-sections":
        sections = []
        current = None
        for line in raw.strip().splitlines():
            m = _HEADING_RE.match(line)
            if m:
                if current:
                    sections.append(current)
                current = [len(m.group(1)), m.group(2).strip(), []]
            elif current is not None:
                current[2].append(line)
            elif line.strip():
                raise SchemaInvalidError("content before first heading")
        if current:
            sections.append(current)
        if not sections:
            raise SchemaInvalidError("no headings in structured response")
        return (SectionPart(sections=tuple(
            (lvl, title, "\n".join(body).strip()) for lvl, title, body in sections)),)

    if kind == "annotation-list":
        notes = []
        for chunk in _split_marked(raw, _NOTE_RE):
            rec = _parse_record(chunk, want_span=True)
            if rec["kind"] not in ("similarity", "difference", "comment"):
                raise SchemaInvalidError(f"bad note kind {rec['kind']!r}")
            notes.append(NotePart(
                layer_id=rec["layer_id"], block_id=rec["block_id"],
                start=rec["start"], end=rec["end"],
                note_kind=rec["kind"], text=rec["text"]))
        return tuple(notes)

    if kind == "ordering":
        line = raw.strip()
        if not line or "\n" in line:
            raise SchemaInvalidError("ordering must be a single line")
        ids = tuple(part.strip() for part in line.split(",") if part.strip())
        if not ids:
            raise SchemaInvalidError("empty ordering")
        return (OrderingPart(layer_ids=ids),)

    if kind == "replacement-list":
        repls = []
        for chunk in _split_marked(raw, _REPL_RE):
            rec = _parse_record(chunk, want_span=False)
            repls.append(ReplacementPart(
                layer_id=rec["layer_id"], block_id=rec["block_id"], text=rec["text"]))
        return tuple(repls)

    if kind == "cited-answer":
        cites = list(_CITE_RE.finditer(raw))
        answer = raw[:cites[0].start()].strip() if cites else raw.strip()
        if not answer:
            raise SchemaInvalidError("empty answer")
        citations = []
        for chunk in _split_marked(raw, _CITE_RE):
            m = re.match(r"doc=(\S+)\s+range=(\d+)-(\d+)", chunk.strip())
            if not m:
                raise SchemaInvalidError(f"bad citation line {chunk!r}")
            citations.append(Citation(doc_id=m.group(1), start=int(m.group(2)),
                                      end=int(m.group(3))))
        return (CitedAnswerPart(text=answer, citations=tuple(citations)),)

    raise SchemaInvalidError(f"unknown schema kind {kind}")


# --- task + template assets ---------------------------------------------------------

@dataclass(frozen=True)
class WritingTemplate:
    template_id: str
    component_names: tuple
    distribution_prompt: str

    def __post_init__(self):
        if len(self.component_names) < 2:
            raise ValueError("templates need at least two components")

    @property
    def task_id(self) -> str:
        return f"template-{self.template_id}"


_HEADER_RE = re.compile(r"^([a-z-]+):\s*(.*)$")


def _parse_asset(text: str) -> tuple:
    """Split an asset file into (header dict, body). Format:

        key: value
        ...
        ---
        body text
    """
    header: dict = {}
    lines = text.splitlines()
    body_start = len(lines)
    for i, line in enumerate(lines):
        if line.strip() == "---":
            body_start = i + 1
            break
        m = _HEADER_RE.match(line)
        if m:
            header[m.group(1)] = m.group(2).strip()
    body = "\n".join(lines[body_start:]).strip()
    return header, body


class TaskRegistry:
    """Repository of predefined tasks and writing templates.

    Loaded from an asset directory at startup; adding a persona or a
    template means adding a ``.task`` or ``.template`` file there.
    """

    def __init__(self):
        self._tasks: dict = {}
        self._templates: dict = {}

    def register(self, task: TaskKnowledge) -> None:
        self._tasks[task.task_id] = task

    def register_template(self, template: WritingTemplate) -> None:
        self._templates[template.template_id] = template
        self.register(TaskKnowledge(
            task_id=template.task_id,
            base_prompt=template.distribution_prompt,
            schema=StructuredSchema(kind="n-new-layers", n=len(template.component_names)),
            render_target="new-layers",
            friend_id="template",
        ))

    def lookup(self, task_id: str) -> TaskKnowledge:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise UnknownTaskError(f"no task {task_id!r} registered") from None

    def lookup_template(self, template_id: str) -> WritingTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplateError(f"no template {template_id!r}") from None

    def task_ids(self) -> tuple:
        return tuple(sorted(self._tasks))

    def template_ids(self) -> tuple:
        return tuple(sorted(self._templates))

    def tasks_for_friend(self, friend_id: str) -> tuple:
        return tuple(t for t in self._tasks.values() if t.friend_id == friend_id)

    @classmethod
    def load(cls, assets_dir: Optional[Path] = None) -> "TaskRegistry":
        registry = cls()
        root = Path(assets_dir) if assets_dir else Path(__file__).parent / "assets"
        for path in sorted((root / "tasks").glob("*.task")):
            header, body = _parse_asset(path.read_text(encoding="utf-8"))
            registry.register(TaskKnowledge(
                task_id=header["id"],
                friend_id=header.get("friend") or None,
                base_prompt=body,
                schema=StructuredSchema(kind=header["schema"],
                                        n=int(header.get("parts", 0))),
                render_target=header["render-target"],
                instance_count=int(header.get("instances", 1)),
            ))
        for path in sorted((root / "templates").glob("*.template")):
            header, body = _parse_asset(path.read_text(encoding="utf-8"))
            names = tuple(n.strip() for n in header["components"].split(",") if n.strip())
            registry.register_template(WritingTemplate(
                template_id=header["id"],
                component_names=names,
                distribution_prompt=body,
            ))
        return registry
