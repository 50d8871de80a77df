"""Layer primitives: attributed rich content, placeholders, and layer types.

Everything in this module is an immutable value. Mutation happens by building
new values (usually via ``dataclasses.replace``) inside the workspace's
single mutation queue; readers can safely hold references to any snapshot.

Span attribution tracks who produced each run of characters (the human, a
named friend persona, a compiler edit, or generated transition text). The
``origin`` of a span never changes after creation; only its ``accepted``
flag may flip when the writer accepts AI content.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Union

from .errors import BadRangeError, WrongStateError

# Span origins.
HUMAN = "human"
FRIEND = "friend"
COMPILER_EDIT = "compiler-edit"
TRANSITION = "transition"

_ORIGINS = (HUMAN, FRIEND, COMPILER_EDIT, TRANSITION)

# Placeholder lifecycle. ``rejected`` is reachable from any non-terminal
# state because backend failures and cancellation must be able to abandon a
# placeholder that never got filled.
PLACEHOLDER_TRANSITIONS = {
    "pending": {"streaming", "rejected"},
    "streaming": {"filled", "rejected"},
    "filled": {"accepted", "rejected"},
    "accepted": set(),
    "rejected": set(),
}

NON_TERMINAL_STATES = ("pending", "streaming", "filled")

HEADING_LEVELS = (1, 2, 3)

# External reference uploads are stored as extracted plain text, capped.
REFERENCE_SIZE_CAP = 512 * 1024


@dataclass(frozen=True)
class SpanAttribution:
    origin: str
    friend_id: Optional[str] = None
    accepted: bool = True

    def __post_init__(self):
        if self.origin not in _ORIGINS:
            raise ValueError(f"unknown span origin {self.origin!r}")
        if self.origin == FRIEND and not self.friend_id:
            raise ValueError("friend spans must name a friend_id")
        if self.origin != FRIEND and self.friend_id is not None:
            raise ValueError("friend_id only valid for friend spans")

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "friend_id": self.friend_id,
            "accepted": self.accepted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpanAttribution":
        return cls(
            origin=data["origin"],
            friend_id=data.get("friend_id"),
            accepted=data["accepted"],
        )


HUMAN_ATTR = SpanAttribution(origin=HUMAN)


@dataclass(frozen=True)
class Span:
    text: str
    attribution: SpanAttribution = HUMAN_ATTR

    def to_dict(self) -> dict:
        return {"text": self.text, "attribution": self.attribution.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Span":
        return cls(
            text=data["text"],
            attribution=SpanAttribution.from_dict(data["attribution"]),
        )


def human_span(text: str) -> Span:
    return Span(text=text, attribution=HUMAN_ATTR)


def friend_span(text: str, friend_id: str, accepted: bool = False) -> Span:
    return Span(text, SpanAttribution(origin=FRIEND, friend_id=friend_id, accepted=accepted))


@dataclass(frozen=True)
class Block:
    """One paragraph, heading, or comment anchor with attributed spans.

    A block's span list is non-empty except while the block exists only to
    host a pending placeholder.
    """

    block_id: str
    kind: str = "paragraph"  # paragraph | heading | comment-anchor
    level: int = 0           # 1..3 for headings, 0 otherwise
    spans: tuple = ()

    def __post_init__(self):
        if self.kind == "heading" and self.level not in HEADING_LEVELS:
            raise ValueError(f"heading level must be one of {HEADING_LEVELS}")
        if self.kind != "heading" and self.level != 0:
            raise ValueError("only headings carry a level")

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.spans)

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "kind": self.kind,
            "level": self.level,
            "spans": [s.to_dict() for s in self.spans],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Block":
        return cls(
            block_id=data["block_id"],
            kind=data["kind"],
            level=data["level"],
            spans=tuple(Span.from_dict(s) for s in data["spans"]),
        )


def empty_paragraph(block_id: str) -> Block:
    return Block(block_id=block_id, spans=(human_span(""),))


# --- char-offset span editing ------------------------------------------------

def _check_range(block: Block, start: int, end: int) -> None:
    length = len(block.text)
    if not (0 <= start <= end <= length):
        raise BadRangeError(
            f"range {start}..{end} out of bounds for block {block.block_id} (len {length})",
            block_id=block.block_id,
        )


def _split_spans(spans: Iterable[Span], offset: int) -> tuple:
    """Split a span sequence at a character offset; returns (left, right)."""
    left: list = []
    right: list = []
    pos = 0
    for span in spans:
        end = pos + len(span.text)
        if end <= offset:
            left.append(span)
        elif pos >= offset:
            right.append(span)
        else:
            cut = offset - pos
            left.append(replace(span, text=span.text[:cut]))
            right.append(replace(span, text=span.text[cut:]))
        pos = end
    return left, right


def _merge_spans(spans: Iterable[Span]) -> tuple:
    """Drop empty spans and merge adjacent spans with identical attribution."""
    merged: list = []
    for span in spans:
        if not span.text:
            continue
        if merged and merged[-1].attribution == span.attribution:
            merged[-1] = replace(merged[-1], text=merged[-1].text + span.text)
        else:
            merged.append(span)
    if not merged:
        merged = [human_span("")]
    return tuple(merged)


def block_insert(block: Block, offset: int, text: str,
                 attribution: SpanAttribution = HUMAN_ATTR) -> Block:
    """Insert text at a character offset as a new attributed span.

    Inserting inside a span with a different attribution splits it; the two
    halves keep their original origin, so accepted AI text is never
    silently converted into human text.
    """
    _check_range(block, offset, offset)
    left, right = _split_spans(block.spans, offset)
    spans = _merge_spans([*left, Span(text, attribution), *right])
    return replace(block, spans=spans)


def block_delete(block: Block, start: int, end: int) -> Block:
    _check_range(block, start, end)
    left, rest = _split_spans(block.spans, start)
    _, right = _split_spans(rest, end - start)
    return replace(block, spans=_merge_spans([*left, *right]))


def block_replace(block: Block, start: int, end: int, text: str,
                  attribution: SpanAttribution = HUMAN_ATTR) -> Block:
    _check_range(block, start, end)
    left, rest = _split_spans(block.spans, start)
    _, right = _split_spans(rest, end - start)
    spans = _merge_spans([*left, Span(text, attribution), *right])
    return replace(block, spans=spans)


def block_set_accepted(block: Block, start: int, end: int, accepted: bool) -> Block:
    """Flip the accepted flag on every span char in [start, end)."""
    _check_range(block, start, end)
    left, rest = _split_spans(block.spans, start)
    mid, right = _split_spans(rest, end - start)
    flipped = [replace(s, attribution=replace(s.attribution, accepted=accepted)) for s in mid]
    return replace(block, spans=_merge_spans([*left, *flipped, *right]))


def origin_of_char(block: Block, offset: int) -> SpanAttribution:
    pos = 0
    for span in block.spans:
        if pos <= offset < pos + len(span.text):
            return span.attribution
        pos += len(span.text)
    raise BadRangeError(f"offset {offset} out of bounds")


# --- placeholders -------------------------------------------------------------

@dataclass(frozen=True)
class Placeholder:
    """An anchored slot where streamed AI content lands until resolved.

    ``saved_spans`` snapshots the anchor block at invocation time so a
    reject can restore it byte-identically. ``created_block`` marks blocks
    that exist only to host this placeholder (combine transitions); those
    are removed entirely on reject.
    """

    placeholder_id: str
    layer_id: str
    block_id: str
    span_offset: int
    task_id: str
    friend_id: Optional[str] = None
    state: str = "pending"
    partial_text: str = ""
    filled_text: str = ""
    note: str = ""
    created_block: bool = False
    saved_spans: tuple = ()

    def advance(self, new_state: str, **changes) -> "Placeholder":
        allowed = PLACEHOLDER_TRANSITIONS[self.state]
        if new_state not in allowed:
            raise WrongStateError(
                f"placeholder {self.placeholder_id}: cannot go {self.state} -> {new_state}",
                placeholder_id=self.placeholder_id,
            )
        return replace(self, state=new_state, **changes)

    @property
    def terminal(self) -> bool:
        return self.state in ("accepted", "rejected")

    def to_dict(self) -> dict:
        return {
            "placeholder_id": self.placeholder_id,
            "layer_id": self.layer_id,
            "block_id": self.block_id,
            "span_offset": self.span_offset,
            "task_id": self.task_id,
            "friend_id": self.friend_id,
            "state": self.state,
            "partial_text": self.partial_text,
            "filled_text": self.filled_text,
            "note": self.note,
            "created_block": self.created_block,
            "saved_spans": [s.to_dict() for s in self.saved_spans],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Placeholder":
        return cls(
            placeholder_id=data["placeholder_id"],
            layer_id=data["layer_id"],
            block_id=data["block_id"],
            span_offset=data["span_offset"],
            task_id=data["task_id"],
            friend_id=data.get("friend_id"),
            state=data["state"],
            partial_text=data["partial_text"],
            filled_text=data["filled_text"],
            note=data["note"],
            created_block=data["created_block"],
            saved_spans=tuple(Span.from_dict(s) for s in data["saved_spans"]),
        )


# --- layers -------------------------------------------------------------------

@dataclass(frozen=True)
class ParentLink:
    """Persistent link from a sub-layer back to its anchor in the parent."""

    parent_layer_id: str
    block_id: str
    start: int
    end: int
    anchored_text: str
    orphaned: bool = False

    def to_dict(self) -> dict:
        return {
            "parent_layer_id": self.parent_layer_id,
            "block_id": self.block_id,
            "start": self.start,
            "end": self.end,
            "anchored_text": self.anchored_text,
            "orphaned": self.orphaned,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParentLink":
        return cls(**data)


@dataclass(frozen=True)
class WritingLayer:
    """A discrete, modular unit of editable content."""

    layer_id: str
    name: str
    blocks: tuple = ()
    folded: bool = False
    fold_summary: Optional[str] = None
    summary_stale: bool = False
    tags: frozenset = frozenset()
    parent_link: Optional[ParentLink] = None

    kind = "writing"

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.block_id == block_id:
                return b
        raise BadRangeError(f"no block {block_id} in layer {self.layer_id}",
                            layer_id=self.layer_id, block_id=block_id)

    def block_index(self, block_id: str) -> int:
        for i, b in enumerate(self.blocks):
            if b.block_id == block_id:
                return i
        raise BadRangeError(f"no block {block_id} in layer {self.layer_id}")

    def with_block(self, new_block: Block) -> "WritingLayer":
        blocks = tuple(new_block if b.block_id == new_block.block_id else b
                       for b in self.blocks)
        return replace(self, blocks=blocks)

    @property
    def text(self) -> str:
        return "\n".join(b.text for b in self.blocks)

    def is_empty(self) -> bool:
        return all(not b.text.strip() for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "layer_kind": self.kind,
            "layer_id": self.layer_id,
            "name": self.name,
            "blocks": [b.to_dict() for b in self.blocks],
            "folded": self.folded,
            "fold_summary": self.fold_summary,
            "summary_stale": self.summary_stale,
            "tags": sorted(self.tags),
            "parent_link": self.parent_link.to_dict() if self.parent_link else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WritingLayer":
        return cls(
            layer_id=data["layer_id"],
            name=data["name"],
            blocks=tuple(Block.from_dict(b) for b in data["blocks"]),
            folded=data["folded"],
            fold_summary=data["fold_summary"],
            summary_stale=data["summary_stale"],
            tags=frozenset(data["tags"]),
            parent_link=ParentLink.from_dict(data["parent_link"]) if data["parent_link"] else None,
        )


@dataclass(frozen=True)
class Citation:
    doc_id: str
    start: int
    end: int

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: dict) -> "Citation":
        return cls(**data)


@dataclass(frozen=True)
class ScratchEntry:
    question: str
    answer_blocks: tuple = ()
    citations: tuple = ()
    unverified: bool = False

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer_blocks": [b.to_dict() for b in self.answer_blocks],
            "citations": [c.to_dict() for c in self.citations],
            "unverified": self.unverified,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScratchEntry":
        return cls(
            question=data["question"],
            answer_blocks=tuple(Block.from_dict(b) for b in data["answer_blocks"]),
            citations=tuple(Citation.from_dict(c) for c in data["citations"]),
            unverified=data["unverified"],
        )


@dataclass(frozen=True)
class ScratchpadLayer:
    """Question/answer research layer grounded in uploaded references."""

    layer_id: str
    name: str
    entries: tuple = ()
    folded: bool = False
    fold_summary: Optional[str] = None
    summary_stale: bool = False
    tags: frozenset = frozenset()

    kind = "scratchpad"

    @property
    def text(self) -> str:
        parts = []
        for e in self.entries:
            parts.append(e.question)
            parts.extend(b.text for b in e.answer_blocks)
        return "\n".join(parts)

    def is_empty(self) -> bool:
        return not self.entries

    def to_dict(self) -> dict:
        return {
            "layer_kind": self.kind,
            "layer_id": self.layer_id,
            "name": self.name,
            "entries": [e.to_dict() for e in self.entries],
            "folded": self.folded,
            "fold_summary": self.fold_summary,
            "summary_stale": self.summary_stale,
            "tags": sorted(self.tags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScratchpadLayer":
        return cls(
            layer_id=data["layer_id"],
            name=data["name"],
            entries=tuple(ScratchEntry.from_dict(e) for e in data["entries"]),
            folded=data["folded"],
            fold_summary=data["fold_summary"],
            summary_stale=data["summary_stale"],
            tags=frozenset(data["tags"]),
        )


Layer = Union[WritingLayer, ScratchpadLayer]


@dataclass(frozen=True)
class ExternalReference:
    """Uploaded supporting document, stored as extracted plain text."""

    doc_id: str
    title: str
    text: str

    @property
    def byte_size(self) -> int:
        return len(self.text.encode("utf-8"))

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "title": self.title, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict) -> "ExternalReference":
        return cls(**data)


@dataclass(frozen=True)
class MetaLayer:
    """Singleton layer of workspace-wide writing context.

    Every prompt composition embeds the non-empty fields here, so the
    backend always sees the writer's purpose, audience, and intent.
    """

    purpose: str = ""
    audience: str = ""
    intent: str = ""
    domain_requirements: str = ""
    references: tuple = ()

    def reference(self, doc_id: str) -> Optional[ExternalReference]:
        for ref in self.references:
            if ref.doc_id == doc_id:
                return ref
        return None

    def is_empty(self) -> bool:
        return not (self.purpose or self.audience or self.intent
                    or self.domain_requirements or self.references)

    def to_dict(self) -> dict:
        return {
            "purpose": self.purpose,
            "audience": self.audience,
            "intent": self.intent,
            "domain_requirements": self.domain_requirements,
            "references": [r.to_dict() for r in self.references],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetaLayer":
        return cls(
            purpose=data["purpose"],
            audience=data["audience"],
            intent=data["intent"],
            domain_requirements=data["domain_requirements"],
            references=tuple(ExternalReference.from_dict(r) for r in data["references"]),
        )


# --- compiled documents ---------------------------------------------------------

@dataclass(frozen=True)
class SpanAddress:
    block_id: str
    span_index: int

    def key(self) -> str:
        return f"{self.block_id}:{self.span_index}"

    @classmethod
    def from_key(cls, key: str) -> "SpanAddress":
        block_id, _, idx = key.rpartition(":")
        return cls(block_id=block_id, span_index=int(idx))


@dataclass(frozen=True)
class SourceRef:
    """Where a compiled span came from; compiler edits carry a highlight."""

    layer_id: str
    block_id: str
    start: int
    end: int
    kind: str = "verbatim"  # verbatim | compiler-edit

    @property
    def highlight(self) -> bool:
        return self.kind == COMPILER_EDIT

    def to_dict(self) -> dict:
        return {
            "layer_id": self.layer_id,
            "block_id": self.block_id,
            "start": self.start,
            "end": self.end,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceRef":
        return cls(**data)


@dataclass(frozen=True)
class IndexEntry:
    title: str
    level: int
    block_id: str

    def to_dict(self) -> dict:
        return {"title": self.title, "level": self.level, "block_id": self.block_id}

    @classmethod
    def from_dict(cls, data: dict) -> "IndexEntry":
        return cls(**data)


@dataclass(frozen=True)
class DocumentLayer:
    """Non-editable compiled output with span-level provenance.

    ``hyper_refs`` maps every span address in ``blocks`` to exactly one
    SourceRef. No mutating operation accepts a document layer id.
    """

    doc_layer_id: str
    name: str
    index: tuple = ()
    blocks: tuple = ()
    hyper_refs: tuple = ()  # ordered (SpanAddress, SourceRef) pairs
    created_from: tuple = ()
    directives_used: tuple = ()

    kind = "document"

    @property
    def text(self) -> str:
        return "\n".join(b.text for b in self.blocks)

    def ref_for(self, address: SpanAddress) -> Optional[SourceRef]:
        for addr, ref in self.hyper_refs:
            if addr == address:
                return ref
        return None

    def to_dict(self) -> dict:
        return {
            "layer_kind": self.kind,
            "doc_layer_id": self.doc_layer_id,
            "name": self.name,
            "index": [e.to_dict() for e in self.index],
            "blocks": [b.to_dict() for b in self.blocks],
            "hyper_refs": [[a.key(), r.to_dict()] for a, r in self.hyper_refs],
            "created_from": list(self.created_from),
            "directives_used": list(self.directives_used),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DocumentLayer":
        return cls(
            doc_layer_id=data["doc_layer_id"],
            name=data["name"],
            index=tuple(IndexEntry.from_dict(e) for e in data["index"]),
            blocks=tuple(Block.from_dict(b) for b in data["blocks"]),
            hyper_refs=tuple((SpanAddress.from_key(a), SourceRef.from_dict(r))
                             for a, r in data["hyper_refs"]),
            created_from=tuple(data["created_from"]),
            directives_used=tuple(data["directives_used"]),
        )


def layer_from_dict(data: dict) -> Layer:
    kind = data["layer_kind"]
    if kind == "writing":
        return WritingLayer.from_dict(data)
    if kind == "scratchpad":
        return ScratchpadLayer.from_dict(data)
    raise ValueError(f"unknown layer kind {kind!r}")
