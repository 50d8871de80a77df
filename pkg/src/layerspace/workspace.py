"""The workspace engine: spatial placement, grouping, and shifting operations.

All mutation is serialized through a single queue (one lock, one writer at
a time). Each mutation is a pure function from one immutable
``WorkspaceState`` to the next; applying it bumps a monotonically
increasing revision and emits ordered events. Readers can take the current
snapshot from any thread and never see a half-applied change. Generation
results arriving from backend worker threads enter the same queue.

Layers retired by tear/combine go to the bin, never deleted; bin+restore
and fold+unfold are identities on content.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, Union

from . import model
from .composing import (
    ComposedPrompt,
    CrossContext,
    TaskRegistry,
    TextPart,
    compose,
    render_layer_content,
)
from .errors import (
    AlreadyGroupedError,
    BadAnchorError,
    BadCutPointError,
    BadRangeError,
    DuplicateMemberError,
    EmptyLayerError,
    EmptyNameError,
    FoldedInputError,
    LayerspaceError,
    MemberOfStackError,
    NotAdjacentError,
    NotAStackError,
    NotEditableError,
    NotAPermutationError,
    PlaceholderPendingError,
    ReferenceTooLargeError,
    SelfTunnelError,
    TypeMismatchError,
    UnknownIdError,
    UnknownLayerError,
    UnknownTargetError,
    WrongStateError,
)
from .gateway import (
    BackendDescriptor,
    GenerationRequest,
    GenerationResult,
    GenerationService,
    make_backend,
)
from .model import (
    Block,
    DocumentLayer,
    Layer,
    MetaLayer,
    Placeholder,
    ScratchpadLayer,
    Span,
    SpanAttribution,
    WritingLayer,
    empty_paragraph,
    human_span,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class AdjacencyConfig:
    """Edge-touch tolerance: horizontal gap plus minimum vertical overlap."""

    epsilon: float = 8.0
    min_overlap_ratio: float = 0.30


@dataclass(frozen=True)
class Placement:
    x: float
    y: float
    width: float
    height: float
    z: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise BadRangeError("placement extents must be strictly positive")

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "width": self.width,
                "height": self.height, "z": self.z}

    @classmethod
    def from_dict(cls, data: dict) -> "Placement":
        return cls(**data)


@dataclass(frozen=True)
class Group:
    """Nested ordered collection of layers; stacks define compile order."""

    group_id: str
    members: tuple = ()  # layer ids (str) and nested Groups
    kind: str = "stack"  # stack | cluster
    tags: frozenset = frozenset()
    fanned: bool = False

    def to_dict(self) -> dict:
        members = []
        for m in self.members:
            if isinstance(m, Group):
                members.append({"member_kind": "group", "group": m.to_dict()})
            else:
                members.append({"member_kind": "layer", "layer_id": m})
        return {
            "group_id": self.group_id,
            "members": members,
            "kind": self.kind,
            "tags": sorted(self.tags),
            "fanned": self.fanned,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Group":
        members = []
        for m in data["members"]:
            if m["member_kind"] == "group":
                members.append(Group.from_dict(m["group"]))
            else:
                members.append(m["layer_id"])
        return cls(
            group_id=data["group_id"],
            members=tuple(members),
            kind=data["kind"],
            tags=frozenset(data["tags"]),
            fanned=data["fanned"],
        )


def flatten_group(member) -> tuple:
    """Depth-first flatten of a group tree into an ordered layer-id tuple."""
    if isinstance(member, Group):
        out = []
        for m in member.members:
            out.extend(flatten_group(m))
        return tuple(out)
    return (member,)


def group_layer_ids(groups: Iterable[Group]) -> tuple:
    out = []
    for g in groups:
        out.extend(flatten_group(g))
    return tuple(out)


@dataclass(frozen=True)
class ComparisonAnnotation:
    annotation_id: str
    layer_id: str
    block_id: str
    start: int
    end: int
    kind: str  # similarity | difference
    note: str

    def to_dict(self) -> dict:
        return {
            "annotation_id": self.annotation_id,
            "layer_id": self.layer_id,
            "block_id": self.block_id,
            "start": self.start,
            "end": self.end,
            "kind": self.kind,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonAnnotation":
        return cls(**data)


@dataclass(frozen=True)
class ComparisonSession:
    """Exists only while the two layers stay edge-adjacent."""

    session_id: str
    left: str
    right: str
    instruction: str
    annotations: tuple = ()

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "left": self.left,
            "right": self.right,
            "instruction": self.instruction,
            "annotations": [a.to_dict() for a in self.annotations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonSession":
        return cls(
            session_id=data["session_id"],
            left=data["left"],
            right=data["right"],
            instruction=data["instruction"],
            annotations=tuple(ComparisonAnnotation.from_dict(a)
                              for a in data["annotations"]),
        )


@dataclass(frozen=True)
class FeedbackAnnotation:
    annotation_id: str
    layer_id: str
    block_id: str
    persona: str
    note: str
    visible: bool = True

    def to_dict(self) -> dict:
        return {
            "annotation_id": self.annotation_id,
            "layer_id": self.layer_id,
            "block_id": self.block_id,
            "persona": self.persona,
            "note": self.note,
            "visible": self.visible,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeedbackAnnotation":
        return cls(**data)


@dataclass(frozen=True)
class BinEntry:
    layer: Layer
    placement: Optional[Placement] = None

    def to_dict(self) -> dict:
        return {
            "layer": self.layer.to_dict(),
            "placement": self.placement.to_dict() if self.placement else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BinEntry":
        return cls(
            layer=model.layer_from_dict(data["layer"]),
            placement=Placement.from_dict(data["placement"]) if data["placement"] else None,
        )


@dataclass(frozen=True)
class WorkspaceState:
    """One consistent snapshot of everything the workspace holds."""

    revision: int = 0
    meta: MetaLayer = MetaLayer()
    layers: dict = field(default_factory=dict)        # live layers by id
    placements: dict = field(default_factory=dict)    # layer/group/doc id -> Placement
    placeholders: dict = field(default_factory=dict)  # non-terminal placeholders
    groups: dict = field(default_factory=dict)        # top-level groups by id
    binned: dict = field(default_factory=dict)        # layer id -> BinEntry
    documents: dict = field(default_factory=dict)     # doc id -> DocumentLayer
    comparisons: dict = field(default_factory=dict)   # session id -> ComparisonSession
    feedback: dict = field(default_factory=dict)      # annotation id -> FeedbackAnnotation
    counters: dict = field(default_factory=dict)

    def layer(self, layer_id: str) -> Layer:
        if layer_id in self.documents:
            raise NotEditableError(
                f"document layer {layer_id} is not editable", layer_id=layer_id)
        try:
            return self.layers[layer_id]
        except KeyError:
            raise UnknownLayerError(f"no layer {layer_id!r}", layer_id=layer_id) from None

    def grouped_layer_ids(self) -> tuple:
        return group_layer_ids(self.groups.values())


COLLECTIONS = ("layers", "placements", "placeholders", "groups", "binned",
               "documents", "comparisons", "feedback")

_SERIALIZERS = {
    "layers": (lambda v: v.to_dict(), model.layer_from_dict),
    "placements": (lambda v: v.to_dict(), Placement.from_dict),
    "placeholders": (lambda v: v.to_dict(), Placeholder.from_dict),
    "groups": (lambda v: v.to_dict(), Group.from_dict),
    "binned": (lambda v: v.to_dict(), BinEntry.from_dict),
    "documents": (lambda v: v.to_dict(), DocumentLayer.from_dict),
    "comparisons": (lambda v: v.to_dict(), ComparisonSession.from_dict),
    "feedback": (lambda v: v.to_dict(), FeedbackAnnotation.from_dict),
}


def state_to_dict(state: WorkspaceState) -> dict:
    data = {
        "format_version": FORMAT_VERSION,
        "revision": state.revision,
        "meta": state.meta.to_dict(),
        "counters": dict(sorted(state.counters.items())),
    }
    for name in COLLECTIONS:
        dump, _ = _SERIALIZERS[name]
        table = getattr(state, name)
        data[name] = {key: dump(value) for key, value in sorted(table.items())}
    return data


def state_from_dict(data: dict) -> WorkspaceState:
    kwargs = {
        "revision": data["revision"],
        "meta": MetaLayer.from_dict(data["meta"]),
        "counters": dict(data["counters"]),
    }
    for name in COLLECTIONS:
        _, load = _SERIALIZERS[name]
        kwargs[name] = {key: load(value) for key, value in data[name].items()}
    return WorkspaceState(**kwargs)


def state_delta(old: WorkspaceState, new: WorkspaceState) -> dict:
    """Collection-level diff; applying it to old's snapshot yields new's."""
    delta: dict = {"kind": "delta", "from_revision": old.revision,
                   "to_revision": new.revision}
    for name in COLLECTIONS:
        dump, _ = _SERIALIZERS[name]
        old_table, new_table = getattr(old, name), getattr(new, name)
        upsert = {k: dump(v) for k, v in sorted(new_table.items())
                  if k not in old_table or old_table[k] != v}
        remove = sorted(k for k in old_table if k not in new_table)
        if upsert or remove:
            delta[name] = {"upsert": upsert, "remove": remove}
    if old.meta != new.meta:
        delta["meta"] = new.meta.to_dict()
    if old.counters != new.counters:
        delta["counters"] = dict(sorted(new.counters.items()))
    return delta


def apply_delta(snapshot: dict, delta: dict) -> dict:
    """Apply a state_delta to a snapshot dict (as from state_to_dict)."""
    out = {
        "format_version": snapshot["format_version"],
        "revision": delta["to_revision"],
        "meta": delta.get("meta", snapshot["meta"]),
        "counters": delta.get("counters", snapshot["counters"]),
    }
    for name in COLLECTIONS:
        table = dict(snapshot[name])
        change = delta.get(name)
        if change:
            for key in change["remove"]:
                table.pop(key, None)
            table.update(change["upsert"])
        out[name] = {k: table[k] for k in sorted(table)}
    return out


@dataclass(frozen=True)
class Event:
    kind: str
    data: dict
    revision: int


@dataclass(frozen=True)
class TunnelView:
    """Read-only view of another layer, opened at the cursor."""

    layer_id: str
    name: str
    blocks: tuple


@dataclass(frozen=True)
class PeekPreview:
    layer_id: str
    text: str
    task_id: str = "peek-continuation"


def _next_id(counters: dict, prefix: str) -> tuple:
    n = counters.get(prefix, 0) + 1
    updated = dict(counters)
    updated[prefix] = n
    return updated, f"{prefix}{n}"


def _adjacent(left: Placement, right: Placement, cfg: AdjacencyConfig) -> bool:
    """True when left's right edge touches right's left edge."""
    gap = abs(right.x - (left.x + left.width))
    if gap > cfg.epsilon:
        return False
    overlap = min(left.y + left.height, right.y + right.height) - max(left.y, right.y)
    return overlap >= cfg.min_overlap_ratio * min(left.height, right.height)


class Workspace:
    """Single-writer workspace: one mutation queue, immutable snapshots.

    Structural operations mutate synchronously; generation-backed
    operations (fold summaries, combine transitions, comparisons, the
    friend tasks in :mod:`layerspace.friends`) submit work to the
    generation service and apply the results through the same queue when
    they arrive.
    """

    def __init__(self, state: Optional[WorkspaceState] = None,
                 registry: Optional[TaskRegistry] = None,
                 backend: Union[BackendDescriptor, str, None] = None,
                 telemetry=None,
                 adjacency: AdjacencyConfig = AdjacencyConfig(),
                 max_workers: int = 8):
        if isinstance(backend, str) or backend is None:
            backend = BackendDescriptor(backend_id=backend or "mock")
        self.descriptor = backend
        self.registry = registry or TaskRegistry.load()
        self.generator = GenerationService(make_backend(backend), max_workers=max_workers)
        self.telemetry = telemetry
        self.adjacency = adjacency
        self._state = state or WorkspaceState()
        self._lock = threading.Lock()          # the mutation queue
        self._delivery_lock = threading.Lock()  # keeps event delivery ordered
        self._side_lock = threading.Lock()     # transient view state (previews, context)
        self._event_queue: deque = deque()
        self._history: deque = deque(maxlen=256)
        self._history.append(self._state)
        self._listeners: dict = {}
        self._layer_listeners: dict = {}
        self._applied_requests: set = set()
        self._pending_context: dict = {}
        self._previews: dict = {}
        self._placeholder_requests: dict = {}
        self._futures: set = set()
        self._sub_counter = 0

    # ------------------------------------------------------------------
    # snapshotting, events, the mutation queue
    # ------------------------------------------------------------------

    @property
    def state(self) -> WorkspaceState:
        with self._lock:
            return self._state

    @property
    def revision(self) -> int:
        with self._lock:
            return self._state.revision

    def mutate(self, label: str, fn: Callable) -> tuple:
        """Apply ``fn(state) -> (state, result, raw_events)`` atomically.

        Raw events are (kind, data) pairs; they get the new revision
        stamped and are delivered in mutation order, after a leading
        revision event, with the queue released (so listeners may read
        snapshots or deltas).
        """
        with self._lock:
            new_state, result, raw_events = fn(self._state)
            new_state = replace(new_state, revision=self._state.revision + 1)
            self._state = new_state
            self._history.append(new_state)
            self._event_queue.append(Event(
                "revision", {"label": label, "revision": new_state.revision},
                new_state.revision))
            self._event_queue.extend(Event(kind, data, new_state.revision)
                                     for kind, data in raw_events)
        self._drain_events()
        return new_state, result

    def _drain_events(self) -> None:
        # FIFO queue + delivery lock: events reach listeners in mutation
        # order no matter which thread drains them.
        with self._delivery_lock:
            while True:
                with self._lock:
                    if not self._event_queue:
                        return
                    event = self._event_queue.popleft()
                    listeners = list(self._listeners.values())
                for cb in listeners:
                    cb(event)

    def emit_event(self, kind: str, data: dict) -> None:
        """Fire a non-mutating event (previews, warnings, job outcomes)."""
        with self._lock:
            self._event_queue.append(Event(kind, data, self._state.revision))
        self._drain_events()

    def subscribe_events(self, callback: Callable) -> str:
        with self._lock:
            self._sub_counter += 1
            sub_id = f"S{self._sub_counter}"
            self._listeners[sub_id] = callback
        return sub_id

    def unsubscribe_events(self, sub_id: str) -> None:
        with self._lock:
            self._listeners.pop(sub_id, None)

    def subscribe(self, layer_id: str, callback: Callable) -> str:
        """Subscribe a listener to generation results landing on a layer."""
        state = self.state
        if layer_id not in state.layers:
            raise UnknownLayerError(f"no layer {layer_id!r}")
        with self._lock:
            self._sub_counter += 1
            sub_id = f"S{self._sub_counter}"
            self._layer_listeners[sub_id] = (layer_id, callback)
        return sub_id

    def listeners_of(self, layer_id: str) -> tuple:
        with self._lock:
            return tuple(sid for sid, (lid, _) in self._layer_listeners.items()
                         if lid == layer_id)

    def _notify_layer(self, layer_id: str, result: GenerationResult) -> None:
        with self._lock:
            callbacks = [cb for (lid, cb) in self._layer_listeners.values()
                         if lid == layer_id]
        for cb in callbacks:
            cb(result)

    def delta_since(self, since_revision: int) -> Optional[dict]:
        """Delta from a past revision, or None when out of history."""
        with self._lock:
            current = self._state
            old = next((s for s in self._history
                        if s.revision == since_revision), None)
        if old is None:
            return None
        return state_delta(old, current)

    def snapshot_dict(self) -> dict:
        return state_to_dict(self.state)

    def track(self, future) -> None:
        self._futures.add(future)
        future.add_done_callback(lambda f: self._futures.discard(f))

    def wait_idle(self, timeout: float = 30.0) -> None:
        deadline = time.time() + timeout
        while self._futures:
            for f in list(self._futures):
                remaining = max(0.01, deadline - time.time())
                try:
                    f.result(timeout=remaining)
                except Exception:
                    pass
        self.generator.drain(timeout=max(0.1, deadline - time.time()))

    def close(self) -> None:
        self.generator.shutdown()
        if self.telemetry is not None:
            self.telemetry.close()

    # ------------------------------------------------------------------
    # telemetry helpers
    # ------------------------------------------------------------------

    def _log(self, event_kind: str, feature: str, payload: Optional[dict] = None) -> None:
        if self.telemetry is not None:
            self.telemetry.log(event_kind, feature, payload or {})

    # ------------------------------------------------------------------
    # meta layer
    # ------------------------------------------------------------------

    def set_meta(self, purpose: Optional[str] = None, audience: Optional[str] = None,
                 intent: Optional[str] = None,
                 domain_requirements: Optional[str] = None) -> MetaLayer:
        def fn(state):
            meta = state.meta
            meta = replace(
                meta,
                purpose=meta.purpose if purpose is None else purpose,
                audience=meta.audience if audience is None else audience,
                intent=meta.intent if intent is None else intent,
                domain_requirements=(meta.domain_requirements
                                     if domain_requirements is None else domain_requirements),
            )
            return replace(state, meta=meta), meta, [("meta", {})]

        _, meta = self.mutate("set-meta", fn)
        self._log("feature-invocation", "set-meta")
        return meta

    def attach_reference(self, title: str, text: str) -> str:
        """Attach an external reference; re-attaching creates a new doc id."""
        if len(text.encode("utf-8")) > model.REFERENCE_SIZE_CAP:
            raise ReferenceTooLargeError(
                f"reference exceeds {model.REFERENCE_SIZE_CAP} bytes")

        def fn(state):
            counters, doc_id = _next_id(state.counters, "X")
            ref = model.ExternalReference(doc_id=doc_id, title=title, text=text)
            meta = replace(state.meta, references=state.meta.references + (ref,))
            return (replace(state, meta=meta, counters=counters), doc_id,
                    [("meta", {"reference": doc_id})])

        _, doc_id = self.mutate("attach-reference", fn)
        self._log("feature-invocation", "attach-reference", {"doc_id": doc_id})
        return doc_id

    # ------------------------------------------------------------------
    # layer creation and editing
    # ------------------------------------------------------------------

    def _auto_placement(self, counters: dict) -> tuple:
        counters, _ = _next_id(counters, "slot")
        slot = counters["slot"] - 1
        counters, _ = _next_id(counters, "z")
        return counters, Placement(
            x=40.0 + (slot % 6) * 320.0,
            y=40.0 + (slot // 6) * 260.0,
            width=280.0, height=220.0, z=counters["z"])

    def _place_beside(self, counters: dict, origin: Optional[Placement],
                      index: int = 0) -> tuple:
        if origin is None:
            return self._auto_placement(counters)
        counters, _ = _next_id(counters, "z")
        return counters, Placement(
            x=origin.x + origin.width + 24.0 + index * 24.0,
            y=origin.y + index * 24.0,
            width=origin.width, height=origin.height, z=counters["z"])

    def new_writing_layer(self, name: str,
                          initial_blocks: Optional[Sequence[Block]] = None,
                          parent_link=None,
                          beside: Optional[str] = None,
                          log_feature: str = "create-layer") -> WritingLayer:
        name = name.strip()
        if not name:
            raise EmptyNameError("layer name must be non-empty")

        def fn(state):
            counters = state.counters
            if initial_blocks is None:
                counters, block_id = _next_id(counters, "B")
                blocks = (empty_paragraph(block_id),)
            else:
                blocks = tuple(initial_blocks)
            counters, layer_id = _next_id(counters, "L")
            layer = WritingLayer(layer_id=layer_id, name=name, blocks=blocks,
                                 parent_link=parent_link)
            origin = state.placements.get(beside) if beside else None
            counters, placement = self._place_beside(counters, origin)
            layers = dict(state.layers)
            layers[layer_id] = layer
            placements = dict(state.placements)
            placements[layer_id] = placement
            return (replace(state, layers=layers, placements=placements,
                            counters=counters),
                    layer, [("layer-created", {"layer_id": layer_id, "name": name})])

        _, layer = self.mutate("new-writing-layer", fn)
        self._log("feature-invocation", log_feature, {"layer_id": layer.layer_id,
                                                      "name": layer.name})
        return layer

    def new_scratchpad_layer(self, name: str) -> ScratchpadLayer:
        name = name.strip()
        if not name:
            raise EmptyNameError("layer name must be non-empty")

        def fn(state):
            counters, layer_id = _next_id(state.counters, "L")
            layer = ScratchpadLayer(layer_id=layer_id, name=name)
            counters, placement = self._auto_placement(counters)
            layers = dict(state.layers)
            layers[layer_id] = layer
            placements = dict(state.placements)
            placements[layer_id] = placement
            return (replace(state, layers=layers, placements=placements,
                            counters=counters),
                    layer, [("layer-created", {"layer_id": layer_id, "name": name})])

        _, layer = self.mutate("new-scratchpad-layer", fn)
        self._log("feature-invocation", "create-layer",
                  {"layer_id": layer.layer_id, "name": layer.name, "scratchpad": True})
        return layer

    def _require_writing(self, state: WorkspaceState, layer_id: str) -> WritingLayer:
        if layer_id in state.documents:
            raise NotEditableError(f"document layer {layer_id} is not editable",
                                   layer_id=layer_id)
        layer = state.layer(layer_id)
        if not isinstance(layer, WritingLayer):
            raise NotEditableError(f"layer {layer_id} is not a writing layer",
                                   layer_id=layer_id)
        return layer

    def _block_has_open_placeholder(self, state: WorkspaceState,
                                    layer_id: str, block_id: str) -> bool:
        return any(ph.layer_id == layer_id and ph.block_id == block_id
                   for ph in state.placeholders.values())

    def _revalidate_links(self, layers: dict, parent_id: str) -> dict:
        """Re-check child anchor links after the parent changed."""
        parent = layers.get(parent_id)
        updated = dict(layers)
        for lid, layer in layers.items():
            link = getattr(layer, "parent_link", None)
            if link is None or link.parent_layer_id != parent_id:
                continue
            orphaned = True
            if parent is not None:
                try:
                    text = parent.block(link.block_id).text
                    orphaned = text[link.start:link.end] != link.anchored_text
                except LayerspaceError:
                    orphaned = True
            if orphaned != link.orphaned:
                updated[lid] = replace(layer, parent_link=replace(link, orphaned=orphaned))
        return updated

    def apply_edit(self, layer_id: str, action: str, block_id: str,
                   start: int, end: int = 0, text: str = "") -> WritingLayer:
        """Insert, delete, or replace text; new spans carry human origin."""
        if action not in ("insert", "delete", "replace"):
            raise BadRangeError(f"unknown edit action {action!r}")

        def fn(state):
            layer = self._require_writing(state, layer_id)
            if self._block_has_open_placeholder(state, layer_id, block_id):
                raise PlaceholderPendingError(
                    f"block {block_id} hosts an unresolved placeholder")
            block = layer.block(block_id)
            words_before = len(block.text.split())
            if action == "insert":
                new_block = model.block_insert(block, start, text)
            elif action == "delete":
                new_block = model.block_delete(block, start, end)
            else:
                new_block = model.block_replace(block, start, end, text)
            layer = layer.with_block(new_block)
            if layer.fold_summary is not None:
                layer = replace(layer, summary_stale=True)
            layers = dict(state.layers)
            layers[layer_id] = layer
            layers = self._revalidate_links(layers, layer_id)
            words_added = max(0, len(new_block.text.split()) - words_before)
            return (replace(state, layers=layers), (layer, words_added),
                    [("edit", {"layer_id": layer_id, "block_id": block_id})])

        _, (layer, words_added) = self.mutate("apply-edit", fn)
        self._log("edit", "apply-edit",
                  {"layer_id": layer_id, "block_id": block_id,
                   "origin": "human", "words_added": words_added})
        return layer

    def split_block(self, layer_id: str, block_id: str, offset: int) -> WritingLayer:
        """Split a paragraph into two blocks at a character offset."""
        def fn(state):
            layer = self._require_writing(state, layer_id)
            if self._block_has_open_placeholder(state, layer_id, block_id):
                raise PlaceholderPendingError(
                    f"block {block_id} hosts an unresolved placeholder")
            block = layer.block(block_id)
            idx = layer.block_index(block_id)
            left, right = model._split_spans(block.spans, offset)
            counters, new_id = _next_id(state.counters, "B")
            first = replace(block, spans=model._merge_spans(left))
            second = Block(block_id=new_id, kind="paragraph",
                           spans=model._merge_spans(right))
            blocks = layer.blocks[:idx] + (first, second) + layer.blocks[idx + 1:]
            layers = dict(state.layers)
            layers[layer_id] = replace(layer, blocks=blocks)
            return (replace(state, layers=layers, counters=counters),
                    layers[layer_id], [("edit", {"layer_id": layer_id})])

        _, layer = self.mutate("split-block", fn)
        self._log("edit", "split-block", {"layer_id": layer_id, "origin": "human",
                                          "words_added": 0})
        return layer

    def append_block(self, layer_id: str, text: str,
                     kind: str = "paragraph", level: int = 0) -> WritingLayer:
        def fn(state):
            layer = self._require_writing(state, layer_id)
            counters, block_id = _next_id(state.counters, "B")
            block = Block(block_id=block_id, kind=kind, level=level,
                          spans=(human_span(text),))
            layers = dict(state.layers)
            layers[layer_id] = replace(layer, blocks=layer.blocks + (block,))
            return (replace(state, layers=layers, counters=counters),
                    layers[layer_id], [("edit", {"layer_id": layer_id})])

        _, layer = self.mutate("append-block", fn)
        self._log("edit", "append-block",
                  {"layer_id": layer_id, "origin": "human",
                   "words_added": len(text.split())})
        return layer

    # ------------------------------------------------------------------
    # placeholders
    # ------------------------------------------------------------------

    def open_placeholder(self, layer_id: str, block_id: str, offset: int,
                         task_id: str, friend_id: Optional[str] = None,
                         created_block: bool = False) -> Placeholder:
        def fn(state):
            layer = self._require_writing(state, layer_id)
            block = layer.block(block_id)
            if not (0 <= offset <= len(block.text)):
                raise BadAnchorError(f"offset {offset} out of bounds")
            if self._block_has_open_placeholder(state, layer_id, block_id):
                raise PlaceholderPendingError(
                    f"block {block_id} already hosts an unresolved placeholder")
            counters, ph_id = _next_id(state.counters, "P")
            ph = Placeholder(
                placeholder_id=ph_id, layer_id=layer_id, block_id=block_id,
                span_offset=offset, task_id=task_id, friend_id=friend_id,
                created_block=created_block, saved_spans=block.spans)
            placeholders = dict(state.placeholders)
            placeholders[ph_id] = ph
            return (replace(state, placeholders=placeholders, counters=counters),
                    ph, [("placeholder", {"placeholder_id": ph_id, "state": "pending"})])

        _, ph = self.mutate("open-placeholder", fn)
        return ph

    def resolve_placeholder(self, placeholder_id: str, action: str) -> Layer:
        """Accept or reject filled AI content; reject restores the snapshot."""
        if action not in ("accept", "reject"):
            raise WrongStateError(f"unknown action {action!r}")

        def fn(state):
            ph = state.placeholders.get(placeholder_id)
            if ph is None:
                raise UnknownIdError(f"no placeholder {placeholder_id!r}")
            if ph.state != "filled":
                raise WrongStateError(
                    f"placeholder {placeholder_id} is {ph.state}, not filled")
            layer = state.layer(ph.layer_id)
            if action == "accept":
                block = layer.block(ph.block_id)
                block = model.block_set_accepted(
                    block, ph.span_offset, ph.span_offset + len(ph.filled_text), True)
                layer = layer.with_block(block)
            else:
                if ph.created_block:
                    blocks = tuple(b for b in layer.blocks if b.block_id != ph.block_id)
                    layer = replace(layer, blocks=blocks)
                else:
                    block = layer.block(ph.block_id)
                    layer = layer.with_block(replace(block, spans=ph.saved_spans))
            layers = dict(state.layers)
            layers[ph.layer_id] = layer
            placeholders = dict(state.placeholders)
            placeholders.pop(placeholder_id)
            return (replace(state, layers=layers, placeholders=placeholders),
                    layer,
                    [("placeholder", {"placeholder_id": placeholder_id,
                                      "state": "accepted" if action == "accept" else "rejected"})])

        _, layer = self.mutate("resolve-placeholder", fn)
        self._log("feature-invocation", f"placeholder-{action}",
                  {"placeholder_id": placeholder_id})
        return layer

    def cancel_placeholder(self, placeholder_id: str) -> None:
        """Reject a pending/streaming placeholder, cancelling its generation."""
        with self._side_lock:
            request_id = self._placeholder_requests.pop(placeholder_id, None)
        if request_id is not None:
            self.generator.cancel(request_id)

        def fn(state):
            ph = state.placeholders.get(placeholder_id)
            if ph is None:
                raise UnknownIdError(f"no placeholder {placeholder_id!r}")
            if ph.state == "filled":
                raise WrongStateError("filled placeholders are resolved, not cancelled")
            layer = state.layer(ph.layer_id)
            if ph.created_block:
                layer = replace(layer, blocks=tuple(
                    b for b in layer.blocks if b.block_id != ph.block_id))
            layers = dict(state.layers)
            layers[ph.layer_id] = layer
            placeholders = dict(state.placeholders)
            placeholders.pop(placeholder_id)
            return (replace(state, layers=layers, placeholders=placeholders), ph,
                    [("placeholder", {"placeholder_id": placeholder_id,
                                      "state": "rejected"})])

        _, ph = self.mutate("cancel-placeholder", fn)

    # ------------------------------------------------------------------
    # generation plumbing (chunks and results enter the mutation queue)
    # ------------------------------------------------------------------

    def compose_for_layer(self, task_id: str, layer_id: Optional[str],
                          user_params: str = "",
                          anchor_block: Optional[str] = None,
                          anchor_offset: Optional[int] = None,
                          n_override: Optional[int] = None,
                          extra_content: str = "") -> ComposedPrompt:
        """Compose a prompt over the current snapshot, consuming any
        cross-layer context registered for the layer by tunneling."""
        task = self.registry.lookup(task_id)
        state = self.state
        layer = state.layer(layer_id) if layer_id else None
        with self._side_lock:
            cross = tuple(self._pending_context.pop(layer_id, ())) if layer_id else ()
        return compose(task, state.meta, layer, user_params=user_params,
                       anchor_block=anchor_block, anchor_offset=anchor_offset,
                       cross_context=cross, n_override=n_override,
                       extra_content=extra_content)

    def pending_context(self, layer_id: str) -> tuple:
        with self._side_lock:
            return tuple(self._pending_context.get(layer_id, ()))

    def new_request(self, task_id: str, prompt: ComposedPrompt,
                    origin_layer_id: str,
                    n_override: Optional[int] = None) -> GenerationRequest:
        task = self.registry.lookup(task_id)
        schema = task.schema
        if n_override is not None and schema.kind == "n-new-layers":
            schema = replace(schema, n=n_override)
        return GenerationRequest(
            request_id=self.generator.new_request_id(),
            prompt=prompt, schema=schema,
            origin_layer_id=origin_layer_id, task_id=task_id)

    def generate_sync(self, request: GenerationRequest) -> GenerationResult:
        """Run one generation to completion (fold summaries, compile jobs)."""
        future = self.generator.submit(request)
        self.track(future)
        return future.result()

    def submit_placeholder_fill(self, request: GenerationRequest,
                                placeholder_id: str,
                                attribution: SpanAttribution):
        """Stream a generation into a placeholder; final result fills it.

        The returned future resolves only after the result has been
        applied through the mutation queue, so a waiter always observes
        the filled (or rejected) placeholder.
        """
        outer: "Future[GenerationResult]" = Future()

        def on_chunk(chunk: str) -> None:
            def fn(state):
                ph = state.placeholders.get(placeholder_id)
                if ph is None or ph.state not in ("pending", "streaming"):
                    return state, None, []
                if ph.state == "pending":
                    ph = ph.advance("streaming")
                ph = replace(ph, partial_text=ph.partial_text + chunk)
                placeholders = dict(state.placeholders)
                placeholders[placeholder_id] = ph
                return (replace(state, placeholders=placeholders), None,
                        [("chunk", {"request_id": request.request_id,
                                    "placeholder_id": placeholder_id,
                                    "text": chunk})])

            self.mutate("stream-chunk", fn)

        def on_final(result: GenerationResult) -> None:
            with self._side_lock:
                self._placeholder_requests.pop(placeholder_id, None)
            try:
                self.apply_once(result.request_id, "placeholder-final",
                                lambda state: self._apply_placeholder_result(
                                    state, placeholder_id, attribution, result))
                self._notify_layer(request.origin_layer_id, result)
                outer.set_result(result)
            except Exception as exc:
                outer.set_exception(exc)

        with self._side_lock:
            self._placeholder_requests[placeholder_id] = request.request_id
        self.generator.submit(request, on_chunk=on_chunk, on_final=on_final)
        self.track(outer)
        return outer

    def _apply_placeholder_result(self, state: WorkspaceState, placeholder_id: str,
                                  attribution: SpanAttribution,
                                  result: GenerationResult):
        ph = state.placeholders.get(placeholder_id)
        if ph is None or ph.layer_id not in state.layers:
            return state, None, [("archived", {"request_id": result.request_id})]
        if not result.ok:
            # Failure path: placeholder rejected with a note; content untouched.
            layer = state.layer(ph.layer_id)
            if ph.created_block:
                layer = replace(layer, blocks=tuple(
                    b for b in layer.blocks if b.block_id != ph.block_id))
            layers = dict(state.layers)
            layers[ph.layer_id] = layer
            placeholders = dict(state.placeholders)
            placeholders.pop(placeholder_id)
            return (replace(state, layers=layers, placeholders=placeholders), None,
                    [("placeholder", {"placeholder_id": placeholder_id,
                                      "state": "rejected",
                                      "note": f"{result.status}: {result.error}"})])
        text = result.parts[0].text if isinstance(result.parts[0], TextPart) else result.raw_text
        layer = state.layer(ph.layer_id)
        block = layer.block(ph.block_id)
        block = model.block_insert(block, ph.span_offset, text,
                                   replace(attribution, accepted=False))
        layer = layer.with_block(block)
        if ph.state == "pending":
            ph = ph.advance("streaming")
        ph = ph.advance("filled", filled_text=text, partial_text="")
        layers = dict(state.layers)
        layers[ph.layer_id] = layer
        placeholders = dict(state.placeholders)
        placeholders[placeholder_id] = ph
        return (replace(state, layers=layers, placeholders=placeholders), None,
                [("placeholder", {"placeholder_id": placeholder_id, "state": "filled"})])

    def apply_once(self, request_id: str, label: str, fn: Callable):
        """Apply a generation result at most once per request id.

        Returns the mutation's result, or None when this request was
        already applied (idempotent publish).
        """
        with self._side_lock:
            if request_id in self._applied_requests:
                return None
            self._applied_requests.add(request_id)
        _, result = self.mutate(label, fn)
        return result

    # ------------------------------------------------------------------
    # spatial placement and adjacency
    # ------------------------------------------------------------------

    def _adjacent_pairs(self, state: WorkspaceState) -> set:
        pairs = set()
        ids = [lid for lid in state.layers if lid in state.placements
               and lid not in state.grouped_layer_ids()]
        for a in ids:
            for b in ids:
                if a != b and _adjacent(state.placements[a], state.placements[b],
                                        self.adjacency):
                    pairs.add((a, b))
        return pairs

    def _drop_dead_sessions(self, state: WorkspaceState, events: list) -> WorkspaceState:
        pairs = self._adjacent_pairs(state)
        comparisons = dict(state.comparisons)
        for sid, session in list(comparisons.items()):
            alive = ((session.left, session.right) in pairs
                     and session.left in state.layers
                     and session.right in state.layers)
            if not alive:
                comparisons.pop(sid)
                events.append(("comparison-destroyed", {"session_id": sid}))
        return replace(state, comparisons=comparisons)

    def move_layer(self, layer_id: str, x: float, y: float,
                   width: Optional[float] = None,
                   height: Optional[float] = None):
        """Place a layer (or document/group); emits adjacency events."""

        def fn(state):
            if layer_id in state.grouped_layer_ids():
                raise MemberOfStackError(
                    f"{layer_id} is inside a stack; move the stack instead")
            if layer_id not in state.placements:
                raise UnknownLayerError(f"no placeable item {layer_id!r}")
            before = self._adjacent_pairs(state)
            current = state.placements[layer_id]
            counters, _ = _next_id(state.counters, "z")
            placement = Placement(
                x=x, y=y,
                width=width if width is not None else current.width,
                height=height if height is not None else current.height,
                z=counters["z"])
            placements = dict(state.placements)
            placements[layer_id] = placement
            state = replace(state, placements=placements, counters=counters)
            events: list = []
            after = self._adjacent_pairs(state)
            for pair in sorted(after - before):
                if layer_id in pair:
                    events.append(("adjacency", {"left": pair[0], "right": pair[1]}))
            state = self._drop_dead_sessions(state, events)
            return state, placement, events

        _, placement = self.mutate("move-layer", fn)
        self._log("feature-invocation", "move-layer", {"layer_id": layer_id})
        return placement

    def adjacency_holds(self, left: str, right: str) -> bool:
        state = self.state
        return (left, right) in self._adjacent_pairs(state)

    # ------------------------------------------------------------------
    # grouping: stack, reorder, fan
    # ------------------------------------------------------------------

    def stack(self, members: Sequence[str]) -> Group:
        """Stack layers/groups in the given order; order is compile order."""

        def fn(state):
            if len(members) < 2:
                raise DuplicateMemberError("a stack needs at least two members")
            if len(set(members)) != len(members):
                raise DuplicateMemberError("duplicate member in stack")
            grouped = set(state.grouped_layer_ids())
            resolved: list = []
            member_layer_ids: list = []
            for mid in members:
                if mid in state.groups:
                    resolved.append(state.groups[mid])
                    member_layer_ids.extend(flatten_group(state.groups[mid]))
                elif mid in state.layers:
                    if mid in grouped:
                        raise AlreadyGroupedError(f"{mid} is already grouped")
                    resolved.append(mid)
                    member_layer_ids.append(mid)
                else:
                    raise UnknownLayerError(f"no layer or group {mid!r}")
            if len(set(member_layer_ids)) != len(member_layer_ids):
                raise DuplicateMemberError("a layer may appear only once")

            counters, group_id = _next_id(state.counters, "G")
            group = Group(group_id=group_id, members=tuple(resolved), kind="stack")
            groups = dict(state.groups)
            for mid in members:
                groups.pop(mid, None)  # nested groups leave the top level
            groups[group_id] = group

            # Member placements collapse to the stack anchor.
            placements = dict(state.placements)
            anchor = None
            max_z = 0
            for lid in member_layer_ids:
                p = placements.pop(lid, None)
                if p is not None:
                    anchor = anchor or p
                    max_z = max(max_z, p.z)
            for mid in members:
                p = placements.pop(mid, None)
                if p is not None:
                    anchor = anchor or p
                    max_z = max(max_z, p.z)
            if anchor is None:
                counters, anchor = self._auto_placement(counters)
                max_z = anchor.z
            placements[group_id] = replace(anchor, z=max_z)

            state = replace(state, groups=groups, placements=placements,
                            counters=counters)
            events: list = [("group-created", {"group_id": group_id})]
            state = self._drop_dead_sessions(state, events)
            return state, group, events

        _, group = self.mutate("stack", fn)
        self._log("feature-invocation", "stack",
                  {"group_id": group.group_id, "members": list(members)})
        return group

    def _find_group(self, state: WorkspaceState, group_id: str):
        def search(group: Group):
            if group.group_id == group_id:
                return group
            for m in group.members:
                if isinstance(m, Group):
                    found = search(m)
                    if found is not None:
                        return found
            return None

        for top in state.groups.values():
            found = search(top)
            if found is not None:
                return found
        return None

    def _rewrite_group(self, group: Group, group_id: str, fn: Callable) -> Group:
        if group.group_id == group_id:
            return fn(group)
        members = tuple(self._rewrite_group(m, group_id, fn) if isinstance(m, Group) else m
                        for m in group.members)
        return replace(group, members=members)

    def reorder_stack(self, group_id: str, permutation: Sequence[int]) -> Group:
        def fn(state):
            group = self._find_group(state, group_id)
            if group is None:
                raise UnknownTargetError(f"no group {group_id!r}")
            if sorted(permutation) != list(range(len(group.members))):
                raise NotAPermutationError(
                    f"{list(permutation)} is not a permutation of "
                    f"0..{len(group.members) - 1}")

            def rewrite(g: Group) -> Group:
                return replace(g, members=tuple(g.members[i] for i in permutation))

            groups = {gid: self._rewrite_group(g, group_id, rewrite)
                      for gid, g in state.groups.items()}
            state = replace(state, groups=groups)
            return state, self._find_group(state, group_id), [
                ("group-reordered", {"group_id": group_id})]

        _, group = self.mutate("reorder-stack", fn)
        self._log("feature-invocation", "reorder-stack", {"group_id": group_id})
        return group

    def _set_fanned(self, group_id: str, fanned: bool) -> Group:
        def fn(state):
            group = self._find_group(state, group_id)
            if group is None:
                raise UnknownTargetError(f"no group {group_id!r}")
            if group.kind != "stack":
                raise NotAStackError(f"group {group_id} is not a stack")

            groups = {gid: self._rewrite_group(g, group_id,
                                               lambda g: replace(g, fanned=fanned))
                      for gid, g in state.groups.items()}
            state = replace(state, groups=groups)
            return state, self._find_group(state, group_id), [
                ("group-fanned", {"group_id": group_id, "fanned": fanned})]

        _, group = self.mutate("fan" if fanned else "unfan", fn)
        self._log("feature-invocation", "fan" if fanned else "unfan",
                  {"group_id": group_id})
        return group

    def fan(self, group_id: str) -> Group:
        """Pure view-state spread of a stack; content and order untouched."""
        return self._set_fanned(group_id, True)

    def unfan(self, group_id: str) -> Group:
        return self._set_fanned(group_id, False)

    # ------------------------------------------------------------------
    # fold / unfold
    # ------------------------------------------------------------------

    def fold(self, layer_id: str) -> Layer:
        """Fold a layer; its summary comes from the summarize task (or cache)."""
        state = self.state
        layer = state.layer(layer_id)
        summary = layer.fold_summary
        if summary is None or layer.summary_stale:
            prompt = self.compose_for_layer("summarize-folded", layer_id)
            request = self.new_request("summarize-folded", prompt, layer_id)
            result = self.generate_sync(request)
            if result.ok:
                summary = result.parts[0].text
            else:
                summary = ""
                self.emit_event("warning", {"about": "fold-summary",
                                            "error": result.error})

        def fn(state):
            layer = state.layer(layer_id)
            folded = replace(layer, folded=True, fold_summary=summary,
                             summary_stale=False)
            layers = dict(state.layers)
            layers[layer_id] = folded
            return (replace(state, layers=layers), folded,
                    [("layer-folded", {"layer_id": layer_id})])

        _, folded = self.mutate("fold", fn)
        self._log("feature-invocation", "fold", {"layer_id": layer_id})
        return folded

    def unfold(self, layer_id: str) -> Layer:
        def fn(state):
            layer = state.layer(layer_id)
            unfolded = replace(layer, folded=False)
            layers = dict(state.layers)
            layers[layer_id] = unfolded
            return (replace(state, layers=layers), unfolded,
                    [("layer-unfolded", {"layer_id": layer_id})])

        _, layer = self.mutate("unfold", fn)
        self._log("feature-invocation", "unfold", {"layer_id": layer_id})
        return layer

    # ------------------------------------------------------------------
    # tear / combine
    # ------------------------------------------------------------------

    def _retire_layer(self, state: WorkspaceState, layer_id: str,
                      events: list) -> WorkspaceState:
        """Move a live layer to the bin and scrub references to it."""
        layer = state.layers[layer_id]
        layers = dict(state.layers)
        layers.pop(layer_id)
        placements = dict(state.placements)
        placement = placements.pop(layer_id, None)
        binned = dict(state.binned)
        binned[layer_id] = BinEntry(layer=layer, placement=placement)

        # Drop the layer from any group; empty groups dissolve.
        def prune(group: Group):
            members = []
            for m in group.members:
                if isinstance(m, Group):
                    pruned = prune(m)
                    if pruned is not None:
                        members.append(pruned)
                elif m != layer_id:
                    members.append(m)
            if not members:
                return None
            return replace(group, members=tuple(members))

        groups = {}
        for gid, g in state.groups.items():
            pruned = prune(g)
            if pruned is not None:
                groups[gid] = pruned
            else:
                placements.pop(gid, None)

        placeholders = {pid: ph for pid, ph in state.placeholders.items()
                        if ph.layer_id != layer_id}
        feedback = {fid: fb for fid, fb in state.feedback.items()
                    if fb.layer_id != layer_id}
        state = replace(state, layers=layers, placements=placements,
                        binned=binned, groups=groups, placeholders=placeholders,
                        feedback=feedback)
        state = replace(state, layers=self._revalidate_links(state.layers, layer_id))
        state = self._drop_dead_sessions(state, events)
        events.append(("layer-retired", {"layer_id": layer_id}))
        with self._side_lock:
            self._previews.pop(layer_id, None)
            self._pending_context.pop(layer_id, None)
        return state

    def tear(self, layer_id: str, cut_points: Sequence[int]) -> tuple:
        """Tear a layer at block boundaries into len(cut_points)+1 parts."""

        def fn(state):
            layer = state.layer(layer_id)
            if not isinstance(layer, WritingLayer):
                raise TypeMismatchError("only writing layers tear")
            if not layer.blocks:
                raise EmptyLayerError(f"layer {layer_id} is empty")
            cuts = list(cut_points)
            if (cuts != sorted(set(cuts))
                    or any(not (0 < c < len(layer.blocks)) for c in cuts)):
                raise BadCutPointError(
                    f"cut points {cuts} invalid for {len(layer.blocks)} blocks")
            bounds = [0] + cuts + [len(layer.blocks)]
            counters = state.counters
            origin = state.placements.get(layer_id)
            parts = []
            placements = dict(state.placements)
            layers = dict(state.layers)
            for k in range(len(bounds) - 1):
                counters, new_id = _next_id(counters, "L")
                part = WritingLayer(
                    layer_id=new_id,
                    name=f"{layer.name} (part {k + 1})",
                    blocks=layer.blocks[bounds[k]:bounds[k + 1]],
                    tags=layer.tags)
                counters, placement = self._place_beside(counters, origin, index=k)
                layers[new_id] = part
                placements[new_id] = placement
                parts.append(part)
            state = replace(state, layers=layers, placements=placements,
                            counters=counters)
            events = [("layer-created", {"layer_id": p.layer_id, "name": p.name})
                      for p in parts]
            state = self._retire_layer(state, layer_id, events)
            return state, tuple(parts), events

        _, parts = self.mutate("tear", fn)
        self._log("feature-invocation", "tear",
                  {"layer_id": layer_id, "parts": [p.layer_id for p in parts]})
        return parts

    def combine(self, top_id: str, bottom_id: str,
                transition_prompt: Optional[str] = None):
        """Merge two layers; optionally generate transition text between them.

        Returns (layer, placeholder_future_or_None). The transition arrives
        as a placeholder carrying transition-origin spans and must be
        accepted or rejected like any other suggestion.
        """
        if top_id == bottom_id:
            raise DuplicateMemberError("cannot combine a layer with itself")

        def fn(state):
            for lid in (top_id, bottom_id):
                if lid in state.documents:
                    raise TypeMismatchError(f"{lid} is a document layer")
            top = state.layer(top_id)
            bottom = state.layer(bottom_id)
            if not (isinstance(top, WritingLayer) and isinstance(bottom, WritingLayer)):
                raise TypeMismatchError("combine requires two writing layers")
            if top.folded or bottom.folded:
                raise FoldedInputError("unfold layers before combining")

            counters, layer_id = _next_id(state.counters, "L")
            transition_block = None
            placeholder = None
            blocks = top.blocks
            if transition_prompt is not None:
                counters, block_id = _next_id(counters, "B")
                transition_block = Block(block_id=block_id, kind="paragraph", spans=())
                blocks = blocks + (transition_block,)
            blocks = blocks + bottom.blocks
            merged = WritingLayer(layer_id=layer_id,
                                  name=f"{top.name} + {bottom.name}",
                                  blocks=blocks,
                                  tags=top.tags | bottom.tags)
            origin = state.placements.get(top_id)
            placements = dict(state.placements)
            layers = dict(state.layers)
            layers[layer_id] = merged
            counters, placement = self._place_beside(counters, origin)
            placements[layer_id] = placement

            placeholders = dict(state.placeholders)
            if transition_block is not None:
                counters, ph_id = _next_id(counters, "P")
                placeholder = Placeholder(
                    placeholder_id=ph_id, layer_id=layer_id,
                    block_id=transition_block.block_id, span_offset=0,
                    task_id="transition", created_block=True, saved_spans=())
                placeholders[ph_id] = placeholder

            state = replace(state, layers=layers, placements=placements,
                            placeholders=placeholders, counters=counters)
            events = [("layer-created", {"layer_id": layer_id, "name": merged.name})]
            state = self._retire_layer(state, top_id, events)
            state = self._retire_layer(state, bottom_id, events)
            return state, (merged, placeholder), events

        _, (merged, placeholder) = self.mutate("combine", fn)
        self._log("feature-invocation", "combine",
                  {"top": top_id, "bottom": bottom_id, "layer_id": merged.layer_id})

        future = None
        if placeholder is not None:
            self._log("user-prompt", "transition", {"prompt": transition_prompt})
            prompt = self.compose_for_layer(
                "transition", merged.layer_id, user_params=transition_prompt or "",
                anchor_block=placeholder.block_id, anchor_offset=0)
            request = self.new_request("transition", prompt, merged.layer_id)
            future = self.submit_placeholder_fill(
                request, placeholder.placeholder_id,
                SpanAttribution(origin=model.TRANSITION))
        return merged, future

    # ------------------------------------------------------------------
    # sub-layers and tunneling
    # ------------------------------------------------------------------

    def create_sublayer(self, parent_id: str, block_id: str, start: int,
                        end: int, name: str) -> WritingLayer:
        """Seed a linked sub-layer from an anchored span of the parent."""
        name = name.strip()
        if not name:
            raise EmptyNameError("layer name must be non-empty")

        def fn(state):
            parent = self._require_writing(state, parent_id)
            block = parent.block(block_id)
            if not (0 <= start < end <= len(block.text)):
                raise BadAnchorError(
                    f"anchor {start}..{end} out of bounds (single-block anchors only)")
            left, rest = model._split_spans(block.spans, start)
            mid, _ = model._split_spans(rest, end - start)
            counters, new_block_id = _next_id(state.counters, "B")
            seeded = Block(block_id=new_block_id, kind="paragraph",
                           spans=model._merge_spans(mid))
            counters, layer_id = _next_id(counters, "L")
            link = model.ParentLink(
                parent_layer_id=parent_id, block_id=block_id,
                start=start, end=end, anchored_text=block.text[start:end])
            sub = WritingLayer(layer_id=layer_id, name=name, blocks=(seeded,),
                               parent_link=link)
            origin = state.placements.get(parent_id)
            counters, placement = self._place_beside(counters, origin)
            layers = dict(state.layers)
            layers[layer_id] = sub
            placements = dict(state.placements)
            placements[layer_id] = placement
            return (replace(state, layers=layers, placements=placements,
                            counters=counters),
                    sub, [("layer-created", {"layer_id": layer_id, "name": name,
                                             "parent": parent_id})])

        _, sub = self.mutate("create-sublayer", fn)
        self._log("feature-invocation", "create-sublayer",
                  {"parent": parent_id, "layer_id": sub.layer_id})
        return sub

    def tunnel(self, current_id: str, target_id: str) -> TunnelView:
        """Split-open a read-only view of another layer at the cursor."""
        if current_id == target_id:
            raise SelfTunnelError("cannot tunnel into the current layer")
        state = self.state
        if target_id in state.documents:
            raise TypeMismatchError("cannot tunnel into a document layer")
        if target_id not in state.layers:
            raise UnknownTargetError(f"no layer {target_id!r}")
        state.layer(current_id)  # current must exist too
        target = state.layers[target_id]
        blocks = target.blocks if isinstance(target, WritingLayer) else ()
        self._log("feature-invocation", "tunnel",
                  {"from": current_id, "to": target_id})
        return TunnelView(layer_id=target_id, name=target.name, blocks=blocks)

    def import_selection(self, current_id: str, cursor_block: str,
                         target_id: str, target_block: str,
                         start: int, end: int) -> WritingLayer:
        """Quote tunneled text at the cursor and capture it as prompt context."""
        view = self.tunnel(current_id, target_id)

        def fn(state):
            layer = self._require_writing(state, current_id)
            idx = layer.block_index(cursor_block)
            target = state.layer(target_id)
            block = target.block(target_block)
            if not (0 <= start < end <= len(block.text)):
                raise BadAnchorError(f"selection {start}..{end} out of bounds")
            quoted = block.text[start:end]
            counters, new_block_id = _next_id(state.counters, "B")
            note = f"{quoted} [from: {target.name}]"
            quote_block = Block(block_id=new_block_id, kind="paragraph",
                                spans=(human_span(note),))
            blocks = layer.blocks[:idx + 1] + (quote_block,) + layer.blocks[idx + 1:]
            layers = dict(state.layers)
            layers[current_id] = replace(layer, blocks=blocks)
            return (replace(state, layers=layers, counters=counters),
                    (layers[current_id], quoted, target.name),
                    [("edit", {"layer_id": current_id})])

        _, (layer, quoted, target_name) = self.mutate("import-selection", fn)
        with self._side_lock:
            self._pending_context.setdefault(current_id, []).append(
                CrossContext(source_layer_id=target_id,
                             source_layer_name=target_name,
                             block_id=target_block, text=quoted))
        self._log("feature-invocation", "import-selection",
                  {"layer_id": current_id, "source": target_id})
        return layer

    # ------------------------------------------------------------------
    # comparison sessions
    # ------------------------------------------------------------------

    def compare(self, left_id: str, right_id: str, instruction: str):
        """Open a comparison between two adjacent layers.

        Returns (session, future); annotations attach when the compare
        task responds, and live only while adjacency holds.
        """

        def fn(state):
            for lid in (left_id, right_id):
                state.layer(lid)
            if (left_id, right_id) not in self._adjacent_pairs(state):
                raise NotAdjacentError(
                    f"{left_id} and {right_id} are not edge-adjacent")
            counters, session_id = _next_id(state.counters, "C")
            session = ComparisonSession(session_id=session_id, left=left_id,
                                        right=right_id, instruction=instruction)
            comparisons = dict(state.comparisons)
            comparisons[session_id] = session
            return (replace(state, comparisons=comparisons, counters=counters),
                    session, [("comparison-created", {"session_id": session_id})])

        _, session = self.mutate("compare", fn)
        self._log("feature-invocation", "compare",
                  {"left": left_id, "right": right_id})
        self._log("user-prompt", "compare", {"prompt": instruction})

        state = self.state
        extra = (f"left layer {left_id}:\n"
                 f"{render_layer_content(state.layers[left_id])}\n"
                 f"right layer {right_id}:\n"
                 f"{render_layer_content(state.layers[right_id])}")
        prompt = self.compose_for_layer("compare", None, user_params=instruction,
                                        extra_content=extra)
        request = self.new_request("compare", prompt, left_id)

        outer: "Future[GenerationResult]" = Future()

        def on_final(result: GenerationResult) -> None:
            try:
                self.apply_once(result.request_id, "compare-final",
                                lambda s: self._apply_compare_result(
                                    s, session.session_id, result))
                self._notify_layer(left_id, result)
                outer.set_result(result)
            except Exception as exc:
                outer.set_exception(exc)

        self.generator.submit(request, on_final=on_final)
        self.track(outer)
        return session, outer

    def _apply_compare_result(self, state: WorkspaceState, session_id: str,
                              result: GenerationResult):
        session = state.comparisons.get(session_id)
        if session is None or not result.ok:
            return state, None, [("archived", {"request_id": result.request_id})]
        counters = state.counters
        annotations: list = []
        events: list = []
        for note in result.parts:
            target_layer = note.layer_id or session.left
            if target_layer not in (session.left, session.right):
                events.append(("warning", {"about": "invalid-annotation-address",
                                           "layer_id": note.layer_id}))
                continue
            layer = state.layers.get(target_layer)
            block = next((b for b in getattr(layer, "blocks", ())
                          if b.block_id == note.block_id), None)
            if block is None or not (0 <= note.start <= note.end <= len(block.text)):
                events.append(("warning", {"about": "invalid-annotation-address",
                                           "block_id": note.block_id}))
                continue
            kind = note.note_kind if note.note_kind in ("similarity", "difference") else "similarity"
            counters, ann_id = _next_id(counters, "A")
            annotations.append(ComparisonAnnotation(
                annotation_id=ann_id, layer_id=target_layer,
                block_id=note.block_id, start=note.start, end=note.end,
                kind=kind, note=note.text))
        comparisons = dict(state.comparisons)
        comparisons[session_id] = replace(session, annotations=tuple(annotations))
        events.append(("comparison-annotated", {"session_id": session_id,
                                                "count": len(annotations)}))
        return (replace(state, comparisons=comparisons, counters=counters),
                None, events)

    def get_comparison(self, session_id: str) -> Optional[ComparisonSession]:
        return self.state.comparisons.get(session_id)

    # ------------------------------------------------------------------
    # tags
    # ------------------------------------------------------------------

    def _retag(self, target_id: str, label: str, add: bool):
        label = label.strip()
        if add and not label:
            raise EmptyNameError("tag label must be non-empty")

        def fn(state):
            if target_id in state.documents:
                raise NotEditableError("document layers do not take tags")
            if target_id in state.layers:
                layer = state.layers[target_id]
                tags = layer.tags | {label} if add else layer.tags - {label}
                layers = dict(state.layers)
                layers[target_id] = replace(layer, tags=tags)
                return (replace(state, layers=layers), layers[target_id],
                        [("tagged", {"target": target_id, "label": label, "add": add})])
            group = self._find_group(state, target_id)
            if group is None:
                raise UnknownTargetError(f"no layer or group {target_id!r}")

            def rewrite(g: Group) -> Group:
                tags = g.tags | {label} if add else g.tags - {label}
                return replace(g, tags=tags)

            groups = {gid: self._rewrite_group(g, target_id, rewrite)
                      for gid, g in state.groups.items()}
            state = replace(state, groups=groups)
            return (state, self._find_group(state, target_id),
                    [("tagged", {"target": target_id, "label": label, "add": add})])

        _, target = self.mutate("tag" if add else "untag", fn)
        self._log("feature-invocation", "tag" if add else "untag",
                  {"target": target_id, "label": label})
        return target

    def tag(self, target_id: str, label: str):
        return self._retag(target_id, label, add=True)

    def untag(self, target_id: str, label: str):
        return self._retag(target_id, label, add=False)

    # ------------------------------------------------------------------
    # bin
    # ------------------------------------------------------------------

    def bin_layer(self, layer_id: str) -> None:
        """Exclude a layer from view and compilation; fully recoverable."""

        def fn(state):
            if layer_id in state.documents:
                raise NotEditableError("document layers cannot be binned")
            if layer_id not in state.layers:
                raise UnknownLayerError(f"no layer {layer_id!r}")
            events: list = []
            state = self._retire_layer(state, layer_id, events)
            return state, None, events

        self.mutate("bin", fn)
        self._log("feature-invocation", "bin", {"layer_id": layer_id})

    def restore_layer(self, layer_id: str) -> Layer:
        def fn(state):
            entry = state.binned.get(layer_id)
            if entry is None:
                raise UnknownLayerError(f"no binned layer {layer_id!r}")
            binned = dict(state.binned)
            binned.pop(layer_id)
            layers = dict(state.layers)
            layers[layer_id] = entry.layer
            placements = dict(state.placements)
            counters = state.counters
            if entry.placement is not None:
                counters, _ = _next_id(counters, "z")
                placements[layer_id] = replace(entry.placement, z=counters["z"])
            else:
                counters, placements[layer_id] = self._auto_placement(counters)
            state = replace(state, layers=layers, binned=binned,
                            placements=placements, counters=counters)
            state = replace(state, layers=self._revalidate_links(
                state.layers, layer_id))
            return state, entry.layer, [("layer-restored", {"layer_id": layer_id})]

        _, layer = self.mutate("restore", fn)
        self._log("feature-invocation", "restore", {"layer_id": layer_id})
        return layer

    # ------------------------------------------------------------------
    # previews (peek) — transient view state, never part of blocks
    # ------------------------------------------------------------------

    def set_preview(self, preview: PeekPreview) -> None:
        with self._side_lock:
            self._previews[preview.layer_id] = preview
        self.emit_event("peek-preview", {"layer_id": preview.layer_id,
                                         "text": preview.text})

    def get_preview(self, layer_id: str) -> Optional[PeekPreview]:
        with self._side_lock:
            return self._previews.get(layer_id)

    def clear_preview(self, layer_id: str) -> Optional[PeekPreview]:
        with self._side_lock:
            return self._previews.pop(layer_id, None)
