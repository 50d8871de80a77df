"""HTTP service exposing the engine to interactive frontends.

One endpoint per engine operation (mirrored 1:1 under
``/sessions/{sid}/ops/<op>``), plus session management, full/delta
snapshots, and a server-push event stream carrying revision deltas,
streaming generation chunks, adjacency events, and placeholder state
changes. Request and response bodies are JSON; every error carries the
engine's stable error code.

A session holds the single writer lock for its workspace file. Snapshots
can be fetched in full or as a delta since a known revision; events on
the stream embed the delta for their revision so a connected client never
needs to poll.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import compiler, friends, persistence, telemetry
from .compiler import CompileSpec, Directive, TransitionSpec
from .errors import (
    LayerspaceError,
    LockConflictError,
    UnknownIdError,
    UnknownLayerError,
    UnknownTargetError,
)
from .gateway import BackendDescriptor
from .workspace import Workspace, state_to_dict

_NOT_FOUND_CODES = {"unknown-layer", "unknown-id", "unknown-target",
                    "unknown-task", "unknown-friend-for-surface",
                    "unknown-template", "bad-address"}
_CONFLICT_CODES = {"lock-conflict"}


def _status_for(code: str) -> int:
    if code in _NOT_FOUND_CODES:
        return 404
    if code in _CONFLICT_CODES:
        return 409
    return 400


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    workspace_dir: str = "."
    backend: BackendDescriptor = BackendDescriptor()

    @classmethod
    def load(cls, path: Optional[str] = None, **overrides) -> "ServiceConfig":
        data: dict = {}
        if path:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        backend_data = data.pop("backend", {})
        if "backend" in overrides and isinstance(overrides["backend"], str):
            backend_data["backend_id"] = overrides.pop("backend")
        known = {f.name for f in fields(BackendDescriptor)}
        descriptor = BackendDescriptor(**{k: v for k, v in backend_data.items()
                                          if k in known})
        if descriptor.backend_id == "live" and not os.environ.get(descriptor.api_key_env):
            import logging
            logging.getLogger("layerspace").warning(
                "no API key in $%s; falling back to the mock backend",
                descriptor.api_key_env)
            descriptor = replace(descriptor, backend_id="mock")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        merged = {k: v for k, v in merged.items()
                  if k in {"host", "port", "workspace_dir"}}
        return cls(backend=descriptor, **merged)


@dataclass
class Session:
    session_id: str
    workspace: Workspace
    path: Path
    lock: persistence.WorkspaceLock
    log: telemetry.SessionLog
    queues: list = field(default_factory=list)
    sub_id: str = ""

    def push(self, event) -> None:
        payload = {"kind": event.kind, "revision": event.revision,
                   "data": event.data}
        if event.kind == "revision":
            delta = self.workspace.delta_since(event.revision - 1)
            if delta is not None:
                payload["delta"] = delta
        for q in list(self.queues):
            q.put(payload)


# ---------------------------------------------------------------------------
# operation table: one endpoint per engine/friends/compiler operation
# ---------------------------------------------------------------------------

def _layer_dict(layer) -> dict:
    return layer.to_dict()


def _maybe_wait(body: dict, future, default_wait: bool = False):
    if body.get("wait", default_wait):
        return future.result(timeout=float(body.get("timeout", 30.0)))
    return None


def op_new_writing_layer(s: Session, body: dict) -> dict:
    layer = s.workspace.new_writing_layer(body["name"], beside=body.get("beside"))
    return {"layer": _layer_dict(layer)}


def op_new_scratchpad_layer(s: Session, body: dict) -> dict:
    return {"layer": _layer_dict(s.workspace.new_scratchpad_layer(body["name"]))}


def op_set_meta(s: Session, body: dict) -> dict:
    meta = s.workspace.set_meta(
        purpose=body.get("purpose"), audience=body.get("audience"),
        intent=body.get("intent"),
        domain_requirements=body.get("domain_requirements"))
    return {"meta": meta.to_dict()}


def op_attach_reference(s: Session, body: dict) -> dict:
    return {"doc_id": s.workspace.attach_reference(body["title"], body["text"])}


def op_apply_edit(s: Session, body: dict) -> dict:
    layer = s.workspace.apply_edit(
        body["layer_id"], body["action"], body["block_id"],
        body["start"], body.get("end", 0), body.get("text", ""))
    return {"layer": _layer_dict(layer)}


def op_split_block(s: Session, body: dict) -> dict:
    layer = s.workspace.split_block(body["layer_id"], body["block_id"], body["offset"])
    return {"layer": _layer_dict(layer)}


def op_append_block(s: Session, body: dict) -> dict:
    layer = s.workspace.append_block(
        body["layer_id"], body["text"], body.get("kind", "paragraph"),
        body.get("level", 0))
    return {"layer": _layer_dict(layer)}


def op_resolve_placeholder(s: Session, body: dict) -> dict:
    layer = s.workspace.resolve_placeholder(body["placeholder_id"], body["action"])
    return {"layer": _layer_dict(layer)}


def op_move_layer(s: Session, body: dict) -> dict:
    placement = s.workspace.move_layer(
        body["layer_id"], body["x"], body["y"],
        body.get("width"), body.get("height"))
    return {"placement": placement.to_dict()}


def op_stack(s: Session, body: dict) -> dict:
    return {"group": s.workspace.stack(tuple(body["members"])).to_dict()}


def op_reorder_stack(s: Session, body: dict) -> dict:
    group = s.workspace.reorder_stack(body["group_id"], body["permutation"])
    return {"group": group.to_dict()}


def op_fan(s: Session, body: dict) -> dict:
    return {"group": s.workspace.fan(body["group_id"]).to_dict()}


def op_unfan(s: Session, body: dict) -> dict:
    return {"group": s.workspace.unfan(body["group_id"]).to_dict()}


def op_fold(s: Session, body: dict) -> dict:
    return {"layer": _layer_dict(s.workspace.fold(body["layer_id"]))}


def op_unfold(s: Session, body: dict) -> dict:
    return {"layer": _layer_dict(s.workspace.unfold(body["layer_id"]))}


def op_tear(s: Session, body: dict) -> dict:
    parts = s.workspace.tear(body["layer_id"], body["cut_points"])
    return {"layers": [_layer_dict(p) for p in parts]}


def op_combine(s: Session, body: dict) -> dict:
    layer, future = s.workspace.combine(
        body["top"], body["bottom"], body.get("transition_prompt"))
    if future is not None:
        _maybe_wait(body, future)
    return {"layer": _layer_dict(layer)}


def op_create_sublayer(s: Session, body: dict) -> dict:
    layer = s.workspace.create_sublayer(
        body["parent_id"], body["block_id"], body["start"], body["end"],
        body["name"])
    return {"layer": _layer_dict(layer)}


def op_tunnel(s: Session, body: dict) -> dict:
    view = s.workspace.tunnel(body["current_id"], body["target_id"])
    return {"layer_id": view.layer_id, "name": view.name,
            "blocks": [b.to_dict() for b in view.blocks]}


def op_import_selection(s: Session, body: dict) -> dict:
    layer = s.workspace.import_selection(
        body["current_id"], body["cursor_block"], body["target_id"],
        body["target_block"], body["start"], body["end"])
    return {"layer": _layer_dict(layer)}


def op_compare(s: Session, body: dict) -> dict:
    session, future = s.workspace.compare(body["left"], body["right"],
                                          body["instruction"])
    _maybe_wait(body, future)
    current = s.workspace.get_comparison(session.session_id)
    return {"session": (current or session).to_dict()}


def op_tag(s: Session, body: dict) -> dict:
    s.workspace.tag(body["target"], body["label"])
    return {"ok": True}


def op_untag(s: Session, body: dict) -> dict:
    s.workspace.untag(body["target"], body["label"])
    return {"ok": True}


def op_bin(s: Session, body: dict) -> dict:
    s.workspace.bin_layer(body["layer_id"])
    return {"ok": True}


def op_restore(s: Session, body: dict) -> dict:
    return {"layer": _layer_dict(s.workspace.restore_layer(body["layer_id"]))}


def op_invoke_inline(s: Session, body: dict) -> dict:
    placeholder, future = friends.invoke_inline(
        s.workspace, body["layer_id"], body["block_id"], body["offset"],
        body["friend"], body["prompt"])
    _maybe_wait(body, future)
    return {"placeholder_id": placeholder.placeholder_id,
            "request_id": "pending"}


def op_peek(s: Session, body: dict) -> dict:
    future = friends.peek(s.workspace, body["layer_id"])
    preview = _maybe_wait(body, future, default_wait=True)
    return {"preview": preview.text if preview else None}


def op_accept_peek(s: Session, body: dict) -> dict:
    return {"layer": _layer_dict(friends.accept_peek(s.workspace, body["layer_id"]))}


def op_dismiss_peek(s: Session, body: dict) -> dict:
    friends.dismiss_peek(s.workspace, body["layer_id"])
    return {"ok": True}


def op_restructure(s: Session, body: dict) -> dict:
    future = friends.restructure(s.workspace, body["layer_id"])
    layer = _maybe_wait(body, future, default_wait=True)
    return {"layer": _layer_dict(layer) if layer else None}


def op_tone_variants(s: Session, body: dict) -> dict:
    future = friends.tone_variants(
        s.workspace, body["layer_id"], body.get("instruction", ""),
        body.get("n", friends.DEFAULT_VARIANTS))
    created = _maybe_wait(body, future, default_wait=True)
    return {"layers": [_layer_dict(v) for v in created or ()]}


def op_annotate(s: Session, body: dict) -> dict:
    future = friends.annotate(s.workspace, body["layer_id"], body["persona"],
                              body.get("prompt", ""))
    created = _maybe_wait(body, future, default_wait=True)
    return {"annotations": [a.to_dict() for a in created or ()]}


def op_toggle_annotations(s: Session, body: dict) -> dict:
    count = friends.toggle_annotations(s.workspace, body["layer_id"],
                                       body["visible"])
    return {"count": count}


def op_research(s: Session, body: dict) -> dict:
    future = friends.research(s.workspace, body["layer_id"], body["question"])
    entry = _maybe_wait(body, future, default_wait=True)
    return {"entry": entry.to_dict() if entry else None}


def op_apply_template(s: Session, body: dict) -> dict:
    future = friends.apply_template(s.workspace, body["template_id"],
                                    body["layer_id"])
    created = _maybe_wait(body, future, default_wait=True)
    return {"layers": [_layer_dict(v) for v in created or ()]}


def op_compile(s: Session, body: dict) -> dict:
    spec = CompileSpec(
        members=tuple(body["members"]),
        mode=body.get("mode", "manual"),
        directives=tuple(Directive(kind=d["kind"],
                                   target_words=d.get("target_words"))
                         for d in body.get("directives", ())),
        transitions=tuple(TransitionSpec(after=t["after"], before=t["before"],
                                         prompt=t["prompt"])
                          for t in body.get("transitions", ())),
        name=body.get("name", ""))
    doc = compiler.compile_document(s.workspace, spec).result(
        timeout=float(body.get("timeout", 60.0)))
    return {"document": doc.to_dict()}


def op_traceback(s: Session, body: dict) -> dict:
    ref, context = compiler.traceback(s.workspace, body["doc_id"],
                                      body["block_id"], body["span_index"])
    return {"ref": ref.to_dict(),
            "context": context.to_dict() if context else None}


def op_export_document(s: Session, body: dict) -> dict:
    doc = s.workspace.state.documents.get(body["doc_id"])
    if doc is None:
        raise UnknownTargetError(f"no document {body['doc_id']!r}")
    fmt = body.get("format", "text")
    if fmt == "text":
        return {"text": compiler.export_text(doc)}
    if fmt == "markup":
        return {"text": compiler.export_markup(doc)}
    if fmt == "provenance":
        return {"provenance": compiler.export_provenance(doc)}
    raise UnknownTargetError(f"unknown export format {fmt!r}")


def op_save(s: Session, body: dict) -> dict:
    persistence.save(s.workspace, s.path)
    return {"path": str(s.path)}


def op_wpm(s: Session, body: dict) -> dict:
    return {"wpm": s.log.wpm(body.get("window", telemetry.WPM_WINDOW_SECONDS))}


OPERATIONS = {
    "new-writing-layer": op_new_writing_layer,
    "new-scratchpad-layer": op_new_scratchpad_layer,
    "set-meta": op_set_meta,
    "attach-reference": op_attach_reference,
    "apply-edit": op_apply_edit,
    "split-block": op_split_block,
    "append-block": op_append_block,
    "resolve-placeholder": op_resolve_placeholder,
    "move-layer": op_move_layer,
    "stack": op_stack,
    "reorder-stack": op_reorder_stack,
    "fan": op_fan,
    "unfan": op_unfan,
    "fold": op_fold,
    "unfold": op_unfold,
    "tear": op_tear,
    "combine": op_combine,
    "create-sublayer": op_create_sublayer,
    "tunnel": op_tunnel,
    "import-selection": op_import_selection,
    "compare": op_compare,
    "tag": op_tag,
    "untag": op_untag,
    "bin": op_bin,
    "restore": op_restore,
    "invoke-inline": op_invoke_inline,
    "peek": op_peek,
    "accept-peek": op_accept_peek,
    "dismiss-peek": op_dismiss_peek,
    "restructure": op_restructure,
    "tone-variants": op_tone_variants,
    "annotate": op_annotate,
    "toggle-annotations": op_toggle_annotations,
    "research": op_research,
    "apply-template": op_apply_template,
    "compile": op_compile,
    "traceback": op_traceback,
    "export-document": op_export_document,
    "save": op_save,
    "wpm": op_wpm,
}


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    sessions: dict = {}
    sessions_lock = threading.Lock()

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        with sessions_lock:
            open_sessions = list(sessions.values())
            sessions.clear()
        for session in open_sessions:
            try:
                persistence.save(session.workspace, session.path)
            finally:
                session.workspace.close()
                session.lock.release()

    app = FastAPI(title="layerspace", version="0.1.0", lifespan=lifespan)
    app.state.sessions = sessions
    app.state.config = config

    @app.exception_handler(LayerspaceError)
    async def engine_error(_request: Request, exc: LayerspaceError):
        return JSONResponse(status_code=_status_for(exc.code),
                            content={"error": exc.code, "message": str(exc)})

    def get_session(sid: str) -> Session:
        with sessions_lock:
            session = sessions.get(sid)
        if session is None:
            raise UnknownIdError(f"no session {sid!r}")
        return session

    @app.get("/health")
    def health():
        return {"ok": True, "backend": config.backend.backend_id}

    @app.post("/sessions")
    def open_session(body: dict):
        name = body.get("workspace", "workspace.json")
        path = Path(config.workspace_dir) / name
        lock = persistence.WorkspaceLock(path).acquire()
        try:
            if path.exists():
                workspace = persistence.load_workspace(
                    path, backend=config.backend)
            else:
                workspace = Workspace(backend=config.backend)
            log = telemetry.SessionLog(path.with_suffix(".events.jsonl"))
            workspace.telemetry = log
            session = Session(
                session_id=uuid.uuid4().hex[:12], workspace=workspace,
                path=path, lock=lock, log=log)
            session.sub_id = workspace.subscribe_events(session.push)
        except Exception:
            lock.release()
            raise
        with sessions_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id,
                "revision": workspace.revision,
                "backend": config.backend.backend_id}

    @app.delete("/sessions/{sid}")
    def close_session(sid: str):
        session = get_session(sid)
        with sessions_lock:
            sessions.pop(sid, None)
        session.workspace.unsubscribe_events(session.sub_id)
        persistence.save(session.workspace, session.path)
        session.workspace.close()
        session.lock.release()
        return {"ok": True}

    @app.get("/sessions/{sid}/snapshot")
    def snapshot(sid: str, since: Optional[int] = None):
        session = get_session(sid)
        if since is not None:
            delta = session.workspace.delta_since(since)
            if delta is not None:
                return delta
        return {"kind": "full", "snapshot": state_to_dict(session.workspace.state)}

    @app.get("/sessions/{sid}/friends")
    def list_friends(sid: str):
        get_session(sid)
        return {"friends": [
            {"friend_id": f.friend_id, "display_name": f.display_name,
             "description": f.description, "task_id": f.task_id,
             "surface": f.surface}
            for f in friends.menu_friends()]}

    @app.get("/sessions/{sid}/events")
    def events(sid: str):
        session = get_session(sid)
        q: "queue.Queue" = queue.Queue(maxsize=1000)
        session.queues.append(q)

        def stream():
            try:
                yield f"data: {json.dumps({'kind': 'hello', 'revision': session.workspace.revision})}\n\n"
                while sid in sessions:
                    try:
                        payload = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(payload)}\n\n"
            finally:
                if q in session.queues:
                    session.queues.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    def make_op_endpoint(op_name: str, handler):
        def endpoint(sid: str, body: dict):
            session = get_session(sid)
            return handler(session, body)

        endpoint.__name__ = f"op_{op_name.replace('-', '_')}"
        app.post(f"/sessions/{{sid}}/ops/{op_name}")(endpoint)

    for op_name, handler in OPERATIONS.items():
        make_op_endpoint(op_name, handler)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service; raises OSError when the port is already in use."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
