"""Canonical workspace files, the interaction log, WPM, and replay."""

import tempfile
from pathlib import Path

from layerspace import SessionLog, Workspace, friends, load_workspace, save
from layerspace import render_usage_tree, replay
from layerspace.compiler import CompileSpec, compile_document_sync
from layerspace.persistence import canonical_bytes

workdir = Path(tempfile.mkdtemp())
log = SessionLog(workdir / "events.jsonl", session_id="demo")
ws = Workspace(backend="mock", telemetry=log)

print("== a short scripted session ==")
layer_ids = []
for name in ("Opening", "Middle", "Closing"):
    layer = ws.new_writing_layer(name)
    ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id, 0,
                  text=f"{name} paragraph with a handful of words.")
    layer_ids.append(layer.layer_id)
friends.restructure(ws, layer_ids[0]).result(10)
friends.restructure(ws, layer_ids[1]).result(10)
compile_document_sync(ws, CompileSpec(members=tuple(layer_ids)))

print("words per minute (human words only):", log.wpm(60))

print("\n== canonical save/load: identical snapshots, identical bytes ==")
path = save(ws, workdir / "workspace.json")
restored = load_workspace(path, backend="mock")
print("roundtrip equal:", canonical_bytes(restored.state) == canonical_bytes(ws.state))
restored.close()

print("\n== replaying the log reconstructs the usage tree ==")
log.flush()
print(render_usage_tree(replay(workdir / "events.jsonl")))
print("\n(the same summary is available from the command line:")
print(f"  layerspace replay {workdir / 'events.jsonl'})")

ws.close()
