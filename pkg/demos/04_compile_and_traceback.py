"""Compiling layers into a provenance-tracked document."""

from layerspace import CompileSpec, Directive, TransitionSpec, Workspace, compiler

ws = Workspace(backend="mock")
ws.set_meta(audience="students")

ids = []
for name, paragraphs in [
        ("Zig", ["Opening thoughts on model training.",
                 "Why datasets matter more than size."]),
        ("Arc", ["The legal framework today.",
                 "Where the statutes fall silent."]),
        ("Mud", ["What creators can do right now."])]:
    layer = ws.new_writing_layer(name)
    ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id, 0,
                  text=paragraphs[0])
    for text in paragraphs[1:]:
        ws.append_block(layer.layer_id, text)
    ids.append(layer.layer_id)

print("== manual compile is lossless concatenation ==")
doc = compiler.compile_document_sync(ws, CompileSpec(members=tuple(ids)))
print(f"document {doc.doc_layer_id} from {doc.created_from}")
print(compiler.export_text(doc))

print("\n== every span traces back to its source layer ==")
for block in doc.blocks[:3]:
    ref, _ = compiler.traceback(ws, doc.doc_layer_id, block.block_id, 0)
    print(f"  {block.block_id} <- {ref.layer_id}/{ref.block_id} ({ref.kind})")

print("\n== llm-order asks the backend for a reading order ==")
ordered = compiler.compile_document_sync(
    ws, CompileSpec(members=tuple(ids), mode="llm-order"))
print("chosen order:", ordered.created_from)

print("\n== directives edit at block level; edits are highlighted ==")
edited = compiler.compile_document_sync(ws, CompileSpec(
    members=tuple(ids),
    directives=(Directive("consistency-edit"),),
    transitions=(TransitionSpec(after=ids[0], before=ids[1],
                                prompt="connect training to the law"),)))
print(compiler.export_markup(edited))
highlights = [(a.key(), r.layer_id) for a, r in edited.hyper_refs if r.highlight]
print("highlighted spans:", highlights)
address = highlights[0][0]
block_id, span_index = address.rsplit(":", 1)
ref, context = compiler.traceback(ws, edited.doc_layer_id, block_id, int(span_index))
print(f"edited span came from {ref.layer_id}/{ref.block_id}; "
      f"nearest verbatim context: {context.layer_id}/{context.block_id}")

print("\n== target length shrinks until within ten percent ==")
short = compiler.compile_document_sync(ws, CompileSpec(
    members=tuple(ids), directives=(Directive("target-length", target_words=12),)))
print(f"{len(compiler.export_text(short).split())} words:",
      compiler.export_text(short)[:70])

print("\n== the provenance sidecar is exportable ==")
sidecar = compiler.export_provenance(doc)
print(f"{len(sidecar['refs'])} span refs over {len(doc.blocks)} blocks")

ws.close()
