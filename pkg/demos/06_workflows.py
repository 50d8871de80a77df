"""Three end-to-end writing workflows.

1. Freewriting reorganized through the argument template.
2. A document-grounded question answered from uploaded sources, with the
   evidence tunneled into an argument layer.
3. Parallel topic development compiled into one document with transitions.
"""

from layerspace import CompileSpec, TransitionSpec, Workspace, compiler, friends

ws = Workspace(backend="mock")
ws.set_meta(
    purpose="an essay on crowdsourced writing and model training",
    audience="technology creators and potentially legal professionals",
    intent="argue for consent-based training data")

# ---------------------------------------------------------------------------
print("== workflow 1: freewriting -> argument template -> development ==")
free = ws.new_writing_layer("Freewriting")
ws.apply_edit(free.layer_id, "insert", free.blocks[0].block_id, 0,
              text="Writers deserve a say in how their work trains models.")
ws.append_block(free.layer_id, "Survey data shows most never consented.")
ws.append_block(free.layer_id, "If consent is priced, quality data follows.")
components = friends.apply_template(ws, "argument", free.layer_id).result(10)
print("  components:", [c.name for c in components])
grounds = components[1]
placeholder, future = friends.invoke_inline(
    ws, grounds.layer_id, grounds.blocks[0].block_id,
    len(grounds.blocks[0].text), "ivy", "what other grounds support this?")
future.result(10)
ws.resolve_placeholder(placeholder.placeholder_id, "accept")
print("  Grounds developed with Ivy:",
      ws.state.layer(grounds.layer_id).blocks[0].text[:60], "...")

# ---------------------------------------------------------------------------
print("\n== workflow 2: document-grounded question ==")
ws.attach_reference(
    "Assignment brief",
    "Discuss how platform terms of service treat contributor text, citing "
    "the provided excerpts for every claim you make.")
pad = ws.new_scratchpad_layer("Sources")
entry = friends.research(ws, pad.layer_id,
                         "What do the terms say about contributor text?").result(10)
print("  answer cites:", [c.doc_id for c in entry.citations],
      "| unverified:", entry.unverified)
evidence = ws.new_writing_layer("Evidence")
ws.apply_edit(evidence.layer_id, "insert", evidence.blocks[0].block_id, 0,
              text="Key excerpts:")
argument = ws.new_writing_layer("Argument")
ws.apply_edit(argument.layer_id, "insert", argument.blocks[0].block_id, 0,
              text="Platforms already claim broad licenses.")
ws.apply_edit(evidence.layer_id, "insert",
              ws.state.layer(evidence.layer_id).blocks[0].block_id,
              len("Key excerpts:"), text=" terms grant sublicensable rights.")
view = ws.tunnel(argument.layer_id, evidence.layer_id)
ws.import_selection(argument.layer_id, argument.blocks[0].block_id,
                    evidence.layer_id, view.blocks[0].block_id, 0, 13)
print("  tunneled evidence into the argument layer; next prompt carries it:",
      bool(ws.pending_context(argument.layer_id)))

# ---------------------------------------------------------------------------
print("\n== workflow 3: parallel topics -> ordered, bridged document ==")
topics = {}
for name, text in [("Findings", "Contributors adapt faster than expected."),
                   ("Methodology", "We interviewed forty crowdworkers."),
                   ("Literature", "Prior studies focused on quality, not consent.")]:
    layer = ws.new_writing_layer(name)
    ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id, 0, text=text)
    topics[name] = layer.layer_id

doc = compiler.compile_document_sync(ws, CompileSpec(
    members=tuple(topics.values()),
    mode="llm-order",
    transitions=(TransitionSpec(after=topics["Findings"],
                                before=topics["Literature"],
                                prompt="situate the results against prior work"),)))
order = [ws.state.layer(l).name for l in doc.created_from]
print("  backend-chosen order:", order)
print("  compiled text:")
for line in compiler.export_text(doc).splitlines():
    print("   ", line)
first = doc.blocks[0]
ref, _ = compiler.traceback(ws, doc.doc_layer_id, first.block_id, 0)
print("  first span traces to:", ws.state.layer(ref.layer_id).name)

ws.close()
