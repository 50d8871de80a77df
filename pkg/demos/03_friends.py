"""The seven writer's friends, peek previews, and writing templates."""

from layerspace import Workspace, friends

ws = Workspace(backend="mock")
ws.set_meta(audience="technology creators and potentially legal professionals")

draft = ws.new_writing_layer("Draft")
ws.apply_edit(draft.layer_id, "insert", draft.blocks[0].block_id, 0,
              text="Models remix what they were trained on.")
ws.append_block(draft.layer_id, "Artists rarely see attribution.")
ws.append_block(draft.layer_id, "Licensing could be rebuilt for scale.")

print("== the friend menu (surface-scoped) ==")
for friend in friends.menu_friends():
    print(f"  {friend.display_name:<15} {friend.surface:<13} {friend.description}")

print("\n== Structure Sam builds a structured twin layer ==")
structured = friends.restructure(ws, draft.layer_id).result(10)
for block in structured.blocks:
    indent = "  " * max(block.level, 1)
    print(f"{indent}{block.kind}{block.level or ''}: {block.text[:48]}")

print("\n== Tone Tara renders variants as separate layers ==")
variants = friends.tone_variants(ws, draft.layer_id,
                                 "shift to third person narration").result(10)
print([v.name for v in variants])

print("\n== Feedback Felix annotates per block, toggleable ==")
notes = friends.annotate(ws, draft.layer_id, "felix").result(10)
for note in notes:
    print(f"  {note.block_id}: {note.note[:40]}")
friends.toggle_annotations(ws, draft.layer_id, visible=False)
print("hidden but retained:",
      len(friends.annotations_for(ws, draft.layer_id)), "annotations")

print("\n== Audience Ali needs the audience field ==")
answers = friends.annotate(ws, draft.layer_id, "ali").result(10)
print(f"  ali produced {len(answers)} audience-specific notes")

print("\n== Research Ramesh cites only attached documents ==")
ws.attach_reference("Art prize story",
                    "An AI-generated image won a state fair art prize in 2022.")
pad = ws.new_scratchpad_layer("Background research")
entry = friends.research(ws, pad.layer_id,
                         "How have prizes treated AI-generated art?").result(10)
print(f"  answer: {entry.answer_blocks[0].text[:50]}")
print(f"  citations: {[(c.doc_id, c.start, c.end) for c in entry.citations]}")
print(f"  unverified: {entry.unverified}")

print("\n== Peek previews a continuation without touching blocks ==")
preview = friends.peek(ws, draft.layer_id).result(10)
print(f"  greyed preview: {preview.text[:50]}")
friends.dismiss_peek(ws, draft.layer_id)
print("  dismissed; block count unchanged:",
      len(ws.state.layer(draft.layer_id).blocks))

print("\n== the argument template partitions freewriting into six layers ==")
components = friends.apply_template(ws, "argument", draft.layer_id).result(10)
for component in components:
    body = component.blocks[0].text
    print(f"  {component.name:<10} {body[:44]}")

ws.close()
