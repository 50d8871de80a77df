"""Shifting: spatial moves, comparison, stacking, tearing, folding, the bin."""

from layerspace import Workspace


def text_of(ws, layer_id):
    return " / ".join(b.text for b in ws.state.layer(layer_id).blocks)


ws = Workspace(backend="mock")

layers = {}
for name, text in [("Problems", "Generated text floods the market."),
                   ("Law", "Statutes assume a human author."),
                   ("Ethics", "Credit and consent are unresolved.")]:
    layer = ws.new_writing_layer(name)
    ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id, 0, text=text)
    layers[name] = layer.layer_id

print("== edge adjacency triggers comparisons ==")
pa = ws.move_layer(layers["Problems"], 0, 0)
ws.move_layer(layers["Law"], pa.width + 4, 10)  # within the 8-unit tolerance
print("adjacent:", ws.adjacency_holds(layers["Problems"], layers["Law"]))
session, future = ws.compare(layers["Problems"], layers["Law"],
                             "how do the problems map onto the legal framework?")
future.result(10)
for ann in ws.get_comparison(session.session_id).annotations:
    print(f"  {ann.kind} on {ann.layer_id}/{ann.block_id}: {ann.note[:50]}")

print("\n== annotations vanish when the layers separate ==")
ws.move_layer(layers["Law"], 900, 900)
print("session present:", ws.get_comparison(session.session_id) is not None)

print("\n== stacks capture order; fanning is pure view state ==")
group = ws.stack((layers["Problems"], layers["Law"], layers["Ethics"]))
print("stack order:", group.group_id, "->", [m for m in group.members])
ws.fan(group.group_id)
reordered = ws.reorder_stack(group.group_id, [2, 0, 1])
print("after reorder:", [m for m in reordered.members])

print("\n== tear splits at block boundaries, combine glues back ==")
essay = ws.new_writing_layer("Essay")
ws.apply_edit(essay.layer_id, "insert", essay.blocks[0].block_id, 0,
              text="Part one.")
for text in ("Part two.", "Part three.", "Part four."):
    ws.append_block(essay.layer_id, text)
parts = ws.tear(essay.layer_id, [1, 3])
print("torn into:", [(p.name, len(p.blocks)) for p in parts])
merged, _ = ws.combine(parts[0].layer_id, parts[1].layer_id)
merged, _ = ws.combine(merged.layer_id, parts[2].layer_id)
print("recombined:", text_of(ws, merged.layer_id))

print("\n== combine can generate transitional text ==")
a = ws.new_writing_layer("Claims")
ws.apply_edit(a.layer_id, "insert", a.blocks[0].block_id, 0,
              text="The problems are real.")
b = ws.new_writing_layer("Framework")
ws.apply_edit(b.layer_id, "insert", b.blocks[0].block_id, 0,
              text="The framework exists to address them.")
bridged, future = ws.combine(a.layer_id, b.layer_id,
                             "bridge from problems to the legal framework")
future.result(10)
ph = next(iter(ws.state.placeholders.values()))
ws.resolve_placeholder(ph.placeholder_id, "accept")
print("with transition:", text_of(ws, bridged.layer_id))

print("\n== fold shows a generated summary and excludes from compiles ==")
folded = ws.fold(merged.layer_id)
print("summary on the folded edge:", folded.fold_summary[:60])
ws.unfold(merged.layer_id)

print("\n== the bin is non-destructive ==")
ws.bin_layer(merged.layer_id)
print("live?", merged.layer_id in ws.state.layers,
      "| binned?", merged.layer_id in ws.state.binned)
restored = ws.restore_layer(merged.layer_id)
print("restored text:", text_of(ws, restored.layer_id))

ws.close()
