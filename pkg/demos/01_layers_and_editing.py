"""Layers, spans, and the placeholder lifecycle.

Creates a workspace with the mock backend, sets the writing context, types
into a layer, invokes an inline elaboration, and shows accept vs reject.
"""

from layerspace import Workspace, friends


def show(layer):
    for block in layer.blocks:
        owners = ", ".join(
            f"{s.attribution.origin}"
            + (f"({s.attribution.friend_id})" if s.attribution.friend_id else "")
            for s in block.spans)
        print(f"  [{block.block_id}] {block.text!r}   <- {owners}")


ws = Workspace(backend="mock")

print("== the meta layer grounds every prompt ==")
ws.set_meta(
    purpose="an opinion piece on language models and creative ownership",
    audience="technology creators and potentially legal professionals",
    intent="argue for reevaluating copyright frameworks")
print(ws.state.meta.purpose)

print("\n== a fresh writing layer starts with one empty paragraph ==")
intro = ws.new_writing_layer("Introduction")
show(intro)

print("\n== typing produces human-attributed spans ==")
bid = intro.blocks[0].block_id
layer = ws.apply_edit(intro.layer_id, "insert", bid, 0,
                      text="Models now draft prose alongside us.")
show(layer)

print("\n== an inline friend fills a placeholder at the cursor ==")
placeholder, future = friends.invoke_inline(
    ws, intro.layer_id, bid, len("Models now draft prose alongside us."),
    "danny", "explain what these models actually do")
future.result(10)
print(f"placeholder state: {ws.state.placeholders[placeholder.placeholder_id].state}")
show(ws.state.layer(intro.layer_id))

print("\n== rejecting restores the block byte-for-byte ==")
layer = ws.resolve_placeholder(placeholder.placeholder_id, "reject")
show(layer)

print("\n== a second invocation can be accepted instead ==")
placeholder, future = friends.invoke_inline(
    ws, intro.layer_id, bid, 10, "ivy", "angles worth covering")
future.result(10)
layer = ws.resolve_placeholder(placeholder.placeholder_id, "accept")
show(layer)
print("accepted spans keep their friend origin forever; "
      "only the accepted flag flipped.")

ws.close()
