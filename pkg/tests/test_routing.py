"""Result routing: layer listeners, archived publishes, dropped addresses,
and the exhaustive document-immutability enumeration."""

import time

import pytest

from layerspace import compiler, friends
from layerspace.compiler import CompileSpec
from layerspace.errors import LayerspaceError, NotEditableError
from layerspace.gateway import BackendDescriptor, GenerationService, MockBackend
from layerspace.persistence import canonical_bytes

from conftest import make_workspace


class TestLayerListeners:
    def test_subscribe_receives_generation_results(self, seeded):
        ws, layer = seeded
        received = []
        sub_id = ws.subscribe(layer.layer_id, received.append)
        assert sub_id in ws.listeners_of(layer.layer_id)
        ph, fut = friends.invoke_inline(ws, layer.layer_id,
                                        layer.blocks[0].block_id, 0,
                                        "danny", "go")
        fut.result(5)
        assert len(received) == 1
        assert received[0].ok

    def test_unsubscribed_layers_not_notified(self, seeded):
        ws, layer = seeded
        other = ws.new_writing_layer("Other")
        ws.apply_edit(other.layer_id, "insert", other.blocks[0].block_id, 0,
                      text="text")
        received = []
        ws.subscribe(other.layer_id, received.append)
        ph, fut = friends.invoke_inline(ws, layer.layer_id,
                                        layer.blocks[0].block_id, 0,
                                        "danny", "go")
        fut.result(5)
        assert received == []


class TestArchivedPublish:
    def test_result_after_tear_is_archived_without_mutation(self):
        ws = make_workspace(backend=BackendDescriptor(backend_id="mock",
                                                      latency=0.15))
        try:
            layer = ws.new_writing_layer("Doomed")
            bid = layer.blocks[0].block_id
            ws.apply_edit(layer.layer_id, "insert", bid, 0, text="one two")
            ws.append_block(layer.layer_id, "three four")
            archived = []
            ws.subscribe_events(lambda e: archived.append(e)
                                if e.kind == "archived" else None)
            ph, fut = friends.invoke_inline(ws, layer.layer_id, bid, 0,
                                            "danny", "slow")
            time.sleep(0.05)
            parts = ws.tear(layer.layer_id, [1])  # retires the origin mid-flight
            before = canonical_bytes(ws.state)
            fut.result(10)
            ws.wait_idle()
            assert archived, "late result was not archived"
            # the torn parts were never touched by the stale result
            for part in parts:
                current = ws.state.layer(part.layer_id)
                assert current.blocks == part.blocks
        finally:
            ws.close()

    def test_result_after_bin_is_archived(self):
        ws = make_workspace(backend=BackendDescriptor(backend_id="mock",
                                                      latency=0.15))
        try:
            layer = ws.new_writing_layer("Binned")
            bid = layer.blocks[0].block_id
            ws.apply_edit(layer.layer_id, "insert", bid, 0, text="body")
            ph, fut = friends.invoke_inline(ws, layer.layer_id, bid, 0,
                                            "danny", "slow")
            time.sleep(0.05)
            ws.bin_layer(layer.layer_id)
            fut.result(10)
            entry = ws.state.binned[layer.layer_id]
            assert entry.layer.blocks[0].text == "body"
        finally:
            ws.close()


class MisCitingBackend(MockBackend):
    """Research answers that cite a document nobody attached."""

    def render(self, task_id, schema, serialized):
        if schema.kind == "cited-answer":
            return "answer text\n<<<cite>>>\ndoc=X999 range=0-10"
        return super().render(task_id, schema, serialized)


class MisAddressingBackend(MockBackend):
    """Comparison notes addressed to blocks that do not exist."""

    def render(self, task_id, schema, serialized):
        if schema.kind == "annotation-list":
            return ("<<<note 1>>>\ntarget: layer=L999 block=B999 span=0-5\n"
                    "kind: similarity\ntext: nowhere")
        return super().render(task_id, schema, serialized)


class TestDroppedWithWarning:
    def test_unknown_citation_doc_dropped(self, ws):
        ws.generator = GenerationService(MisCitingBackend())
        ws.attach_reference("Real doc", "actual reference text")
        pad = ws.new_scratchpad_layer("Pad")
        warnings = []
        ws.subscribe_events(lambda e: warnings.append(e)
                            if e.kind == "warning" else None)
        entry = friends.research(ws, pad.layer_id, "question?").result(5)
        assert entry.citations == ()
        assert entry.unverified  # nothing verifiable survived
        assert any(e.data.get("about") == "unknown-citation" for e in warnings)

    def test_invalid_annotation_address_dropped_not_fatal(self, ws):
        ws.generator = GenerationService(MisAddressingBackend())
        a = ws.new_writing_layer("A")
        b = ws.new_writing_layer("B")
        for layer in (a, b):
            ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id,
                          0, text="text")
        pa = ws.move_layer(a.layer_id, 0, 0)
        ws.move_layer(b.layer_id, pa.width, 0)
        warnings = []
        ws.subscribe_events(lambda e: warnings.append(e)
                            if e.kind == "warning" else None)
        session, fut = ws.compare(a.layer_id, b.layer_id, "check")
        fut.result(5)
        current = ws.get_comparison(session.session_id)
        assert current is not None  # session survives
        assert current.annotations == ()  # bad addresses dropped
        assert any(e.data.get("about") == "invalid-annotation-address"
                   for e in warnings)


class TestDocumentImmutabilityExhaustive:
    """Every content-mutating operation rejects a document layer id."""

    def test_all_mutating_ops_reject_doc_ids(self, seeded):
        ws, layer = seeded
        doc = compiler.compile_document_sync(
            ws, CompileSpec(members=(layer.layer_id,)))
        doc_id = doc.doc_layer_id
        block_id = doc.blocks[0].block_id
        other = ws.new_writing_layer("Other")
        ws.apply_edit(other.layer_id, "insert", other.blocks[0].block_id, 0,
                      text="writing")

        attempts = {
            "apply-edit": lambda: ws.apply_edit(doc_id, "insert", block_id, 0,
                                                text="x"),
            "split-block": lambda: ws.split_block(doc_id, block_id, 0),
            "append-block": lambda: ws.append_block(doc_id, "x"),
            "open-placeholder": lambda: ws.open_placeholder(doc_id, block_id, 0,
                                                            "elaborate", "danny"),
            "fold": lambda: ws.fold(doc_id),
            "unfold": lambda: ws.unfold(doc_id),
            "tear": lambda: ws.tear(doc_id, [1]),
            "combine-top": lambda: ws.combine(doc_id, other.layer_id),
            "combine-bottom": lambda: ws.combine(other.layer_id, doc_id),
            "create-sublayer": lambda: ws.create_sublayer(doc_id, block_id,
                                                          0, 1, "S"),
            "tunnel-target": lambda: ws.tunnel(other.layer_id, doc_id),
            "import-into": lambda: ws.import_selection(
                doc_id, block_id, other.layer_id,
                other.blocks[0].block_id, 0, 1),
            "tag": lambda: ws.tag(doc_id, "label"),
            "bin": lambda: ws.bin_layer(doc_id),
            "compare": lambda: ws.compare(doc_id, other.layer_id, "x"),
            "invoke-inline": lambda: friends.invoke_inline(
                ws, doc_id, block_id, 0, "danny", "x"),
            "peek": lambda: friends.peek(ws, doc_id),
            "restructure": lambda: friends.restructure(ws, doc_id),
            "tone-variants": lambda: friends.tone_variants(ws, doc_id, "x"),
            "annotate": lambda: friends.annotate(ws, doc_id, "felix"),
            "research": lambda: friends.research(ws, doc_id, "q"),
            "apply-template": lambda: friends.apply_template(ws, "argument",
                                                             doc_id),
            "compile-member": lambda: compiler.compile_document_sync(
                ws, CompileSpec(members=(doc_id,))),
        }
        before = canonical_bytes(ws.state)
        for name, attempt in attempts.items():
            with pytest.raises(LayerspaceError) as excinfo:
                attempt()
            assert excinfo.value.code in (
                "not-editable", "type-mismatch", "document-layer-member"), \
                f"{name} raised {excinfo.value.code}"
        assert canonical_bytes(ws.state) == before
