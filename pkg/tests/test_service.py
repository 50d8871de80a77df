"""API service: endpoint inventory, wire behavior, deltas, event stream."""

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from layerspace.service import OPERATIONS, ServiceConfig, create_app
from layerspace.workspace import apply_delta

# The complete operation inventory: engine + friends + compiler surface.
EXPECTED_OPS = {
    "new-writing-layer", "new-scratchpad-layer", "set-meta", "attach-reference",
    "apply-edit", "split-block", "append-block", "resolve-placeholder",
    "move-layer", "stack", "reorder-stack", "fan", "unfan", "fold", "unfold",
    "tear", "combine", "create-sublayer", "tunnel", "import-selection",
    "compare", "tag", "untag", "bin", "restore",
    "invoke-inline", "peek", "accept-peek", "dismiss-peek", "restructure",
    "tone-variants", "annotate", "toggle-annotations", "research",
    "apply-template", "compile", "traceback", "export-document", "save", "wpm",
}


@pytest.fixture
def client(tmp_path):
    app = create_app(ServiceConfig(workspace_dir=str(tmp_path)))
    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture
def live_server(tmp_path):
    """Real uvicorn server on an ephemeral port, for SSE consumption."""
    import uvicorn

    app = create_app(ServiceConfig(workspace_dir=str(tmp_path)))
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


@pytest.fixture
def session(client):
    sid = client.post("/sessions", json={"workspace": "t.json"}).json()["session_id"]
    yield client, sid
    client.delete(f"/sessions/{sid}")


def op(client, sid, name, body=None):
    response = client.post(f"/sessions/{sid}/ops/{name}", json=body or {})
    assert response.status_code == 200, response.text
    return response.json()


class TestParity:
    def test_operations_table_matches_inventory(self):
        assert set(OPERATIONS) == EXPECTED_OPS

    def test_every_operation_has_exactly_one_route(self, client):
        app = client.app
        op_routes = [r.path for r in app.routes
                     if r.path.startswith("/sessions/{sid}/ops/")]
        assert sorted(op_routes) == sorted(
            f"/sessions/{{sid}}/ops/{name}" for name in OPERATIONS)
        assert len(op_routes) == len(set(op_routes))


class TestSessions:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["ok"] and body["backend"] == "mock"

    def test_lock_conflict_on_second_open(self, client):
        first = client.post("/sessions", json={"workspace": "w.json"})
        assert first.status_code == 200
        second = client.post("/sessions", json={"workspace": "w.json"})
        assert second.status_code == 409
        assert second.json()["error"] == "lock-conflict"
        client.delete(f"/sessions/{first.json()['session_id']}")

    def test_close_persists_and_unlocks(self, client, tmp_path):
        sid = client.post("/sessions", json={"workspace": "w.json"}).json()["session_id"]
        op(client, sid, "new-writing-layer", {"name": "Intro"})
        client.delete(f"/sessions/{sid}")
        assert (tmp_path / "w.json").exists()
        reopened = client.post("/sessions", json={"workspace": "w.json"})
        assert reopened.status_code == 200
        sid2 = reopened.json()["session_id"]
        snapshot = client.get(f"/sessions/{sid2}/snapshot").json()["snapshot"]
        assert any(l["name"] == "Intro" for l in snapshot["layers"].values())
        client.delete(f"/sessions/{sid2}")

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/snapshot").status_code == 404


class TestOps:
    def test_errors_carry_engine_codes(self, session):
        client, sid = session
        response = client.post(f"/sessions/{sid}/ops/new-writing-layer",
                               json={"name": "  "})
        assert response.status_code == 400
        assert response.json()["error"] == "empty-name"

    def test_tear_delta_contains_retirement_and_parts(self, session):
        client, sid = session
        layer = op(client, sid, "new-writing-layer", {"name": "Essay"})["layer"]
        bid = layer["blocks"][0]["block_id"]
        op(client, sid, "apply-edit", {"layer_id": layer["layer_id"],
                                       "action": "insert", "block_id": bid,
                                       "start": 0, "text": "one"})
        op(client, sid, "append-block", {"layer_id": layer["layer_id"],
                                         "text": "two"})
        before = client.get(f"/sessions/{sid}/snapshot").json()["snapshot"]
        revision = before["revision"]
        torn = op(client, sid, "tear", {"layer_id": layer["layer_id"],
                                        "cut_points": [1]})
        assert len(torn["layers"]) == 2
        delta = client.get(f"/sessions/{sid}/snapshot",
                           params={"since": revision}).json()
        assert delta["kind"] == "delta"
        assert layer["layer_id"] in delta["layers"]["remove"]
        new_ids = {l["layer_id"] for l in (p for p in torn["layers"])}
        assert new_ids <= set(delta["layers"]["upsert"])
        assert layer["layer_id"] in delta["binned"]["upsert"]

    def test_delta_soundness_over_http(self, session):
        client, sid = session
        full = client.get(f"/sessions/{sid}/snapshot").json()["snapshot"]
        op(client, sid, "new-writing-layer", {"name": "A"})
        op(client, sid, "set-meta", {"audience": "students"})
        delta = client.get(f"/sessions/{sid}/snapshot",
                           params={"since": full["revision"]}).json()
        patched = apply_delta(full, delta)
        current = client.get(f"/sessions/{sid}/snapshot").json()["snapshot"]
        assert patched == current

    def test_invoke_inline_streams_then_fills(self, live_server):
        import httpx
        base = live_server
        sid = httpx.post(f"{base}/sessions",
                         json={"workspace": "sse.json"}).json()["session_id"]
        try:
            def op_http(name, body):
                response = httpx.post(f"{base}/sessions/{sid}/ops/{name}",
                                      json=body, timeout=30)
                assert response.status_code == 200, response.text
                return response.json()

            layer = op_http("new-writing-layer", {"name": "L"})["layer"]
            bid = layer["blocks"][0]["block_id"]
            op_http("apply-edit", {"layer_id": layer["layer_id"],
                                   "action": "insert", "block_id": bid,
                                   "start": 0, "text": "base text"})

            events = []
            ready = threading.Event()
            done = threading.Event()

            def consume():
                with httpx.stream("GET", f"{base}/sessions/{sid}/events",
                                  timeout=30) as stream:
                    ready.set()
                    for line in stream.iter_lines():
                        if line.startswith("data: "):
                            events.append(json.loads(line[6:]))
                            if any(e["kind"] == "placeholder"
                                   and e["data"].get("state") == "filled"
                                   for e in events):
                                done.set()
                                return

            consumer = threading.Thread(target=consume, daemon=True)
            consumer.start()
            assert ready.wait(5)
            result = op_http("invoke-inline",
                             {"layer_id": layer["layer_id"], "block_id": bid,
                              "offset": 4, "friend": "danny",
                              "prompt": "detail", "wait": True})
            assert result["placeholder_id"]
            assert done.wait(10)
            kinds = [e["kind"] for e in events]
            assert "chunk" in kinds
            assert any(e["kind"] == "placeholder" and e["data"]["state"] == "filled"
                       for e in events)
            # revision events carry deltas for stateless clients
            assert any("delta" in e for e in events if e["kind"] == "revision")
        finally:
            httpx.delete(f"{base}/sessions/{sid}", timeout=10)

    def test_compare_via_endpoint(self, session):
        client, sid = session
        a = op(client, sid, "new-writing-layer", {"name": "A"})["layer"]
        b = op(client, sid, "new-writing-layer", {"name": "B"})["layer"]
        for layer in (a, b):
            op(client, sid, "apply-edit",
               {"layer_id": layer["layer_id"], "action": "insert",
                "block_id": layer["blocks"][0]["block_id"], "start": 0,
                "text": f"text of {layer['layer_id']}"})
        placement = op(client, sid, "move-layer",
                       {"layer_id": a["layer_id"], "x": 0, "y": 0})["placement"]
        op(client, sid, "move-layer", {"layer_id": b["layer_id"],
                                       "x": placement["width"], "y": 0})
        result = op(client, sid, "compare",
                    {"left": a["layer_id"], "right": b["layer_id"],
                     "instruction": "compare", "wait": True})
        assert len(result["session"]["annotations"]) == 2

    def test_compile_and_traceback_roundtrip(self, session):
        client, sid = session
        layer = op(client, sid, "new-writing-layer", {"name": "Solo"})["layer"]
        op(client, sid, "apply-edit", {"layer_id": layer["layer_id"],
                                       "action": "insert",
                                       "block_id": layer["blocks"][0]["block_id"],
                                       "start": 0, "text": "document body"})
        doc = op(client, sid, "compile",
                 {"members": [layer["layer_id"]]})["document"]
        ref = op(client, sid, "traceback",
                 {"doc_id": doc["doc_layer_id"],
                  "block_id": doc["blocks"][0]["block_id"],
                  "span_index": 0})["ref"]
        assert ref["layer_id"] == layer["layer_id"]
        exported = op(client, sid, "export-document",
                      {"doc_id": doc["doc_layer_id"], "format": "text"})
        assert exported["text"] == "document body"

    def test_friends_listing_has_seven(self, session):
        client, sid = session
        listing = client.get(f"/sessions/{sid}/friends").json()["friends"]
        assert len(listing) == 7
        assert {f["friend_id"] for f in listing} == {
            "ivy", "danny", "sam", "tara", "felix", "ali", "ramesh"}

    def test_wpm_endpoint(self, session):
        client, sid = session
        layer = op(client, sid, "new-writing-layer", {"name": "L"})["layer"]
        op(client, sid, "apply-edit", {"layer_id": layer["layer_id"],
                                       "action": "insert",
                                       "block_id": layer["blocks"][0]["block_id"],
                                       "start": 0, "text": "four words right here"})
        wpm = op(client, sid, "wpm", {"window": 60})["wpm"]
        assert wpm == 4.0
