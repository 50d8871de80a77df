import pytest

from layerspace.composing import TaskRegistry
from layerspace.workspace import Workspace

# One registry for the whole run; loading task assets per-test is wasteful.
REGISTRY = TaskRegistry.load()


def make_workspace(**kwargs) -> Workspace:
    kwargs.setdefault("registry", REGISTRY)
    kwargs.setdefault("backend", "mock")
    return Workspace(**kwargs)


@pytest.fixture
def ws():
    workspace = make_workspace()
    yield workspace
    workspace.close()


@pytest.fixture
def seeded(ws):
    """Workspace with one three-paragraph layer, ready to script against."""
    layer = ws.new_writing_layer("Essay")
    first = layer.blocks[0].block_id
    ws.apply_edit(layer.layer_id, "insert", first, 0,
                  text="Copyright law struggles to keep up with AI.")
    ws.append_block(layer.layer_id, "Creators want protection for their style.")
    ws.append_block(layer.layer_id, "Courts have not decided how to respond.")
    return ws, ws.state.layer(layer.layer_id)
