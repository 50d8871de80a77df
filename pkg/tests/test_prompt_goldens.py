"""Golden suite: composed prompts for all 13 tasks byte-match checked-in files.

The user prompts come from the shipped fixture corpus (real invocation
examples); the meta layer carries the fixture purpose/audience/intent.
Regenerate with ``UPDATE_GOLDENS=1 python3 -m pytest tests/test_prompt_goldens.py``.
"""

import json
import os
from pathlib import Path

import pytest

from layerspace.composing import render_layer_content

from conftest import make_workspace

GOLDEN_DIR = Path(__file__).parent / "goldens"
FIXTURES = json.loads(
    (Path(__file__).parent.parent / "src/layerspace/assets/fixtures/user_prompts.json")
    .read_text(encoding="utf-8"))

AUDIENCE = "technology creators and potentially legal professionals"

ALL_TASKS = ("elaborate", "ideate", "restructure", "tone-variants", "feedback",
             "audience-feedback", "research", "transition", "compare",
             "compile-directives", "summarize-folded", "peek-continuation",
             "order-stack")


def build_scenario():
    """Deterministic workspace: fixture meta, two layers, one scratchpad."""
    ws = make_workspace()
    meta = FIXTURES["meta"]
    ws.set_meta(purpose=meta["purpose"], audience=meta["audience"],
                intent=meta["intent"],
                domain_requirements=meta["domain_requirements"])
    ws.attach_reference("AI art prize coverage",
                        "An image generated with AI won the digital art prize "
                        "at a state fair, provoking debate among artists.")
    ws.attach_reference("Publisher lawsuit filing",
                        "The complaint alleges that model training copied "
                        "millions of articles without authorization.")
    intro = ws.new_writing_layer("Introduction")
    ws.apply_edit(intro.layer_id, "insert", intro.blocks[0].block_id, 0,
                  text="Generative models now draft prose, images, and music.")
    ws.append_block(intro.layer_id,
                    "Copyright doctrine was not written with machines in mind.")
    stakes = ws.new_writing_layer("Stakeholders")
    ws.apply_edit(stakes.layer_id, "insert", stakes.blocks[0].block_id, 0,
                  text="Content creators fear displacement and uncredited reuse.")
    pad = ws.new_scratchpad_layer("Research")
    return ws, intro.layer_id, stakes.layer_id, pad.layer_id


def compose_for_task(ws, task_id, intro_id, stakes_id, pad_id):
    prompt_text = FIXTURES["prompts"][task_id]
    state = ws.state
    intro = state.layer(intro_id)
    first, second = intro.blocks[0].block_id, intro.blocks[1].block_id
    if task_id in ("elaborate", "ideate"):
        return ws.compose_for_layer(task_id, intro_id, user_params=prompt_text,
                                    anchor_block=first,
                                    anchor_offset=10 if task_id == "elaborate" else 0)
    if task_id == "transition":
        return ws.compose_for_layer(task_id, intro_id, user_params=prompt_text,
                                    anchor_block=second, anchor_offset=0)
    if task_id == "research":
        return ws.compose_for_layer(task_id, pad_id, user_params=prompt_text)
    if task_id == "compare":
        extra = (f"left layer {intro_id}:\n"
                 f"{render_layer_content(state.layer(intro_id))}\n"
                 f"right layer {stakes_id}:\n"
                 f"{render_layer_content(state.layer(stakes_id))}")
        return ws.compose_for_layer(task_id, None, user_params=prompt_text,
                                    extra_content=extra)
    if task_id == "compile-directives":
        lines = []
        for lid in (intro_id, stakes_id):
            for block in state.layer(lid).blocks:
                flat = " ".join(block.text.split())
                lines.append(f"[member {lid} block {block.block_id}|paragraph] {flat}")
        return ws.compose_for_layer(task_id, None, user_params=prompt_text,
                                    extra_content="\n".join(lines))
    if task_id == "order-stack":
        lines = [f"[member {lid}] {state.layer(lid).name}: "
                 f"{' '.join(state.layer(lid).text.split())[:80]}"
                 for lid in (intro_id, stakes_id)]
        return ws.compose_for_layer(task_id, None,
                                    extra_content="\n".join(lines))
    return ws.compose_for_layer(task_id, intro_id, user_params=prompt_text)


@pytest.fixture(scope="module")
def scenario():
    ws, *ids = build_scenario()
    yield ws, ids
    ws.close()


@pytest.mark.parametrize("task_id", ALL_TASKS)
def test_prompt_matches_golden(scenario, task_id):
    ws, (intro_id, stakes_id, pad_id) = scenario
    prompt = compose_for_task(ws, task_id, intro_id, stakes_id, pad_id)
    serialized = prompt.serialize()
    path = GOLDEN_DIR / f"{task_id}.txt"
    if os.environ.get("UPDATE_GOLDENS"):
        GOLDEN_DIR.mkdir(exist_ok=True)
        path.write_text(serialized, encoding="utf-8")
    assert path.exists(), f"golden missing; run with UPDATE_GOLDENS=1 ({path})"
    assert serialized == path.read_text(encoding="utf-8")


@pytest.mark.parametrize("task_id", ALL_TASKS)
def test_meta_audience_propagates_verbatim(scenario, task_id):
    ws, (intro_id, stakes_id, pad_id) = scenario
    prompt = compose_for_task(ws, task_id, intro_id, stakes_id, pad_id)
    meta_text = prompt.segment("meta-context")
    assert meta_text is not None
    assert f"audience: {AUDIENCE}" in meta_text
