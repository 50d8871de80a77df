"""Layered writing workspace engine.

Spatial, modular content layers with persona-scoped LLM tasks, a
provenance-tracking document compiler, canonical persistence, and an HTTP
service for interactive frontends. Runs fully offline against a
deterministic mock backend.
"""

from . import compiler, composing, errors, friends, gateway, model, persistence, telemetry
from .compiler import CompileSpec, Directive, TransitionSpec, compile_document, traceback
from .composing import ComposedPrompt, StructuredSchema, TaskKnowledge, TaskRegistry
from .gateway import BackendDescriptor, GenerationService, MockBackend
from .model import (
    Block,
    DocumentLayer,
    MetaLayer,
    Placeholder,
    ScratchpadLayer,
    Span,
    SpanAttribution,
    WritingLayer,
)
from .persistence import load_state, load_workspace, save
from .telemetry import SessionLog, render_usage_tree, replay
from .workspace import (
    AdjacencyConfig,
    Group,
    Placement,
    Workspace,
    WorkspaceState,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyConfig",
    "BackendDescriptor",
    "Block",
    "CompileSpec",
    "ComposedPrompt",
    "Directive",
    "DocumentLayer",
    "GenerationService",
    "Group",
    "MetaLayer",
    "MockBackend",
    "Placeholder",
    "Placement",
    "ScratchpadLayer",
    "SessionLog",
    "Span",
    "SpanAttribution",
    "StructuredSchema",
    "TaskKnowledge",
    "TaskRegistry",
    "TransitionSpec",
    "Workspace",
    "WorkspaceState",
    "WritingLayer",
    "compile_document",
    "compiler",
    "composing",
    "errors",
    "friends",
    "gateway",
    "load_state",
    "load_workspace",
    "model",
    "persistence",
    "render_usage_tree",
    "replay",
    "save",
    "telemetry",
    "traceback",
]
