"""Generation backends and the request pipeline.

Two backends ship with the engine: a live HTTP backend speaking a generic
chat-completion contract, and a deterministic mock for offline use. The
mock is a pure function of the serialized prompt, so identical requests
produce byte-identical output across runs and platforms.

Mock output contract (frozen; tests recompute it independently):

* Every generated fragment embeds ``[({task})·{digest}·...]`` where
  ``digest`` is the first 16 hex chars of SHA-256 over the serialized
  prompt bytes.
* ``n-new-layers``: part k is ``...part-{k}]``, except template
  distribution tasks, where part k echoes the k-th source block's text
  (empty when the source has fewer blocks).
* ``structured-sections``: a level-1 and a level-2 heading, each with one
  paragraph.
* ``annotation-list``: for compare prompts (which carry ``left layer`` /
  ``right layer`` markers), exactly one similarity note on the left
  layer's first block and one difference note on the right layer's first
  block; otherwise one comment note per source block.
* ``ordering``: the ``[member ...]`` ids sorted by layer name.
* ``replacement-list``: audience-version replaces the first listed block;
  consistency-edit replaces the second member's second block (clamped);
  summarize directives truncate the named block to the requested words.
* ``cited-answer``: cites every attached reference with range
  ``0..min(40, len)``; with no references, answers without citations.

The service runs each request on a worker thread, streams chunks in
order, validates the final text against the task schema, and retries
once with a repair instruction before giving up. A result that fails
validation is never partially applied.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .composing import ComposedPrompt, StructuredSchema, parse_output
from .errors import BackendUnavailableError, GenerationTimeoutError, SchemaInvalidError

DIGEST_LEN = 16


def prompt_digest(serialized: str) -> str:
    return hashlib.sha256(serialized.encode("utf-8")).hexdigest()[:DIGEST_LEN]


def mock_tag(task_id: str, serialized: str) -> str:
    return f"[({task_id})·{prompt_digest(serialized)}"


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str = "mock"  # mock | live
    model_name: str = "mock-1"
    endpoint: str = ""
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 1
    latency: float = 0.0  # mock only; >0 for race testing


@dataclass(frozen=True)
class GenerationRequest:
    request_id: str
    prompt: ComposedPrompt
    schema: StructuredSchema
    origin_layer_id: str
    task_id: str
    issued_at: float = field(default_factory=time.time)


@dataclass(frozen=True)
class GenerationResult:
    request_id: str
    status: str  # ok | schema-invalid | backend-error | timeout | cancelled
    parts: tuple = ()
    raw_text: str = ""
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class GenerationCancelled(Exception):
    pass


class Backend:
    """A text generation provider; subclasses implement ``run``."""

    def run(self, request: GenerationRequest, serialized: str,
            on_chunk: Callable[[str], None],
            cancelled: threading.Event) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """Deterministic offline backend; output is a function of the prompt."""

    def __init__(self, latency: float = 0.0):
        self.latency = latency

    def run(self, request, serialized, on_chunk, cancelled):
        raw = self.render(request.task_id, request.schema, serialized)
        for chunk in self._chunks(raw):
            if cancelled.is_set():
                raise GenerationCancelled()
            if self.latency:
                time.sleep(self.latency)
            on_chunk(chunk)
        return raw

    @staticmethod
    def _chunks(raw: str) -> list:
        if len(raw) <= 20:
            return [raw]
        mid = len(raw) // 2
        return [raw[:mid], raw[mid:]]

    # -- deterministic rendering ------------------------------------------

    def render(self, task_id: str, schema: StructuredSchema, serialized: str) -> str:
        tag = mock_tag(task_id, serialized)
        kind = schema.kind
        if kind in ("free-text", "inline-paragraph"):
            return f"{tag}·deterministic-body]"
        if kind == "n-new-layers":
            if task_id.startswith("template-"):
                return self._render_template_parts(schema.n, serialized)
            parts = [f"<<<part {k}>>>\n{tag}·part-{k}]"
                     for k in range(1, schema.n + 1)]
            return "\n".join(parts)
        if kind == "structured-sections":
            return (f"# {tag}·heading-1]\n{tag}·section-1]\n"
                    f"## {tag}·heading-2]\n{tag}·section-2]")
        if kind == "annotation-list":
            return self._render_annotations(tag, serialized)
        if kind == "ordering":
            return self._render_ordering(serialized)
        if kind == "replacement-list":
            return self._render_replacements(tag, serialized)
        if kind == "cited-answer":
            return self._render_cited(tag, serialized)
        raise SchemaInvalidError(f"mock cannot render schema {kind}")

    @staticmethod
    def _source_blocks(serialized: str) -> list:
        """(block_id, text) pairs from the prompt's block lines."""
        return [(m.group(1), m.group(3))
                for m in re.finditer(r"^\[block (\S+)\|([a-z0-9-]+)\] (.*)$",
                                     serialized, re.MULTILINE)]

    def _render_template_parts(self, n: int, serialized: str) -> str:
        blocks = self._source_blocks(serialized)
        parts = []
        for k in range(1, n + 1):
            text = blocks[k - 1][1] if k - 1 < len(blocks) else ""
            parts.append(f"<<<part {k}>>>\n{text}")
        return "\n".join(parts)

    def _render_annotations(self, tag: str, serialized: str) -> str:
        sides = re.findall(r"^(left|right) layer (\S+):$", serialized, re.MULTILINE)
        if sides:
            # Comparison: one similarity on the left, one difference on the right.
            notes = []
            for idx, (side, layer_id) in enumerate(sides[:2], start=1):
                section = serialized.split(f"{side} layer {layer_id}:", 1)[1]
                m = re.search(r"^\[block (\S+)\|[a-z0-9-]+\] (.*)$", section, re.MULTILINE)
                block_id, text = (m.group(1), m.group(2)) if m else ("", "")
                kind = "similarity" if side == "left" else "difference"
                notes.append(
                    f"<<<note {idx}>>>\n"
                    f"target: layer={layer_id} block={block_id} span=0-{min(8, len(text))}\n"
                    f"kind: {kind}\ntext: {tag}·{kind}]")
            return "\n".join(notes)
        notes = []
        for idx, (block_id, text) in enumerate(self._source_blocks(serialized), start=1):
            notes.append(
                f"<<<note {idx}>>>\n"
                f"target: block={block_id} span=0-{len(text)}\n"
                f"kind: comment\ntext: {tag}·note-{idx}]")
        return "\n".join(notes)

    @staticmethod
    def _members(serialized: str) -> list:
        """(layer_id, name) pairs from ``[member ...]`` listing lines."""
        return [(m.group(1), m.group(2))
                for m in re.finditer(r"^\[member (\S+)\] ([^:]*):", serialized, re.MULTILINE)]

    def _render_ordering(self, serialized: str) -> str:
        members = self._members(serialized)
        ordered = sorted(members, key=lambda pair: (pair[1], pair[0]))
        return ",".join(layer_id for layer_id, _ in ordered)

    @staticmethod
    def _member_blocks(serialized: str) -> list:
        """(layer_id, block_id, text) from document-plan lines."""
        return [(m.group(1), m.group(2), m.group(4))
                for m in re.finditer(
                    r"^\[member (\S+) block (\S+)\|([a-z0-9-]+)\] (.*)$",
                    serialized, re.MULTILINE)]

    def _render_replacements(self, tag: str, serialized: str) -> str:
        plan = self._member_blocks(serialized)
        if not plan:
            return ""
        summarize = re.search(
            r"summarize block (\S+) of layer (\S+) to at most (\d+) words", serialized)
        if summarize:
            block_id, layer_id, words = summarize.groups()
            text = next((t for l, b, t in plan if l == layer_id and b == block_id), "")
            truncated = " ".join(text.split()[: int(words)])
            return (f"<<<replacement 1>>>\ntarget: layer={layer_id} block={block_id}\n"
                    f"text: {truncated}")
        if "directive: audience-version" in serialized:
            layer_id, block_id, _ = plan[0]
            return (f"<<<replacement 1>>>\ntarget: layer={layer_id} block={block_id}\n"
                    f"text: {tag}·audience-version]")
        # consistency-edit: second member's second block, clamped to what exists.
        layer_order = []
        for layer_id, _, _ in plan:
            if layer_id not in layer_order:
                layer_order.append(layer_id)
        target_layer = layer_order[min(1, len(layer_order) - 1)]
        layer_blocks = [(b, t) for l, b, t in plan if l == target_layer]
        block_id, _ = layer_blocks[min(1, len(layer_blocks) - 1)]
        return (f"<<<replacement 1>>>\ntarget: layer={target_layer} block={block_id}\n"
                f"text: {tag}·consistency-edit]")

    def _render_cited(self, tag: str, serialized: str) -> str:
        refs = re.findall(r"^reference-text (\S+):$", serialized, re.MULTILINE)
        answer = f"{tag}·answer]"
        if not refs:
            return answer
        lines = [answer]
        for doc_id in refs:
            section = serialized.split(f"reference-text {doc_id}:\n", 1)[1]
            body = section.split("\nreference-text ", 1)[0].split("\n[[segment:", 1)[0]
            lines.append("<<<cite>>>")
            lines.append(f"doc={doc_id} range=0-{min(40, len(body))}")
        return "\n".join(lines)


class LiveBackend(Backend):
    """Generic chat-completion HTTP provider.

    Speaks the common ``POST {endpoint}`` JSON contract: the composed
    prompt goes out as a single user message; the reply text is read from
    ``choices[0].message.content``. One network retry per descriptor.
    """

    def __init__(self, descriptor: BackendDescriptor):
        if not descriptor.endpoint:
            raise BackendUnavailableError("live backend requires an endpoint")
        self.descriptor = descriptor
        self.api_key = os.environ.get(descriptor.api_key_env, "")

    def run(self, request, serialized, on_chunk, cancelled):
        import httpx

        payload = {
            "model": self.descriptor.model_name,
            "messages": [{"role": "user", "content": serialized}],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        attempts = self.descriptor.max_retries + 1
        last_error: Optional[Exception] = None
        for _ in range(attempts):
            if cancelled.is_set():
                raise GenerationCancelled()
            try:
                resp = httpx.post(self.descriptor.endpoint, json=payload,
                                  headers=headers, timeout=self.descriptor.timeout)
                if resp.status_code != 200:
                    raise BackendUnavailableError(
                        f"provider returned {resp.status_code}: {resp.text[:200]}")
                text = resp.json()["choices"][0]["message"]["content"]
                on_chunk(text)
                return text
            except httpx.TimeoutException as exc:
                last_error = GenerationTimeoutError(str(exc))
            except BackendUnavailableError as exc:
                last_error = exc
            except Exception as exc:  # connection/auth/parse failures
                last_error = BackendUnavailableError(str(exc))
        raise last_error  # type: ignore[misc]


def make_backend(descriptor: BackendDescriptor) -> Backend:
    if descriptor.backend_id == "mock":
        return MockBackend(latency=descriptor.latency)
    if descriptor.backend_id == "live":
        return LiveBackend(descriptor)
    raise BackendUnavailableError(f"unknown backend {descriptor.backend_id!r}")


REPAIR_INSTRUCTION = (
    "\n[[repair]]\nYour previous response did not validate: {error}. "
    "Respond again, following the output-constraints section exactly."
)


class GenerationService:
    """Runs generation requests concurrently and schema-gates the results.

    Chunks are delivered in order on the worker thread; the final text is
    parsed against the request schema, with one repair re-ask on
    validation failure. Callers receive a Future of GenerationResult and
    may cancel in-flight work (a rejected placeholder cancels its
    generation).
    """

    def __init__(self, backend: Backend, max_workers: int = 8):
        self.backend = backend
        self._executor = ThreadPoolExecutor(max_workers=max_workers,
                                            thread_name_prefix="generate")
        self._inflight: dict = {}
        self._lock = threading.Lock()

    def new_request_id(self) -> str:
        return f"R{uuid.uuid4().hex[:12]}"

    def submit(self, request: GenerationRequest,
               on_chunk: Optional[Callable[[str], None]] = None,
               on_final: Optional[Callable[[GenerationResult], None]] = None,
               ) -> "Future[GenerationResult]":
        cancelled = threading.Event()
        future = self._executor.submit(
            self._run, request, on_chunk or (lambda _: None), cancelled)
        with self._lock:
            self._inflight[request.request_id] = (future, cancelled)

        def _cleanup(fut):
            with self._lock:
                self._inflight.pop(request.request_id, None)
            if on_final is not None:
                on_final(fut.result())

        future.add_done_callback(_cleanup)
        return future

    def cancel(self, request_id: str) -> bool:
        with self._lock:
            entry = self._inflight.get(request_id)
        if entry is None:
            return False
        entry[1].set()
        return True

    def drain(self, timeout: float = 30.0) -> None:
        deadline = time.time() + timeout
        while True:
            with self._lock:
                futures = [f for f, _ in self._inflight.values()]
            if not futures:
                return
            for f in futures:
                remaining = deadline - time.time()
                if remaining <= 0:
                    raise GenerationTimeoutError("drain timed out")
                try:
                    f.result(timeout=remaining)
                except Exception:
                    pass  # result status carries the failure

    def shutdown(self) -> None:
        self._executor.shutdown(wait=False, cancel_futures=True)

    # -- request execution ---------------------------------------------------

    def _run(self, request: GenerationRequest,
             on_chunk: Callable[[str], None],
             cancelled: threading.Event) -> GenerationResult:
        serialized = request.prompt.serialize()
        try:
            raw = self.backend.run(request, serialized, on_chunk, cancelled)
        except GenerationCancelled:
            return GenerationResult(request.request_id, "cancelled")
        except GenerationTimeoutError as exc:
            return GenerationResult(request.request_id, "timeout", error=str(exc))
        except BackendUnavailableError as exc:
            return GenerationResult(request.request_id, "backend-error", error=str(exc))
        except Exception as exc:
            return GenerationResult(request.request_id, "backend-error", error=str(exc))

        try:
            parts = parse_output(request.schema, raw)
            return GenerationResult(request.request_id, "ok", parts=parts, raw_text=raw)
        except SchemaInvalidError as exc:
            first_error = str(exc)
        # One repair re-ask, then fail closed.
        repair_prompt = replace(
            request.prompt,
            segments=request.prompt.segments + (
                ("output-constraints",
                 REPAIR_INSTRUCTION.format(error=first_error)),),
        )
        try:
            raw2 = self.backend.run(
                replace(request, prompt=repair_prompt), repair_prompt.serialize(),
                lambda _: None, cancelled)
            parts = parse_output(request.schema, raw2)
            return GenerationResult(request.request_id, "ok", parts=parts, raw_text=raw2)
        except GenerationCancelled:
            return GenerationResult(request.request_id, "cancelled")
        except SchemaInvalidError as exc:
            return GenerationResult(request.request_id, "schema-invalid",
                                    raw_text=raw, error=str(exc))
        except Exception as exc:
            return GenerationResult(request.request_id, "backend-error", error=str(exc))
