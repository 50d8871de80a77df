"""Workspace files: canonical serialization, versioning, advisory locks.

Serialization is canonical (sorted keys, compact separators, trailing
newline), so observationally equal snapshots always produce identical
bytes. Loading fails closed: a version from the future or a malformed
file raises without touching any workspace state.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Union

from .errors import CorruptFileError, IoError, LockConflictError, VersionMismatchError
from .workspace import (
    FORMAT_VERSION,
    Workspace,
    WorkspaceState,
    state_from_dict,
    state_to_dict,
)


def canonical_bytes(state: WorkspaceState) -> bytes:
    text = json.dumps(state_to_dict(state), sort_keys=True,
                      ensure_ascii=False, separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def save(source: Union[Workspace, WorkspaceState], path) -> Path:
    """Write a workspace snapshot; identical snapshots produce identical bytes."""
    state = source.state if isinstance(source, Workspace) else source
    path = Path(path)
    try:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(canonical_bytes(state))
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def load_state(path) -> WorkspaceState:
    """Parse a workspace file; fails closed on corruption or bad versions."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path} is not a valid workspace file: {exc}") from exc
    if not isinstance(data, dict) or "format_version" not in data:
        raise CorruptFileError(f"{path} is missing the format version")
    version = data["format_version"]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path} has format version {version}; this build reads {FORMAT_VERSION}")
    try:
        return state_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path} failed structural validation: {exc}") from exc


def load_workspace(path, **workspace_kwargs) -> Workspace:
    return Workspace(state=load_state(path), **workspace_kwargs)


class WorkspaceLock:
    """Advisory single-writer lock, one per workspace file."""

    def __init__(self, workspace_path):
        self.lock_path = Path(str(workspace_path) + ".lock")
        self._held = False

    def acquire(self) -> "WorkspaceLock":
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockConflictError(
                f"{self.lock_path} exists; another session owns this workspace"
            ) from None
        except OSError as exc:
            raise IoError(f"cannot create lock {self.lock_path}: {exc}") from exc
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))
        self._held = True
        return self

    def release(self) -> None:
        if self._held:
            try:
                self.lock_path.unlink()
            except OSError:
                pass
            self._held = False

    def __enter__(self) -> "WorkspaceLock":
        return self.acquire()

    def __exit__(self, *exc_info) -> None:
        self.release()
