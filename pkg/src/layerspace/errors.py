"""Exception types raised by the workspace engine.

Every error carries a stable machine-readable ``code`` so API clients and
tests can match on it without parsing messages.
"""

from __future__ import annotations


class LayerspaceError(Exception):
    """Base class for all engine errors."""

    code = "error"

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.context = context


# --- layer model -----------------------------------------------------------

class EmptyNameError(LayerspaceError):
    code = "empty-name"


class NotEditableError(LayerspaceError):
    code = "not-editable"


class BadRangeError(LayerspaceError):
    code = "bad-range"


class WrongStateError(LayerspaceError):
    code = "wrong-state"


class UnknownIdError(LayerspaceError):
    code = "unknown-id"


class PlaceholderPendingError(LayerspaceError):
    code = "placeholder-pending"


class ReferenceTooLargeError(LayerspaceError):
    code = "reference-too-large"


# --- workspace engine ------------------------------------------------------

class UnknownLayerError(LayerspaceError):
    code = "unknown-layer"


class MemberOfStackError(LayerspaceError):
    code = "member-of-stack"


class DuplicateMemberError(LayerspaceError):
    code = "duplicate-member"


class AlreadyGroupedError(LayerspaceError):
    code = "already-grouped"


class NotAPermutationError(LayerspaceError):
    code = "not-a-permutation"


class NotAStackError(LayerspaceError):
    code = "not-a-stack"


class BadCutPointError(LayerspaceError):
    code = "bad-cut-point"


class EmptyLayerError(LayerspaceError):
    code = "empty-layer"


class TypeMismatchError(LayerspaceError):
    code = "type-mismatch"


class FoldedInputError(LayerspaceError):
    code = "folded-input"


class BadAnchorError(LayerspaceError):
    code = "bad-anchor"


class SelfTunnelError(LayerspaceError):
    code = "self-tunnel"


class UnknownTargetError(LayerspaceError):
    code = "unknown-target"


class NotAdjacentError(LayerspaceError):
    code = "not-adjacent"


# --- prompt composer / friends ---------------------------------------------

class UnknownTaskError(LayerspaceError):
    code = "unknown-task"


class UnknownFriendError(LayerspaceError):
    code = "unknown-friend-for-surface"


class UnknownTemplateError(LayerspaceError):
    code = "unknown-template"


class VariantCountError(LayerspaceError):
    code = "variant-count-out-of-range"


class MetaFieldRequiredError(LayerspaceError):
    code = "meta-field-required"


# --- llm gateway ------------------------------------------------------------

class BackendUnavailableError(LayerspaceError):
    code = "backend-error"


class GenerationTimeoutError(LayerspaceError):
    code = "timeout"


class SchemaInvalidError(LayerspaceError):
    code = "schema-invalid"


# --- document compiler -------------------------------------------------------

class DocumentMemberError(LayerspaceError):
    code = "document-layer-member"


class EmptyCompileError(LayerspaceError):
    code = "empty-compile"


class BadAddressError(LayerspaceError):
    code = "bad-address"


# --- persistence / service ---------------------------------------------------

class IoError(LayerspaceError):
    code = "io-error"


class VersionMismatchError(LayerspaceError):
    code = "version-mismatch"


class CorruptFileError(LayerspaceError):
    code = "corrupt-file"


class LockConflictError(LayerspaceError):
    code = "lock-conflict"
