"""Exception types shared across the toolkit."""

from __future__ import annotations


class FramekitError(Exception):
    """Base class for all toolkit errors."""


# --- value / model construction -------------------------------------------

class TypeMismatch(FramekitError):
    def __init__(self, kind, raw, index=None):
        self.kind = kind
        self.raw = raw
        self.index = index
        at = f" at index {index}" if index is not None else ""
        super().__init__(f"value {raw!r} does not match kind {kind}{at}")


class DuplicateFrame(FramekitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"frame {name!r} declared twice")


class DuplicateSlot(FramekitError):
    def __init__(self, frame, slot):
        self.frame = frame
        self.slot = slot
        super().__init__(f"slot {slot!r} declared twice in frame {frame!r}")


class InheritanceCycle(FramekitError):
    def __init__(self, path):
        self.path = list(path)
        super().__init__("inheritance cycle: " + " -> ".join(self.path))


class DynamicInheritanceCycle(FramekitError):
    def __init__(self, path):
        self.path = list(path)
        super().__init__("dynamic inheritance cycle: " + " -> ".join(self.path))


class UnknownParent(FramekitError):
    def __init__(self, frame, parent):
        self.frame = frame
        self.parent = parent
        super().__init__(f"frame {frame!r} names unknown parent {parent!r}")


class DefaultTypeMismatch(FramekitError):
    def __init__(self, frame, slot):
        self.frame = frame
        self.slot = slot
        super().__init__(f"default of {frame}.{slot} does not match the slot type")


class UnknownSlotInConstraint(FramekitError):
    def __init__(self, frame, name):
        self.frame = frame
        self.name = name
        super().__init__(f"constraint in frame {frame!r} references unknown slot {name!r}")


class UnknownFrame(FramekitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown frame {name!r}")


class UnknownSlot(FramekitError):
    def __init__(self, frame, slot):
        self.frame = frame
        self.slot = slot
        super().__init__(f"frame {frame!r} has no slot {slot!r} anywhere along its chain")


# --- evaluation / inference -------------------------------------------------

class EvalError(FramekitError):
    """Expression evaluation failure (kind mismatch, division by zero, ...)."""

    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class ConstraintViolation(FramekitError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("constraint violated: " + "; ".join(str(v) for v in self.violations))


class CascadeLimitExceeded(FramekitError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"forward-rule cascade exceeded depth {limit}")


class NoPendingQuestion(FramekitError):
    def __init__(self, question_id):
        self.question_id = question_id
        super().__init__(f"no pending question with id {question_id!r}")


class AnswerTypeMismatch(FramekitError):
    def __init__(self, expected, raw):
        self.expected = expected
        self.raw = raw
        super().__init__(f"answer {raw!r} does not match expected kind {expected}")


class UnknownResolver(FramekitError):
    def __init__(self, resolver_id):
        self.resolver_id = resolver_id
        super().__init__(f"unknown conflict resolver {resolver_id!r}")


class ExternArityMismatch(FramekitError):
    def __init__(self, name, declared, got):
        self.name = name
        self.declared = declared
        self.got = got
        super().__init__(f"extern {name!r} declared with arity {declared}, got {got}")


class ReadOnlySlot(FramekitError):
    def __init__(self, frame, slot):
        self.frame = frame
        self.slot = slot
        super().__init__(f"slot {frame}.{slot} is read-only")


# --- interchange -------------------------------------------------------------

class SchemaError(FramekitError):
    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"schema error at {path}: {reason}")


class VersionUnsupported(FramekitError):
    def __init__(self, found):
        self.found = found
        super().__init__(f"unsupported document version {found!r}")


class WorldVersionMismatch(FramekitError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__("snapshot was taken against a different knowledge base")


class UntypedRemoteSlot(FramekitError):
    def __init__(self, frame, slot):
        self.frame = frame
        self.slot = slot
        super().__init__(f"cannot infer a type for remotely introduced slot {frame}.{slot}")


# --- data sources -------------------------------------------------------------

class MissingKeyColumn(FramekitError):
    def __init__(self, table, column):
        self.table = table
        self.column = column
        super().__init__(f"table {table!r} has no key column {column!r}")


class DuplicateKey(FramekitError):
    def __init__(self, table, key):
        self.table = table
        self.key = key
        super().__init__(f"table {table!r} has duplicate key {key!r}")


class UnknownColumn(FramekitError):
    def __init__(self, table, column):
        self.table = table
        self.column = column
        super().__init__(f"table {table!r} has no column {column!r}")


class NoMatchingRow(FramekitError):
    def __init__(self, table, predicate):
        self.table = table
        self.predicate = predicate
        super().__init__(f"no row in {table!r} matches {predicate}")


class AmbiguousFrameName(FramekitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"frame name {name!r} is already taken")


# --- distribution --------------------------------------------------------------

class BindError(FramekitError):
    pass


class ConnectError(FramekitError):
    pass


class VersionMismatch(FramekitError):
    def __init__(self, ours, theirs):
        self.ours = ours
        self.theirs = theirs
        super().__init__(f"protocol version mismatch: ours {ours}, theirs {theirs}")


class UnknownRemoteFrame(FramekitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"remote instance does not host frame {name!r}")


class RemoteError(FramekitError):
    def __init__(self, code, text=""):
        self.code = code
        self.text = text
        super().__init__(f"remote error {code}: {text}")


class WireTimeout(FramekitError):
    pass


class ProtocolViolation(FramekitError):
    pass
