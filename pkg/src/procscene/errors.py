"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ProcSceneError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(ProcSceneError, ValueError):
    pass


class InvalidScale(ProcSceneError, ValueError):
    pass


class DegenerateFrame(ProcSceneError, ValueError):
    pass


class InsufficientData(ProcSceneError, ValueError):
    pass


class UnknownRelation(ProcSceneError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class UnknownSceneType(ProcSceneError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ParseError(ProcSceneError, ValueError):
    """Malformed input document.

    Carries the 1-based ``line`` and the offending ``field`` when known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(ProcSceneError, ValueError):
    """Structural violation; ``edge`` names the offending (parent, child) pair."""

    def __init__(self, message: str, edge: tuple[str, str] | None = None):
        self.edge = edge
        if edge is not None:
            message = f"{message} (edge {edge[0]!r} -> {edge[1]!r})"
        super().__init__(message)


class NoSupportBelow(ProcSceneError):
    pass


class PlacementFailure(ProcSceneError):
    def __init__(self, message: str, node_id: str | None = None, attempts: int = 0):
        self.node_id = node_id
        self.attempts = attempts
        super().__init__(message)


class EmptyScene(ProcSceneError, ValueError):
    pass


class EmptyInput(ProcSceneError, ValueError):
    pass
