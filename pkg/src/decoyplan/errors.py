"""Exception types shared across the package."""

from __future__ import annotations


class DecoyPlanError(Exception):
    """Base class for all errors raised by this package."""


class GraphFormatError(DecoyPlanError):
    """A document could not be parsed: malformed syntax or wrong field types."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{message} ({where})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(DecoyPlanError):
    """A well-formed document or argument violates a structural invariant."""


class UnknownNodeError(DecoyPlanError):
    """An operation referenced a node id that is not in the graph."""

    def __init__(self, node_id: str):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id


class BlockedSetError(DecoyPlanError):
    """A blocked set contained an outcome node or a reachability source."""


class InfeasibleAndNodeError(DecoyPlanError):
    """A spine crosses an and-gated node with a predecessor the source cannot reach."""

    def __init__(self, node_id: str, predecessor: str):
        super().__init__(
            f"and-gated node {node_id!r} requires predecessor {predecessor!r}, "
            "which is unreachable from the path source"
        )
        self.node_id = node_id
        self.predecessor = predecessor


class EmptyProfileError(DecoyPlanError):
    """The threat profile has no attack paths, so there is nothing to solve."""


class TruncatedProfileError(DecoyPlanError):
    """Refusing to compute a path metric on a profile whose enumeration hit the cap."""


class InfeasibleError(DecoyPlanError):
    """No technique subset can disconnect the sources from the targets."""


class TooManyCandidatesError(DecoyPlanError):
    """Exhaustive search refused: candidate count exceeds the configured limit."""


class NoCompatibleGroupError(DecoyPlanError):
    """No catalog group is compatible with the profile's attack targets."""


class NotEnoughCandidatesError(DecoyPlanError):
    """A random selection asked for more techniques than are eligible."""


class NotEnoughEligibleTargetsError(DecoyPlanError):
    """Scenario sampling asked for more targets than the graph can provide."""


class DegenerateConfigError(DecoyPlanError):
    """A generator configuration cannot produce a valid graph."""
