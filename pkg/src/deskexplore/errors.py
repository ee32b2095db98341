"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DeskExploreError(Exception):
    """Base class for all package errors."""


class MapFormatError(DeskExploreError, ValueError):
    """A map document could not be parsed."""


class NonRectangular(MapFormatError):
    pass


class EmptyMap(MapFormatError):
    pass


class Unreachable(DeskExploreError):
    """No path exists between two cells over the given free set."""


class AgentNotFree(DeskExploreError, ValueError):
    pass


class ShapeMismatch(DeskExploreError, ValueError):
    pass


class ZeroResultant(DeskExploreError, ValueError):
    """Angles cancel out, so their circular mean is undefined."""


class EmptyFrontierSet(DeskExploreError, ValueError):
    pass


class EmptyHierarchy(DeskExploreError, ValueError):
    pass


class InvalidIndex(DeskExploreError):
    def __init__(self, index: int, n_candidates: int):
        super().__init__(f"index {index} out of range for {n_candidates} candidates")
        self.index = index
        self.n_candidates = n_candidates


class NoDecision(DeskExploreError):
    pass


class NoLabeledTarget(DeskExploreError):
    pass


class ClientError(DeskExploreError):
    """A text-generation or embedding backend failed."""


class MalformedReflection(DeskExploreError, ValueError):
    pass


class JudgeParseError(DeskExploreError, ValueError):
    pass


class DuplicateId(DeskExploreError, KeyError):
    pass


class LibraryFormatError(DeskExploreError, ValueError):
    pass


class Undefined(DeskExploreError):
    """A metric has no eligible items."""


class ConfigError(DeskExploreError, ValueError):
    pass
