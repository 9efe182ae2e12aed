"""Exception and warning classes used across geoslice."""


class GeosliceError(Exception):
    """Base class for all geoslice errors."""


class MeshError(GeosliceError, ValueError):
    """Invalid mesh input: bad indices, degenerate elements, parse failures."""


class SolverError(GeosliceError, RuntimeError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DeadlockError(GeosliceError, RuntimeError):
    """Greedy sequencing ran out of printable candidates."""

    def __init__(self, message, printed=(), unprinted=()):
        super().__init__(message)
        self.printed = list(printed)
        self.unprinted = list(unprinted)


class FloatingLayerError(GeosliceError, ValueError):
    """A layer above the first has no supporting layer below it."""


class MeshQualityWarning(UserWarning):
    """Emitted when a mesh is valid but likely to give inaccurate results."""


class TopologyWarning(UserWarning):
    """The layer adjacency graph contains a cycle, so the part is not a tree."""
