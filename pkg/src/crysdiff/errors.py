"""Exception types shared across the package."""


class CrysDiffError(Exception):
    """Base class for all crysdiff errors."""


class DomainError(CrysDiffError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(CrysDiffError, ValueError):
    """Array argument has the wrong shape."""


class SingularLatticeError(DomainError):
    """Lattice matrix is singular or numerically too close to it."""


class SpeciesError(CrysDiffError, ValueError):
    """Unknown species index or malformed one-hot atom types."""


class GraphError(CrysDiffError, ValueError):
    """Malformed hypergraph: bad node indices, undersized hyperedges, duplicates."""


class OversizeHyperedgeError(GraphError):
    """A scan volume captured more atoms than the hard cap allows."""


class TapeMismatchError(CrysDiffError, ValueError):
    """Backward pass called with a tape that does not match the forward network."""


class ConfigError(CrysDiffError, ValueError):
    """Invalid run configuration."""


class DivergenceError(CrysDiffError, RuntimeError):
    """Sampler produced non-finite values."""

    def __init__(self, step: int, what: str = "state"):
        self.step = step
        super().__init__(f"non-finite {what} at reverse step t={step}")


class DatasetParseError(CrysDiffError, ValueError):
    """A dataset line failed to parse."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class InvalidRecordError(CrysDiffError, ValueError):
    """A dataset record violates a crystal invariant."""

    def __init__(self, record_id: str, reason: str):
        self.record_id = record_id
        super().__init__(f"record {record_id!r}: {reason}")
