"""Exception types raised across the engine.

Every error the pipeline can surface derives from :class:`EngineError` so the
CLI and service can map failures to machine-readable records uniformly.
"""


class EngineError(Exception):
    """Base class for all engine failures."""

    code = "engine-error"


class InvalidInputError(EngineError):
    code = "invalid-input"


class BehindCameraError(EngineError):
    """Point has non-positive depth in the camera frame."""

    code = "behind-camera"


class NoOverlapError(EngineError):
    """Every candidate view scored zero matched grid cells."""

    code = "no-overlap"


class NoCorrespondenceError(EngineError):
    """Association produced zero Gaussian-to-pixel pairs."""

    code = "no-correspondence"


class InsufficientDataError(EngineError):
    """Fewer correspondences than the minimal sample size."""

    code = "insufficient-data"


class DegenerateConfigurationError(EngineError):
    """Correspondence geometry does not constrain a pose (e.g. collinear)."""

    code = "degenerate-configuration"


class NoConsensusError(EngineError):
    """RANSAC found no hypothesis with enough inliers."""

    code = "no-consensus"


class DegenerateBlendError(EngineError):
    """Blended anchor quaternions cancelled to (near) zero norm."""

    code = "degenerate-blend"


class NumericalFailureError(EngineError):
    """Non-finite loss or gradient; carries the offending term name."""

    code = "numerical-failure"

    def __init__(self, term: str, message: str = ""):
        self.term = term
        super().__init__(message or f"non-finite value in term '{term}'")


class TopologyMismatchError(InvalidInputError):
    """Two anchor graphs do not share the same topology."""

    code = "topology-mismatch"


class SchemaError(EngineError):
    """A file is missing a required field; message names the field."""

    code = "schema-error"


class DataError(EngineError):
    """A file contains invalid values; message carries the record index."""

    code = "data-error"


class SessionNotFoundError(EngineError):
    code = "session-not-found"


class SessionBusyError(EngineError):
    """An optimization burst is already running for this session."""

    code = "session-busy"
