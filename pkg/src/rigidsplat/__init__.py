"""Rigidity-aware deformation of Gaussian-splat scenes from 2D drag constraints."""

from .errors import (
    BehindCameraError,
    DataError,
    DegenerateBlendError,
    DegenerateConfigurationError,
    EngineError,
    InsufficientDataError,
    InvalidInputError,
    NoConsensusError,
    NoCorrespondenceError,
    NoOverlapError,
    NumericalFailureError,
    SchemaError,
    SessionBusyError,
    SessionNotFoundError,
    TopologyMismatchError,
)
from .geom import Camera, GaussianSet, RigidTransform
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "Camera",
    "GaussianSet",
    "RigidTransform",
    "EngineError",
    "InvalidInputError",
    "BehindCameraError",
    "NoOverlapError",
    "NoCorrespondenceError",
    "InsufficientDataError",
    "DegenerateConfigurationError",
    "NoConsensusError",
    "DegenerateBlendError",
    "NumericalFailureError",
    "TopologyMismatchError",
    "SchemaError",
    "DataError",
    "SessionNotFoundError",
    "SessionBusyError",
]
